"""Acceptance criteria 1-10, one PASS/FAIL line each.

Monte Carlo budgets default to the full targets and can be lowered for
smoke runs through environment variables:

    STEANESIM_ACCEPT_TRIALS            per-basis trial cap, criteria 4 and 5 (1e9)
    STEANESIM_ACCEPT_MIN_FAILURES      early stop for criterion 4 (50)
    STEANESIM_ACCEPT_COMPARE_FAILURES  early stop for criterion 5 (200)
    STEANESIM_ACCEPT_SERIES_FAILURES   early stop for criterion 8 (1000)
    STEANESIM_ACCEPT_ANCILLA_TRIALS    attempts per point, criterion 6 (1e8)
    STEANESIM_ACCEPT_FIGURE_TRIALS     trial cap of the two figure runs, criterion 10 (2e6)
    STEANESIM_ACCEPT_JOBS              worker processes (all cores)

Run alone with ``pytest tests/test_acceptance.py -v`` or
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import os
import sys
from functools import lru_cache

import pytest

from steanesim import code
from steanesim.cli import cli_main
from steanesim.experiments import ancilla_failure_rate, available_cpus, estimate_point, linear_fit
from steanesim.frame import Fault, propagate
from steanesim.noise import ErrorClass, GateErrorRates, enumerate_fault_space
from steanesim.oracle import enumerate_logical_failures, first_order_rejection_weight, validate_engine
from steanesim.protocols import FT_PROTOCOLS, Protocol, build_verified_ancilla_gadget

RESULTS: list[str] = []

SEED = 20260101
TRIALS = int(float(os.environ.get("STEANESIM_ACCEPT_TRIALS", "1e9")))
MIN_FAILURES = int(os.environ.get("STEANESIM_ACCEPT_MIN_FAILURES", "50"))
COMPARE_FAILURES = int(os.environ.get("STEANESIM_ACCEPT_COMPARE_FAILURES", "200"))
SERIES_FAILURES = int(os.environ.get("STEANESIM_ACCEPT_SERIES_FAILURES", "1000"))
ANCILLA_TRIALS = int(float(os.environ.get("STEANESIM_ACCEPT_ANCILLA_TRIALS", "1e8")))
FIGURE_TRIALS = int(float(os.environ.get("STEANESIM_ACCEPT_FIGURE_TRIALS", "2e6")))
JOBS = int(os.environ.get("STEANESIM_ACCEPT_JOBS", "0")) or available_cpus()

# tolerances pinned by the criteria
P_ORACLE = 1e-5
COMPARE_GRID = (1e-5, 2e-5, 5e-5, 1e-4)
SEPARATION_FROM = 5e-5
RATIO_RANGE = (1.5, 3.0)
ANCILLA_GRID = (1e-5, 2e-5, 4e-5, 8e-5)
R2_MIN = 0.999
SLOPE_TOL = 0.10
SERIES_LO, SERIES_HI, SERIES_OTHER = 1e-5, 3e-4, 1e-5


def report(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {n:>2}  {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@lru_cache(maxsize=None)
def expansion(protocol: Protocol, order: int):
    return enumerate_logical_failures(protocol, order)


@lru_cache(maxsize=None)
def mc_point(protocol: Protocol, rates: GateErrorRates, min_failures: int):
    return estimate_point(protocol, rates, TRIALS, SEED, jobs=JOBS, min_failures=min_failures)


def test_c01_ft_certificate():
    counts = {p: len(expansion(p, 1).failing) for p in Protocol}
    ok = all(counts[p] == 0 for p in FT_PROTOCOLS) and counts[Protocol.NON_FT] >= 1
    detail = ", ".join(f"{p.value}={n}" for p, n in counts.items())
    report(1, "first-order failing terms", ok, detail)


def _table_class(k: int, dual: bool) -> int:
    circ = code.plus_encoder() if dual else code.zero_encoder()
    layer, idx = code.encoder_cnot_location(k)
    frame, _ = propagate(circ, [Fault(layer, idx, "ZZ" if dual else "XX")])
    err, other = (frame.z, frame.x) if dual else (frame.x, frame.z)
    return code.reduce_mod_stabilizers(err) if other == 0 else -1


def test_c02_table_i():
    bad = []
    for k in range(1, 10):
        want = code.reduce_mod_stabilizers(code.TABLE_I[k])
        for dual in (False, True):
            got = _table_class(k, dual)
            if got != want or (k <= 3 and got != 0):
                bad.append((k, "Z" if dual else "X"))
    report(2, "Table I rows (X and dual Z)", not bad, f"18 checks, mismatches={bad}")


def test_c03_verification_soundness():
    checked = missed = 0
    clean = True
    for kind in ("zero", "plus"):
        circ, accepts = build_verified_ancilla_gadget(kind)
        clean &= accepts(propagate(circ)[1])
        for fault, _ in enumerate_fault_space(circ):
            frame, rec = propagate(circ, [fault])
            err = (frame.x if kind == "zero" else frame.z) & 127
            if code.reduce_mod_stabilizers(err).bit_count() >= 2:
                checked += 1
                missed += accepts(rec)
    report(3, "verification soundness", clean and missed == 0 and checked > 0,
           f"{checked} high-weight single faults, {missed} accepted; fault-free accepted={clean}")


def test_c04_oracle_agreement():
    rates = GateErrorRates.uniform(P_ORACLE)
    parts, ok = [], True
    for p in FT_PROTOCOLS:
        predicted = expansion(p, 2).value(rates)
        est = mc_point(p, rates, MIN_FAILURES).estimate
        inside = est.ci[0] <= predicted <= est.ci[1]
        ok &= inside
        parts.append(f"{p.value} MC={est.P_L:.3e} [{est.ci[0]:.3e},{est.ci[1]:.3e}] c2p2={predicted:.3e}"
                     f"{'' if inside else ' OUTSIDE'}")
    report(4, f"MC vs c2*p^2 at p={P_ORACLE:g}", ok, "; ".join(parts))


def test_c05_compare_figure():
    pts = {}
    for p in COMPARE_GRID:
        rates = GateErrorRates.uniform(p)
        for proto in (Protocol.DECODING, Protocol.SIMPLE_SERIES, Protocol.NAIVE_NO_WAIT):
            pts[(proto, p)] = mc_point(proto, rates, COMPARE_FAILURES).estimate
    problems = []
    for p in COMPARE_GRID:
        dec, sim, nai = (pts[(x, p)] for x in (Protocol.DECODING, Protocol.SIMPLE_SERIES, Protocol.NAIVE_NO_WAIT))
        if not dec.P_L < sim.P_L:
            problems.append(f"dec>=simple@{p:g}")
        if p >= SEPARATION_FROM and not dec.ci[1] < sim.ci[0]:
            problems.append(f"no CI separation@{p:g}")
        if not nai.P_L < dec.P_L:
            problems.append(f"naive>=dec@{p:g}")
    top = COMPARE_GRID[-1]
    dec_top = pts[(Protocol.DECODING, top)].P_L
    ratio = pts[(Protocol.SIMPLE_SERIES, top)].P_L / dec_top if dec_top else float("inf")
    if not RATIO_RANGE[0] <= ratio <= RATIO_RANGE[1]:
        problems.append(f"ratio {ratio:.3f} outside {RATIO_RANGE}")
    exact = float(expansion(Protocol.SIMPLE_SERIES, 2).total() / expansion(Protocol.DECODING, 2).total())
    report(5, "compare figure ordering and ratio", not problems,
           f"ratio@{top:g}={ratio:.3f} (exact c2 ratio {exact:.3f}); issues={problems or 'none'}")


def test_c06_ancilla_failure_linear():
    weight = float(sum(first_order_rejection_weight("zero").values()))
    ok, parts = True, []
    for kind in ("zero", "plus"):
        ys = [ancilla_failure_rate(GateErrorRates.uniform(p), ANCILLA_TRIALS, SEED, kind, jobs=JOBS)[0]
              for p in ANCILLA_GRID]
        slope, _, r2 = linear_fit(ANCILLA_GRID, ys)
        good = r2 > R2_MIN and abs(slope - weight) <= SLOPE_TOL * weight
        ok &= good
        parts.append(f"{kind}: slope={slope:.4g} R2={r2:.6f}")
    report(6, "ancilla failure linear in p", ok, f"{'; '.join(parts)}; first-order weight={weight:.4g}")


def test_c07_class_decomposition():
    classes = (ErrorClass.CLASS0, ErrorClass.CLASS1, ErrorClass.CLASS2)
    coeffs = {p: {ec: float(expansion(p, 2).class_coefficient(ec)) for ec in classes}
              for p in (Protocol.SIMPLE_SERIES, Protocol.NAIVE_NO_WAIT, Protocol.DECODING)}
    want = {Protocol.SIMPLE_SERIES: ErrorClass.CLASS1, Protocol.NAIVE_NO_WAIT: ErrorClass.CLASS2,
            Protocol.DECODING: ErrorClass.CLASS2}
    ok = all(max(coeffs[p], key=coeffs[p].get) == ec for p, ec in want.items())
    detail = "; ".join(
        f"{p.value} " + " ".join(f"{ec.value}={v:.4g}" for ec, v in c.items()) for p, c in coeffs.items()
    )
    report(7, "largest class coefficient", ok, detail)


def test_c08_series_crossover():
    def point(proto, cnot, wait):
        rates = GateErrorRates(SERIES_OTHER, SERIES_OTHER, wait, cnot)
        return mc_point(proto, rates, SERIES_FAILURES).estimate

    ser_a, dec_a = point(Protocol.TWO_ANCILLA_SERIES, SERIES_LO, SERIES_HI), point(Protocol.DECODING, SERIES_LO, SERIES_HI)
    ser_b, dec_b = point(Protocol.TWO_ANCILLA_SERIES, SERIES_HI, SERIES_LO), point(Protocol.DECODING, SERIES_HI, SERIES_LO)
    verification_wins = ser_a.ci[1] < dec_a.ci[0]
    decoding_wins = dec_b.P_L < ser_b.P_L
    report(8, "series crossover", verification_wins and decoding_wins,
           f"(cnot={SERIES_LO:g}, wait={SERIES_HI:g}): series={ser_a.P_L:.3e} decoding={dec_a.P_L:.3e}; "
           f"(cnot={SERIES_HI:g}, wait={SERIES_LO:g}): series={ser_b.P_L:.3e} decoding={dec_b.P_L:.3e}")


def test_c09_engine_equivalence():
    res = validate_engine(1000, seed=SEED)
    ok = res["random_mismatches"] == 0 and res["gadget_mismatches"] == 0
    report(9, "frame engine vs tableau", ok, str(res))


def test_c10_determinism(tmp_path):
    n = max(2, JOBS)
    outs = []
    for jobs in (1, n):
        path = tmp_path / f"compare_{jobs}.csv"
        status = cli_main(["figure", "compare", "--seed", "42", "--jobs", str(jobs),
                           "--trials", str(FIGURE_TRIALS), "--out", str(path)])
        outs.append((status, path.read_bytes() if path.exists() else b""))
    ok = outs[0][0] == outs[1][0] == 0 and outs[0][1] == outs[1][1] and outs[0][1]
    report(10, "byte-identical figure output", bool(ok), f"--jobs 1 vs --jobs {n}, {len(outs[0][1])} bytes")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
