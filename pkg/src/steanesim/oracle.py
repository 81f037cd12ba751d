"""Independent checks: a stabilizer tableau simulator and exhaustive fault enumeration.

The tableau keeps every sign as an affine form over GF(2): bit 0 is a
constant and bit ``k`` a fresh random variable introduced by the k-th
random measurement.  Measurement outcomes therefore come out as forms, and
a parity of outcomes is deterministic exactly when its variable part
cancels.  Comparing faulted and fault-free forms on deterministic parities
gives flip information without ever consulting the Pauli-frame engine.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from . import code
from .frame import CNOT, MEAS_X, MEAS_Z, PREP_X, PREP_Z, WAIT, Fault, ScheduledCircuit, propagate
from .noise import ErrorClass, GateErrorRates
from .protocols import (
    FT_PROTOCOLS,
    InjectedFaults,
    Protocol,
    Timing,
    default_path,
    rate_kind,
    run_full_qec_frames,
)


class Tableau:
    """Aaronson-Gottesman tableau with symbolic signs (rows 0..n-1 destabilizers)."""

    def __init__(self, n: int):
        self.n = n
        self.x = [1 << i for i in range(n)] + [0] * n
        self.z = [0] * n + [1 << i for i in range(n)]
        self.r = [0] * (2 * n)
        self.n_vars = 0

    # -- gates
    def cnot(self, a: int, b: int) -> None:
        for i in range(2 * self.n):
            xa, zb = self.x[i] >> a & 1, self.z[i] >> b & 1
            xb, za = self.x[i] >> b & 1, self.z[i] >> a & 1
            if xa and zb and not (xb ^ za):
                self.r[i] ^= 1
            if xa:
                self.x[i] ^= 1 << b
            if zb:
                self.z[i] ^= 1 << a

    def h(self, a: int) -> None:
        bit = 1 << a
        for i in range(2 * self.n):
            xa, za = self.x[i] & bit, self.z[i] & bit
            if xa and za:
                self.r[i] ^= 1
            if bool(xa) != bool(za):
                self.x[i] ^= bit
                self.z[i] ^= bit

    def pauli(self, a: int, name: str, condition: int = 1) -> None:
        """Apply a Pauli on qubit ``a``; ``condition`` is the form it is controlled on."""
        bit = 1 << a
        for i in range(2 * self.n):
            anti = 0
            if name in "XY" and self.z[i] & bit:
                anti ^= 1
            if name in "ZY" and self.x[i] & bit:
                anti ^= 1
            if anti:
                self.r[i] ^= condition

    # -- measurement
    @staticmethod
    def _g(x1: int, z1: int, x2: int, z2: int) -> int:
        if not x1 and not z1:
            return 0
        if x1 and z1:
            return z2 - x2
        if x1:
            return z2 * (2 * x2 - 1)
        return x2 * (1 - 2 * z2)

    def _rowsum_into(self, hx: int, hz: int, hr: int, i: int) -> tuple[int, int, int]:
        total = 0
        ix, iz = self.x[i], self.z[i]
        for q in range(self.n):
            total += self._g(ix >> q & 1, iz >> q & 1, hx >> q & 1, hz >> q & 1)
        const = (total % 4) // 2
        return hx ^ ix, hz ^ iz, hr ^ self.r[i] ^ const

    def _rowsum(self, h: int, i: int) -> None:
        self.x[h], self.z[h], self.r[h] = self._rowsum_into(self.x[h], self.z[h], self.r[h], i)

    def measure_z(self, a: int) -> int:
        """Outcome of a Z measurement on ``a`` as an affine form."""
        n, bit = self.n, 1 << a
        p = next((i for i in range(n, 2 * n) if self.x[i] & bit), None)
        if p is not None:
            for i in range(2 * n):
                if i != p and self.x[i] & bit:
                    self._rowsum(i, p)
            self.x[p - n], self.z[p - n], self.r[p - n] = self.x[p], self.z[p], self.r[p]
            self.n_vars += 1
            form = 1 << self.n_vars
            self.x[p], self.z[p], self.r[p] = 0, bit, form
            return form
        hx = hz = hr = 0
        for i in range(n):
            if self.x[i] & bit:
                hx, hz, hr = self._rowsum_into(hx, hz, hr, i + n)
        return hr

    def reset_z(self, a: int) -> None:
        m = self.measure_z(a)
        self.pauli(a, "X", m)


def tableau_run(circuit: ScheduledCircuit, faults: Iterable[Fault] = ()) -> dict[tuple[int, int], int]:
    """Measurement outcomes of ``circuit`` as affine forms, with ``faults`` applied."""
    tab = Tableau(circuit.n_qubits)
    by_gate: dict[tuple[int, int], list[str]] = defaultdict(list)
    for f in faults:
        by_gate[(f.layer, f.index)].append(f.pauli)
    out = {}
    for t, layer in enumerate(circuit.layers):
        for i, g in enumerate(layer):
            q = g.qubits[0]
            flip = 0
            for pauli in by_gate.get((t, i), ()):
                if pauli == "M":
                    flip ^= 1
            if g.kind == CNOT:
                tab.cnot(*g.qubits)
            elif g.kind == PREP_Z:
                tab.reset_z(q)
            elif g.kind == PREP_X:
                tab.reset_z(q)
                tab.h(q)
            elif g.kind == MEAS_Z:
                out[(t, q)] = tab.measure_z(q) ^ flip
            elif g.kind == MEAS_X:
                tab.h(q)
                out[(t, q)] = tab.measure_z(q) ^ flip
                tab.h(q)
            for pauli in by_gate.get((t, i), ()):
                if pauli != "M":
                    for qq, c in zip(g.qubits, pauli):
                        if c != "I":
                            tab.pauli(qq, c)
    return out


def deterministic_parities(forms: dict[tuple[int, int], int]) -> list[list[tuple[int, int]]]:
    """A basis of measurement subsets whose joint parity is deterministic."""
    keys = list(forms)
    # Gaussian elimination on variable parts, tracking which keys were combined
    rows = [(forms[k] >> 1, 1 << j) for j, k in enumerate(keys)]
    pivots: dict[int, tuple[int, int]] = {}
    kernel = []
    for vec, combo in rows:
        while vec:
            top = vec.bit_length() - 1
            if top not in pivots:
                pivots[top] = (vec, combo)
                break
            pv, pc = pivots[top]
            vec ^= pv
            combo ^= pc
        if not vec:
            kernel.append([keys[j] for j in range(len(keys)) if combo >> j & 1])
    return kernel


def frame_tableau_mismatches(circuit: ScheduledCircuit, faults: Sequence[Fault]) -> int:
    """Deterministic parities where the frame engine and the tableau disagree."""
    ideal = tableau_run(circuit)
    noisy = tableau_run(circuit, faults)
    if ideal.keys() != noisy.keys():
        raise AssertionError("measurement sets differ between runs")
    for k in ideal:
        if (ideal[k] ^ noisy[k]) >> 1:
            raise AssertionError(f"random structure changed at {k}")
    _, record = propagate(circuit, faults)
    bad = 0
    for subset in deterministic_parities(ideal):
        tab_flip = 0
        frame_flip = 0
        for k in subset:
            tab_flip ^= (ideal[k] ^ noisy[k]) & 1
            frame_flip ^= record[k]
        bad += tab_flip != frame_flip
    return bad


# ---------------------------------------------------------------------------
# exhaustive fault enumeration over protocol runs

RATE_NAMES = ("prep", "meas", "wait", "cnot")
CLASS_OF_RATE = {"prep": 0, "meas": 0, "wait": 1, "cnot": 2}


@dataclass
class FaultOrderExpansion:
    """Exact low-order expansion of the logical failure probability.

    ``c1``/``c2`` map a sorted tuple of rate names (the monomial) to its
    exact coefficient in P_L.  Only failing terms are kept in the lists.
    """

    protocol: Protocol
    order: int
    n_terms: int = 0
    n_skipped: int = 0
    failing: list[tuple[tuple, str, Fraction]] = field(default_factory=list)
    coefficients: dict[tuple[str, ...], Fraction] = field(default_factory=dict)
    outcome_counts: Counter = field(default_factory=Counter)

    def value(self, rates: GateErrorRates) -> float:
        r = rates.as_dict()
        total = 0.0
        for mono, c in self.coefficients.items():
            term = float(c)
            for name in mono:
                term *= r[name]
            total += term
        return total

    def total(self) -> Fraction:
        """Coefficient sum: P_L / p^order at equal rates."""
        return sum(self.coefficients.values(), Fraction(0))

    def class_coefficient(self, error_class: ErrorClass) -> Fraction:
        """Coefficient surviving when only ``error_class`` can fault."""
        keep = error_class.rate_names
        return sum(
            (c for mono, c in self.coefficients.items() if all(m in keep for m in mono)),
            Fraction(0),
        )

    def to_json(self) -> dict:
        return {
            "protocol": self.protocol.value,
            "order": self.order,
            "n_terms": self.n_terms,
            "n_skipped": self.n_skipped,
            "n_failing": len(self.failing),
            "coefficient_total": str(self.total()),
            "coefficient_total_float": float(self.total()),
            "coefficients": {"*".join(m): str(c) for m, c in sorted(self.coefficients.items())},
            "class_coefficients": {
                ec.value: float(self.class_coefficient(ec)) for ec in ErrorClass
            },
            "outcomes": dict(self.outcome_counts),
        }


def _flatten(path) -> list[tuple]:
    """[(key, seg, event, location, slot)] in execution order."""
    out = []
    for slot, (key, seg) in enumerate(path):
        for e in range(seg.n_events):
            out.append((key, seg, e, seg.event_loc[e], slot))
    return out


def _outcome(protocol: Protocol, faults: dict, timing: Timing) -> tuple[str, list]:
    src = InjectedFaults(faults)
    res = run_full_qec_frames(protocol, src, timing)
    if res.skipped:
        return "skip", src.path
    return code.logical_outcome(res.data_frame), src.path


def enumerate_logical_failures(
    protocol: Protocol, order: int, timing: Timing = Timing()
) -> FaultOrderExpansion:
    """Propagate every single fault (order 1) or fault pair (order 2) exhaustively.

    Pairs are branch-resolved: the second fault ranges over the segments that
    actually run once the first fault has acted (retries, SWAPs, ...), and
    only later positions are taken so each unordered pair is counted once.
    Skipped rounds are rerun upstream and so never count as failures.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    exp = FaultOrderExpansion(protocol, order)
    base = _flatten(default_path(protocol, timing))

    def record(terms, outcome):
        exp.n_terms += 1
        exp.outcome_counts[outcome] += 1
        if outcome == "skip":
            exp.n_skipped += 1
            return
        if outcome == "I":
            return
        mono = tuple(sorted(rate_kind(seg, e) for _, seg, e, *_ in terms))
        w = Fraction(1)
        for _, seg, e, *_ in terms:
            w *= seg.event_weight[e].coeff
        exp.failing.append((tuple((k, e) for k, _, e, *_ in terms), outcome, w))
        exp.coefficients[mono] = exp.coefficients.get(mono, Fraction(0)) + w

    for a in base:
        ka, sa, ea, la, slot_a = a
        outcome, path = _outcome(protocol, {ka: [ea]}, timing)
        if order == 1:
            record([a], outcome)
            continue
        for b in _flatten(path):
            kb, sb, eb, lb, slot_b = b
            if slot_b < slot_a or (slot_b == slot_a and lb <= la):
                continue
            faults = {ka: [ea]}
            faults.setdefault(kb, []).append(eb)
            out2, _ = _outcome(protocol, faults, timing)
            record([a, b], out2)
    return exp


def first_order_rejection_weight(kind: str = "zero", timing: Timing = Timing()) -> dict[str, Fraction]:
    """Per-rate sum of single-fault weights that make verification reject.

    At equal rates p the ancilla failure rate is ``sum(values) * p`` to
    first order.
    """
    from .protocols import V1, catalog, verification_accepts

    seg = catalog(timing)[(kind, "cv1")]
    out: dict[str, Fraction] = {n: Fraction(0) for n in RATE_NAMES}
    for e in range(seg.n_events):
        _, _, fl = seg.run(0, 0, [e])
        if not verification_accepts(seg.flips_on(fl, V1)):
            out[rate_kind(seg, e)] += seg.event_weight[e].coeff
    return out


def ft_certificate(timing: Timing = Timing()) -> dict[Protocol, int]:
    """Number of failing single-fault terms for every protocol."""
    return {
        p: len(enumerate_logical_failures(p, 1, timing).failing) for p in Protocol
    }


__all__ = [
    "FT_PROTOCOLS",
    "FaultOrderExpansion",
    "Tableau",
    "deterministic_parities",
    "enumerate_logical_failures",
    "first_order_rejection_weight",
    "frame_tableau_mismatches",
    "ft_certificate",
    "gadget_library",
    "random_clifford_circuit",
    "random_faults",
    "tableau_run",
    "validate_engine",
]


# ---------------------------------------------------------------------------
# random circuits and the gadget library for frame/tableau cross-checks


def random_clifford_circuit(rng, n_qubits: int, n_layers: int) -> ScheduledCircuit:
    """Random valid scheduled circuit; every live qubit is measured at the end."""
    from .frame import GateOp

    live: set[int] = set()
    layers = []
    for t in range(n_layers):
        layer = []
        free = [q for q in range(n_qubits)]
        rng.shuffle(free)
        dead = [q for q in free if q not in live]
        busy = set()
        for q in dead:
            if t == 0 or rng.random() < 0.7:
                layer.append(GateOp(PREP_Z if rng.random() < 0.5 else PREP_X, (q,)))
                busy.add(q)
        cand = [q for q in free if q in live]
        i = 0
        while i + 1 < len(cand):
            if rng.random() < 0.6:
                layer.append(GateOp(CNOT, (cand[i], cand[i + 1])))
                busy |= {cand[i], cand[i + 1]}
                i += 2
            else:
                i += 1
        for q in cand:
            if q in busy:
                continue
            if rng.random() < 0.15 and t < n_layers - 1:
                layer.append(GateOp(MEAS_Z if rng.random() < 0.5 else MEAS_X, (q,)))
            else:
                layer.append(GateOp(WAIT, (q,)))
        for g in layer:
            for q in g.qubits:
                if g.kind in (MEAS_Z, MEAS_X):
                    live.discard(q)
                else:
                    live.add(q)
        # qubits that were measured and not re-prepared simply stay out
        layers.append(tuple(sorted(layer, key=lambda g: min(g.qubits))))
    layers.append(
        tuple(GateOp(MEAS_Z if rng.random() < 0.5 else MEAS_X, (q,)) for q in sorted(live))
    )
    return ScheduledCircuit(n_qubits, tuple(l for l in layers if l), "random")


def random_faults(rng, circuit: ScheduledCircuit, n_faults: int) -> list[Fault]:
    from .noise import FAULT_PAULIS

    locs = circuit.locations
    out = []
    for i in rng.choice(len(locs), size=min(n_faults, len(locs)), replace=False):
        loc = locs[int(i)]
        options = FAULT_PAULIS[loc.gate.kind]
        out.append(Fault(loc.layer, loc.index, options[int(rng.integers(len(options)))]))
    return out


def gadget_library(timing: Timing = Timing()) -> dict[str, ScheduledCircuit]:
    from . import code as steane
    from .protocols import build_verified_ancilla_gadget, catalog

    lib = {seg.name: seg.circuit for seg in catalog(timing).seg.values()}
    lib["encode|0_L>"] = steane.zero_encoder()
    lib["encode|+_L>"] = steane.plus_encoder()
    for kind in ("zero", "plus"):
        circ, _ = build_verified_ancilla_gadget(kind)
        lib[circ.name] = circ
    return lib


def validate_engine(n_random: int = 1000, seed: int = 0, faults_per_circuit: int = 3) -> dict[str, int]:
    """Mismatch counts: random circuits plus every gadget with random faults."""
    import numpy as np

    rng = np.random.default_rng(seed)
    random_bad = 0
    for _ in range(n_random):
        n = int(rng.integers(2, 15))
        circ = random_clifford_circuit(rng, n, int(rng.integers(1, 30)))
        faults = random_faults(rng, circ, int(rng.integers(1, faults_per_circuit + 1)))
        random_bad += frame_tableau_mismatches(circ, faults)
    gadget_bad = 0
    for circ in gadget_library().values():
        for _ in range(3):
            gadget_bad += frame_tableau_mismatches(circ, random_faults(rng, circ, 2))
    return {"random_circuits": n_random, "random_mismatches": random_bad, "gadget_mismatches": gadget_bad}
