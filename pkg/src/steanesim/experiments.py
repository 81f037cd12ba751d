"""Monte Carlo harness: per-basis trials, P_L estimates, sweeps, ancilla failure rates.

Trials are processed in fixed-size chunks.  Each chunk owns a counter-based
stream keyed by (master seed, configuration hash, chunk index), so output is
bit-identical for any number of worker processes.  Within a chunk the
faults on the fault-free execution path are drawn as a Bernoulli process
over all (trial, location) pairs via geometric gaps; trials without faults
need no simulation, and single-fault trials are looked up in a table
built once per protocol.  Everything else runs through the full protocol.
"""

from __future__ import annotations

import atexit
import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import code
from .noise import ErrorClass, GateErrorRates, stream
from .protocols import (
    V1,
    FaultSource,
    Protocol,
    ProtocolError,
    SampledFaults,
    Timing,
    catalog,
    default_path,
    run_full_qec_frames,
    verification_accepts,
)

CHUNK = 1 << 18
BASES = ("Z", "X", "Y")
# logical outcomes that flip an eigenstate of each basis
FAILS_IN = {"Z": frozenset("XY"), "X": frozenset("ZY"), "Y": frozenset("XZ")}
DEFAULT_RERUN_CAP = 1000

_LAZY, _RERUN = 1, 2


@dataclass(frozen=True)
class TrialConfig:
    protocol: Protocol
    rates: GateErrorRates
    error_class: ErrorClass = ErrorClass.ALL
    basis: str = "Z"
    master_seed: int = 0
    trial_index: int = 0
    timing: Timing = Timing()


@dataclass
class AggregateResult:
    trials: int = 0
    logical_failures: int = 0
    reruns: int = 0
    verification_failures: int = 0

    @property
    def rate(self) -> float:
        return self.logical_failures / self.trials if self.trials else 0.0

    @property
    def ci(self) -> tuple[float, float]:
        return wilson(self.logical_failures, self.trials)

    def __iadd__(self, other: "AggregateResult") -> "AggregateResult":
        self.trials += other.trials
        self.logical_failures += other.logical_failures
        self.reruns += other.reruns
        self.verification_failures += other.verification_failures
        return self


def wilson(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    """Wilson score interval for ``k`` successes out of ``n``."""
    if n == 0:
        return 0.0, 1.0
    phat = k / n
    denom = 1 + z * z / n
    centre = (phat + z * z / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class PLEstimate:
    """Combined logical error rate from three per-basis failure rates.

    ``E_X`` is measured on Z-basis eigenstates (failing on logical X or Y),
    ``E_Y`` on X-basis eigenstates (Y or Z) and ``E_Z`` on Y-basis
    eigenstates (Z or X), so that E_X = P_X + P_Y cyclically.
    """

    E_X: float
    E_Y: float
    E_Z: float
    P_L: float
    P_X: float
    P_Y: float
    P_Z: float
    ci: tuple[float, float] = (0.0, 0.0)


def estimate_PL(
    E_X: float,
    E_Y: float,
    E_Z: float,
    cis: Sequence[tuple[float, float]] | None = None,
) -> PLEstimate:
    for e in (E_X, E_Y, E_Z):
        if not 0.0 <= e <= 1.0:
            raise ValueError(f"rate {e} outside [0, 1]")
    p_l = (E_X + E_Y + E_Z) / 2
    if cis is None:
        ci = (p_l, p_l)
    else:
        # independent per-basis intervals combined in quadrature, side by side
        lo = math.sqrt(sum((e - c[0]) ** 2 for e, c in zip((E_X, E_Y, E_Z), cis))) / 2
        hi = math.sqrt(sum((c[1] - e) ** 2 for e, c in zip((E_X, E_Y, E_Z), cis))) / 2
        ci = (max(0.0, p_l - lo), p_l + hi)
    return PLEstimate(
        E_X,
        E_Y,
        E_Z,
        p_l,
        P_X=(E_X - E_Y + E_Z) / 2,
        P_Y=(E_X + E_Y - E_Z) / 2,
        P_Z=(-E_X + E_Y + E_Z) / 2,
        ci=ci,
    )


def config_key(*parts) -> tuple[int, ...]:
    """Stable 4x32-bit key from a configuration description."""
    digest = hashlib.blake2b(repr(parts).encode(), digest_size=16).digest()
    return tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))


# ---------------------------------------------------------------------------
# single trials


def run_trial(config: TrialConfig, rerun_cap: int = DEFAULT_RERUN_CAP) -> tuple[int, dict]:
    """One full QEC trial from a noiseless logical eigenstate.

    Returns the failure bit for ``config.basis`` and diagnostics (logical
    outcome, verification failures, reruns).
    """
    key = config_key(config.protocol.value, config.rates, config.error_class.value, config.basis)
    rates = config.rates.filtered(config.error_class)
    vfail = 0
    for attempt in range(rerun_cap + 1):
        rng = stream(config.master_seed, *key, _RERUN, config.trial_index, attempt)
        res = run_full_qec_frames(config.protocol, SampledFaults(rates, rng), config.timing)
        vfail += res.n_verification_failures
        if not res.skipped:
            outcome = code.logical_outcome(res.data_frame)
            diag = {"outcome": outcome, "verification_failures": vfail, "reruns": attempt}
            return int(outcome in FAILS_IN[config.basis]), diag
    raise ProtocolError(f"trial {config.trial_index} skipped QEC more than {rerun_cap} times")


# ---------------------------------------------------------------------------
# chunked Monte Carlo


@dataclass
class _PathTable:
    """Flattened fault locations of the fault-free path plus single-fault outcomes."""

    keys: list
    slot: np.ndarray  # location -> index into keys
    loc_events: list[list[int]]
    loc_rate: list[str]
    # per (location, event-within-location): outcome code, vfails, needs full run
    single: list[list[tuple[str, int, bool]]] = field(default_factory=list)


@lru_cache(maxsize=32)
def _path_table(protocol: Protocol, timing: Timing) -> _PathTable:
    from .protocols import InjectedFaults

    path = default_path(protocol, timing)
    keys, slots, loc_events, loc_rate = [], [], [], []
    from .noise import RATE_OF

    for s, (key, seg) in enumerate(path):
        keys.append((key, seg))
        for i, evs in enumerate(seg.loc_events):
            slots.append(s)
            loc_events.append(evs)
            loc_rate.append(RATE_OF[seg.loc_kind[i]])
    table = _PathTable(keys, np.array(slots), loc_events, loc_rate)
    for loc, evs in enumerate(loc_events):
        key, seg = keys[slots[loc]]
        row = []
        for e in evs:
            src = InjectedFaults({key: [e]})
            res = run_full_qec_frames(protocol, src, timing)
            on_path = [k for k, _ in src.path] == [k for k, _ in keys]
            outcome = "skip" if res.skipped else code.logical_outcome(res.data_frame)
            row.append((outcome, res.n_verification_failures, not on_path))
        table.single.append(row)
    return table


def _chunk_job(args) -> tuple[AggregateResult, dict]:
    protocol, rates, error_class, basis, seed, key, chunk, n, timing, rerun_cap = args
    table = _path_table(protocol, timing)
    rates_f = rates.filtered(error_class)
    rng = stream(seed, *key, chunk)
    probs = np.array([getattr(rates_f, r) for r in table.loc_rate])
    n_loc = len(probs)

    trial_faults: dict[int, list[tuple[int, float]]] = {}
    # one Bernoulli process over (trial, location) for each distinct probability
    for p in sorted(set(probs.tolist())):
        if p <= 0:
            continue
        locs = np.flatnonzero(probs == p)
        total = n * len(locs)
        positions = []
        cursor = -1
        while True:
            m = max(16, int(1.2 * (total - cursor) * p) + 16)
            gaps = rng.geometric(p, size=m)
            pos = cursor + np.cumsum(gaps)
            positions.append(pos[pos < total])
            if pos[-1] >= total:
                break
            cursor = int(pos[-1])
        pos = np.concatenate(positions)
        picks = rng.random(len(pos))
        for t, li, u in zip((pos // len(locs)).tolist(), locs[pos % len(locs)].tolist(), picks.tolist()):
            trial_faults.setdefault(t, []).append((li, u))

    agg = AggregateResult(trials=n)
    fails_in = FAILS_IN[basis]
    base = chunk * CHUNK
    n_full = 0
    for t in sorted(trial_faults):
        faults = trial_faults[t]
        if len(faults) == 1:
            li, u = faults[0]
            evs = table.loc_events[li]
            j = int(u * len(evs))
            outcome, vf, branched = table.single[li][j]
            if not branched:
                agg.verification_failures += vf
                agg.logical_failures += outcome in fails_in
                continue
        n_full += 1
        preset = {k: [] for k, _ in table.keys}
        for li, u in faults:
            evs = table.loc_events[li]
            k = table.keys[table.slot[li]][0]
            preset[k].append(evs[int(u * len(evs))])
        trial = base + t
        src: FaultSource = SampledFaults(
            rates_f, lambda trial=trial: stream(seed, *key, _LAZY, trial), preset
        )
        res = run_full_qec_frames(protocol, src, timing)
        agg.verification_failures += res.n_verification_failures
        attempt = 0
        while res.skipped:
            attempt += 1
            agg.reruns += 1
            if attempt > rerun_cap:
                raise ProtocolError(f"trial {trial} skipped QEC more than {rerun_cap} times")
            rng_r = stream(seed, *key, _RERUN, trial, attempt)
            res = run_full_qec_frames(protocol, SampledFaults(rates_f, rng_r), timing)
            agg.verification_failures += res.n_verification_failures
        agg.logical_failures += code.logical_outcome(res.data_frame) in fails_in
    return agg, {"full_runs": n_full}


_POOLS: dict[int, ProcessPoolExecutor] = {}


def _pool(n_jobs: int) -> ProcessPoolExecutor:
    # kept alive so workers reuse their compiled circuits across calls
    if n_jobs not in _POOLS:
        _POOLS[n_jobs] = ProcessPoolExecutor(max_workers=n_jobs)
    return _POOLS[n_jobs]


@atexit.register
def _shutdown_pools() -> None:
    for pool in _POOLS.values():
        pool.shutdown(cancel_futures=True)
    _POOLS.clear()


def _map(fn, jobs: Iterable, n_jobs: int):
    jobs = list(jobs)
    if n_jobs <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    return list(_pool(n_jobs).map(fn, jobs))


def available_cpus() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def simulate_basis(
    protocol: Protocol,
    rates: GateErrorRates,
    basis: str,
    trials: int,
    master_seed: int,
    error_class: ErrorClass = ErrorClass.ALL,
    timing: Timing = Timing(),
    jobs: int = 1,
    min_failures: int | None = None,
    rerun_cap: int = DEFAULT_RERUN_CAP,
) -> AggregateResult:
    """Logical failure count on eigenstates of ``basis``.

    With ``min_failures`` the run stops at the first chunk boundary where the
    failure count reaches it (``trials`` is then an upper bound).  The stop
    point depends only on the seed, never on ``jobs``.
    """
    if basis not in BASES:
        raise ValueError(f"basis must be one of {BASES}")
    key = config_key(protocol.value, rates, error_class.value, basis, timing)
    n_chunks = -(-trials // CHUNK)
    sizes = [min(CHUNK, trials - c * CHUNK) for c in range(n_chunks)]
    total = AggregateResult()
    batch = max(1, jobs)
    for start in range(0, n_chunks, batch):
        args = [
            (protocol, rates, error_class, basis, master_seed, key, c, sizes[c], timing, rerun_cap)
            for c in range(start, min(n_chunks, start + batch))
        ]
        for agg, _ in _map(_chunk_job, args, jobs):
            total += agg
            if min_failures is not None and total.logical_failures >= min_failures:
                return total
    return total


@dataclass
class PointResult:
    protocol: Protocol
    rates: GateErrorRates
    error_class: ErrorClass
    per_basis: dict[str, AggregateResult]
    estimate: PLEstimate

    @property
    def p_l(self) -> float:
        return self.estimate.P_L


def estimate_point(
    protocol: Protocol,
    rates: GateErrorRates,
    trials: int,
    master_seed: int,
    error_class: ErrorClass = ErrorClass.ALL,
    timing: Timing = Timing(),
    jobs: int = 1,
    min_failures: int | None = None,
    rerun_cap: int = DEFAULT_RERUN_CAP,
) -> PointResult:
    per = {
        b: simulate_basis(
            protocol, rates, b, trials, master_seed, error_class, timing, jobs, min_failures, rerun_cap
        )
        for b in BASES
    }
    # E_X <- Z-basis eigenstates, E_Y <- X-basis, E_Z <- Y-basis
    order = ("Z", "X", "Y")
    est = estimate_PL(*(per[b].rate for b in order), cis=[per[b].ci for b in order])
    return PointResult(protocol, rates, error_class, per, est)


def run_sweep(
    grid: Sequence[GateErrorRates],
    protocols: Sequence[Protocol],
    filters: Sequence[ErrorClass] = (ErrorClass.ALL,),
    trials: int = 100_000,
    master_seed: int = 0,
    timing: Timing = Timing(),
    jobs: int = 1,
    min_failures: int | None = None,
    rerun_cap: int = DEFAULT_RERUN_CAP,
) -> list[PointResult]:
    if not grid:
        raise ValueError("empty grid")
    out = []
    for rates in grid:
        for proto in protocols:
            for ec in filters:
                out.append(
                    estimate_point(
                        proto, rates, trials, master_seed, ec, timing, jobs, min_failures, rerun_cap
                    )
                )
    return out


# ---------------------------------------------------------------------------
# ancilla failure rate


def _ancilla_chunk(args) -> tuple[int, int]:
    rates, seed, key, chunk, n, kind, timing = args
    seg = catalog(timing)[(kind, "cv1")]
    probs = seg.location_probs(rates)
    rejects = _ancilla_reject_table(kind, timing)
    rng = stream(seed, *key, chunk)
    u = None
    faults: dict[int, list[int]] = {}
    for p in sorted(set(probs.tolist())):
        if p <= 0:
            continue
        locs = np.flatnonzero(probs == p)
        total = n * len(locs)
        hits = []
        cursor = -1
        while True:
            m = max(16, int(1.2 * (total - cursor) * p) + 16)
            pos = cursor + np.cumsum(rng.geometric(p, size=m))
            hits.append(pos[pos < total])
            if pos[-1] >= total:
                break
            cursor = int(pos[-1])
        pos = np.concatenate(hits)
        u = rng.random(len(pos))
        for t, li, v in zip((pos // len(locs)).tolist(), locs[pos % len(locs)].tolist(), u.tolist()):
            evs = seg.loc_events[li]
            faults.setdefault(t, []).append(evs[int(v * len(evs))])
    rejected = 0
    for evs in faults.values():
        if len(evs) == 1:
            rejected += rejects[evs[0]]
        else:
            _, _, fl = seg.run(0, 0, evs)
            rejected += not verification_accepts(seg.flips_on(fl, V1))
    return rejected, n


@lru_cache(maxsize=8)
def _ancilla_reject_table(kind: str, timing: Timing) -> list[bool]:
    seg = catalog(timing)[(kind, "cv1")]
    out = []
    for e in range(seg.n_events):
        _, _, fl = seg.run(0, 0, [e])
        out.append(not verification_accepts(seg.flips_on(fl, V1)))
    return out


def ancilla_failure_rate(
    rates: GateErrorRates,
    trials: int,
    master_seed: int,
    kind: str = "zero",
    timing: Timing = Timing(),
    jobs: int = 1,
) -> tuple[float, tuple[float, float], int]:
    """Fraction of create-and-verify attempts that are rejected: (rate, 95% CI, rejections)."""
    key = config_key("ancilla", rates, kind, timing)
    n_chunks = -(-trials // CHUNK)
    args = [
        (rates, master_seed, key, c, min(CHUNK, trials - c * CHUNK), kind, timing)
        for c in range(n_chunks)
    ]
    rej = tot = 0
    for r, n in _map(_ancilla_chunk, args, jobs):
        rej += r
        tot += n
    return rej / tot if tot else 0.0, wilson(rej, tot), rej


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares (slope, intercept, R^2)."""
    x, y = np.asarray(xs, float), np.asarray(ys, float)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    return float(slope), float(intercept), 1 - ss_res / ss_tot if ss_tot else 1.0


def result_to_dict(r: AggregateResult) -> dict:
    d = asdict(r)
    d["rate"] = r.rate
    d["ci"] = r.ci
    return d
