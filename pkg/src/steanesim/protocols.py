"""Fault-tolerant QEC gadgets: ancilla verification variants and ancilla decoding.

A protocol run is a sequence of *segments* (small scheduled circuits over a
shared 35-qubit workspace) chosen on the fly from measurement results.  Each
executed segment is identified by a key, and a :class:`FaultSource` decides
which fault events happen inside it.  That one hook serves Monte Carlo
sampling, explicit fault injection and exhaustive enumeration alike.

Workspace layout::

    data 0-6 | A1 7-13 | V1 14-20 | A2 21-27 | V2 28-34

A1 is the primary ancilla next to the data, V1 its verifier (or the second
block when decoding); A2/V2 are the second ancilla pair for the parallel
protocol.  The |0_L> round (Z syndrome) runs first, then the |+_L> round
(X syndrome); the second reuses the same slots.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np

from . import code
from .code import PIVOTS, STABILIZERS, circuit_from_layers, decoder_layers, encoder_layers
from .frame import (
    CNOT,
    MEAS_X,
    MEAS_Z,
    PREP_Z,
    WAIT,
    CompiledCircuit,
    Fault,
    GateOp,
    PauliFrame,
    ScheduledCircuit,
    parity,
)
from .noise import FAULT_PAULIS, RATE_OF, ErrorClass, GateErrorRates, Weight, event_weight

N_WORK = 35
DATA = tuple(range(0, 7))
A1 = tuple(range(7, 14))
V1 = tuple(range(14, 21))
A2 = tuple(range(21, 28))
V2 = tuple(range(28, 35))
DATA_MASK = (1 << 7) - 1

ZERO = "zero"  # |0_L> ancilla: finds Z errors on the data, can leak X errors onto it
PLUS = "plus"  # |+_L> ancilla: the X<->Z dual
KINDS = (ZERO, PLUS)

MAX_RETRIES = 100


class Protocol(enum.Enum):
    NON_FT = "nonft"
    SIMPLE_SERIES = "simple_series"
    NAIVE_NO_WAIT = "naive_no_wait"
    TWO_ANCILLA_SERIES = "two_ancilla_series"
    TWO_ANCILLA_PARALLEL = "two_ancilla_parallel"
    DECODING = "decoding"

    @property
    def verifies(self) -> bool:
        return self in VERIFICATION_PROTOCOLS


VERIFICATION_PROTOCOLS = (
    Protocol.SIMPLE_SERIES,
    Protocol.NAIVE_NO_WAIT,
    Protocol.TWO_ANCILLA_SERIES,
    Protocol.TWO_ANCILLA_PARALLEL,
)
FT_PROTOCOLS = VERIFICATION_PROTOCOLS + (Protocol.DECODING,)


class ProtocolError(RuntimeError):
    """Raised when a run cannot finish within its configured limits."""


@dataclass(frozen=True)
class Timing:
    """Step counts for the verification branches.

    ``retry_wait``: data wait per failed verification (simple series).
    ``series_wait``: ancilla wait after a first-try pass (2-ancilla series).
    ``parallel_wait``: ancilla wait after a first-try pass (2-ancilla parallel).
    ``two_swap`` selects the layout where the backup ancilla needs two SWAPs.
    """

    retry_wait: int = 6
    series_wait: int = 6
    parallel_wait: int = 3
    two_swap: bool = False
    max_retries: int = MAX_RETRIES


# ---------------------------------------------------------------------------
# segments


class Segment:
    """A compiled circuit plus the per-location bookkeeping used for sampling."""

    def __init__(self, name: str, circuit: ScheduledCircuit):
        self.name = name
        self.circuit = circuit
        self.compiled = CompiledCircuit(circuit, FAULT_PAULIS)
        self.n_events = len(self.compiled.events)
        locs = circuit.locations
        self.loc_kind = [loc.gate.kind for loc in locs]
        self.loc_events: list[list[int]] = [[] for _ in locs]
        self.event_loc: list[int] = []
        loc_id = {(loc.layer, loc.index): i for i, loc in enumerate(locs)}
        for e, (loc, _) in enumerate(self.compiled.events):
            i = loc_id[(loc.layer, loc.index)]
            self.loc_events[i].append(e)
            self.event_loc.append(i)
        self.event_weight: list[Weight] = [event_weight(self.loc_kind[i]) for i in self.event_loc]
        self._probs: dict[GateErrorRates, np.ndarray] = {}

    def __repr__(self) -> str:
        return f"Segment({self.name!r}, depth={self.circuit.depth})"

    def fault(self, event: int) -> Fault:
        loc, pauli = self.compiled.events[event]
        return Fault(loc.layer, loc.index, pauli)

    def location_probs(self, rates: GateErrorRates) -> np.ndarray:
        p = self._probs.get(rates)
        if p is None:
            p = np.array([rates.for_kind(k) for k in self.loc_kind])
            self._probs[rates] = p
        return p

    def run(self, x: int, z: int, events: Iterable[int]) -> tuple[int, int, int]:
        return self.compiled.run(x, z, events)

    def flips_on(self, flips: int, qubits: Sequence[int]) -> int:
        """Pack the flips of measurements on ``qubits`` into an int, bit i for qubits[i]."""
        out = 0
        for i, q in enumerate(qubits):
            out |= ((flips >> self._meas_pos[q]) & 1) << i
        return out

    @property
    def _meas_pos(self) -> dict[int, int]:
        pos = self.__dict__.get("_mp")
        if pos is None:
            pos = {q: i for i, (_, q) in enumerate(self.circuit.measurements)}
            self.__dict__["_mp"] = pos
        return pos


def _wait_layers(blocks: Iterable[int], k: int) -> list[list[GateOp]]:
    qs = list(blocks)
    return [[GateOp(WAIT, (q,)) for q in qs] for _ in range(k)]


def _merge(*stacks: list[list[GateOp]]) -> list[list[GateOp]]:
    depth = max(len(s) for s in stacks)
    return [[g for s in stacks if t < len(s) for g in s[t]] for t in range(depth)]


def _transversal(src: Sequence[int], dst: Sequence[int]) -> list[GateOp]:
    return [GateOp(CNOT, (a, b)) for a, b in zip(src, dst)]


def create_verify_layers(anc: Sequence[int], ver: Sequence[int]) -> list[list[GateOp]]:
    """Encode A and its verifier side by side, copy A's X errors onto V, measure V."""
    layers = _merge(encoder_layers(anc), encoder_layers(ver))
    layers.append(_transversal(anc, ver))
    layers.append([GateOp(MEAS_Z, (q,)) for q in ver] + [GateOp(WAIT, (q,)) for q in anc])
    return layers


def extract_layers(anc: Sequence[int]) -> list[list[GateOp]]:
    return [_transversal(anc, DATA), [GateOp(MEAS_X, (q,)) for q in anc]]


def swap_layers(a: Sequence[int], b: Sequence[int]) -> list[list[GateOp]]:
    return [_transversal(a, b), _transversal(b, a), _transversal(a, b)]


def decode_interact_layers(anc: Sequence[int], second: Sequence[int]) -> list[list[GateOp]]:
    """Data interaction, copy onto the product-state second block, then decode A."""
    dec = decoder_layers(anc)
    layers = [
        _transversal(anc, DATA) + [GateOp(PREP_Z, (q,)) for q in second],
        _transversal(anc, second),
        [GateOp(MEAS_Z, (q,)) for q in second] + dec[0],
    ]
    layers += dec[1:]
    return layers


def _build(kind: str, name: str, layers: list[list[GateOp]]) -> Segment:
    circ = circuit_from_layers(N_WORK, layers, f"{kind}:{name}")
    if kind == PLUS:
        circ = circ.dual()
    return Segment(f"{kind}:{name}", circ)


@dataclass
class Catalog:
    """All segments of both rounds for one :class:`Timing`."""

    timing: Timing
    seg: dict[tuple[str, str], Segment] = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = self.timing
        for kind in KINDS:
            b = lambda name, layers: self.seg.__setitem__((kind, name), _build(kind, name, layers))  # noqa: E731
            b("cv1", create_verify_layers(A1, V1))
            b("cv2", create_verify_layers(A2, V2))
            b("create", encoder_layers(A1))
            b("extract", extract_layers(A1))
            b("decode", decode_interact_layers(A1, V1))
            b("data_wait", _wait_layers(DATA, t.retry_wait))
            b("series_wait", _wait_layers(A1, t.series_wait))
            if t.two_swap:
                move = [[GateOp(PREP_Z, (q,)) for q in V1] + [GateOp(WAIT, (q,)) for q in A2]]
                move += swap_layers(V1, A2) + swap_layers(A1, V1)
                b("swap", move)
                b("parallel_wait", _wait_layers(A1, len(move)))
            else:
                b("swap", swap_layers(A1, A2))
                b("parallel_wait", _wait_layers(A1, t.parallel_wait))

    def __getitem__(self, key: tuple[str, str]) -> Segment:
        return self.seg[key]


@lru_cache(maxsize=8)
def catalog(timing: Timing = Timing()) -> Catalog:
    return Catalog(timing)


# ---------------------------------------------------------------------------
# classical post-processing

_CHECKS = STABILIZERS + (code.LOGICAL,)


def verification_accepts(v_flips: int) -> bool:
    """Accept iff every generator parity and the logical parity of V's flips is trivial."""
    return not any(parity(v_flips & m) for m in _CHECKS)


def syndrome_of_flips(flips7: int) -> int:
    return code.syndrome(flips7)


def coset_signature(flips7: int) -> int:
    """4-bit X-coset label of a transversal readout: 3 generator parities + total parity."""
    return code.syndrome(flips7) | parity(flips7) << 3


_PIVOT_Q = tuple(p - 1 for p in PIVOTS)  # bit order G1, G2, G3
_NONPIVOT_Q = tuple(q for q in range(7) if q not in _PIVOT_Q)


def decoder_signature(seg: Segment, flips: int) -> tuple[int, int, int]:
    """(standard syndrome, decoded-ancilla bits, second-block coset) of a decoding run."""
    s = seg.flips_on(flips, [A1[q] for q in _PIVOT_Q])
    d = seg.flips_on(flips, [A1[q] for q in _NONPIVOT_Q])
    b = coset_signature(seg.flips_on(flips, V1))
    return s, d, b


def _error_part(kind: str, x: int, z: int) -> int:
    """The data error type an ancilla of ``kind`` can leak (X for |0_L>)."""
    return (x if kind == ZERO else z) & DATA_MASK


def _residual_key(err: int) -> tuple[int, tuple[int, ...]]:
    r = code.reduce_mod_stabilizers(err)
    return r.bit_count(), code.labels(r)


@lru_cache(maxsize=4)
def decoding_table(kind: str, timing: Timing = Timing()) -> dict[tuple[int, int], int]:
    """Map (decoded bits, second-block coset) -> data correction pattern.

    Built by running every single fault of the encoder and decoding gadget:
    each signature gets the correction that leaves every fault sharing it
    with at most a weight-1 residual, preferring fewer residual errors and
    then lighter corrections.  Unseen signatures get no correction.
    """
    cat = catalog(timing)
    create, dec = cat[(kind, "create")], cat[(kind, "decode")]
    seen: dict[tuple[int, int], list[int]] = {(0, 0): [0]}
    for seg_name, seg in (("create", create), ("decode", dec)):
        for e in range(seg.n_events):
            x, z, fl = create.run(0, 0, [e] if seg_name == "create" else [])
            x, z, fl = dec.run(x, z, [e] if seg_name == "decode" else [])
            _, d, b = decoder_signature(dec, fl)
            seen.setdefault((d, b), []).append(_error_part(kind, x, z))

    candidates = sorted({code.reduce_mod_stabilizers(p) for p in range(128)}, key=_residual_key)
    table = {}
    for sig, errs in seen.items():
        best = min(
            candidates,
            key=lambda c: (
                max(_residual_key(e ^ c)[0] for e in errs),
                sum(1 for e in errs if code.reduce_mod_stabilizers(e ^ c)),
                _residual_key(c),
            ),
        )
        worst = max(_residual_key(e ^ best)[0] for e in errs)
        if worst > 1:
            raise ProtocolError(f"decoding signature {sig} is ambiguous at first order")
        table[sig] = best
    return table


# ---------------------------------------------------------------------------
# fault sources


Key = tuple


class FaultSource:
    """Decides the fault events of each executed segment; records the path."""

    def __init__(self) -> None:
        self.path: list[tuple[Key, Segment]] = []

    def events(self, key: Key, seg: Segment) -> list[int]:
        self.path.append((key, seg))
        return self._events(key, seg)

    def _events(self, key: Key, seg: Segment) -> list[int]:
        return []


class NoFaults(FaultSource):
    pass


class InjectedFaults(FaultSource):
    """Faults given explicitly as ``{key: [event, ...]}``."""

    def __init__(self, faults: dict[Key, list[int]] | None = None):
        super().__init__()
        self.faults = faults or {}

    def _events(self, key: Key, seg: Segment) -> list[int]:
        return list(self.faults.get(key, ()))


def sample_events(
    seg: Segment, rates: GateErrorRates, rng: np.random.Generator
) -> list[int]:
    """Independent fault draw per location of ``seg``."""
    probs = seg.location_probs(rates)
    u = rng.random(len(probs))
    hit = np.flatnonzero(u < probs)
    if not len(hit):
        return []
    pick = rng.random(len(hit))
    out = []
    for i, v in zip(hit, pick):
        evs = seg.loc_events[i]
        out.append(evs[int(v * len(evs))])
    return out


class SampledFaults(FaultSource):
    """Independent stochastic faults on every location, from ``rng``.

    ``preset`` pins the events of some keys (already drawn elsewhere); the
    rest are drawn on demand.  ``rng`` may be a zero-argument factory so the
    stream is only created when first needed.
    """

    def __init__(
        self,
        rates: GateErrorRates,
        rng: np.random.Generator | Callable[[], np.random.Generator],
        preset: dict[Key, list[int]] | None = None,
    ):
        super().__init__()
        self.rates = rates
        self._rng = rng
        self.preset = preset
        self.drew = False

    def _events(self, key: Key, seg: Segment) -> list[int]:
        if self.preset is not None and key in self.preset:
            return self.preset[key]
        self.drew = True
        if callable(self._rng) and not isinstance(self._rng, np.random.Generator):
            self._rng = self._rng()
        return sample_events(seg, self.rates, self._rng)


# ---------------------------------------------------------------------------
# rounds


@dataclass
class QecRoundOutcome:
    data_frame: PauliFrame
    corrections_applied: list[tuple[str, str, int]] = field(default_factory=list)
    n_verification_failures: int = 0
    skipped: bool = False
    syndromes: list[int] = field(default_factory=list)


def _apply_correction(kind: str, x: int, z: int, pattern: int) -> tuple[int, int]:
    # |0_L> round fixes Z errors from the syndrome; leaked X errors are fixed separately
    return (x, z ^ pattern) if kind == ZERO else (x ^ pattern, z)


def _leak_correction(kind: str, x: int, z: int, pattern: int) -> tuple[int, int]:
    return (x ^ pattern, z) if kind == ZERO else (x, z ^ pattern)


def _verify(cat: Catalog, kind: str, name: str, x: int, z: int, src: FaultSource, key: Key):
    seg = cat[(kind, name)]
    x, z, fl = seg.run(x, z, src.events(key, seg))
    ver = V1 if name == "cv1" else V2
    return x, z, verification_accepts(seg.flips_on(fl, ver))


def _extract(cat: Catalog, kind: str, x: int, z: int, src: FaultSource, out: QecRoundOutcome):
    seg = cat[(kind, "extract")]
    x, z, fl = seg.run(x, z, src.events((kind, "extract"), seg))
    s = code.syndrome(seg.flips_on(fl, A1))
    corr = code.lookup_correction(s)
    out.syndromes.append(s)
    if corr:
        out.corrections_applied.append((kind, "syndrome", corr))
    return _apply_correction(kind, x, z, corr)


def _segment(cat: Catalog, kind: str, name: str, x: int, z: int, src: FaultSource, key: Key):
    seg = cat[(kind, name)]
    return seg.run(x, z, src.events(key, seg))


def run_round(
    kind: str,
    protocol: Protocol,
    x: int,
    z: int,
    src: FaultSource,
    timing: Timing = Timing(),
    out: QecRoundOutcome | None = None,
) -> tuple[int, int, QecRoundOutcome]:
    """One syndrome-extraction round on workspace frame ``(x, z)``."""
    cat = catalog(timing)
    if out is None:
        out = QecRoundOutcome(PauliFrame(7))

    if protocol in (Protocol.NON_FT, Protocol.DECODING):
        x, z, _ = _segment(cat, kind, "create", x, z, src, (kind, "create"))
        if protocol == Protocol.NON_FT:
            x, z = _extract(cat, kind, x, z, src, out)
            return x, z, out
        seg = cat[(kind, "decode")]
        x, z, fl = seg.run(x, z, src.events((kind, "decode"), seg))
        s, d, b = decoder_signature(seg, fl)
        corr = code.lookup_correction(s)
        out.syndromes.append(s)
        if corr:
            out.corrections_applied.append((kind, "syndrome", corr))
        x, z = _apply_correction(kind, x, z, corr)
        leak = decoding_table(kind, timing).get((d, b), 0)
        if leak:
            out.corrections_applied.append((kind, "decoded", leak))
        x, z = _leak_correction(kind, x, z, leak)
        return x, z, out

    if protocol in (Protocol.SIMPLE_SERIES, Protocol.NAIVE_NO_WAIT):
        attempt = 0
        while True:
            x, z, ok = _verify(cat, kind, "cv1", x, z, src, (kind, "cv", attempt))
            if ok:
                break
            out.n_verification_failures += 1
            if protocol == Protocol.SIMPLE_SERIES:
                x, z, _ = _segment(cat, kind, "data_wait", x, z, src, (kind, "data_wait", attempt))
            attempt += 1
            if attempt > timing.max_retries:
                raise ProtocolError(f"no ancilla passed verification in {timing.max_retries} retries")
        x, z = _extract(cat, kind, x, z, src, out)
        return x, z, out

    if protocol == Protocol.TWO_ANCILLA_SERIES:
        x, z, ok = _verify(cat, kind, "cv1", x, z, src, (kind, "cv", 0))
        if ok:
            x, z, _ = _segment(cat, kind, "series_wait", x, z, src, (kind, "series_wait"))
        else:
            out.n_verification_failures += 1
            x, z, ok = _verify(cat, kind, "cv1", x, z, src, (kind, "cv", 1))
            if not ok:
                out.n_verification_failures += 1
                out.skipped = True
                return x, z, out
        x, z = _extract(cat, kind, x, z, src, out)
        return x, z, out

    if protocol == Protocol.TWO_ANCILLA_PARALLEL:
        x, z, ok1 = _verify(cat, kind, "cv1", x, z, src, (kind, "cv", 0))
        x, z, ok2 = _verify(cat, kind, "cv2", x, z, src, (kind, "cv2", 0))
        if ok1:
            x, z, _ = _segment(cat, kind, "parallel_wait", x, z, src, (kind, "parallel_wait"))
        else:
            out.n_verification_failures += 1
            if not ok2:
                out.n_verification_failures += 1
                out.skipped = True
                return x, z, out
            x, z, _ = _segment(cat, kind, "swap", x, z, src, (kind, "swap"))
        x, z = _extract(cat, kind, x, z, src, out)
        return x, z, out

    raise ValueError(f"unknown protocol {protocol}")


def run_full_qec_frames(
    protocol: Protocol,
    src: FaultSource,
    timing: Timing = Timing(),
    x: int = 0,
    z: int = 0,
) -> QecRoundOutcome:
    """|0_L> round then |+_L> round; stops early if a round is skipped."""
    out = QecRoundOutcome(PauliFrame(7))
    for kind in KINDS:
        x, z, out = run_round(kind, protocol, x, z, src, timing, out)
        if out.skipped:
            break
    out.data_frame = PauliFrame(7, x & DATA_MASK, z & DATA_MASK)
    return out


def default_path(protocol: Protocol, timing: Timing = Timing()) -> list[tuple[Key, Segment]]:
    """Segments executed when no fault occurs."""
    src = NoFaults()
    run_full_qec_frames(protocol, src, timing)
    return src.path


# ---------------------------------------------------------------------------
# public wrappers on plain frames


def run_full_qec(
    data_frame: PauliFrame,
    protocol: Protocol,
    rates: GateErrorRates,
    error_class: ErrorClass = ErrorClass.ALL,
    rng: np.random.Generator | None = None,
    timing: Timing = Timing(),
) -> QecRoundOutcome:
    rng = rng if rng is not None else np.random.default_rng()
    src = SampledFaults(rates.filtered(error_class), rng)
    return run_full_qec_frames(protocol, src, timing, data_frame.x, data_frame.z)


def run_verification_qec_round(
    data_frame: PauliFrame,
    protocol: Protocol,
    rates: GateErrorRates,
    rng: np.random.Generator | None = None,
    kind: str = ZERO,
    timing: Timing = Timing(),
    src: FaultSource | None = None,
) -> QecRoundOutcome:
    if not protocol.verifies:
        raise ValueError(f"{protocol} is not a verification protocol")
    if src is None:
        src = SampledFaults(rates, rng if rng is not None else np.random.default_rng())
    x, z, out = run_round(kind, protocol, data_frame.x, data_frame.z, src, timing)
    out.data_frame = PauliFrame(7, x & DATA_MASK, z & DATA_MASK)
    return out


def run_decoding_qec_round(
    data_frame: PauliFrame,
    kind: str,
    rates: GateErrorRates,
    rng: np.random.Generator | None = None,
    src: FaultSource | None = None,
) -> QecRoundOutcome:
    if src is None:
        src = SampledFaults(rates, rng if rng is not None else np.random.default_rng())
    x, z, out = run_round(kind, Protocol.DECODING, data_frame.x, data_frame.z, src)
    out.data_frame = PauliFrame(7, x & DATA_MASK, z & DATA_MASK)
    return out


def build_verified_ancilla_gadget(kind: str = ZERO) -> tuple[ScheduledCircuit, Callable[[dict], bool]]:
    """Stand-alone create-and-verify circuit on 14 qubits (Q = 0-6, V = 7-13).

    The predicate takes the measurement record returned by
    :func:`steanesim.frame.propagate` and applies the verification checks.
    """
    q, v = tuple(range(7)), tuple(range(7, 14))
    circ = circuit_from_layers(14, create_verify_layers(q, v), f"verify|{kind}>")
    if kind == PLUS:
        circ = circ.dual()
    last = circ.depth - 1

    def accepts(record: dict[tuple[int, int], int]) -> bool:
        flips = sum(record[(last, qq)] << i for i, qq in enumerate(v))
        return verification_accepts(flips)

    return circ, accepts


def run_steane_extraction(
    data_frame: PauliFrame,
    ancilla_frame: PauliFrame,
    kind: str = ZERO,
    faults: Sequence[Fault] = (),
) -> tuple[PauliFrame, int, int]:
    """Transversal coupling of a prepared ancilla to the data, then readout.

    Returns the corrected data frame, the 3-bit syndrome and the correction
    pattern applied (to Z for a |0_L> ancilla, to X for |+_L>).
    """
    from .frame import propagate

    anc = tuple(range(7, 14))
    layers = [_transversal(anc, DATA), [GateOp(MEAS_X, (q,)) for q in anc]]
    circ = circuit_from_layers(14, layers, f"extract|{kind}>")
    if kind == PLUS:
        circ = circ.dual()
    frame = PauliFrame(14, data_frame.x | ancilla_frame.x << 7, data_frame.z | ancilla_frame.z << 7)
    out, record = propagate(circ, faults, frame)
    flips = sum(record[(1, q)] << i for i, q in enumerate(anc))
    s = code.syndrome(flips)
    corr = code.lookup_correction(s)
    x, z = _apply_correction(kind, out.x & DATA_MASK, out.z & DATA_MASK, corr)
    return PauliFrame(7, x, z), s, corr


def rate_kind(seg: Segment, event: int) -> str:
    return RATE_OF[seg.loc_kind[seg.event_loc[event]]]
