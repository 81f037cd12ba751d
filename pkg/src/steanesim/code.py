"""The [[7,1,3]] Steane code: stabilizers, syndrome lookup, encoders.

Qubits of a block are numbered 0..6 here; docstrings and the Table-I data
use the 1..7 labels common in the literature, so ``X_7`` is bit 6.
Error patterns on a single block are 7-bit ints.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

from .frame import CNOT, MEAS_X, MEAS_Z, PREP_X, PREP_Z, WAIT, GateOp, PauliFrame, ScheduledCircuit

N = 7
FULL = (1 << N) - 1


def mask(*labels: int) -> int:
    """Pattern from 1-based qubit labels: ``mask(1, 7) == X_1 X_7``."""
    m = 0
    for q in labels:
        m |= 1 << (q - 1)
    return m


def labels(pattern: int) -> tuple[int, ...]:
    return tuple(q + 1 for q in range(N) if pattern >> q & 1)


# G1, G2, G3; the same supports serve for the X- and Z-type generators
STABILIZERS = (mask(1, 3, 5, 7), mask(4, 5, 6, 7), mask(2, 3, 6, 7))
LOGICAL = FULL


@dataclass(frozen=True)
class CodeSpec:
    n: int
    x_stabilizers: tuple[int, ...]
    z_stabilizers: tuple[int, ...]
    logical_x: int
    logical_z: int


STEANE = CodeSpec(N, STABILIZERS, STABILIZERS, LOGICAL, LOGICAL)


def _weight(v: int) -> int:
    return v.bit_count()


def syndrome(pattern: int) -> int:
    """3-bit syndrome (bit i = overlap parity with generator G_{i+1})."""
    s = 0
    for i, g in enumerate(STABILIZERS):
        s |= (_weight(pattern & g) & 1) << i
    return s


def syndrome_bits(s: int) -> tuple[int, int, int]:
    return (s & 1, s >> 1 & 1, s >> 2 & 1)


def compute_syndrome(frame: PauliFrame, basis: str) -> tuple[int, int, int]:
    """Syndrome of the X part (``basis="X"``, seen by Z generators) or the Z part."""
    if frame.n_qubits != N:
        raise ValueError("syndromes are defined on a 7-qubit block")
    if basis == "X":
        return syndrome_bits(syndrome(frame.x))
    if basis == "Z":
        return syndrome_bits(syndrome(frame.z))
    raise ValueError(f"basis must be 'X' or 'Z', not {basis!r}")


_LOOKUP = {syndrome(1 << q): 1 << q for q in range(N)}
_LOOKUP[0] = 0


def lookup_correction(s: int | Sequence[int]) -> int:
    """Weight <= 1 correction pattern for syndrome ``s``."""
    if not isinstance(s, int):
        s = s[0] | s[1] << 1 | s[2] << 2
    return _LOOKUP[s]


@lru_cache(maxsize=None)
def _stabilizer_group() -> tuple[int, ...]:
    group = {0}
    for g in STABILIZERS:
        group |= {h ^ g for h in group}
    return tuple(sorted(group))


def stabilizer_group() -> tuple[int, ...]:
    return _stabilizer_group()


def _order_key(pattern: int) -> tuple[int, tuple[int, ...]]:
    return (_weight(pattern), labels(pattern))


@lru_cache(maxsize=None)
def reduce_mod_stabilizers(pattern: int) -> int:
    """Canonical member of ``pattern`` times the stabilizer group.

    Minimal weight first, ties broken by the sorted qubit labels compared
    lexicographically (so ``X_1 X_7`` beats ``X_2 X_4``).
    """
    return min((pattern ^ g for g in _stabilizer_group()), key=_order_key)


def logical_outcome(frame: PauliFrame) -> str:
    """Logical class left on a data block after one ideal round of correction."""
    if frame.n_qubits != N:
        raise ValueError("logical_outcome needs a 7-qubit frame")
    x = frame.x ^ lookup_correction(syndrome(frame.x))
    z = frame.z ^ lookup_correction(syndrome(frame.z))
    # residuals are codewords now: odd weight means a logical operator
    return ("I", "X", "Z", "Y")[(_weight(x) & 1) | (_weight(z) & 1) << 1]


# ---------------------------------------------------------------------------
# encoding circuits

# |+> qubits, one per generator; each copies itself onto the rest of its support
PIVOTS = (1, 4, 2)  # for G1, G2, G3

# CNOTs 1..9 as (control, target), 1-based, in the order of the |0_L> encoder
ENCODER_CNOTS = (
    (1, 3), (4, 6), (2, 7),
    (1, 5), (4, 7), (2, 6),
    (2, 3), (4, 5), (1, 7),
)
ENCODER_LAYERS = ((0, 1, 2), (3, 4, 5), (6, 7, 8))

# Table I: X on both outputs of encoder CNOT k -> error left on the block
TABLE_I = {
    1: mask(1, 3, 5, 7),
    2: mask(4, 5, 6, 7),
    3: mask(2, 3, 6, 7),
    4: mask(1, 5, 7),
    5: mask(4, 5, 7),
    6: mask(2, 3, 6),
    7: mask(2, 3),
    8: mask(4, 5),
    9: mask(1, 7),
}

TWO_QUBIT_CLASSES = tuple(sorted({reduce_mod_stabilizers(TABLE_I[k]) for k in (7, 8, 9)}))


def _sorted_layer(gates: list[GateOp]) -> tuple[GateOp, ...]:
    return tuple(sorted(gates, key=lambda g: min(g.qubits)))


def encoder_layers(block: Sequence[int]) -> list[list[GateOp]]:
    """|0_L> encoder on ``block`` (7 global qubits): 1 prep layer + 3 CNOT layers.

    The one qubit idle in each CNOT layer gets an explicit wait.
    """
    pivots = {block[p - 1] for p in PIVOTS}
    layers: list[list[GateOp]] = [
        [GateOp(PREP_X if q in pivots else PREP_Z, (q,)) for q in block]
    ]
    for idx in ENCODER_LAYERS:
        busy = set()
        layer = []
        for k in idx:
            c, t = ENCODER_CNOTS[k]
            layer.append(GateOp(CNOT, (block[c - 1], block[t - 1])))
            busy |= {block[c - 1], block[t - 1]}
        layer += [GateOp(WAIT, (q,)) for q in block if q not in busy]
        layers.append(layer)
    return layers


def decoder_layers(block: Sequence[int]) -> list[list[GateOp]]:
    """Time reverse of :func:`encoder_layers`, ending in X (pivots) / Z measurements."""
    enc = encoder_layers(block)
    pivots = {block[p - 1] for p in PIVOTS}
    layers = [list(layer) for layer in reversed(enc[1:])]
    layers.append([GateOp(MEAS_X if q in pivots else MEAS_Z, (q,)) for q in block])
    return layers


def circuit_from_layers(n_qubits: int, layers: list[list[GateOp]], name: str = "") -> ScheduledCircuit:
    return ScheduledCircuit(n_qubits, tuple(_sorted_layer(layer) for layer in layers), name)


def zero_encoder(block: Sequence[int] = tuple(range(N)), n_qubits: int | None = None) -> ScheduledCircuit:
    n = n_qubits if n_qubits is not None else max(block) + 1
    return circuit_from_layers(n, encoder_layers(block), "encode|0_L>")


def plus_encoder(block: Sequence[int] = tuple(range(N)), n_qubits: int | None = None) -> ScheduledCircuit:
    """|+_L> encoder: the X<->Z dual of the |0_L> encoder."""
    return zero_encoder(block, n_qubits).dual()


def encoder_cnot_location(k: int, block: Sequence[int] = tuple(range(N))) -> tuple[int, int]:
    """(layer, index) of encoder CNOT ``k`` (1..9) in :func:`zero_encoder`."""
    circ = zero_encoder(block)
    c, t = ENCODER_CNOTS[k - 1]
    want = (block[c - 1], block[t - 1])
    for loc in circ.locations:
        if loc.gate.kind == CNOT and loc.gate.qubits == want:
            return loc.layer, loc.index
    raise KeyError(k)
