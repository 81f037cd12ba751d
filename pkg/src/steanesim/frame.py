"""Pauli-frame propagation through scheduled Clifford circuits.

Frames are stored as a pair of Python ints used as bit-vectors (bit ``q`` of
``x`` is the X component on qubit ``q``).  Every circuit in this package is
Clifford and every fault is a Pauli, so tracking the frame is enough; the
quantum state itself is never simulated here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

PREP_Z = "prep_z"
PREP_X = "prep_x"
MEAS_Z = "meas_z"
MEAS_X = "meas_x"
CNOT = "cnot"
WAIT = "wait"

GATE_KINDS = (PREP_Z, PREP_X, MEAS_Z, MEAS_X, CNOT, WAIT)
PREPS = (PREP_Z, PREP_X)
MEASUREMENTS = (MEAS_Z, MEAS_X)

# single-qubit Pauli codes: bit 0 = X component, bit 1 = Z component
PAULI_CODES = {"I": 0, "X": 1, "Z": 2, "Y": 3}
PAULI_NAMES = {v: k for k, v in PAULI_CODES.items()}


class CircuitError(ValueError):
    """A circuit or fault violates the engine's contract."""


@dataclass(frozen=True)
class PauliFrame:
    n_qubits: int
    x: int = 0
    z: int = 0

    @classmethod
    def from_paulis(cls, n_qubits: int, paulis: Mapping[int, str]) -> "PauliFrame":
        x = z = 0
        for q, name in paulis.items():
            code = PAULI_CODES[name]
            if code & 1:
                x |= 1 << q
            if code & 2:
                z |= 1 << q
        return cls(n_qubits, x, z)

    def __xor__(self, other: "PauliFrame") -> "PauliFrame":
        if other.n_qubits != self.n_qubits:
            raise CircuitError("frames of different width")
        return PauliFrame(self.n_qubits, self.x ^ other.x, self.z ^ other.z)

    def pauli(self, q: int) -> str:
        return PAULI_NAMES[((self.x >> q) & 1) | (((self.z >> q) & 1) << 1)]

    def restrict(self, qubits: Sequence[int]) -> "PauliFrame":
        """Frame on ``qubits`` only, renumbered 0..len(qubits)-1."""
        x = z = 0
        for i, q in enumerate(qubits):
            x |= ((self.x >> q) & 1) << i
            z |= ((self.z >> q) & 1) << i
        return PauliFrame(len(qubits), x, z)

    @property
    def is_identity(self) -> bool:
        return self.x == 0 and self.z == 0

    def __str__(self) -> str:
        return "".join(self.pauli(q) for q in range(self.n_qubits))


@dataclass(frozen=True)
class GateOp:
    kind: str
    qubits: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.kind not in GATE_KINDS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        want = 2 if self.kind == CNOT else 1
        if len(self.qubits) != want:
            raise CircuitError(f"{self.kind} acts on {want} qubit(s), got {self.qubits}")
        if want == 2 and self.qubits[0] == self.qubits[1]:
            raise CircuitError("CNOT control and target must differ")


def gate(kind: str, *qubits: int) -> GateOp:
    return GateOp(kind, tuple(qubits))


@dataclass(frozen=True)
class Location:
    """A gate instance inside a circuit, addressed by layer and position."""

    layer: int
    index: int
    gate: GateOp


@dataclass(frozen=True)
class ScheduledCircuit:
    """Layers of gates; each layer is one time step of equal duration.

    A qubit is live from its first appearance until it is measured.  While
    live it must be acted on in every layer (idling is an explicit ``wait``);
    after a measurement it may only reappear through a preparation.
    """

    n_qubits: int
    layers: tuple[tuple[GateOp, ...], ...]
    name: str = ""
    locations: tuple[Location, ...] = field(init=False, repr=False, compare=False)
    measurements: tuple[tuple[int, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        layers = tuple(tuple(layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        self._validate()
        locs = tuple(
            Location(t, i, g) for t, layer in enumerate(layers) for i, g in enumerate(layer)
        )
        object.__setattr__(self, "locations", locs)
        meas = tuple((loc.layer, loc.gate.qubits[0]) for loc in locs if loc.gate.kind in MEASUREMENTS)
        object.__setattr__(self, "measurements", meas)

    def _validate(self) -> None:
        live: set[int] = set()
        seen: set[int] = set()
        for t, layer in enumerate(self.layers):
            used: set[int] = set()
            for g in layer:
                for q in g.qubits:
                    if not 0 <= q < self.n_qubits:
                        raise CircuitError(f"qubit {q} out of range in layer {t}")
                    if q in used:
                        raise CircuitError(f"qubit {q} used twice in layer {t}")
                    used.add(q)
                    if q in seen and q not in live and g.kind not in PREPS:
                        raise CircuitError(f"qubit {q} used after measurement in layer {t}")
            gone = live - used
            # a live qubit may drop out only for good (it leaves the circuit)
            for q in gone:
                if any(q in g.qubits for later in self.layers[t + 1:] for g in later):
                    raise CircuitError(f"live qubit {q} idles without a wait in layer {t}")
            live -= gone
            for g in layer:
                for q in g.qubits:
                    seen.add(q)
                    if g.kind in MEASUREMENTS:
                        live.discard(q)
                    else:
                        live.add(q)

    @property
    def depth(self) -> int:
        return len(self.layers)

    def qubits(self) -> set[int]:
        return {q for layer in self.layers for g in layer for q in g.qubits}

    def input_qubits(self) -> list[int]:
        """Qubits whose incoming frame reaches the circuit (first gate is not a prep)."""
        first: dict[int, str] = {}
        for layer in self.layers:
            for g in layer:
                for q in g.qubits:
                    first.setdefault(q, g.kind)
        return sorted(q for q, kind in first.items() if kind not in PREPS)

    def count(self, kind: str) -> int:
        return sum(1 for loc in self.locations if loc.gate.kind == kind)

    def then(self, other: "ScheduledCircuit", name: str = "") -> "ScheduledCircuit":
        return ScheduledCircuit(
            max(self.n_qubits, other.n_qubits), self.layers + other.layers, name or self.name
        )

    def inverse(self) -> "ScheduledCircuit":
        """Reversed layers with preparations and measurements dropped."""
        layers = []
        for layer in reversed(self.layers):
            kept = tuple(g for g in layer if g.kind in (CNOT, WAIT))
            if kept:
                layers.append(kept)
        return ScheduledCircuit(self.n_qubits, tuple(layers), self.name + "^-1")

    def dual(self) -> "ScheduledCircuit":
        """Swap X and Z roles: preps/measurements change basis, CNOTs flip direction."""
        swap = {PREP_Z: PREP_X, PREP_X: PREP_Z, MEAS_Z: MEAS_X, MEAS_X: MEAS_Z}
        layers = []
        for layer in self.layers:
            new = []
            for g in layer:
                if g.kind == CNOT:
                    new.append(GateOp(CNOT, g.qubits[::-1]))
                else:
                    new.append(GateOp(swap.get(g.kind, g.kind), g.qubits))
            layers.append(tuple(new))
        return ScheduledCircuit(self.n_qubits, tuple(layers), self.name)


@dataclass(frozen=True)
class Fault:
    """An actual fault at a circuit location.

    ``pauli`` is a Pauli string over the gate's qubits ("X", "ZY", ...) for
    waits, preps and CNOTs (control first), or ``"M"`` for a flipped
    measurement report.
    """

    layer: int
    index: int
    pauli: str


def _cnot(x: int, z: int, c: int, t: int) -> tuple[int, int]:
    x ^= ((x >> c) & 1) << t
    z ^= ((z >> t) & 1) << c
    return x, z


def apply_gate(frame: PauliFrame, g: GateOp) -> tuple[PauliFrame, int | None]:
    """Ideal conjugation of ``frame`` by ``g``; returns the frame and a flip bit for measurements."""
    for q in g.qubits:
        if not 0 <= q < frame.n_qubits:
            raise CircuitError(f"qubit {q} outside frame of {frame.n_qubits}")
    x, z = frame.x, frame.z
    flip = None
    if g.kind == CNOT:
        x, z = _cnot(x, z, *g.qubits)
    elif g.kind in PREPS:
        mask = ~(1 << g.qubits[0])
        x &= mask
        z &= mask
    elif g.kind == MEAS_Z:
        flip = (x >> g.qubits[0]) & 1
    elif g.kind == MEAS_X:
        flip = (z >> g.qubits[0]) & 1
    return PauliFrame(frame.n_qubits, x, z), flip


def _fault_effect(g: GateOp, pauli: str) -> tuple[int, int, int]:
    """(x, z, flip) contribution of a fault on gate ``g``."""
    if g.kind in MEASUREMENTS:
        if pauli != "M":
            raise CircuitError(f"measurement fault must be 'M', got {pauli!r}")
        return 0, 0, 1
    if g.kind == PREP_Z and pauli != "X" or g.kind == PREP_X and pauli != "Z":
        raise CircuitError(f"{g.kind} fault must prepare the orthogonal state, got {pauli!r}")
    if len(pauli) != len(g.qubits) or any(c not in PAULI_CODES for c in pauli):
        raise CircuitError(f"bad fault Pauli {pauli!r} for {g.kind}")
    if set(pauli) == {"I"}:
        raise CircuitError("a fault must not be the identity")
    x = z = 0
    for q, c in zip(g.qubits, pauli):
        code = PAULI_CODES[c]
        x |= (code & 1) << q
        z |= ((code >> 1) & 1) << q
    return x, z, 0


def propagate(
    circuit: ScheduledCircuit,
    faults: Iterable[Fault] = (),
    frame: PauliFrame | None = None,
) -> tuple[PauliFrame, dict[tuple[int, int], int]]:
    """Run ``frame`` through ``circuit`` injecting ``faults`` after their gates.

    Returns the final frame and a record ``{(layer, qubit): flip}`` for every
    measurement, where ``flip`` says whether the reported outcome differs
    from the noiseless one.
    """
    if frame is None:
        frame = PauliFrame(circuit.n_qubits)
    if frame.n_qubits != circuit.n_qubits:
        raise CircuitError("frame width does not match circuit")
    by_gate: dict[tuple[int, int], list[str]] = {}
    for f in faults:
        if not (0 <= f.layer < circuit.depth and 0 <= f.index < len(circuit.layers[f.layer])):
            raise CircuitError(f"fault at nonexistent location {f}")
        by_gate.setdefault((f.layer, f.index), []).append(f.pauli)

    record: dict[tuple[int, int], int] = {}
    for t, layer in enumerate(circuit.layers):
        for i, g in enumerate(layer):
            frame, flip = apply_gate(frame, g)
            for pauli in by_gate.get((t, i), ()):
                fx, fz, fm = _fault_effect(g, pauli)
                frame = PauliFrame(frame.n_qubits, frame.x ^ fx, frame.z ^ fz)
                if fm:
                    flip ^= 1
            if flip is not None:
                record[(t, g.qubits[0])] = flip
    return frame, record


@dataclass(frozen=True)
class Response:
    x: int
    z: int
    flips: int

    def __xor__(self, other: "Response") -> "Response":
        return Response(self.x ^ other.x, self.z ^ other.z, self.flips ^ other.flips)


class CompiledCircuit:
    """Linear-response table for fast repeated propagation.

    Propagation is linear over GF(2), so the output of any run is the XOR of
    the responses to each set input bit and each fault.  ``flips`` are
    packed in the order of ``circuit.measurements``.  Qubits outside the
    circuit pass through untouched.
    """

    def __init__(self, circuit: ScheduledCircuit, fault_paulis: Mapping[str, Sequence[str]]):
        self.circuit = circuit
        self.touched = 0
        for q in circuit.qubits():
            self.touched |= 1 << q
        self.inputs = circuit.input_qubits()
        self.input_mask = sum(1 << q for q in self.inputs)
        self._meas_index = {m: i for i, m in enumerate(circuit.measurements)}

        self.x_response: dict[int, Response] = {}
        self.z_response: dict[int, Response] = {}
        n = circuit.n_qubits
        for q in self.inputs:
            self.x_response[q] = self._run(PauliFrame(n, x=1 << q), ())
            self.z_response[q] = self._run(PauliFrame(n, z=1 << q), ())

        # one event per (location, pauli) in canonical order
        self.events: list[tuple[Location, str]] = []
        self.event_response: list[Response] = []
        for loc in circuit.locations:
            for pauli in fault_paulis[loc.gate.kind]:
                self.events.append((loc, pauli))
                self.event_response.append(
                    self._run(PauliFrame(n), (Fault(loc.layer, loc.index, pauli),))
                )

    def _run(self, frame: PauliFrame, faults) -> Response:
        out, record = propagate(self.circuit, faults, frame)
        flips = 0
        for key, bit in record.items():
            flips |= bit << self._meas_index[key]
        return Response(out.x & self.touched, out.z & self.touched, flips)

    def run(self, x: int, z: int, events: Iterable[int] = ()) -> tuple[int, int, int]:
        """Propagate workspace frame ``(x, z)`` with fault event indices ``events``."""
        keep = ~self.touched
        ox, oz, flips = x & keep, z & keep, 0
        bits = x & self.input_mask
        while bits:
            low = bits & -bits
            r = self.x_response[low.bit_length() - 1]
            ox ^= r.x
            oz ^= r.z
            flips ^= r.flips
            bits ^= low
        bits = z & self.input_mask
        while bits:
            low = bits & -bits
            r = self.z_response[low.bit_length() - 1]
            ox ^= r.x
            oz ^= r.z
            flips ^= r.flips
            bits ^= low
        for e in events:
            r = self.event_response[e]
            ox ^= r.x
            oz ^= r.z
            flips ^= r.flips
        return ox, oz, flips

    def meas_mask(self, qubits: Iterable[int], layer: int | None = None) -> int:
        """Bitmask over packed flips selecting measurements of ``qubits``."""
        wanted = set(qubits)
        mask = 0
        for i, (t, q) in enumerate(self.circuit.measurements):
            if q in wanted and (layer is None or t == layer):
                mask |= 1 << i
        return mask


def parity(v: int) -> int:
    return v.bit_count() & 1
