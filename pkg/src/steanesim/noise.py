"""Stochastic gate-fault model with per-gate-class rates and class filtering."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from .frame import CNOT, MEAS_X, MEAS_Z, PREP_X, PREP_Z, WAIT, Fault, ScheduledCircuit

# control first, in the order the two-qubit faults are usually listed
CNOT_PAULIS = tuple(a + b for a in "IXYZ" for b in "IXYZ" if a + b != "II")

FAULT_PAULIS: dict[str, tuple[str, ...]] = {
    WAIT: ("X", "Y", "Z"),
    PREP_Z: ("X",),  # |1> instead of |0>
    PREP_X: ("Z",),  # |-> instead of |+>
    MEAS_Z: ("M",),
    MEAS_X: ("M",),
    CNOT: CNOT_PAULIS,
}

# gate kind -> name of the rate field that governs it
RATE_OF = {WAIT: "wait", PREP_Z: "prep", PREP_X: "prep", MEAS_Z: "meas", MEAS_X: "meas", CNOT: "cnot"}


@dataclass(frozen=True)
class GateErrorRates:
    prep: float = 0.0
    meas: float = 0.0
    wait: float = 0.0
    cnot: float = 0.0

    def __post_init__(self) -> None:
        for name in ("prep", "meas", "wait", "cnot"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"rate {name}={v} outside [0, 1]")

    @classmethod
    def uniform(cls, p: float) -> "GateErrorRates":
        return cls(p, p, p, p)

    def for_kind(self, kind: str) -> float:
        return getattr(self, RATE_OF[kind])

    def filtered(self, error_class: "ErrorClass") -> "GateErrorRates":
        """Rates with every class the filter disables forced to zero."""
        kept = error_class.rate_names
        return replace(self, **{n: 0.0 for n in ("prep", "meas", "wait", "cnot") if n not in kept})

    def as_dict(self) -> dict[str, float]:
        return {"prep": self.prep, "meas": self.meas, "wait": self.wait, "cnot": self.cnot}


class ErrorClass(enum.Enum):
    """Which gate classes may fault.

    Class 0 is preparation and measurement, class 1 the single-qubit waits
    (corrections are applied in the frame and never fault), class 2 the CNOTs.
    """

    ALL = "all"
    CLASS0 = "class0"
    CLASS1 = "class1"
    CLASS2 = "class2"

    @property
    def rate_names(self) -> frozenset[str]:
        return {
            ErrorClass.ALL: frozenset({"prep", "meas", "wait", "cnot"}),
            ErrorClass.CLASS0: frozenset({"prep", "meas"}),
            ErrorClass.CLASS1: frozenset({"wait"}),
            ErrorClass.CLASS2: frozenset({"cnot"}),
        }[self]

    def enables(self, kind: str) -> bool:
        return RATE_OF[kind] in self.rate_names


@dataclass(frozen=True)
class Weight:
    """First-order probability of one fault event: ``coeff * rates[rate]``."""

    rate: str
    coeff: Fraction

    def value(self, rates: GateErrorRates) -> float:
        return float(self.coeff) * getattr(rates, self.rate)

    def __str__(self) -> str:
        return f"p_{self.rate}" if self.coeff == 1 else f"p_{self.rate}/{self.coeff.denominator}"


def event_weight(kind: str) -> Weight:
    return Weight(RATE_OF[kind], Fraction(1, len(FAULT_PAULIS[kind])))


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Counter-based random stream keyed by ``(master_seed, *key)``.

    Philox is a counter-based generator, so any key can be opened
    independently of every other; results do not depend on execution order.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([master_seed, *key])))


def sample_faults(
    circuit: ScheduledCircuit,
    rates: GateErrorRates,
    error_class: ErrorClass = ErrorClass.ALL,
    rng: np.random.Generator | None = None,
) -> list[Fault]:
    """Independently draw a fault (or none) for every gate of ``circuit``.

    The same uniforms are consumed whatever the filter, so a filtered run is
    the unfiltered run restricted to the enabled classes.
    """
    if rng is None:
        rng = np.random.default_rng()
    locs = circuit.locations
    if not locs:
        return []
    u = rng.random(len(locs))
    pick = rng.random(len(locs))
    faults = []
    for loc, ui, vi in zip(locs, u, pick):
        kind = loc.gate.kind
        if ui < rates.for_kind(kind) and error_class.enables(kind):
            options = FAULT_PAULIS[kind]
            faults.append(Fault(loc.layer, loc.index, options[int(vi * len(options))]))
    return faults


def enumerate_fault_space(
    circuit: ScheduledCircuit, error_class: ErrorClass = ErrorClass.ALL
) -> list[tuple[Fault, Weight]]:
    """Every single fault event of ``circuit`` with its first-order weight.

    Ordered layer-major, then by gate position (gates within a layer are
    kept in qubit order by the circuit builders), then by Pauli.
    """
    out = []
    for loc in circuit.locations:
        kind = loc.gate.kind
        if not error_class.enables(kind):
            continue
        w = event_weight(kind)
        for pauli in FAULT_PAULIS[kind]:
            out.append((Fault(loc.layer, loc.index, pauli), w))
    return out
