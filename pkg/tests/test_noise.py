import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest

from steanesim import code
from steanesim.frame import CNOT, MEAS_X, MEAS_Z, PREP_X, PREP_Z, WAIT, GateOp, ScheduledCircuit, gate
from steanesim.noise import (
    CNOT_PAULIS,
    ErrorClass,
    GateErrorRates,
    enumerate_fault_space,
    sample_faults,
    stream,
)
from steanesim.protocols import build_verified_ancilla_gadget


def _mixed_circuit(n_pairs: int) -> ScheduledCircuit:
    """Preps, a layer of CNOTs and waits, then measurements."""
    n = 4 * n_pairs
    preps = [GateOp(PREP_Z if q % 2 else PREP_X, (q,)) for q in range(n)]
    mid = [GateOp(CNOT, (q, q + 1)) for q in range(0, 2 * n_pairs, 2)]
    mid += [GateOp(WAIT, (q,)) for q in range(2 * n_pairs, n)]
    meas = [GateOp(MEAS_Z if q % 2 else MEAS_X, (q,)) for q in range(n)]
    return ScheduledCircuit(n, (tuple(preps), tuple(mid), tuple(meas)))


def test_zero_rates_never_fault():
    rng = np.random.default_rng(0)
    circ = _mixed_circuit(10)
    for _ in range(200):
        assert sample_faults(circ, GateErrorRates(), ErrorClass.ALL, rng) == []


def test_class0_filter_on_wait_and_cnot_circuit():
    circ = ScheduledCircuit(3, ((gate(CNOT, 0, 1), gate(WAIT, 2)),) * 4)
    rng = np.random.default_rng(1)
    for _ in range(500):
        assert sample_faults(circ, GateErrorRates.uniform(0.5), ErrorClass.CLASS0, rng) == []


def test_cnot_outcomes_uniform_over_fifteen():
    circ = ScheduledCircuit(200, (tuple(GateOp(CNOT, (q, q + 1)) for q in range(0, 200, 2)),))
    rng = stream(7, 1)
    counts = Counter()
    draws = 10_000
    for _ in range(draws):
        counts.update(f.pauli for f in sample_faults(circ, GateErrorRates(cnot=0.15), ErrorClass.ALL, rng))
    n = draws * 100
    assert set(counts) == set(CNOT_PAULIS)
    sigma = math.sqrt(n * 0.01 * 0.99)
    for pauli in CNOT_PAULIS:
        assert abs(counts[pauli] - n * 0.01) < 4 * sigma, pauli


def test_frequencies_per_gate_kind():
    circ = _mixed_circuit(25)
    rates = GateErrorRates(prep=0.02, meas=0.05, wait=0.09, cnot=0.12)
    counts = Counter()
    draws = 2000
    rng = stream(3)
    for _ in range(draws):
        for f in sample_faults(circ, rates, ErrorClass.ALL, rng):
            counts[circ.layers[f.layer][f.index].kind] += 1
    for kind in (PREP_Z, PREP_X, MEAS_Z, MEAS_X, CNOT, WAIT):
        n = draws * circ.count(kind)
        p = rates.for_kind(kind)
        assert abs(counts[kind] - n * p) < 4 * math.sqrt(n * p * (1 - p)), kind


def test_filtered_sampling_is_restriction_of_unfiltered():
    circ = _mixed_circuit(8)
    rates = GateErrorRates.uniform(0.2)
    for ec in ErrorClass:
        for seed in range(20):
            full = sample_faults(circ, rates, ErrorClass.ALL, stream(seed))
            part = sample_faults(circ, rates, ec, stream(seed))
            zeroed = sample_faults(circ, rates.filtered(ec), ErrorClass.ALL, stream(seed))
            kept = [f for f in full if ec.enables(circ.layers[f.layer][f.index].kind)]
            assert part == kept == zeroed


@pytest.mark.parametrize(
    "g, n, weight",
    [(gate(WAIT, 0), 3, Fraction(1, 3)), (gate(PREP_Z, 0), 1, 1), (gate(MEAS_X, 0), 1, 1), (gate(CNOT, 0, 1), 15, Fraction(1, 15))],
)
def test_enumerate_single_gate(g, n, weight):
    events = enumerate_fault_space(ScheduledCircuit(2, ((g,),)))
    assert len(events) == n
    assert all(w.coeff == weight for _, w in events)
    assert len({f.pauli for f, _ in events}) == n


def test_enumerate_counts_match_location_formula():
    for circ in (code.zero_encoder(), build_verified_ancilla_gadget("zero")[0], _mixed_circuit(5)):
        expected = 3 * circ.count(WAIT) + circ.count(PREP_Z) + circ.count(PREP_X)
        expected += circ.count(MEAS_Z) + circ.count(MEAS_X) + 15 * circ.count(CNOT)
        events = enumerate_fault_space(circ)
        assert len(events) == expected
        keys = [(f.layer, f.index) for f, _ in events]
        assert keys == sorted(keys)


def test_enumerate_respects_filter():
    circ = build_verified_ancilla_gadget("zero")[0]
    assert {w.rate for _, w in enumerate_fault_space(circ, ErrorClass.CLASS1)} == {"wait"}
    assert {w.rate for _, w in enumerate_fault_space(circ, ErrorClass.CLASS0)} == {"prep", "meas"}


def test_rates_validated():
    with pytest.raises(ValueError):
        GateErrorRates(cnot=1.5)
    assert GateErrorRates.uniform(0.1).filtered(ErrorClass.CLASS2) == GateErrorRates(cnot=0.1)


def test_streams_are_keyed():
    a = stream(5, 1, 2).random(4)
    assert np.array_equal(a, stream(5, 1, 2).random(4))
    assert not np.array_equal(a, stream(5, 1, 3).random(4))
