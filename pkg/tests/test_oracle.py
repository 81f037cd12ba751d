from fractions import Fraction

import pytest

from steanesim import code
from steanesim.frame import MEAS_Z, Fault, GateOp, ScheduledCircuit
from steanesim.noise import ErrorClass, GateErrorRates, enumerate_fault_space
from steanesim.oracle import (
    Tableau,
    deterministic_parities,
    enumerate_logical_failures,
    first_order_rejection_weight,
    frame_tableau_mismatches,
    ft_certificate,
    gadget_library,
    tableau_run,
    validate_engine,
)
from steanesim.protocols import FT_PROTOCOLS, Protocol, build_verified_ancilla_gadget, catalog, default_path


def test_tableau_basics():
    t = Tableau(2)
    t.h(0)
    t.cnot(0, 1)
    a = t.measure_z(0)
    b = t.measure_z(1)
    assert a >> 1 and a == b  # random, but perfectly correlated
    t = Tableau(1)
    t.pauli(0, "X")
    assert t.measure_z(0) == 1


def test_encoder_z_readout_satisfies_stabilizers():
    enc = code.zero_encoder()
    circ = ScheduledCircuit(7, enc.layers + (tuple(GateOp(MEAS_Z, (q,)) for q in range(7)),))
    forms = tableau_run(circ)
    last = circ.depth - 1
    for g in code.STABILIZERS:
        par = 0
        for q in range(7):
            if g >> q & 1:
                par ^= forms[(last, q)]
        assert par == 0
    # three generators plus the logical Z of |0_L>
    assert len(deterministic_parities(forms)) == 4


def test_single_pauli_matches_frame_engine():
    circ, _ = build_verified_ancilla_gadget("zero")
    for fault, _ in enumerate_fault_space(circ):
        assert frame_tableau_mismatches(circ, [fault]) == 0


def test_random_circuits_and_gadgets():
    res = validate_engine(1000, seed=11)
    assert res == {"random_circuits": 1000, "random_mismatches": 0, "gadget_mismatches": 0}


def test_cross_check_detects_a_wrong_record():
    circ = build_verified_ancilla_gadget("zero")[0]
    last = circ.depth - 1
    idx = next(i for i, g in enumerate(circ.layers[last]) if g.kind == MEAS_Z)
    ideal = tableau_run(circ)
    noisy = tableau_run(circ, [Fault(last, idx, "M")])
    diffs = [sum((ideal[k] ^ noisy[k]) & 1 for k in sub) & 1 for sub in deterministic_parities(ideal)]
    assert any(diffs)


def test_gadget_library_covers_catalog():
    lib = gadget_library()
    assert len(lib) >= len(catalog().seg)


def test_first_order_certificate():
    cert = ft_certificate()
    for p in FT_PROTOCOLS:
        assert cert[p] == 0, p
    assert cert[Protocol.NON_FT] >= 1


@pytest.mark.parametrize("protocol", list(Protocol))
def test_order1_term_count_matches_fault_space(protocol):
    exp = enumerate_logical_failures(protocol, 1)
    expected = sum(len(enumerate_fault_space(seg.circuit)) for _, seg in default_path(protocol))
    assert exp.n_terms == expected


def test_order2_pair_count_nonbranching():
    exp = enumerate_logical_failures(Protocol.NON_FT, 2)
    sizes = []
    for _, seg in default_path(Protocol.NON_FT):
        sizes += [len(evs) for evs in seg.loc_events]
    total = sum(sizes)
    expected = (total * total - sum(s * s for s in sizes)) // 2
    assert exp.n_terms == expected
    assert exp.total() > 0


def test_order_validated():
    with pytest.raises(ValueError):
        enumerate_logical_failures(Protocol.DECODING, 3)


def test_rejection_weight_counts_detectable_faults():
    w = first_order_rejection_weight("zero")
    assert all(v >= 0 for v in w.values())
    assert sum(w.values()) > 0
    assert first_order_rejection_weight("plus") == w


def test_class_coefficients_partition_monomials():
    exp = enumerate_logical_failures(Protocol.NON_FT, 1)
    parts = sum((exp.class_coefficient(ec) for ec in (ErrorClass.CLASS0, ErrorClass.CLASS1, ErrorClass.CLASS2)), Fraction(0))
    # at first order each monomial is a single rate, so the classes partition it
    assert parts == exp.total() == exp.class_coefficient(ErrorClass.ALL)
    assert exp.value(GateErrorRates.uniform(1e-3)) == pytest.approx(float(exp.total()) * 1e-3)
