import math

import pytest

from steanesim.experiments import (
    AggregateResult,
    TrialConfig,
    ancilla_failure_rate,
    estimate_PL,
    estimate_point,
    linear_fit,
    run_sweep,
    run_trial,
    simulate_basis,
    wilson,
)
from steanesim.noise import ErrorClass, GateErrorRates
from steanesim.protocols import Protocol, ProtocolError


def test_estimate_pl_examples():
    est = estimate_PL(0, 0, 0)
    assert est.P_L == 0
    est = estimate_PL(0.002, 0.002, 0.002)
    assert est.P_L == pytest.approx(0.003)
    assert (est.P_X, est.P_Y, est.P_Z) == pytest.approx((0.001, 0.001, 0.001))
    e = 0.004
    est = estimate_PL(e, e, 0)
    assert (est.P_X, est.P_Y, est.P_Z) == pytest.approx((0, e, 0))
    with pytest.raises(ValueError):
        estimate_PL(1.5, 0, 0)


def test_estimate_pl_interval_contains_estimate():
    cis = [wilson(3, 1000), wilson(5, 1000), wilson(0, 1000)]
    est = estimate_PL(0.003, 0.005, 0.0, cis)
    assert est.ci[0] <= est.P_L <= est.ci[1]


def test_wilson():
    lo, hi = wilson(0, 100)
    assert lo == 0.0 and 0.03 < hi < 0.04
    lo, hi = wilson(50, 100)
    assert lo < 0.5 < hi
    assert wilson(0, 0) == (0.0, 1.0)


@pytest.mark.parametrize("protocol", list(Protocol))
def test_zero_rates_never_fail(protocol):
    pt = estimate_point(protocol, GateErrorRates(), 2000, master_seed=1)
    assert pt.estimate.P_L == 0
    for agg in pt.per_basis.values():
        assert agg.trials == 2000 and agg.logical_failures == 0 and agg.reruns == 0


def test_run_trial_zero_rates():
    for basis in "XYZ":
        bit, diag = run_trial(TrialConfig(Protocol.DECODING, GateErrorRates(), basis=basis))
        assert bit == 0 and diag["outcome"] == "I"


def test_determinism_across_jobs():
    rates = GateErrorRates.uniform(2e-3)
    a = simulate_basis(Protocol.TWO_ANCILLA_PARALLEL, rates, "Z", 300_000, 42, jobs=1)
    b = simulate_basis(Protocol.TWO_ANCILLA_PARALLEL, rates, "Z", 300_000, 42, jobs=2)
    assert a == b
    c = simulate_basis(Protocol.TWO_ANCILLA_PARALLEL, rates, "Z", 300_000, 43, jobs=1)
    assert c != a


def test_min_failures_stops_at_same_chunk():
    rates = GateErrorRates.uniform(3e-3)
    a = simulate_basis(Protocol.DECODING, rates, "X", 10**7, 5, min_failures=5, jobs=1)
    b = simulate_basis(Protocol.DECODING, rates, "X", 10**7, 5, min_failures=5, jobs=3)
    assert a == b
    assert a.logical_failures >= 5 and a.trials < 10**7


def test_rerun_accounting():
    rates = GateErrorRates.uniform(1e-2)
    agg = simulate_basis(Protocol.TWO_ANCILLA_SERIES, rates, "Z", 50_000, 3)
    # skipped trials are rerun, never counted in the denominator
    assert agg.trials == 50_000 and agg.reruns > 0
    assert agg.verification_failures >= 2 * agg.reruns
    assert simulate_basis(Protocol.SIMPLE_SERIES, rates, "Z", 20_000, 3).reruns == 0


def test_rerun_cap_surfaces():
    rates = GateErrorRates.uniform(0.3)
    with pytest.raises(ProtocolError):
        simulate_basis(Protocol.TWO_ANCILLA_SERIES, rates, "Z", 2000, 3, rerun_cap=0)
    with pytest.raises(ProtocolError):
        for i in range(200):
            run_trial(TrialConfig(Protocol.TWO_ANCILLA_PARALLEL, rates, trial_index=i), rerun_cap=0)


def test_single_measurement_estimator():
    # only verifier readouts can fault: a flip pattern passes iff it is a stabilizer
    q = 0.01
    rate, (lo, hi), _ = ancilla_failure_rate(GateErrorRates(meas=q), 10**6, master_seed=9)
    expected = 1 - ((1 - q) ** 7 + 7 * q**4 * (1 - q) ** 3)
    sigma = math.sqrt(expected * (1 - expected) / 10**6)
    assert abs(rate - expected) < 4 * sigma
    assert lo <= rate <= hi


def test_fast_path_agrees_with_direct_trials():
    rates = GateErrorRates.uniform(4e-3)
    n = 4000
    direct = sum(
        run_trial(TrialConfig(Protocol.SIMPLE_SERIES, rates, basis="Z", master_seed=2, trial_index=i))[0]
        for i in range(n)
    )
    fast = simulate_basis(Protocol.SIMPLE_SERIES, rates, "Z", 400_000, 2)
    p1, p2 = direct / n, fast.rate
    pooled = (direct + fast.logical_failures) / (n + fast.trials)
    se = math.sqrt(pooled * (1 - pooled) * (1 / n + 1 / fast.trials))
    assert abs(p1 - p2) < 4 * se


def test_filter_changes_results():
    rates = GateErrorRates.uniform(5e-3)
    all_ = simulate_basis(Protocol.NON_FT, rates, "Z", 50_000, 1)
    none = simulate_basis(Protocol.NON_FT, rates, "Z", 50_000, 1, ErrorClass.CLASS0)
    assert all_.logical_failures > none.logical_failures


def test_run_sweep_shapes():
    grid = [GateErrorRates(), GateErrorRates.uniform(1e-3)]
    pts = run_sweep(grid, [Protocol.DECODING, Protocol.NAIVE_NO_WAIT], [ErrorClass.ALL, ErrorClass.CLASS2], 1000, 0)
    assert len(pts) == 8
    with pytest.raises(ValueError):
        run_sweep([], [Protocol.DECODING])


def test_aggregate_sum():
    a = AggregateResult(10, 1, 2, 3)
    a += AggregateResult(5, 1, 0, 1)
    assert (a.trials, a.logical_failures, a.reruns, a.verification_failures) == (15, 2, 2, 4)
    assert a.ci[0] <= a.rate <= a.ci[1]


def test_linear_fit():
    slope, icpt, r2 = linear_fit([1, 2, 3], [2, 4, 6])
    assert slope == pytest.approx(2) and icpt == pytest.approx(0) and r2 == pytest.approx(1)
