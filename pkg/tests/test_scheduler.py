import numpy as np
import pytest

from twowayrelay.channel import CapacitySet
from twowayrelay.regions import RatePair, boundary_on_ray, region_for, sigma_set
from twowayrelay.scheduler import (
    ArrivalSpec,
    InfeasibleBatchError,
    OplncParams,
    QueueState,
    RateInfeasibleError,
    choose_oplnc_params,
    drift_estimate,
    growth_test,
    lyapunov_v,
    saturated_throughput,
    simulate,
    step_omlnc,
    step_oplnc,
    time_average_backlog,
)

EXAMPLE = CapacitySet(4, 2, 3, 6)
SYM = CapacitySet(1, 1, 1, 1)
NO_ARRIVALS = ArrivalSpec(0.0, 0.0, 1.0)


def test_arrival_spec_validation():
    with pytest.raises(ValueError):
        ArrivalSpec(-1, 0)
    with pytest.raises(ValueError):
        ArrivalSpec(1, 1, 0)
    assert ArrivalSpec(2, 3, 4).bit_rates == (8, 12)


def test_step_omlnc_pairs_when_both_queues_are_backlogged():
    s = sigma_set(EXAMPLE)
    action, nxt = step_omlnc(QueueState(3, 2), s, NO_ARRIVALS, np.random.default_rng(0))
    assert action == "MLNC-pair"
    assert (nxt.q_a, nxt.q_b) == (2, 1)
    assert nxt.t == pytest.approx(1 / s.sigma_min)


def test_step_omlnc_single_queue_and_idle():
    s = sigma_set(EXAMPLE)
    rng = np.random.default_rng(0)
    action, nxt = step_omlnc(QueueState(2, 0), s, NO_ARRIVALS, rng)
    assert action == "TDMH-fwd" and nxt.t == pytest.approx(1 / s.sigma_ab)
    action, nxt = step_omlnc(QueueState(0, 2), s, NO_ARRIVALS, rng)
    assert action == "TDMH-bwd" and nxt.t == pytest.approx(1 / s.sigma_ba)
    action, nxt = step_omlnc(QueueState(0, 0), s, ArrivalSpec(1.0, 0.0), rng)
    assert action == "idle" and (nxt.q_a, nxt.q_b) == (1, 0) and nxt.t > 0


def test_zero_arrivals_drain_in_pairs():
    trace = simulate("omlnc", SYM, NO_ARRIVALS, max_events=100, initial=(5, 5))
    assert trace.events == 5
    assert trace.final[:2] == (0, 0)
    assert trace.action_names()[1:] == ["MLNC-pair"] * 5
    assert trace.stop_reason == "drained"


def test_lyapunov_examples():
    s = sigma_set(SYM)
    assert lyapunov_v(QueueState(0, 0), s) == 0
    assert lyapunov_v(QueueState(1, 1), s) == pytest.approx(6)
    assert lyapunov_v(QueueState(2, 1), s) > lyapunov_v(QueueState(1, 1), s)
    assert lyapunov_v(QueueState(1, 2), s) > lyapunov_v(QueueState(1, 1), s)


def test_choose_params_symmetric_and_valid():
    s = sigma_set(SYM)
    p = choose_oplnc_params(s, ArrivalSpec(0.2, 0.2))
    assert p.q_a_batch == p.q_b_batch
    assert p.q_star > max(p.q_a_batch, p.q_b_batch)
    q = choose_oplnc_params(sigma_set(EXAMPLE), ArrivalSpec(0.3, 0.9), min_batch=20)
    assert (q.q_a_batch, q.q_b_batch) == (21, 63)
    assert q.batch_point == pytest.approx(RatePair(4 / 7, 12 / 7))


def test_choose_params_time_budget_bounds():
    s = sigma_set(SYM)
    p = choose_oplnc_params(s, ArrivalSpec(0.01, 0.01), lambda1=10.0, lambda2=10.0)
    assert p.q_a_batch <= 10 * s.sigma_ab and p.q_b_batch <= 10 * s.sigma_ba
    with pytest.raises(InfeasibleBatchError):
        choose_oplnc_params(s, ArrivalSpec(0.01, 0.01), lambda1=1.0, lambda2=1.0)


def test_choose_params_rejects_rates_outside_region():
    s = sigma_set(EXAMPLE)
    corner = boundary_on_ray(region_for(EXAMPLE, "plnc"), 1.0)
    with pytest.raises(RateInfeasibleError):
        choose_oplnc_params(s, ArrivalSpec(1.01 * corner.r_ab, 1.01 * corner.r_ba))


def test_q_star_shrinks_with_arrivals():
    s = sigma_set(EXAMPLE)
    edge = boundary_on_ray(region_for(EXAMPLE, "plnc"), 2.0)
    previous = None
    for scale in (0.95, 0.9, 0.7, 0.5, 0.2, 0.05):
        p = choose_oplnc_params(s, ArrivalSpec(scale * edge.r_ab, scale * edge.r_ba))
        if previous is not None:
            assert p.q_star <= previous
        previous = p.q_star


def test_step_oplnc_examples():
    s = sigma_set(SYM)
    params = OplncParams(1, 1, 2, 1.0, 1.0, RatePair(1 / 3, 1 / 3))
    rng = np.random.default_rng(0)
    action, nxt = step_oplnc(QueueState(1, 1), params, SYM, s, NO_ARRIVALS, rng)
    assert action == "PLNC-batch" and nxt.t == pytest.approx(3.0)
    big = choose_oplnc_params(s, ArrivalSpec(0.1, 0.1))
    action, nxt = step_oplnc(QueueState(0, big.q_b_batch + 5), big, SYM, s, NO_ARRIVALS, rng)
    assert action == "TDMH-bwd"
    assert nxt.q_b == big.q_b_batch + 5 - min(big.q_b_batch + 5, big.q_star)
    action, nxt = step_oplnc(QueueState(0, 0), big, SYM, s, NO_ARRIVALS, rng)
    assert action == "idle" and nxt == QueueState(0, 0)
    action, nxt = step_oplnc(QueueState(1, 0), big, SYM, s, NO_ARRIVALS, rng)
    assert action == "PLNC-residual" and nxt.t == pytest.approx(1 / s.sigma_ab)


def test_simulate_is_deterministic_and_consistent():
    arrivals = ArrivalSpec(0.8, 0.8)
    a = simulate("omlnc", EXAMPLE, arrivals, seed=3, max_events=20_000)
    b = simulate("omlnc", EXAMPLE, arrivals, seed=3, max_events=20_000)
    for name in ("t", "q_a", "q_b", "action"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert np.all(a.q_a >= 0) and np.all(a.q_b >= 0)
    assert np.all(np.diff(a.t) > 0)
    # each action is allowed by the queue state it started from
    prev_a, prev_b, act = a.q_a[:-1], a.q_b[:-1], a.action[1:]
    assert np.all((act == 1) == ((prev_a > 0) & (prev_b > 0)))
    assert np.all((act == 0) == ((prev_a == 0) & (prev_b == 0)))
    assert np.all(act[(prev_a > 0) & (prev_b == 0)] == 2)


def test_simulate_horizon_and_validation():
    trace = simulate("oplnc", EXAMPLE, ArrivalSpec(0.3, 0.5), horizon=500.0, seed=1)
    assert trace.t[-1] <= 500.0 and trace.stop_reason == "horizon"
    with pytest.raises(ValueError):
        simulate("omlnc", EXAMPLE, NO_ARRIVALS)
    with pytest.raises(ValueError):
        simulate("tdmh", EXAMPLE, NO_ARRIVALS, max_events=10)


def test_zero_arrivals_from_empty_ends_at_origin():
    trace = simulate("oplnc", EXAMPLE, NO_ARRIVALS, max_events=10)
    assert trace.final[:2] == (0, 0)


def test_kernel_agrees_with_reference_steps():
    s = sigma_set(EXAMPLE)
    arrivals = ArrivalSpec(0.7, 0.7)
    rng = np.random.default_rng(5)
    state, total, weight = QueueState(0, 0), 0.0, 0.0
    for _ in range(40_000):
        _, nxt = step_omlnc(state, s, arrivals, rng)
        total += (state.q_a + state.q_b) * (nxt.t - state.t)
        weight += nxt.t - state.t
        state = nxt
    reference = total / weight
    trace = simulate("omlnc", EXAMPLE, arrivals, seed=5, max_events=400_000)
    assert time_average_backlog(trace, 0.0) == pytest.approx(reference, rel=0.15)


def test_saturated_throughput_hits_corners():
    s = sigma_set(EXAMPLE)
    thr = saturated_throughput("omlnc", EXAMPLE, 10_000)
    assert thr == pytest.approx((s.sigma_min, s.sigma_min), rel=1e-9)
    thr = saturated_throughput("oplnc", EXAMPLE, 10_000, min_batch=20)
    assert thr == pytest.approx((s.sigma_aba, s.sigma_bab), rel=1e-9)


def test_drift_signs():
    drain = simulate("omlnc", EXAMPLE, NO_ARRIVALS, max_events=5000, initial=(3000, 3000))
    assert np.all(np.diff(drain.v()) < 0)
    assert drift_estimate(drain, sigma_set(EXAMPLE)) < 0
    hull = boundary_on_ray(region_for(EXAMPLE, "hull"), 1.0)
    stable = simulate("omlnc", EXAMPLE, ArrivalSpec(0.8 * hull.r_ab, 0.8 * hull.r_ba), seed=2, max_events=200_000)
    unstable = simulate("omlnc", EXAMPLE, ArrivalSpec(1.2 * hull.r_ab, 1.2 * hull.r_ba), seed=2, max_events=200_000)
    assert drift_estimate(stable) < 0 < drift_estimate(unstable)
    assert growth_test(unstable).p_value < 0.01
    with pytest.raises(ValueError):
        drift_estimate(simulate("omlnc", EXAMPLE, ArrivalSpec(0.1, 0.1), max_events=100))
