import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdnoma.optimizer import (
    Infeasible,
    NoFeasibleGridPoint,
    ScaPoint,
    achievable_sum_rate,
    exhaustive_search,
    initial_feasible_point,
    link_gains,
    oma_sum_rate,
    own_sinr,
    qos_feasible,
    sca_optimize,
    simplex_grid,
    solve_convex_subproblem,
    sum_rate_explicit_min,
)
from fdnoma.params import ChannelRealization, PowerAllocation, SystemParams, sample_realization
from fdnoma.simulator import sinr_matrix

P5 = SystemParams(snr_db=-5.0)


def feasible_draws(params, count, seed, mode="fd"):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        real = sample_realization(params, rng)
        try:
            initial_feasible_point(real, params, mode)
        except Infeasible:
            continue
        out.append(real)
    return out


def test_all_power_to_primary():
    real = ChannelRealization(30.0, (10.0, 20.0, 40.0))
    a = link_gains(real, P5)
    assert achievable_sum_rate((1.0, 0.0, 0.0), real, P5) == pytest.approx(math.log2(1 + a[0]))


def test_equal_gains_by_hand():
    real = ChannelRealization(10.0, (5.0, 5.0, 5.0))
    x = 0.7513310106347306 * P5.snr * 50.0
    expected = sum(math.log2(1 + al * x / (tail * x + 1)) for al, tail in ((0.6, 0.4), (0.3, 0.1), (0.1, 0.0)))
    assert achievable_sum_rate((0.6, 0.3, 0.1), real, P5) == pytest.approx(expected, rel=1e-13)


def test_own_index_sinr_is_the_minimum_on_random_instances():
    # 1e4 random instances: min over downstream receivers equals the own-index SINR
    rng = np.random.default_rng(2)
    n, width = 10_000, 4
    raw = rng.dirichlet(np.ones(width), size=n) * rng.uniform(0.5, 1.0, size=(n, 1))
    alphas = -np.sort(-raw, axis=1)
    gains = np.sort(rng.exponential(50.0, size=(n, width)), axis=1)
    best = rng.gamma(5, 5.0, size=n)
    violations = 0
    for alpha, g, b in zip(alphas, gains, best):
        s = sinr_matrix(alpha, b, g, 0.3)
        for m in range(width):
            violations += s[m:, m].min() < s[m, m]
    assert violations == 0


@settings(max_examples=200, deadline=None)
@given(
    raw=st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3),
    gains=st.lists(st.floats(0.01, 500.0), min_size=3, max_size=3),
    best=st.floats(0.01, 200.0),
)
def test_explicit_min_agrees(raw, gains, best):
    total = sum(raw)
    alpha = sorted((r / total if total > 1 else r for r in raw), reverse=True)
    if sum(alpha) > 1:
        alpha = [a / sum(alpha) for a in alpha]
    alpha = PowerAllocation(tuple(alpha))
    real = ChannelRealization(best, tuple(sorted(gains)))
    assert achievable_sum_rate(alpha, real, P5) == pytest.approx(sum_rate_explicit_min(alpha, real, P5), rel=1e-12)


def test_qos_feasibility_cases():
    strong = ChannelRealization(50.0, (100.0, 150.0, 200.0))
    assert qos_feasible((0.6, 0.3, 0.1), strong, SystemParams(snr_db=30.0))[0]
    ok, margins = qos_feasible((0.6, 0.3, 0.1), ChannelRealization(0.0, (0.0, 1.0, 2.0)), P5)
    assert not ok and np.all(margins < 0)


def test_qos_boundary_margin_is_zero():
    real = ChannelRealization(20.0, (30.0, 60.0, 90.0))
    a = link_gains(real, P5)
    gamma = math.sqrt(2) - 1
    alpha_m = gamma / a[2]
    _, margins = qos_feasible((0.6, 0.3, alpha_m), real, P5)
    assert abs(margins[2]) < 1e-9


def test_initial_point_feasible_and_below_es():
    rng = np.random.default_rng(7)
    real = sample_realization(P5, rng)
    point = initial_feasible_point(real, P5)
    ok, margins = qos_feasible(point.alpha, real, P5)
    assert ok and np.all(margins >= 0)
    _, es = exhaustive_search(real, P5, 0.01)
    assert math.log2(point.objective) <= es + 1e-9


def test_initial_point_infeasible_channel():
    with pytest.raises(Infeasible):
        initial_feasible_point(ChannelRealization(0.0, (0.0, 0.0, 0.0)), P5)


def test_subproblem_never_decreases_objective():
    for real in feasible_draws(P5, 10, 3):
        start = initial_feasible_point(real, P5)
        out = solve_convex_subproblem(real, P5, start)
        assert out.objective >= start.objective * (1 - 1e-12)


def test_subproblem_fixed_point():
    real = feasible_draws(P5, 1, 4)[0]
    trace = sca_optimize(real, P5, eps=1e-12, max_iter=200)
    assert trace.converged
    last = trace.final
    again = solve_convex_subproblem(real, P5, last)
    assert abs(math.log(again.objective) - math.log(last.objective)) < 1e-8


def test_single_sr_matches_dense_grid():
    p = P5.replace(n_srs=1)
    for real in feasible_draws(p, 5, 6):
        trace = sca_optimize(real, p, eps=1e-8, max_iter=100)
        _, es = exhaustive_search(real, p, 0.001)
        assert abs(math.log2(trace.final.objective) - es) < 1e-3


@pytest.mark.parametrize("mode", ["fd", "hd"])
@pytest.mark.parametrize("extrapolate", [True, False])
def test_sca_trace_properties(mode, extrapolate):
    p = P5.replace(n_srs=3)
    for real in feasible_draws(p, 6, 8, mode):
        trace = sca_optimize(real, p, mode, max_iter=20, extrapolate=extrapolate)
        obj = trace.objectives
        assert all(b >= a for a, b in zip(obj, obj[1:]))
        assert len(trace.iterates) == len(obj) == trace.iterations + 1
        assert qos_feasible(trace.final.alpha, real, p, mode)[0]
        assert achievable_sum_rate(trace.final.alpha, real, p, mode) >= \
            achievable_sum_rate(trace.iterates[0].alpha, real, p, mode) - 1e-12


def test_slacks_tight_at_convergence():
    for real in feasible_draws(P5, 5, 9):
        final = sca_optimize(real, P5).final
        sinr = own_sinr(final.alpha, real, P5)
        np.testing.assert_allclose(final.t, 1.0 + sinr, rtol=0, atol=1e-6)
        a = link_gains(real, P5)
        tails = final.alpha.tail_sums()
        np.testing.assert_allclose(final.z, (a * tails + 1.0)[:-1], rtol=1e-12)


def test_sca_argument_checks():
    real = feasible_draws(P5, 1, 1)[0]
    with pytest.raises(ValueError):
        sca_optimize(real, P5, eps=0.0)
    with pytest.raises(ValueError):
        sca_optimize(real, P5, "oma")


def test_scaling_invariance_of_allocation():
    real = feasible_draws(P5, 1, 12)[0]
    scaled = ChannelRealization(real.best_gain * 10.0, real.sorted_gains)
    q = P5.replace(snr_db=P5.snr_db - 10.0)
    a = sca_optimize(real, P5).final.alpha.as_array()
    b = sca_optimize(scaled, q).final.alpha.as_array()
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_simplex_grid_count_and_order():
    grid = simplex_grid(2, 0.01)
    assert len(grid) == 2601
    assert np.all(grid[:, 0] >= grid[:, 1]) and np.all(grid.sum(axis=1) <= 1 + 1e-12)
    keys = [tuple(r) for r in grid]
    assert keys == sorted(keys)
    with pytest.raises(ValueError):
        simplex_grid(2, 0.03)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 4), k=st.sampled_from([2, 4, 5, 10]))
def test_simplex_grid_members_valid(n, k):
    grid = simplex_grid(n, 1.0 / k)
    assert np.all(np.diff(grid, axis=1) <= 1e-12)
    assert np.all(grid.sum(axis=1) <= 1 + 1e-12)
    assert len({tuple(np.round(r * k).astype(int)) for r in grid}) == len(grid)


def test_es_refinement_and_errors():
    real = feasible_draws(P5, 1, 13)[0]
    _, coarse = exhaustive_search(real, P5, 0.1)
    _, fine = exhaustive_search(real, P5, 0.01)
    assert coarse <= fine + 1e-12
    with pytest.raises(NoFeasibleGridPoint):
        exhaustive_search(ChannelRealization(0.0, (0.0, 0.0, 0.0)), P5, 0.1)


def test_es_single_feasible_point():
    # step 0.5: only (0.5, 0.5) gives the SR any power
    p = P5.replace(n_srs=1)
    real = ChannelRealization(20.0, (30.0, 60.0))
    alpha, rate = exhaustive_search(real, p, 0.5)
    assert alpha.coefficients == (0.5, 0.5)
    assert rate == pytest.approx(achievable_sum_rate(alpha, real, p))


def test_sca_close_to_es():
    for real in feasible_draws(P5, 5, 14):
        sca = math.log2(sca_optimize(real, P5).final.objective)
        _, es = exhaustive_search(real, P5, 0.01)
        assert sca >= es - 0.05


def test_oma_sum_rate():
    real = ChannelRealization(50.0, (100.0, 150.0, 200.0))
    p = SystemParams(snr_db=10.0)
    snr = 0.45 * p.snr * 50.0 * np.array([100.0, 150.0, 200.0])
    assert oma_sum_rate(real, p) == pytest.approx(np.log2(1 + snr).sum() / 6)
    with pytest.raises(Infeasible):
        oma_sum_rate(ChannelRealization(0.0, (0.0, 0.0, 0.0)), p)


def test_sca_point_vector_layout():
    pt = ScaPoint(PowerAllocation((0.6, 0.3, 0.1)), (2.0, 3.0, 4.0), (5.0, 6.0))
    np.testing.assert_array_equal(pt.as_vector(), [0.6, 0.3, 0.1, 2.0, 3.0, 4.0, 5.0, 6.0])
    assert pt.objective == 24.0
