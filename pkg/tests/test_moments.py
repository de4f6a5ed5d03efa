import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netdiff.checks import fd_hessian, fd_score, random_thetas
from netdiff.estimation import Grid, estimate
from netdiff.fixtures import FIXTURES
from netdiff.graph import build_network
from netdiff.moments import (
    MomentError,
    MomentModel,
    decompose_2m,
    hessian_convexity,
    individual_moments,
    objective_2m,
    objective_na,
    objective_na_by_village,
    score,
)
from netdiff.montecarlo import synthetic_villages
from netdiff.simulate import seed_plan, simulate_sample

from _support import line, sample_from_outcomes, sample_with

thetas = st.tuples(st.floats(0.02, 0.98), st.floats(0.02, 0.98))


def sim_sample(seed, n_villages=4, n_agents=30, ip_fraction=0.5, theta=(0.5, 0.5)):
    nets = synthetic_villages(n_villages=n_villages, n_agents=n_agents, n_ips=4, seed=seed)
    return simulate_sample(nets, *theta, 4, seed_plan(seed + 1, n_villages), ip_fraction)


def ips_only(n_ips, n_part):
    net = build_network([], n_ips, range(n_ips))
    y = np.zeros((n_ips, 4), dtype=np.int8)
    y[:n_part, 0] = 1
    return sample_from_outcomes([net], [y], 4)


def test_ip_moment():
    s = sample_with([line(1)], 4, lambda *a: 1)
    assert individual_moments(s, (0.3, 0.7)).g.tolist() == [pytest.approx(0.7, abs=1e-15)]


def test_dist1_moment():
    s = sample_with([line(2)], 4, lambda net, reach, i: int(i == 0))
    mv = individual_moments(s, (0.4, 0.3))
    assert mv.g[1] == pytest.approx(-0.4 * 0.3, abs=1e-15)
    assert mv.is_ip.tolist() == [True, False]
    assert (mv.N, mv.N1, mv.N2) == (2, 1, 1)


def test_excluded_agents_reported():
    s = sample_with([FIXTURES["unsupported"].net, line(6, village_id=1)], 4, lambda *a: 0)
    mv = individual_moments(s, (0.5, 0.5))
    assert mv.excluded == {"beyond_radius": 2, "unreachable": 0, "unsupported": 1}
    assert mv.N == 5 + 4


def test_missing_outcome():
    net = line(3)
    y = np.zeros((3, 4), dtype=np.int8)
    y[2, 2] = -1
    with pytest.raises(MomentError, match="agent 2"):
        MomentModel(sample_from_outcomes([net], [y], 4))


def test_objective_na_perfect_fit():
    assert objective_na(ips_only(3, 3), (1.0, 0.5)) == 0.0


def test_objective_na_one_agent():
    assert objective_na(ips_only(1, 1), (0.4, 0.5)) == pytest.approx(0.36, abs=1e-15)


def test_objective_by_village_matches():
    s = sim_sample(3)
    for theta in random_thetas(5):
        assert objective_na_by_village(s, theta) == pytest.approx(objective_na(s, theta),
                                                                  rel=0, abs=1e-15)


def test_objective_2m_perfect_fit():
    s = sample_with([line(2)], 4, lambda *a: 1)
    assert objective_2m(s, (1.0, 1.0)) == 0.0


def test_ip_group_mean():
    mv = individual_moments(ips_only(10, 3), (0.3, 0.5))
    assert mv.g[mv.is_ip].mean() == pytest.approx(0.0, abs=1e-15)


def test_two_moment_needs_non_ips():
    with pytest.raises(MomentError, match="q not identified without non-IPs"):
        objective_2m(ips_only(4, 2), (0.5, 0.5))


def test_proportional_weights():
    s = sim_sample(5)
    m = MomentModel(s)
    g1, g2 = m.group_means([0.4], 0.6)
    expect = m.N1 / m.N * g1[0] ** 2 + m.N2 / m.N * g2[0] ** 2
    assert objective_2m(m, (0.4, 0.6), "proportional") == pytest.approx(expect, rel=1e-15)


@pytest.mark.parametrize("method", ["na", "2m"])
def test_score_finite_difference(method):
    m = MomentModel(sim_sample(8, n_villages=6))
    for theta in random_thetas(10, seed=1):
        a, f = score(m, theta, method), fd_score(m, theta, method)
        assert np.linalg.norm(a - f) <= 1e-6 * np.linalg.norm(f)


def test_score_ip_only_has_no_q_component():
    s = ips_only(5, 2)
    for theta in random_thetas(4):
        assert score(s, theta, "na")[1] == 0.0


def test_score_small_at_grid_optimum():
    m = MomentModel(sim_sample(9, n_villages=8))
    grid = Grid.parse()
    rep = estimate(m, "na", grid, with_covariance=False)
    H = hessian_convexity(m, rep.theta_hat).hessian
    step = np.array([grid.p_step, grid.q_step])
    bound = np.abs(H) @ step
    assert np.all(np.abs(score(m, rep.theta_hat, "na")) <= bound)


def test_hessian_ip_only():
    rep = hessian_convexity(ips_only(6, 2), (0.4, 0.5))
    assert rep.hessian[0, 0] == pytest.approx(2.0, abs=1e-15)  # 2 * #IP / N
    assert rep.hessian[0, 1] == rep.hessian[1, 1] == 0.0
    assert rep.determinant == 0.0
    assert rep.flag == "degenerate in q"


def test_hessian_finite_difference():
    m = MomentModel(sim_sample(11, n_villages=6))
    for theta in random_thetas(10, seed=2):
        H, F = hessian_convexity(m, theta).hessian, fd_hessian(m, theta)
        assert np.all(np.abs(H - F) <= 1e-4 * np.abs(F))


def test_hessian_positive_at_truth_large_sample():
    s = sim_sample(12, n_villages=24, n_agents=60, ip_fraction=1.0)
    rep = hessian_convexity(s, (0.5, 0.5))
    assert rep.determinant > 0
    assert rep.flag == "convex"


def test_decompose_equal_residuals():
    star = build_network([(0, 1), (0, 2), (0, 3)], 4, {0})
    s = sample_with([star], 4, lambda *a: 1)
    d = decompose_2m(s, (0.5, 0.5))
    assert d["nonip_cross"] > 0
    assert sum(d.values()) == pytest.approx(objective_2m(s, (0.5, 0.5)), abs=1e-12)


def test_decompose_single_agents():
    s = sample_with([line(2)], 4, lambda net, reach, i: 1)
    d = decompose_2m(s, (0.3, 0.8))
    assert d["ip_cross"] == 0.0 and d["nonip_cross"] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6), thetas)
def test_decompose_identity(seed, theta):
    s = sim_sample(seed % 1000, n_villages=2, n_agents=25)
    d = decompose_2m(s, theta)
    assert abs(sum(d.values()) - objective_2m(s, theta)) <= 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 999), thetas)
def test_objectives_nonnegative(seed, theta):
    m = MomentModel(sim_sample(seed, n_villages=2, n_agents=25))
    assert m.objective("na", *theta) >= 0
    assert m.objective("2m", *theta) >= 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 999), thetas)
def test_q_score_ignores_ip_outcomes(seed, theta):
    s = sim_sample(seed, n_villages=2, n_agents=25)
    m = MomentModel(s)
    flipped = MomentModel(s)
    flipped.y = np.where(flipped.is_ip, 1.0 - flipped.y, flipped.y)
    for method in ("na", "2m"):
        assert score(m, theta, method)[1] == score(flipped, theta, method)[1]
