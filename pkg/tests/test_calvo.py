import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from stickymfg import (AggregatePath, ResetSchedule, aggregate_law_of_motion, build_state_grid, build_time_grid,
                       calvo_irf_closed_form, decay_rate, optimal_reset, reset_schedule)
from stickymfg.calvo import calvo_stationary_density, evolve_calvo_density
from stickymfg.errors import EquilibriumBreakdown, GridMismatch, MissingExtrapolation, OutOfRange

from conftest import make_params


def exp_path(grid, lam, scale=1.0):
    return AggregatePath(grid, scale * np.exp(-lam * grid.nodes), lam)


def test_zero_path_gives_zero_reset():
    p = make_params(alpha=0.5)
    grid = build_time_grid(10, 100)
    agg = AggregatePath(grid, np.zeros(grid.n_nodes), 1.0)
    assert np.all(reset_schedule(agg, p).values == 0)
    assert optimal_reset(3.3, agg, p) == 0.0


def test_constant_path_gives_alpha_c():
    p = make_params(alpha=0.7)
    grid = build_time_grid(10, 100)
    agg = AggregatePath(grid, np.full(grid.n_nodes, 0.02), 0.0)
    for tau in (0.0, 2.5, 9.97, 10.0):
        assert optimal_reset(tau, agg, p) == pytest.approx(0.7 * 0.02, rel=1e-12)


def test_exponential_path_reset_matches_quadrature():
    p = make_params(alpha=0.5, rho=0.02, theta=1.0)
    grid = build_time_grid(10, 400)
    agg = exp_path(grid, 0.5)
    k = 1.02
    ref, _ = integrate.quad(lambda u: k * math.exp(-k * u) * 0.5 * math.exp(-0.5 * u), 0, math.inf)
    assert ref == pytest.approx(0.5 * 1.02 / 1.52, rel=1e-12)
    assert optimal_reset(0.0, agg, p) == pytest.approx(ref, rel=1e-4)
    # off-node instants use the partial-slice rule
    tau = 3.337
    ref_tau = ref * math.exp(-0.5 * tau)
    assert optimal_reset(tau, agg, p) == pytest.approx(ref_tau, rel=1e-4)


def test_reset_needs_extrapolation():
    p = make_params(alpha=0.5)
    grid = build_time_grid(10, 100)
    agg = AggregatePath(grid, np.exp(-grid.nodes))
    with pytest.raises(MissingExtrapolation):
        reset_schedule(agg, p)
    with pytest.raises(OutOfRange):
        optimal_reset(11.0, exp_path(grid, 1.0), p)


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 3), st.floats(0.1, 3))
def test_reset_linear_in_path(a, b, l1, l2):
    p = make_params(alpha=0.6, rho=0.05)
    grid = build_time_grid(5, 50)
    x1 = np.exp(-l1 * grid.nodes)
    x2 = np.cos(grid.nodes) * np.exp(-l2 * grid.nodes)
    # shared extrapolation rate keeps the tail term linear
    r1 = reset_schedule(AggregatePath(grid, x1, 1.0), p).values
    r2 = reset_schedule(AggregatePath(grid, x2, 1.0), p).values
    rc = reset_schedule(AggregatePath(grid, a * x1 + b * x2, 1.0), p).values
    assert np.allclose(rc, a * r1 + b * r2, atol=1e-12 * (1 + abs(a) + abs(b)))


def test_decay_rate_examples():
    assert decay_rate(make_params(theta=1, rho=0, alpha=0)) == pytest.approx(1.0)
    assert decay_rate(make_params(theta=1, rho=0, alpha=0.75)) == pytest.approx(0.5)
    with pytest.raises(EquilibriumBreakdown):
        decay_rate(make_params(theta=1, rho=0, alpha=1.2))
    with pytest.raises(EquilibriumBreakdown):
        decay_rate(make_params(theta=1, rho=0, alpha=1.0))


def test_decay_rate_solves_quadratic():
    for alpha in (-3, 0, 0.4, 0.95):
        p = make_params(theta=1.3, rho=0.07, alpha=alpha)
        lam = decay_rate(p)
        assert lam > 0
        assert lam**2 + p.rho * lam - p.theta * (p.rho + p.theta) * (1 - p.alpha) == pytest.approx(0, abs=1e-12)


def test_decay_rate_monotonicity_and_limits():
    alphas = [-10, -1, 0, 0.5, 0.9, 0.99]
    lams = [decay_rate(make_params(rho=0, alpha=a)) for a in alphas]
    assert all(x > y for x, y in zip(lams, lams[1:]))
    thetas = [0.5, 1.0, 2.0]
    assert all(decay_rate(make_params(theta=a, alpha=0.5)) < decay_rate(make_params(theta=b, alpha=0.5))
               for a, b in zip(thetas, thetas[1:]))
    assert decay_rate(make_params(rho=0, alpha=1 - 1e-10)) < 1e-4
    assert decay_rate(make_params(rho=0, alpha=-1e6)) > 100


@given(st.floats(0.1, 200))
def test_decay_rate_invariant_to_loss_curvature(b):
    assert decay_rate(make_params(alpha=0.3, b_curv=b)) == decay_rate(make_params(alpha=0.3))


def test_decay_rate_matches_fixed_point_oracle():
    # damped iteration of reset schedule + aggregation law, then an exponential fit
    for alpha, lam_ref in ((0.0, 1.0), (0.75, 0.5)):
        p = make_params(theta=1, rho=0, alpha=alpha, delta=0.01)
        grid = build_time_grid(20, 2000)
        X = -0.01 * np.exp(-grid.nodes)
        rate = 1.0
        for _ in range(300):
            rs = reset_schedule(AggregatePath(grid, X, rate), p)
            new = aggregate_law_of_motion(-0.01, rs, p.theta, grid).values
            if np.max(np.abs(new - X)) < 1e-13:
                break
            X = 0.5 * X + 0.5 * new
            sel = slice(1000, 1500)
            rate = -np.polyfit(grid.nodes[sel], np.log(-X[sel]), 1)[0]
        assert rate == pytest.approx(lam_ref, rel=1e-3)


def test_closed_form_irf():
    grid = build_time_grid(10, 400)
    irf = calvo_irf_closed_form(make_params(theta=1, rho=0, alpha=0, delta=0.01), grid)
    assert np.allclose(irf.output, 0.01 * np.exp(-grid.nodes))
    assert irf.area == pytest.approx(0.01)
    assert irf.half_life == pytest.approx(math.log(2))
    assert irf.peak_time == 0 and not irf.hump
    zero = calvo_irf_closed_form(make_params(delta=0.0), grid)
    assert np.all(zero.output == 0) and zero.area == 0
    a0 = calvo_irf_closed_form(make_params(rho=0, alpha=0), grid).area
    a75 = calvo_irf_closed_form(make_params(rho=0, alpha=0.75), grid).area
    assert a75 / a0 == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(EquilibriumBreakdown):
        calvo_irf_closed_form(make_params(rho=0, alpha=1.2), grid)


def test_pole_and_flexible_limit_closed_form():
    grid = build_time_grid(10, 100)
    area = lambda a: calvo_irf_closed_form(make_params(rho=0, alpha=a), grid).area
    # at rho = 0 the ratio at 0.99 is exactly 1 / sqrt(0.01) = 10
    assert area(0.99) / area(0) == pytest.approx(10.0, rel=1e-12)
    assert area(0.999) > 10 * area(0)
    assert area(-1e4) < 0.02 * area(0)
    alphas = np.linspace(0, 0.9, 7)
    assert np.all(np.diff([area(a) for a in alphas], 2) > 0)


def test_aggregate_law_of_motion_examples():
    grid = build_time_grid(5, 50)
    zero = ResetSchedule(grid, np.zeros(grid.n_nodes))
    out = aggregate_law_of_motion(-0.01, zero, 1.0, grid)
    assert np.allclose(out.values, -0.01 * np.exp(-grid.nodes), rtol=1e-14, atol=0)
    same = ResetSchedule(grid, np.full(grid.n_nodes, -0.01))
    assert np.allclose(aggregate_law_of_motion(-0.01, same, 1.0, grid).values, -0.01, rtol=1e-14)
    with pytest.raises(GridMismatch):
        aggregate_law_of_motion(-0.01, zero, 1.0, build_time_grid(5, 40))


def test_self_consistent_half_reset():
    theta = 1.0
    grid = build_time_grid(10, 2000)
    X = -0.01 * np.exp(-theta * grid.nodes)
    for _ in range(200):
        new = aggregate_law_of_motion(-0.01, ResetSchedule(grid, 0.5 * X), theta, grid).values
        done = np.max(np.abs(new - X)) < 1e-15
        X = new
        if done:
            break
    rate = -np.polyfit(grid.nodes, np.log(-X), 1)[0]
    assert rate == pytest.approx(theta / 2, rel=1e-3)


def test_stationary_cross_section_is_laplace():
    p = make_params(sigma=0.1, theta=1.0)
    grid = build_time_grid(10, 400)
    sg = build_state_grid(25 * 0.1 / math.sqrt(2), 1601)
    cs = calvo_stationary_density(p, sg, grid.dt)
    b = 0.1 / math.sqrt(2)
    lap = np.exp(-np.abs(sg.x) / b) / (2 * b)
    assert cs.mass == pytest.approx(1.0, abs=1e-10)
    assert np.max(np.abs(cs.density - lap)) / lap.max() < 0.02
    # second moment sigma^2 E[age]; resets precede diffusion in each step, so the
    # discrete mean age is dt / (1 - exp(-theta dt)) rather than 1 / theta
    age = grid.dt / (1 - math.exp(-p.theta * grid.dt))
    assert float(np.sum(cs.density * sg.x**2) * sg.spacing) == pytest.approx(p.sigma**2 * age, rel=1e-3)


def test_evolved_mean_follows_law_of_motion():
    # with the exact mean dynamics dX = theta (x* - X), the density mean must track aggregate_law_of_motion
    p = make_params(sigma=0.1, theta=1.0, alpha=0.5, rho=0)
    grid = build_time_grid(10, 400)
    sg = build_state_grid(25 * 0.1 / math.sqrt(2) + 0.02, 1601)
    from stickymfg.density import shift_density
    f0 = shift_density(calvo_stationary_density(p, sg, grid.dt), -0.01)
    rs = reset_schedule(exp_path(grid, 0.7, -0.01), p)
    _, means = evolve_calvo_density(f0, rs, p, grid)
    ref = aggregate_law_of_motion(means[0], rs, p.theta, grid).values
    assert np.max(np.abs(means - ref)) < 1e-4 * 0.01
