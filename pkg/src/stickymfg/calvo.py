"""Calvo (time-dependent) pricing: reset rule, aggregation and closed forms.

With loss ``B (x - alpha X)^2`` and driftless idiosyncratic noise, a firm that
adjusts at ``tau`` resets to the discounted average of future targets

    x*(tau) = k * int_0^inf exp(-k u) alpha X(tau + u) du,   k = rho + theta,

and the cross-sectional mean obeys ``dX/ds = theta (x* - X)``.  Substituting an
exponential path gives the equilibrium decay rate as the positive root of
``lam^2 + rho lam - theta (rho + theta)(1 - alpha) = 0``.
"""
from dataclasses import dataclass
import math
from typing import Optional

import numpy as np

from .density import CrossSection, hat, implicit_matrix, neumann_laplacian_banded, normalize, solve_tridiag
from .errors import EquilibriumBreakdown, GridMismatch, MissingExtrapolation, OutOfRange
from .params import ModelParams, StateGrid, TimeGrid


@dataclass
class AggregatePath:
    grid: TimeGrid
    values: np.ndarray
    extrapolation_rate: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise GridMismatch(f"aggregate path has {self.values.size} values for {self.grid.n_nodes} nodes")
        if not np.all(np.isfinite(self.values)):
            raise OutOfRange("aggregate path", "non-finite", "finite values")


@dataclass
class ResetSchedule:
    grid: TimeGrid
    values: np.ndarray


def _exp_weights(k, h):
    """Weights (w0, w1) with int_0^h exp(-k u) (a + (b - a) u / h) du = w0 a + w1 b."""
    kh = k * h
    if kh < 1e-2:
        w1 = h * (0.5 - kh / 3 + kh**2 / 8 - kh**3 / 30 + kh**4 / 144)
    else:
        w1 = (1.0 - math.exp(-kh) * (1.0 + kh)) / (k * kh)
    w0 = (h if kh == 0 else -math.expm1(-kh) / k) - w1
    return w0, w1


def _tail(agg: AggregatePath, k):
    last = agg.values[-1]
    if last == 0.0:
        return 0.0
    if agg.extrapolation_rate is None:
        raise MissingExtrapolation("aggregate path needs an extrapolation rate beyond the horizon")
    rate = agg.extrapolation_rate
    if k + rate <= 0:
        raise MissingExtrapolation(f"tail integral diverges (discount {k:.4g}, extrapolation rate {rate:.4g})")
    return last / (k + rate)


def _discounted_integrals(agg: AggregatePath, k):
    """I_j = int_{s_j}^inf exp(-k (s - s_j)) X(s) ds at every node (X linear between nodes)."""
    dt = agg.grid.dt
    w0, w1 = _exp_weights(k, dt)
    e = math.exp(-k * dt)
    x = agg.values
    out = np.empty_like(x)
    out[-1] = _tail(agg, k)
    for j in range(agg.grid.n_slices - 1, -1, -1):
        out[j] = w0 * x[j] + w1 * x[j + 1] + e * out[j + 1]
    return out


def reset_schedule(agg: AggregatePath, params: ModelParams) -> ResetSchedule:
    """Optimal reset value at every node of the aggregate path's grid."""
    k = params.rho + params.theta
    if k == 0.0 or params.alpha == 0.0:
        return ResetSchedule(agg.grid, np.zeros(agg.grid.n_nodes))
    return ResetSchedule(agg.grid, params.alpha * k * _discounted_integrals(agg, k))


def optimal_reset(tau, agg: AggregatePath, params: ModelParams) -> float:
    """Reset value for a firm adjusting at ``tau`` (any instant in [0, horizon])."""
    grid = agg.grid
    if not (0.0 <= tau <= grid.horizon):
        raise OutOfRange("tau", tau, f"0 <= tau <= {grid.horizon}")
    k = params.rho + params.theta
    if k == 0.0 or params.alpha == 0.0:
        return 0.0
    integ = _discounted_integrals(agg, k)
    j = min(int(tau / grid.dt), grid.n_slices - 1)
    if tau >= grid.horizon:
        return params.alpha * k * integ[-1]
    # partial slice [tau, s_{j+1}] with X interpolated linearly
    s0, s1 = grid.nodes[j], grid.nodes[j + 1]
    x0, x1 = agg.values[j], agg.values[j + 1]
    xt = x0 + (x1 - x0) * (tau - s0) / (s1 - s0)
    w0, w1 = _exp_weights(k, s1 - tau)
    val = w0 * xt + w1 * x1 + math.exp(-k * (s1 - tau)) * integ[j + 1]
    return params.alpha * k * val


def decay_rate(params: ModelParams) -> float:
    """Positive root of lam^2 + rho lam - theta (rho + theta)(1 - alpha) = 0."""
    c = params.theta * (params.rho + params.theta) * (1.0 - params.alpha)
    if not c > 0:
        raise EquilibriumBreakdown(
            f"no positive decay rate at alpha={params.alpha:g}, theta={params.theta:g} (equilibrium breaks down)"
        )
    return 0.5 * (-params.rho + math.sqrt(params.rho**2 + 4.0 * c))


def calvo_irf_closed_form(params: ModelParams, grid: TimeGrid):
    from .response import IRFResult, irf_stats

    lam = decay_rate(params)
    y = params.delta * np.exp(-lam * grid.nodes)
    stats = irf_stats(y, grid, tail_rate=lam)
    area = params.delta / lam
    return IRFResult(grid=grid, output=y, area=area, half_life=math.log(2.0) / lam if params.delta else 0.0,
                     peak_time=0.0, hump=False, tail_rate=lam, impact=stats.impact)


def aggregate_law_of_motion(X0, resets: ResetSchedule, theta, grid: TimeGrid) -> AggregatePath:
    """Integrate dX/ds = theta (x* - X) with an exact exponential step per slice.

    Within a slice x* is held at the average of its endpoint values.
    """
    if not resets.grid.matches(grid):
        raise GridMismatch("reset schedule and time grid differ")
    a = math.exp(-theta * grid.dt)
    xs = np.asarray(resets.values, dtype=float)
    out = np.empty(grid.n_nodes)
    out[0] = X0
    for j in range(grid.n_slices):
        out[j + 1] = a * out[j] + (1.0 - a) * 0.5 * (xs[j] + xs[j + 1])
    return AggregatePath(grid, out)


# Cross-sectional evolution used by the forward-PDE aggregation.

def calvo_step_matrix(params: ModelParams, sgrid: StateGrid, dt):
    lap = neumann_laplacian_banded(sgrid.n_points, sgrid.spacing, 0.5 * params.sigma**2)
    return lap, implicit_matrix(lap, dt)


def calvo_stationary_density(params: ModelParams, sgrid: StateGrid, dt) -> CrossSection:
    """Fixed point of one evolution step with resets to zero.

    Equals the Laplace density with scale sigma / sqrt(2 theta) up to
    discretization error.
    """
    if params.theta <= 0:
        raise OutOfRange("theta", params.theta, "theta > 0 for a stationary Calvo cross-section")
    a = math.exp(-params.theta * dt)
    lap, _ = calvo_step_matrix(params, sgrid, dt)
    ab = implicit_matrix(lap, dt, diag_extra=1.0 - a)
    f = solve_tridiag(ab, (1.0 - a) * hat(sgrid, 0.0))
    return CrossSection(sgrid, normalize(np.maximum(f, 0.0), sgrid.spacing))


def evolve_calvo_density(f0: CrossSection, resets: ResetSchedule, params: ModelParams, grid: TimeGrid):
    """Forward-evolve the Calvo cross-section; returns (densities, mean path).

    Each step moves the Poisson fraction 1 - exp(-theta dt) of mass to the
    slice-average reset value, then diffuses implicitly.
    """
    if not resets.grid.matches(grid):
        raise GridMismatch("reset schedule and time grid differ")
    sg = f0.sgrid
    _, ab = calvo_step_matrix(params, sg, grid.dt)
    a = math.exp(-params.theta * grid.dt)
    x = sg.x
    h = sg.spacing
    f = f0.density.copy()
    dens = np.empty((grid.n_nodes, sg.n_points))
    dens[0] = f
    xs = resets.values
    for j in range(grid.n_slices):
        rhs = a * f
        if a < 1.0:
            rhs += hat(sg, 0.5 * (xs[j] + xs[j + 1]), 1.0 - a)
        f = solve_tridiag(ab, rhs)
        dens[j + 1] = f
    w = np.full(sg.n_points, h)
    w[[0, -1]] *= 0.5
    means = dens @ (w * x)
    return dens, means
