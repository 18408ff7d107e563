"""State-dependent (menu-cost) pricing.

The firm's value solves the obstacle problem

    max{ rho v - B (x - target)^2 - (sigma^2 / 2) v'',  v - (min v + psi) } = 0

(losses are minimized, so adjusting caps the value at ``min v + psi``).  It is
discretized with central differences, implicit Euler in backward time and
Howard policy iteration on the active (adjust) set.  For a fixed active set
the solution is affine in the adjustment value ``M = min v + psi``, so each
Howard sweep costs two tridiagonal solves.

The cross-section evolves by driftless diffusion, absorbed at the band edges
and reinjected at the reset point.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_banded

from .calvo import AggregatePath
from .density import (CrossSection, banded_matvec, dirichlet_laplacian_banded, hat, normalize,
                      solve_tridiag, trapezoid_mass)
from .errors import DegenerateGrid, GridMismatch, MassLeak, NoConvergence, OutOfRange
from .params import ModelParams, StateGrid, TimeGrid, build_state_grid, default_halfwidth, menu_cost_band_estimate

EDGE_WINDOW = (1.0, 6.0)  # edge-fit window, in grid steps from the edge
REFINE_ITERS = 20  # sub-grid free-boundary refinement sweeps
REFINE_TOL = 1e-7  # edge fixed-point tolerance, in grid steps


@dataclass
class ValueGrid:
    sgrid: StateGrid
    values: np.ndarray  # (n_points,) or (n_nodes, n_points)
    tgrid: Optional[TimeGrid] = None


@dataclass
class PolicyBand:
    lower: np.ndarray
    upper: np.ndarray
    reset: np.ndarray
    tgrid: Optional[TimeGrid] = None

    @property
    def half_width(self):
        return 0.5 * (np.asarray(self.upper) - np.asarray(self.lower))

    def at(self, k):
        if self.tgrid is None:
            return float(self.lower), float(self.upper), float(self.reset)
        return float(self.lower[k]), float(self.upper[k]), float(self.reset[k])


def adjustment_frequency(band: PolicyBand, params: ModelParams):
    """Stationary price-change frequency: 1 / E[exit time from the reset point]."""
    lo, hi, rs = band.at(0) if band.tgrid is not None else band.at(None)
    return params.sigma**2 / ((rs - lo) * (hi - rs))


def default_menu_grid(params: ModelParams, x_points=801, halfwidth=None) -> StateGrid:
    return build_state_grid(halfwidth or default_halfwidth(params, "menu_cost"), x_points)


class _VISolver:
    """Howard iteration for one (stationary or implicit-time) obstacle problem."""

    def __init__(self, sgrid: StateGrid, sigma, psi, max_iter=500):
        self.x = sgrid.x
        self.n = sgrid.n_points
        self.h = sgrid.spacing
        self.coef = 0.5 * sigma**2 / self.h**2
        self.psi = psi
        self.max_iter = max_iter

    def apply_L(self, v, c0):
        """c0 v - coef * D2 v with reflecting ends."""
        lv = (c0 + 2 * self.coef) * v
        lv[1:-1] -= self.coef * (v[2:] + v[:-2])
        lv[0] -= 2 * self.coef * v[1]
        lv[-1] -= 2 * self.coef * v[-2]
        return lv

    def solve(self, c0, g, active=None, j=None):
        n = self.n
        if active is None:
            active = np.zeros(n, bool)
            active[[0, -1]] = True
        if j is None:
            j = int(np.argmin(g))
        for it in range(self.max_iter):
            active[j] = False
            ab = np.zeros((3, n))
            cont = ~active
            ab[1] = np.where(cont, c0 + 2 * self.coef, 1.0)
            up = np.full(n, -self.coef)
            lo = np.full(n, -self.coef)
            up[0] = -2 * self.coef
            lo[-1] = -2 * self.coef
            # rows of adjusting nodes are v_i = M: no off-diagonal entries
            ab[0, 1:] = np.where(cont[:-1], up[:-1], 0.0)
            ab[2, :-1] = np.where(cont[1:], lo[1:], 0.0)
            rhs = np.column_stack([np.where(cont, g, 0.0), active.astype(float)])
            sol = solve_banded((1, 1), ab, rhs)
            a, b = sol[:, 0], sol[:, 1]
            M = (a[j] + self.psi) / (1.0 - b[j])
            v = a + M * b
            j_new = int(np.argmin(v))
            m_new = v[j_new] + self.psi
            resid = self.apply_L(v, c0) - g
            gain = (v - m_new) - resid
            # keep the current decision on round-off ties, else the iteration can cycle
            tie = np.abs(gain) <= 1e-11 * (np.max(np.abs(g)) + c0 * np.max(np.abs(v)))
            new_active = np.where(tie, active, gain > 0)
            new_active[j_new] = False
            if j_new == j and np.array_equal(new_active, active):
                return v, M, active, j
            active, j = new_active, j_new
        raise NoConvergence("menu-cost policy iteration", self.max_iter, float(np.count_nonzero(new_active ^ active)))

    def refine(self, c0, g, v, M, active, j, curvature, start=None):
        """Move the free boundary off the grid.

        The node-level obstacle pins v = M at whole nodes, which leaves a
        grid-phase ripple in the edges.  Here the continuation interval is
        re-solved with Dirichlet data v(e) = M at the off-grid edges
        (Shortley-Weller rows), the edges are refitted, and the two steps are
        iterated to a fixed point.
        ``start`` optionally gives initial edges (e.g. from the previous time slice).
        Returns (v, M, active, j, lower, upper).
        """
        x, h, n = self.x, self.h, self.n
        coef = self.coef * h**2
        lower, upper = start if start is not None else _edges(x, v, M, active, j, curvature)
        for _ in range(REFINE_ITERS):
            i0 = int(np.ceil((lower - x[0]) / h - 1e-9))
            i1 = int(np.floor((upper - x[0]) / h + 1e-9))
            m = i1 - i0 + 1
            if m < 5 or i0 < 1 or i1 > n - 2:
                break
            dl = max(x[i0] - lower, 1e-6 * h)
            dr = max(upper - x[i1], 1e-6 * h)
            ab = np.zeros((3, m))
            ab[1] = c0 + 2 * self.coef
            ab[0, 1:] = -self.coef
            ab[2, :-1] = -self.coef
            ab[1, 0] = c0 + 2 * coef / (h * dl)
            ab[0, 1] = -2 * coef / (h * (h + dl))
            ab[1, -1] = c0 + 2 * coef / (h * dr)
            ab[2, -2] = -2 * coef / (h * (h + dr))
            e = np.zeros(m)
            e[0] = 2 * coef / (dl * (h + dl))
            e[-1] += 2 * coef / (dr * (h + dr))
            sol = solve_banded((1, 1), ab, np.column_stack([g[i0:i1 + 1], e]))
            a, b = sol[:, 0], sol[:, 1]
            k = min(max(j - i0, 0), m - 1)
            for _ in range(5):
                M_new = (a[k] + self.psi) / (1.0 - b[k])
                k_new = int(np.argmin(a + M_new * b))
                if k_new == k:
                    break
                k = k_new
            M_new = (a[k] + self.psi) / (1.0 - b[k])
            v_new = np.full(n, M_new)
            v_new[i0:i1 + 1] = a + M_new * b
            act_new = np.ones(n, bool)
            act_new[i0:i1 + 1] = False
            v, M, active, j = v_new, M_new, act_new, i0 + k
            lo_new, up_new = _edges(x, v, M, active, j, curvature)
            done = max(abs(lo_new - lower), abs(up_new - upper)) < REFINE_TOL * h
            lower, upper = lo_new, up_new
            if done:
                break
        return v, M, active, j, lower, upper


def _refine_min(x, v, j):
    """Parabolic refinement of the discrete argmin."""
    if j <= 0 or j >= x.size - 1:
        raise DegenerateGrid("value minimum at the state-grid boundary")
    d2 = v[j + 1] - 2 * v[j] + v[j - 1]
    if d2 <= 0:
        return x[j]
    h = x[1] - x[0]
    return x[j] - 0.5 * h * (v[j + 1] - v[j - 1]) / d2


def _edges(x, v, M, active, j, curvature):
    """Band edges from the adjust-value gap g = v - M (g <= 0, touching zero at the edges).

    Near a smooth-pasting edge g ~ -c (x - e)^2, so sqrt(-g) is linear in x.
    The discrete g at the node next to the free boundary is inaccurate, so the
    line is fitted by weighted least squares over nodes whose estimated
    distance to the edge, sqrt(-g / curvature), lies between 1 and 6 grid
    steps; the weights ramp to zero at both ends of that window, which keeps
    the edges continuous as nodes switch between adjusting and waiting.
    """
    h = x[1] - x[0]
    n = x.size
    right = np.flatnonzero(active[j + 1:])
    left = np.flatnonzero(active[:j])
    iu = j + right[0] if right.size else n - 1
    il = left[-1] + 1 if left.size else 0
    if il == 0 or iu == n - 1:
        raise DegenerateGrid("inaction band reaches the state-grid boundary; widen x_halfwidth")
    r = np.sqrt(-np.minimum(v - M, 0.0))
    dist = r / (np.sqrt(curvature) * h)
    w = np.clip(dist - EDGE_WINDOW[0], 0.0, 1.0) * np.clip(EDGE_WINDOW[1] - dist, 0.0, 1.0)

    def fit(sl, i_edge, i_in, direction):
        ww, xx, rr = w[sl], x[sl], r[sl]
        if np.count_nonzero(ww) >= 2:
            sw = ww.sum()
            xm = (ww * xx).sum() / sw
            rm = (ww * rr).sum() / sw
            sxx = (ww * (xx - xm) ** 2).sum()
            if sxx > 0:
                slope = (ww * (xx - xm) * (rr - rm)).sum() / sxx
                if slope * direction < 0:
                    return xm - rm / slope
        # narrow band: two-node extrapolation
        r1, r0 = r[i_edge], r[i_in]
        d = h * r1 / (r0 - r1) if r0 > r1 > 0 else 0.5 * h
        return x[i_edge] + direction * min(d, 2 * h)

    upper = fit(slice(j, iu + 1), iu, iu - 1, +1) if iu > j else x[j] + 0.5 * h
    lower = fit(slice(il, j + 1), il, il + 1, -1) if il < j else x[j] - 0.5 * h
    return lower, upper


def _edge_curvature(params):
    """Rough curvature of g at the edges, B xbar^2 / sigma^2; only sets the fitting window."""
    xbar = menu_cost_band_estimate(params)
    return max(params.b_curv * xbar**2 / params.sigma**2, 1e-12)


def _flow_loss(params, x, target):
    return params.b_curv * (x - target) ** 2


def solve_stationary_vi(params: ModelParams, target=0.0, sgrid: Optional[StateGrid] = None, x_points=801,
                        max_iter=500):
    """Stationary menu-cost problem against a constant target.

    Returns (ValueGrid, PolicyBand).  With ``psi == 0`` the band collapses to
    the target and ``v`` is the minimized flow value over rho.
    """
    if params.sigma <= 0:
        raise DegenerateGrid("menu-cost problem needs sigma > 0")
    if params.rho <= 0:
        raise OutOfRange("rho", params.rho, "rho > 0 for the stationary menu-cost problem")
    if sgrid is None:
        sgrid = default_menu_grid(params, x_points)
    x = sgrid.x
    f = _flow_loss(params, x, target)
    if params.psi == 0:
        v = np.full(sgrid.n_points, 0.0)
        return ValueGrid(sgrid, v), PolicyBand(np.float64(target), np.float64(target), np.float64(target))
    solver = _VISolver(sgrid, params.sigma, params.psi, max_iter)
    # seed the active set with the small-discounting band estimate
    j0 = int(np.argmin(np.abs(x - target)))
    active = np.abs(x - target) >= menu_cost_band_estimate(params)
    v, M, active, j = solver.solve(params.rho, f, active, j0)
    v, M, active, j, lower, upper = solver.refine(params.rho, f, v, M, active, j, _edge_curvature(params))
    reset = _refine_min(x, v, j)
    vg = ValueGrid(sgrid, v)
    vg.active = active
    vg.adjust_value = M
    return vg, PolicyBand(np.float64(lower), np.float64(upper), np.float64(reset))


def solve_time_dependent_vi(params: ModelParams, agg: AggregatePath, sgrid: Optional[StateGrid] = None,
                            x_points=801, max_iter=500):
    """Backward induction against the moving target alpha * X(s).

    Terminal condition: stationary solution at target alpha * X(horizon).
    Returns (ValueGrid with tgrid, PolicyBand with tgrid).
    """
    if params.sigma <= 0:
        raise DegenerateGrid("menu-cost problem needs sigma > 0")
    grid = agg.grid
    if sgrid is None:
        sgrid = default_menu_grid(params, x_points)
    x = sgrid.x
    nn = grid.n_nodes
    targets = params.alpha * agg.values
    values = np.empty((nn, sgrid.n_points))
    lower = np.empty(nn)
    upper = np.empty(nn)
    reset = np.empty(nn)

    vT, bandT = solve_stationary_vi(params, targets[-1], sgrid, max_iter=max_iter)
    values[-1] = vT.values
    lower[-1], upper[-1], reset[-1] = bandT.at(None)
    if params.psi == 0:
        for k in range(nn - 2, -1, -1):
            values[k] = (params.b_curv * 0.0 + values[k + 1] / grid.dt) / (params.rho + 1.0 / grid.dt)
        return (ValueGrid(sgrid, values, grid),
                PolicyBand(targets.copy(), targets.copy(), targets.copy(), grid))
    solver = _VISolver(sgrid, params.sigma, params.psi, max_iter)
    active = vT.active.copy()
    j = int(np.argmin(vT.values))
    c0 = params.rho + 1.0 / grid.dt
    curv = _edge_curvature(params)
    for k in range(nn - 2, -1, -1):
        g = _flow_loss(params, x, targets[k]) + values[k + 1] / grid.dt
        v, M, active, j = solver.solve(c0, g, active.copy(), j)
        v, M, active, j, lower[k], upper[k] = solver.refine(c0, g, v, M, active, j, curv,
                                                            start=(lower[k + 1], upper[k + 1]))
        values[k] = v
        reset[k] = _refine_min(x, v, j)
    return ValueGrid(sgrid, values, grid), PolicyBand(lower, upper, reset, grid)


def stationary_density(band: PolicyBand, params: ModelParams, sgrid: StateGrid) -> CrossSection:
    """Stationary cross-section: diffusion absorbed at the edges, reinjected at the reset."""
    if band.tgrid is not None:
        raise OutOfRange("band", "time-varying", "a stationary band")
    if params.sigma <= 0:
        raise DegenerateGrid("stationary density needs sigma > 0")
    lo, hi, rs = band.at(None)
    idx, lap = dirichlet_laplacian_banded(sgrid.x, lo, hi, 1.0)
    src = hat(sgrid, rs)[idx]
    g = solve_tridiag(-lap, src)
    f = np.zeros(sgrid.n_points)
    f[idx] = np.maximum(g, 0.0)
    return CrossSection(sgrid, normalize(f, sgrid.spacing))


def _absorb_outside(f, x, lo, hi, sgrid, rs):
    """Move mass on nodes outside [lo, hi] to the reset point."""
    out = (x <= lo) | (x >= hi)
    if not np.any(out[f != 0]):
        return f
    h = sgrid.spacing
    before = trapezoid_mass(f, h)
    f = np.where(out, 0.0, f)
    lost = before - trapezoid_mass(f, h)
    return f + hat(sgrid, rs, lost)


def evolve_density(f0: CrossSection, band: PolicyBand, params: ModelParams, grid: TimeGrid,
                   mass_tol=1e-6):
    """Evolve the cross-section under a (possibly time-varying) band policy.

    Mass outside the band at a node is reset immediately; within a step,
    diffusion is implicit with absorbing edges and the absorbed flux is
    reinjected at the reset point inside the same implicit solve
    (Sherman-Morrison on the rank-one reinjection term), so a stationary
    density is an exact fixed point.  Returns a list of CrossSection, one per
    node.
    """
    if band.tgrid is not None and not band.tgrid.matches(grid):
        raise GridMismatch("band and time grid differ")
    sg = f0.sgrid
    x = sg.x
    h = sg.spacing
    dt = grid.dt
    coef = 0.5 * params.sigma**2
    out = []
    lo, hi, rs = band.at(0)
    f = _absorb_outside(f0.density.copy(), x, lo, hi, sg, rs)
    out.append(CrossSection(sg, f))
    cache = {}
    for k in range(grid.n_slices):
        lo, hi, rs = band.at(k + 1)
        f = _absorb_outside(f, x, lo, hi, sg, rs)
        key = (lo, hi, rs)
        if key not in cache:
            idx, lap = dirichlet_laplacian_banded(x, lo, hi, coef)
            A = -dt * lap
            A[1] += 1.0
            q = hat(sg, rs)[idx]
            z = solve_tridiag(A, dt * q)
            cache.clear()
            cache[key] = (idx, lap, A, z)
        idx, lap, A, z = cache[key]
        y = solve_tridiag(A, f[idx])
        # v^T w = h * sum(lap @ w): outflow through the edges (negative)
        vy = h * banded_matvec(lap, y).sum()
        vz = h * banded_matvec(lap, z).sum()
        fin = y - z * vy / (1.0 + vz)
        new = np.zeros_like(f)
        new[idx] = fin
        m0 = trapezoid_mass(f, h)
        m1 = trapezoid_mass(new, h)
        if abs(m1 - m0) > mass_tol:
            raise MassLeak(f"mass changed by {m1 - m0:.2e} at step {k}")
        if np.min(fin) < -1e-9 * np.max(np.abs(fin)):
            new = np.maximum(new, 0.0)
        f = new
        out.append(CrossSection(sg, f))
    return out
