"""Path-integral solution of scalar stochastic control problems.

The constrained action over ``n`` equal slices is the Onsager-Machlup sum

    S = sum_i [ L(s_i, x_i, u_i) dt + (x_{i+1} - x_i - mu dt)^2 / (2 vol^2 dt) ] + phi(x_n).

Two solvers work on it.  ``propagate_kernel`` steps the imaginary-time
(Wick-rotated) kernel backward: the amplitude ``psi = exp(-V / hbar)`` is
convolved with ``exp(-c(x, x') / hbar)``, where ``c`` is the slice action
minimized over the control.  ``solve_foc`` finds the most probable path by
Newton's method on the stacked first-order conditions in (u_i, x_{i+1}).

The kinetic term already carries ``1 / vol^2``, so the Gaussian factor is the
diffusion transition density at ``hbar = 1``; ``hbar`` rescales the noise
around the deterministic limit.

In the linear-quadratic problem (drift ``u``, cost ``q x^2 + r u^2``) the
kinetic penalty acts as a second, free control: eliminating ``u`` leaves the
path cost ``q x^2 + r_eff xdot^2`` with ``r_eff = r / (1 + 2 r vol^2)``, and the
explicit control is ``u = xdot r_eff / r``.
"""
from dataclasses import dataclass
import math
from typing import Callable, Optional

import numpy as np
from scipy.linalg import eigvals_banded, solve_banded
from scipy.special import logsumexp

from .errors import DegenerateVol, DimensionMismatch, KernelUnderflow, NoConvergence, OutOfRange, SaddleDetected
from .params import StateGrid, TimeGrid, build_state_grid, build_time_grid

FD_STEP = 1e-5


@dataclass(frozen=True)
class ControlProblem:
    """Scalar control problem; all callables must accept numpy arrays and broadcast."""

    lagrangian: Callable  # (s, x, u) -> flow cost
    drift: Callable  # (s, x, u) -> mu
    vol: Callable  # (s, x, u) -> sigma > 0
    terminal_cost: Callable  # x -> cost
    horizon: float
    autonomous: bool = False  # callables ignore s: slice costs can be cached


@dataclass(frozen=True)
class ActionLattice:
    tgrid: TimeGrid
    sgrid: StateGrid
    kernel_bandwidth: float

    @property
    def resolves_kernel(self):
        return self.sgrid.spacing <= 0.5 * self.kernel_bandwidth


@dataclass
class WaveGrid:
    """Amplitude psi = exp(-V / normalizer), stored in the log domain.

    The stored amplitude has peak 1; ``log_scale`` carries the absolute level.
    """

    sgrid: StateGrid
    log_amplitude: np.ndarray
    normalizer: float = 1.0
    log_scale: float = 0.0

    @property
    def amplitude(self):
        return np.exp(self.log_amplitude)

    @property
    def value(self):
        return -self.normalizer * (self.log_amplitude + self.log_scale)

    @classmethod
    def from_value(cls, sgrid: StateGrid, value, normalizer=1.0):
        la = -np.asarray(value, dtype=float) / normalizer
        top = float(np.max(la))
        return cls(sgrid, la - top, normalizer, top)

    @classmethod
    def from_amplitude(cls, sgrid: StateGrid, amplitude, normalizer=1.0):
        amplitude = np.asarray(amplitude, dtype=float)
        if np.any(amplitude <= 0):
            raise OutOfRange("amplitude", "non-positive", "amplitude > 0")
        la = np.log(amplitude)
        top = float(np.max(la))
        return cls(sgrid, la - top, normalizer, top)


def _ev(f, s, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    shape = np.broadcast_shapes(np.shape(s), x.shape, u.shape)
    return np.broadcast_to(np.asarray(f(s, x, u), dtype=float), shape)


def _vol(problem, s, x, u):
    v = _ev(problem.vol, s, x, u)
    if np.any(v <= 0):
        raise DegenerateVol("vol must be positive at every evaluated point")
    return v


def build_lattice(problem: ControlProblem, n_slices, x_halfwidth, x_points, normalizer=1.0, check=True):
    """Time and state lattice; the kernel bandwidth is sqrt(normalizer) * vol * sqrt(dt)."""
    tgrid = build_time_grid(problem.horizon, n_slices)
    sgrid = build_state_grid(x_halfwidth, x_points)
    v = float(np.min(_vol(problem, 0.0, sgrid.x, 0.0)))
    lat = ActionLattice(tgrid, sgrid, math.sqrt(normalizer) * v * math.sqrt(tgrid.dt))
    if check and not lat.resolves_kernel:
        raise OutOfRange("x_points", x_points,
                         f"state spacing <= kernel bandwidth / 2 = {0.5 * lat.kernel_bandwidth:.3g}")
    return lat


def build_action(problem: ControlProblem, lattice: ActionLattice, x_path, u_path):
    """Onsager-Machlup action of a discrete (state, control) path."""
    x = np.asarray(x_path, dtype=float)
    u = np.asarray(u_path, dtype=float)
    n = lattice.tgrid.n_slices
    if x.shape != (n + 1,) or u.shape != (n,):
        raise DimensionMismatch(f"need {n + 1} states and {n} controls, got {x.shape} and {u.shape}")
    return float(np.sum(_slice_terms(problem, lattice.tgrid, x, u)) + problem.terminal_cost(x[-1]))


def _slice_terms(problem, tgrid, x, u):
    dt = tgrid.dt
    s = tgrid.nodes[:-1]
    v = _vol(problem, s, x[:-1], u)
    e = x[1:] - x[:-1] - _ev(problem.drift, s, x[:-1], u) * dt
    return _ev(problem.lagrangian, s, x[:-1], u) * dt + e**2 / (2.0 * v**2 * dt)


# ---------------------------------------------------------------- kernel


def _d1(f, s, x, u, h):
    return (_ev(f, s, x, u + h) - _ev(f, s, x, u - h)) / (2.0 * h)


def _d2(f, s, x, u, h):
    return (_ev(f, s, x, u + h) - 2.0 * _ev(f, s, x, u) + _ev(f, s, x, u - h)) / h**2


def _control_derivs(problem, s, x, dx, u, dt):
    """u-derivatives of the slice action g(u) = L dt + (dx - mu dt)^2 / (2 v^2 dt).

    Derivatives of L, mu and vol are central differences; the kinetic term is
    differentiated analytically so its large values do not enter a difference
    quotient.
    """
    h = 1e-4 * (1.0 + np.abs(u))
    mu = _ev(problem.drift, s, x, u)
    v = _vol(problem, s, x, u)
    mu_u, mu_uu = _d1(problem.drift, s, x, u, h), _d2(problem.drift, s, x, u, h)
    v_u, v_uu = _d1(problem.vol, s, x, u, h), _d2(problem.vol, s, x, u, h)
    l_u, l_uu = _d1(problem.lagrangian, s, x, u, h), _d2(problem.lagrangian, s, x, u, h)
    e = dx - mu * dt
    g_u = l_u * dt - e * mu_u / v**2 - e**2 * v_u / (v**3 * dt)
    g_uu = (l_uu * dt + mu_u**2 * dt / v**2 - e * mu_uu / v**2 + 4.0 * e * mu_u * v_u / v**3
            - e**2 * v_uu / (v**3 * dt) + 3.0 * e**2 * v_u**2 / (v**4 * dt))
    # mixed derivative with respect to the end point, for the curvature in x'
    g_xu = -mu_u / v**2 - 2.0 * e * v_u / (v**3 * dt)
    return g_u, g_uu, g_xu, v


def slice_cost(problem: ControlProblem, s, x, x_next, dt, u0=None, max_newton=30):
    """c(x, x') = min_u [L dt + kinetic] by pointwise Newton; returns (c, u*, curvature in x')."""
    x = np.asarray(x, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    x, x_next = np.broadcast_arrays(x, x_next)
    dx = x_next - x
    u = np.zeros(x.shape) if u0 is None else np.array(np.broadcast_to(u0, x.shape), dtype=float)
    for _ in range(max_newton):
        g_u, g_uu, _, _ = _control_derivs(problem, s, x, dx, u, dt)
        ok = g_uu > 0
        step = np.where(ok, -g_u / np.where(ok, g_uu, 1.0), 0.0)
        u = u + step
        if np.all(np.abs(step) <= 1e-12 * (1.0 + np.abs(u))):
            break
    g_u, g_uu, g_xu, v = _control_derivs(problem, s, x, dx, u, dt)
    e = dx - _ev(problem.drift, s, x, u) * dt
    cost = _ev(problem.lagrangian, s, x, u) * dt + e**2 / (2.0 * v**2 * dt)
    curv = 1.0 / (v**2 * dt) - np.where(g_uu > 0, g_xu**2 / np.where(g_uu > 0, g_uu, 1.0), 0.0)
    return cost, u, curv


@dataclass
class _Kernel:
    """log K[i, j] plus its row-scaled exponential for fast products."""

    log: np.ndarray
    row_max: np.ndarray
    scaled: np.ndarray  # exp(log - row_max)


class _KernelCache:
    def __init__(self):
        self.key = None
        self.value = None


def _kernel_matrix(problem, sgrid, s, dt, normalizer, cache=None) -> _Kernel:
    """Propagator K[i, j] (target x_i, source x'_j), trapezoid weights included."""
    if cache is not None and problem.autonomous and cache.key == (sgrid, dt, normalizer):
        return cache.value
    x = sgrid.x
    h = sgrid.spacing
    c, _, curv = slice_cost(problem, s, x[:, None], x[None, :], dt)
    # Laplace normalization from the curvature at the most likely end point
    rows = np.arange(x.size)
    jstar = np.clip(np.argmin(c, axis=1), 1, x.size - 2)
    kappa = curv[rows, jstar]
    if np.any(kappa <= 0):
        raise KernelUnderflow("slice action has no positive curvature in the end point")
    # continuous argmin by parabolic refinement, then the share of the Laplace
    # Gaussian that falls on the grid: rows near the edges are renormalized so
    # the truncated domain does not act as an absorbing boundary
    c0, c1, c2 = c[rows, jstar - 1], c[rows, jstar], c[rows, jstar + 1]
    d2 = c0 - 2.0 * c1 + c2
    shift = np.where(d2 > 0, 0.5 * (c0 - c2) / np.where(d2 > 0, d2, 1.0), 0.0)
    xstar = x[jstar] + h * np.clip(shift, -1.0, 1.0)
    w = np.full(x.size, h)
    w[[0, -1]] *= 0.5
    gauss = np.exp(-0.5 * kappa[:, None] * (x[None, :] - xstar[:, None]) ** 2 / normalizer)
    share = np.minimum(gauss @ w / np.sqrt(2.0 * np.pi * normalizer / kappa), 1.0)
    log_z = 0.5 * np.log(2.0 * np.pi * normalizer / kappa) + np.log(share)
    logk = -c / normalizer + np.log(w)[None, :] - log_z[:, None]
    row_max = np.max(logk, axis=1)
    kern = _Kernel(logk, row_max, np.exp(logk - row_max[:, None]))
    if cache is not None and problem.autonomous:
        cache.key, cache.value = (sgrid, dt, normalizer), kern
    return kern


def propagate_kernel(wave: WaveGrid, problem: ControlProblem, s, dt, _cache=None) -> WaveGrid:
    """One backward step of the imaginary-time propagator, in the log domain.

    The quadrature is a matrix-vector product on peak-normalized factors;
    rows where that product underflows are redone with log-sum-exp.
    """
    kern = _kernel_matrix(problem, wave.sgrid, s, dt, wave.normalizer, _cache)
    with np.errstate(divide="ignore"):
        la = kern.row_max + np.log(kern.scaled @ np.exp(wave.log_amplitude))
    weak = ~(la - kern.row_max > -600.0)
    if np.any(weak):
        la[weak] = logsumexp(kern.log[weak] + wave.log_amplitude[None, :], axis=1)
    if not np.all(np.isfinite(la)):
        raise KernelUnderflow("all kernel weights vanished at some node; refine the grid or raise the normalizer")
    top = float(np.max(la))
    return WaveGrid(wave.sgrid, la - top, wave.normalizer, wave.log_scale + top)


@dataclass
class KernelSolution:
    lattice: ActionLattice
    values: np.ndarray  # (n_nodes, n_points) value function at every time node
    normalizer: float


def solve_kernel(problem: ControlProblem, lattice: ActionLattice, normalizer=1.0) -> KernelSolution:
    """Backward kernel propagation from the terminal cost; value = -normalizer log psi."""
    tg = lattice.tgrid
    sg = lattice.sgrid
    wave = WaveGrid.from_value(sg, problem.terminal_cost(sg.x), normalizer)
    values = np.empty((tg.n_nodes, sg.n_points))
    values[-1] = wave.value
    cache = _KernelCache()
    for k in range(tg.n_slices - 1, -1, -1):
        wave = propagate_kernel(wave, problem, tg.nodes[k], tg.dt, cache)
        values[k] = wave.value
    return KernelSolution(lattice, values, normalizer)


# ---------------------------------------------------------------- first-order conditions


@dataclass
class FocResult:
    x: np.ndarray
    u: np.ndarray
    action: float
    iterations: int
    residual: float
    min_eigenvalue: float


def _partials(f, s, x, u):
    hx = FD_STEP * (1.0 + np.abs(x))
    hu = FD_STEP * (1.0 + np.abs(u))
    fx = (_ev(f, s, x + hx, u) - _ev(f, s, x - hx, u)) / (2.0 * hx)
    fu = (_ev(f, s, x, u + hu) - _ev(f, s, x, u - hu)) / (2.0 * hu)
    return fx, fu


def _local_gradient(problem, s, dt, x0, u, x1):
    """Gradient of one slice term with respect to (x_i, u_i, x_{i+1})."""
    v = _vol(problem, s, x0, u)
    mu = _ev(problem.drift, s, x0, u)
    l_x, l_u = _partials(problem.lagrangian, s, x0, u)
    mu_x, mu_u = _partials(problem.drift, s, x0, u)
    v_x, v_u = _partials(problem.vol, s, x0, u)
    e = x1 - x0 - mu * dt
    a = e / (v**2 * dt)
    b = e**2 / (v**3 * dt)
    g_x0 = l_x * dt - a * (1.0 + mu_x * dt) - b * v_x
    g_u = l_u * dt - a * mu_u * dt - b * v_u
    return np.stack([g_x0, g_u, a])


def _terminal_derivs(problem, xn):
    h = FD_STEP * (1.0 + abs(xn))
    phi = problem.terminal_cost
    d1 = (phi(xn + h) - phi(xn - h)) / (2.0 * h)
    d2 = (phi(xn + h) - 2.0 * phi(xn) + phi(xn - h)) / h**2
    return float(d1), float(d2)


def _unpack(z, x_init):
    u = z[0::2]
    x = np.concatenate([[x_init], z[1::2]])
    return x, u


def _foc_gradient(problem, tgrid, z, x_init):
    """dS/dz for z = [u_0, x_1, u_1, x_2, ..., u_{n-1}, x_n]."""
    x, u = _unpack(z, x_init)
    s = tgrid.nodes[:-1]
    lg = _local_gradient(problem, s, tgrid.dt, x[:-1], u, x[1:])
    g = np.zeros_like(z)
    g[0::2] = lg[1]
    g[1::2] += lg[2]
    g[1:-1:2] += lg[0][1:]
    g[-1] += _terminal_derivs(problem, x[-1])[0]
    return g


def _foc_hessian(problem, tgrid, z, x_init):
    """Banded (2, 2) Hessian from central differences of the slice gradients."""
    x, u = _unpack(z, x_init)
    n = u.size
    s = tgrid.nodes[:-1]
    dt = tgrid.dt
    cols = [x[:-1], u, x[1:]]
    local = np.zeros((n, 3, 3))
    for a in range(3):
        h = 1e-4 * (1.0 + np.abs(cols[a]))
        up = [c.copy() for c in cols]
        dn = [c.copy() for c in cols]
        up[a] = up[a] + h
        dn[a] = dn[a] - h
        local[:, :, a] = ((_local_gradient(problem, s, dt, *up) - _local_gradient(problem, s, dt, *dn))
                          / (2.0 * h)).T
    local = 0.5 * (local + local.transpose(0, 2, 1))
    m = z.size
    full_idx = np.stack([2 * np.arange(n) - 1, 2 * np.arange(n), 2 * np.arange(n) + 1], axis=1)
    ab = np.zeros((5, m))  # solve_banded layout, (l, u) = (2, 2)
    for a in range(3):
        for b in range(3):
            i = full_idx[:, a]
            j = full_idx[:, b]
            ok = (i >= 0) & (j >= 0)
            np.add.at(ab, (2 + i[ok] - j[ok], j[ok]), local[ok, a, b])
    ab[2, -1] += _terminal_derivs(problem, x[-1])[1]
    return ab


def _min_eigenvalue(ab):
    # upper-form banded storage for eigvals_banded: row k holds superdiagonal 2-k
    upper = ab[:3]
    return float(eigvals_banded(upper, lower=False, select="i", select_range=(0, 0))[0])


def solve_foc(problem: ControlProblem, lattice: ActionLattice, init, tol=1e-10, max_iter=100) -> FocResult:
    """Most probable path from ``init``: Newton on the stacked first-order conditions.

    Backtracking on the squared gradient norm.  A Hessian with a negative
    eigenvalue at the solution raises SaddleDetected carrying the result.
    """
    tg = lattice.tgrid
    n = tg.n_slices
    dt = tg.dt
    x = np.empty(n + 1)
    x[0] = init
    for i in range(n):
        x[i + 1] = x[i] + float(_ev(problem.drift, tg.nodes[i], x[i], 0.0)) * dt
    u = np.zeros(n)
    z = np.empty(2 * n)
    z[0::2] = u
    z[1::2] = x[1:]
    g = _foc_gradient(problem, tg, z, init)
    res = float(np.max(np.abs(g)))
    it = 0
    for it in range(1, max_iter + 1):
        if res < tol:
            break
        ab = _foc_hessian(problem, tg, z, init)
        step = solve_banded((2, 2), ab, -g)
        f0 = float(g @ g)
        t = 1.0
        while True:
            z_try = z + t * step
            g_try = _foc_gradient(problem, tg, z_try, init)
            if float(g_try @ g_try) < f0 or t < 1e-8:
                break
            t *= 0.5
        z, g = z_try, g_try
        res = float(np.max(np.abs(g)))
    else:
        if res >= tol:
            raise NoConvergence("first-order conditions", max_iter, res)
    x, u = _unpack(z, init)
    lam = _min_eigenvalue(_foc_hessian(problem, tg, z, init))
    result = FocResult(x, u, build_action(problem, lattice, x, u), it, res, lam)
    if lam < -1e-8:
        raise SaddleDetected(f"Hessian has a negative eigenvalue {lam:.3g} at the stationary path", result)
    return result


# ---------------------------------------------------------------- linear-quadratic oracle


@dataclass
class LQReference:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    p: np.ndarray  # value function V(s, x) = p(s) x^2 + c(s)
    c: np.ndarray


def lq_effective_cost(r, sigma):
    """Control weight after the kinetic penalty is minimized out: r / (1 + 2 r sigma^2)."""
    return r / (1.0 + 2.0 * r * sigma**2)


def lq_control_problem(q, r, qT, sigma, horizon):
    """dx = u dt + sigma dW with cost q x^2 + r u^2 and terminal qT x^2; returns (problem, r_eff)."""
    problem = ControlProblem(
        lagrangian=lambda s, x, u: q * x**2 + r * u**2,
        drift=lambda s, x, u: u,
        vol=lambda s, x, u: sigma + 0.0 * x,
        terminal_cost=lambda x: qT * x**2,
        horizon=horizon,
        autonomous=True,
    )
    return problem, lq_effective_cost(r, sigma)


def lq_riccati_closed_form(q, r, qT, tau):
    """p at time-to-go tau for pdot = p^2 / r - q, p(T) = qT (q > 0)."""
    g = math.sqrt(q * r)
    th = np.tanh(math.sqrt(q / r) * np.asarray(tau, dtype=float))
    return g * (qT + g * th) / (g + qT * th)


def lq_reference(q, r, qT, horizon, init, n_out=400, substeps=64, noise_var=0.0) -> LQReference:
    """Riccati oracle: RK4 for p backward, Simpson quadrature for x and c.

    Output on ``n_out`` equal slices of [0, horizon]; the integration step is
    ``horizon / (n_out * substeps)``.  ``c(s) = int_s^T noise_var p`` is the
    additive value term when the state carries Gaussian noise of variance
    ``noise_var`` per unit time.
    """
    if q < 0 or qT < 0:
        raise OutOfRange("q/qT", (q, qT), "q >= 0 and qT >= 0")
    if not r > 0:
        raise OutOfRange("r", r, "r > 0")
    if not horizon > 0:
        raise OutOfRange("horizon", horizon, "horizon > 0")
    m = n_out * substeps
    m += m % 2  # Simpson needs an even number of steps
    h = horizon / m
    f = lambda p: p * p / r - q  # dp/ds
    p = np.empty(m + 1)
    p[-1] = qT
    for k in range(m, 0, -1):
        y = p[k]
        k1 = f(y)
        k2 = f(y - 0.5 * h * k1)
        k3 = f(y - 0.5 * h * k2)
        k4 = f(y - h * k3)
        p[k - 1] = y - h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
    # cumulative Simpson integral of p from 0 at even fine nodes
    pairs = h / 3.0 * (p[0:-1:2] + 4.0 * p[1::2] + p[2::2])
    cum = np.concatenate([[0.0], np.cumsum(pairs)])  # at fine nodes 0, 2, 4, ...
    fine_t = np.linspace(0.0, horizon, m + 1)
    t = np.linspace(0.0, horizon, n_out + 1)
    cum_t = np.interp(t, fine_t[0::2], cum) if (m // 2) % n_out else cum[:: (m // 2) // n_out]
    p_t = np.interp(t, fine_t, p)
    x = init * np.exp(-cum_t / r)
    u = -p_t * x / r
    c = noise_var * (cum[-1] - cum_t)
    return LQReference(t, x, u, p_t, c)
