"""General-equilibrium fixed point for the aggregate markup-gap path.

Damped Picard iteration on the path X(s): solve the firm problem against X,
aggregate the shocked cross-section under the resulting policy, and move X
part of the way to the new mean path.  The slow modes of the map have
eigenvalues close to alpha, so the iteration slows down near the pole and
diverges beyond it; divergence is detected explicitly and reported as a
``Breakdown`` status.
"""
from dataclasses import dataclass, field
import math
from typing import List, Optional

import numpy as np

from . import calvo
from . import menu_cost
from .calvo import AggregatePath
from .density import CrossSection, inverse_cdf_sampler, shift_density
from .errors import InvalidDamping, NoBreakdownInRange, NoConvergenceInRange, OutOfRange
from .jump_diffusion import ensemble_stats, simulate_markup_paths
from .params import ModelParams, StateGrid, TimeGrid, build_state_grid, build_time_grid, default_halfwidth
from .response import compute_irf, fit_tail_rate

MODEL_KINDS = ("calvo", "menu_cost")
AGGREGATION_KINDS = ("forward_pde", "monte_carlo")
GROWTH_WINDOW = 10
BLOWUP_FACTOR = 1e3


@dataclass
class EquilibriumResult:
    agg: AggregatePath
    policy: object  # ResetSchedule (calvo) or PolicyBand with tgrid (menu_cost)
    iterations: int
    residual_history: List[float]
    status: str  # Converged | Breakdown | MaxIterations
    reason: str = ""
    damping: float = 1.0
    model_kind: str = "calvo"
    aggregation_kind: str = "forward_pde"
    std_error: Optional[np.ndarray] = None  # Monte-Carlo standard error of the mean path
    sgrid: Optional[StateGrid] = None
    initial: Optional[CrossSection] = None

    @property
    def converged(self):
        return self.status == "Converged"


def effective_damping(damping, alpha):
    """Damping actually applied.

    With alpha = 0 the map is constant, so a full step is exact.  With
    substitutability the map's eigenvalues lie in [alpha, 0]; the step is
    capped at 1 / (1 - alpha) so the damped map stays a contraction.
    """
    if alpha == 0:
        return 1.0
    if alpha < 0:
        return min(damping, 1.0 / (1.0 - alpha))
    return damping


class _Model:
    """Firm problem + aggregation for one model kind."""

    def __init__(self, params: ModelParams, kind, aggregation, grid, sgrid, n_paths, seed):
        self.params = params
        self.kind = kind
        self.aggregation = aggregation
        self.grid = grid
        self.sgrid = sgrid
        self.n_paths = n_paths
        self.seed = seed
        if kind == "calvo":
            if params.theta <= 0:
                raise OutOfRange("theta", params.theta, "theta > 0 for the Calvo model")
            self.stationary = calvo.calvo_stationary_density(params, sgrid, grid.dt)
            self.guess_rate = params.theta
        else:
            _, band = menu_cost.solve_stationary_vi(params, 0.0, sgrid)
            self.stationary = menu_cost.stationary_density(band, params, sgrid)
            self.guess_rate = params.sigma**2 / float(band.upper - band.lower) ** 2 * 4.0
        self.initial = shift_density(self.stationary, -params.delta)
        self.sampler = inverse_cdf_sampler(self.initial) if aggregation == "monte_carlo" else None

    def step(self, agg: AggregatePath):
        """Policy against ``agg`` and the implied mean path (with MC standard errors)."""
        p = self.params
        grid = self.grid
        if self.kind == "calvo":
            policy = calvo.reset_schedule(agg, p)
            if self.aggregation == "forward_pde":
                _, means = calvo.evolve_calvo_density(self.initial, policy, p, grid)
                return policy, means, None
            xs = policy.values
            nodes = grid.nodes
            half = 0.5 * grid.dt

            def rule(s, x, _agg):
                # slice-average reset, matching the forward-PDE step
                return np.interp(s - half, nodes, xs)

            ens = simulate_markup_paths(p, grid, rule, self.n_paths, self.seed, x0=self.sampler, keep_paths=False)
        else:
            _, policy = menu_cost.solve_time_dependent_vi(p, agg, self.sgrid)
            if self.aggregation == "forward_pde":
                seq = menu_cost.evolve_density(self.initial, policy, p, grid)
                return policy, np.array([c.mean for c in seq]), None
            ens = simulate_markup_paths(p.replace(theta=0.0), grid, None, self.n_paths, self.seed,
                                        x0=self.sampler, band=policy, keep_paths=False)
        mean, var = ensemble_stats(ens)
        return policy, mean, np.sqrt(var / ens.n_paths)


def solve_equilibrium(params: ModelParams, model_kind="calvo", aggregation_kind="forward_pde",
                      grid: Optional[TimeGrid] = None, damping=0.5, tol=1e-6, max_iter=500, seed=1, *,
                      n_slices=400, x_points=801, x_halfwidth=None, n_paths=100000, init_scale=1.0,
                      init_path=None, rate_tol=1e-4) -> EquilibriumResult:
    """Damped Picard iteration for the perfect-foresight transition after the shock.

    Converged when the sup-norm path change is below ``tol`` and the
    a-posteriori distance to the fixed point, estimated from the observed
    contraction ratio, is below ``tol`` as well.  The tail rate that
    extrapolates the path past the horizon must also have settled to relative
    ``rate_tol``: tail values are too small to register in the sup-norm.
    Breakdown when residuals grow for ``GROWTH_WINDOW`` consecutive iterations,
    exceed ``1e3 |delta|``, or the new aggregate path stops decaying.
    """
    if model_kind not in MODEL_KINDS:
        raise OutOfRange("model", model_kind, f"one of {MODEL_KINDS}")
    if aggregation_kind not in AGGREGATION_KINDS:
        raise OutOfRange("aggregation", aggregation_kind, f"one of {AGGREGATION_KINDS}")
    if not (0.0 < damping <= 1.0):
        raise InvalidDamping(f"damping={damping} outside (0, 1]")
    if grid is None:
        grid = build_time_grid(params.horizon, n_slices)
    sgrid = build_state_grid(x_halfwidth or default_halfwidth(params, model_kind), x_points)
    model = _Model(params, model_kind, aggregation_kind, grid, sgrid, n_paths, seed)

    d = effective_damping(damping, params.alpha)
    if init_path is not None:
        X = np.asarray(init_path, dtype=float).copy()
    else:
        X = -params.delta * init_scale * np.exp(-model.guess_rate * grid.nodes)
    rate = model.guess_rate
    history = []
    scale = max(abs(params.delta), 1e-300)
    status, reason = "MaxIterations", f"no convergence in {max_iter} iterations"
    policy, se = None, None
    it = 0
    for it in range(1, max_iter + 1):
        agg = AggregatePath(grid, X, rate)
        policy, X_new, se = model.step(agg)
        if not np.all(np.isfinite(X_new)):
            status, reason = "Breakdown", "non-finite aggregate path"
            break
        r = float(np.max(np.abs(X_new - X)))
        history.append(r)
        new_rate = fit_tail_rate(X_new, grid.nodes)
        rate_change = abs(new_rate - rate) / abs(rate) if new_rate is not None else 0.0
        X = (1.0 - d) * X + d * X_new
        if new_rate is not None:
            if new_rate <= 0 and abs(X_new[-1]) > 1e-3 * scale:
                status, reason = "Breakdown", f"aggregate path stops decaying (tail rate {new_rate:.3g})"
                break
            if new_rate > 0:
                rate = new_rate
        if r > BLOWUP_FACTOR * scale:
            status, reason = "Breakdown", f"residual {r:.3g} exceeds {BLOWUP_FACTOR:g} |delta|"
            break
        if len(history) > GROWTH_WINDOW and all(
                history[-k] > history[-k - 1] for k in range(1, GROWTH_WINDOW + 1)):
            status, reason = "Breakdown", f"residuals grew for {GROWTH_WINDOW} consecutive iterations"
            break
        if r < tol and _error_estimate(history) < tol and rate_change < rate_tol:
            status, reason = "Converged", ""
            break
    final = AggregatePath(grid, X, rate if rate > 0 else None)
    return EquilibriumResult(agg=final, policy=policy, iterations=it, residual_history=history, status=status,
                             reason=reason, damping=d, model_kind=model_kind, aggregation_kind=aggregation_kind,
                             std_error=se, sgrid=sgrid, initial=model.initial)


def _error_estimate(history):
    """Distance to the fixed point implied by the recent contraction ratio."""
    r = history[-1]
    if r == 0.0 or len(history) < 2:
        return r
    ratios = [history[-k] / history[-k - 1] for k in range(1, min(3, len(history) - 1) + 1)
              if history[-k - 1] > 0]
    c = max(ratios) if ratios else 0.0
    if c >= 1.0:
        return math.inf
    return r * max(1.0, c / (1.0 - c))


@dataclass
class CriticalAlphaReport:
    alpha_low: float
    alpha_high: float
    probes: List[tuple] = field(default_factory=list)  # (alpha, status, area)

    @property
    def width(self):
        return self.alpha_high - self.alpha_low


def find_critical_alpha(params: ModelParams, model_kind="calvo", alpha_range=(0.5, 1.5), probes=6,
                        **solve_kwargs) -> CriticalAlphaReport:
    """Bisect on equilibrium convergence to bracket the critical complementarity.

    Both endpoints are solved first; then ``probes`` bisection steps shrink the
    bracket to ``(hi - lo) / 2**probes``.
    """
    lo, hi = (float(a) for a in alpha_range)
    if not lo < hi:
        raise OutOfRange("alpha_range", alpha_range, "lo < hi")
    record = []

    def probe(a):
        p = params.replace(alpha=a)
        eq = solve_equilibrium(p, model_kind, **solve_kwargs)
        area = compute_irf(eq, p).area if eq.converged else math.nan
        record.append((a, eq.status, area))
        return eq.converged

    ok_lo = probe(lo)
    ok_hi = probe(hi)
    if ok_lo and ok_hi:
        raise NoBreakdownInRange(f"equilibrium converges on all of [{lo:g}, {hi:g}]")
    if not ok_lo:
        raise NoConvergenceInRange(f"equilibrium fails already at alpha={lo:g}")
    for _ in range(probes):
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return CriticalAlphaReport(lo, hi, sorted(record))
