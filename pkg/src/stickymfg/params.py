"""Model constants and the time/state discretizations shared by every solver.

The period loss of a firm with markup gap ``x`` facing aggregate gap ``X`` is
``b_curv * (x - alpha * X)**2``; ``alpha > 0`` is strategic complementarity and
``alpha < 0`` substitutability.  Output is ``Y = -X``.
"""
from dataclasses import asdict, dataclass, field
import math

import numpy as np

from .errors import MissingKey, OutOfRange

STRUCTURAL_KEYS = ("sigma", "theta", "rho", "alpha", "b_curv", "psi", "delta", "horizon")


@dataclass(frozen=True)
class ModelParams:
    sigma: float
    theta: float
    rho: float
    alpha: float
    b_curv: float
    psi: float
    delta: float
    horizon: float
    m_dim: int = 1

    @property
    def breakdown_risk(self) -> bool:
        """True when alpha is at or beyond the complementarity threshold."""
        return self.alpha >= 1.0

    def to_dict(self):
        return asdict(self)

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return validate_params(d)


def _check(name, value, ok, bound):
    if not ok:
        raise OutOfRange(name, value, bound)


def validate_params(raw) -> ModelParams:
    """Build a ModelParams from a name->number mapping.

    ``alpha >= 1`` is accepted; the returned object reports it through
    ``breakdown_risk`` and the equilibrium solvers surface it as a status.
    """
    vals = {}
    for key in STRUCTURAL_KEYS:
        if key not in raw:
            raise MissingKey(key)
        try:
            v = float(raw[key])
        except (TypeError, ValueError):
            raise OutOfRange(key, raw[key], "must be a real number") from None
        _check(key, v, math.isfinite(v), "must be finite")
        vals[key] = v
    m_dim = int(raw.get("m_dim", 1))
    _check("m_dim", m_dim, m_dim == 1, "m_dim == 1 (scalar noise only)")

    _check("sigma", vals["sigma"], vals["sigma"] >= 0, "sigma >= 0")
    _check("theta", vals["theta"], vals["theta"] >= 0, "theta >= 0")
    _check("rho", vals["rho"], vals["rho"] >= 0, "rho >= 0")
    _check("b_curv", vals["b_curv"], vals["b_curv"] > 0, "b_curv > 0")
    _check("psi", vals["psi"], vals["psi"] >= 0, "psi >= 0")
    _check("horizon", vals["horizon"], vals["horizon"] > 0, "horizon > 0")
    return ModelParams(m_dim=m_dim, **vals)


@dataclass(frozen=True)
class TimeGrid:
    n_slices: int
    dt: float
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def horizon(self):
        return float(self.nodes[-1])

    @property
    def n_nodes(self):
        return self.n_slices + 1

    def matches(self, other) -> bool:
        return self.n_slices == other.n_slices and abs(self.horizon - other.horizon) <= 1e-12 * max(1.0, self.horizon)


def build_time_grid(horizon, n_slices) -> TimeGrid:
    if not horizon > 0 or not math.isfinite(horizon):
        raise OutOfRange("horizon", horizon, "horizon > 0")
    if int(n_slices) != n_slices or n_slices < 1:
        raise OutOfRange("n_slices", n_slices, "integer n_slices >= 1")
    n = int(n_slices)
    dt = horizon / n
    nodes = np.arange(n + 1) * dt
    nodes[-1] = horizon
    nodes.setflags(write=False)
    return TimeGrid(n_slices=n, dt=dt, nodes=nodes)


@dataclass(frozen=True)
class StateGrid:
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not (self.x_min < 0 < self.x_max):
            raise OutOfRange("state grid", (self.x_min, self.x_max), "x_min < 0 < x_max")
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise OutOfRange("x_points", self.n_points, "odd and >= 3")

    @property
    def spacing(self):
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def x(self):
        return np.linspace(self.x_min, self.x_max, self.n_points)

    @property
    def symmetric(self):
        return self.x_min == -self.x_max


def build_state_grid(halfwidth, n_points) -> StateGrid:
    """Symmetric grid on [-halfwidth, halfwidth]; zero is the middle node."""
    if not halfwidth > 0:
        raise OutOfRange("x_halfwidth", halfwidth, "x_halfwidth > 0")
    return StateGrid(-float(halfwidth), float(halfwidth), int(n_points))


def menu_cost_band_estimate(params: ModelParams) -> float:
    """Small-discounting inaction half-width (6 sigma^2 psi / B)^(1/4)."""
    return (6.0 * params.sigma**2 * params.psi / params.b_curv) ** 0.25


def default_halfwidth(params: ModelParams, model_kind: str) -> float:
    """State-grid half-width that keeps the relevant mass well inside the grid."""
    delta = abs(params.delta)
    if model_kind == "calvo":
        # Laplace stationary cross-section with scale sigma/sqrt(2 theta); the
        # reflecting edges must sit where the density is ~e^-25 so boundary
        # flux does not bias the mean path's late tail
        scale = params.sigma / math.sqrt(2.0 * max(params.theta, 1e-12))
        return max(25.0 * scale, 1e-6) + 2.0 * delta
    xbar = menu_cost_band_estimate(params)
    return max(4.0 * xbar, 2.0 * (xbar + delta))
