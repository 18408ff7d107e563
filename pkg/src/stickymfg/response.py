"""Output impulse responses and alpha sweeps.

Output is ``Y = -X``.  The cumulative area adds an analytic exponential tail
beyond the horizon, fitted log-linearly on the last quarter of the path, so
truncation bias does not mask the growth of the area near the pole.
"""
from dataclasses import dataclass, field
import math
from typing import List, Optional

import numpy as np

from .errors import ModelError, NotConverged
from .params import ModelParams, TimeGrid

HUMP_MARGIN = 0.02
NOISE_FLOOR = 1e-8


@dataclass(frozen=True)
class IRFStats:
    area: float
    half_life: float
    peak_time: float
    hump: bool
    impact: float
    tail_rate: Optional[float]


@dataclass
class IRFResult:
    grid: TimeGrid
    output: np.ndarray
    area: float
    half_life: float
    peak_time: float
    hump: bool
    tail_rate: Optional[float] = None
    impact: float = 0.0


def significant_length(values, floor=NOISE_FLOOR):
    """Number of leading nodes before |values| first drops below ``floor * max|values|``."""
    a = np.abs(np.asarray(values, dtype=float))
    top = a.max() if a.size else 0.0
    if top == 0.0:
        return 0
    low = np.nonzero(a < floor * top)[0]
    return int(low[0]) if low.size else a.size


def fit_decay_rate(values, nodes, start=0, stop=None):
    """Log-linear decay rate of |values| on nodes[start:stop]; None unless one strict sign."""
    y = np.asarray(values[start:stop], dtype=float)
    s = np.asarray(nodes[start:stop], dtype=float)
    if y.size < 2 or not (np.all(y > 0) or np.all(y < 0)):
        return None
    return float(-np.polyfit(s, np.log(np.abs(y)), 1)[0])


def fit_tail_rate(values, nodes, fraction=0.25):
    """Decay rate fitted on the last ``fraction`` of the path.

    Nodes past the point where the path reaches round-off level relative to
    its peak are excluded, so a fully decayed path is fitted where it still
    carries signal.
    """
    n = significant_length(values)
    if n < 3:
        return None
    m = max(3, int(round(fraction * (n - 1))) + 1)
    return fit_decay_rate(values, nodes, n - m, n)


def price_change_kurtosis(jump_log):
    """Pearson kurtosis of logged price changes (zero-size repeat events are dropped)."""
    from scipy import stats

    size = np.asarray(jump_log["size"], dtype=float)
    size = size[size != 0.0]
    if size.size < 4:
        return math.nan
    return float(stats.kurtosis(size, fisher=False))


def _trapezoid(y, dt):
    return float(dt * (y.sum() - 0.5 * (y[0] + y[-1])))


def irf_stats(path, grid: TimeGrid, hump_margin=HUMP_MARGIN, tail_rate=None) -> IRFStats:
    """Area, half-life, peak time and hump flag of an output path.

    Statistics are sign-aware: a negative response is summarized through its
    magnitude.  A tail that does not decay adds nothing to the area (the
    returned area is then the truncated one, and ``tail_rate`` is reported).
    """
    y = np.asarray(path, dtype=float)
    nodes = grid.nodes
    impact = float(y[0])
    if not np.any(y):
        return IRFStats(0.0, 0.0, 0.0, False, 0.0, tail_rate)
    sign = 1.0 if impact > 0 or (impact == 0 and y[np.argmax(np.abs(y))] > 0) else -1.0
    z = sign * y
    if tail_rate is None:
        tail_rate = fit_tail_rate(y, nodes)
    area = _trapezoid(y, grid.dt)
    if tail_rate is not None and tail_rate > 0:
        area += y[-1] / tail_rate

    k = int(np.argmax(z))
    peak_time = float(nodes[k])
    hump = bool(k > 0 and z[k] > z[0] * (1.0 + hump_margin) and z[0] >= 0)
    if not hump:
        peak_time = 0.0

    half_life = _half_life(z, nodes, tail_rate)
    return IRFStats(float(area), half_life, peak_time, hump, impact, tail_rate)


def _half_life(z, nodes, tail_rate):
    """First time the response falls below half its impact value."""
    if z[0] <= 0:
        return 0.0
    half = 0.5 * z[0]
    below = np.nonzero(z < half)[0]
    if below.size:
        i = below[0]
        z0, z1 = z[i - 1], z[i]
        return float(nodes[i - 1] + (nodes[i] - nodes[i - 1]) * (z0 - half) / (z0 - z1))
    if tail_rate is not None and tail_rate > 0 and z[-1] > 0:
        return float(nodes[-1] + math.log(z[-1] / half) / tail_rate)
    return math.inf


def make_irf(output, grid: TimeGrid, hump_margin=HUMP_MARGIN, tail_rate=None) -> IRFResult:
    st = irf_stats(output, grid, hump_margin, tail_rate)
    return IRFResult(grid=grid, output=np.asarray(output, dtype=float), area=st.area, half_life=st.half_life,
                     peak_time=st.peak_time, hump=st.hump, tail_rate=st.tail_rate, impact=st.impact)


def compute_irf(eq, params: ModelParams, hump_margin=HUMP_MARGIN) -> IRFResult:
    """IRF of output from a converged equilibrium."""
    if eq.status != "Converged":
        raise NotConverged(f"equilibrium status is {eq.status}")
    agg = eq.agg
    rate = agg.extrapolation_rate
    return make_irf(-agg.values, agg.grid, hump_margin, tail_rate=rate if rate and rate > 0 else None)


@dataclass
class SweepRow:
    alpha: float
    status: str
    area: float = math.nan
    half_life: float = math.nan
    peak_time: float = math.nan
    hump: Optional[bool] = None
    message: str = ""


@dataclass
class SweepTable:
    rows: List[SweepRow]
    convexity_report: dict = field(default_factory=dict)

    @property
    def alphas(self):
        return np.array([r.alpha for r in self.rows])

    @property
    def areas(self):
        return np.array([r.area for r in self.rows])


def convexity_report(rows: List[SweepRow], rtol=1e-9):
    """Second differences of area over the uniformly spaced converged prefix."""
    conv = []
    for r in rows:
        if r.status != "Converged":
            break
        conv.append(r)
    if len(conv) >= 3:
        a = np.array([r.alpha for r in conv])
        steps = np.diff(a)
        # keep the longest prefix with uniform spacing
        k = 1
        while k < steps.size and abs(steps[k] - steps[0]) <= rtol * max(1.0, abs(steps[0])) + 1e-12:
            k += 1
        conv = conv[:k + 1]
    if len(conv) < 3:
        return {"alphas": [r.alpha for r in conv], "second_differences": [], "signs": "", "convex": None}
    areas = np.array([r.area for r in conv])
    d2 = np.diff(areas, 2)
    signs = "".join("+" if v > 0 else "-" if v < 0 else "0" for v in d2)
    return {"alphas": [r.alpha for r in conv], "second_differences": d2.tolist(), "signs": signs,
            "convex": bool(np.all(d2 > 0))}


def sweep_alpha(params: ModelParams, model_kind, alphas, **solve_kwargs) -> SweepTable:
    """One equilibrium solve and IRF per alpha; failures are recorded per row."""
    from .mean_field import solve_equilibrium

    alphas = [float(a) for a in alphas]
    if any(b < a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted")
    if not all(math.isfinite(a) for a in alphas):
        raise ValueError("alphas must be finite")
    rows = []
    for a in alphas:
        try:
            p = params.replace(alpha=a)
            eq = solve_equilibrium(p, model_kind, **solve_kwargs)
            if eq.status == "Converged":
                irf = compute_irf(eq, p)
                rows.append(SweepRow(a, eq.status, irf.area, irf.half_life, irf.peak_time, irf.hump))
            else:
                rows.append(SweepRow(a, eq.status, message=eq.reason))
        except ModelError as err:
            rows.append(SweepRow(a, "Error", message=f"{type(err).__name__}: {err}"))
    return SweepTable(rows, convexity_report(rows))
