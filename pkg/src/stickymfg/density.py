"""Cross-sectional densities on a uniform state grid.

Densities are nodal values normalized by the trapezoidal rule.  Point masses
(reinjection at a reset value) are deposited on the two neighbouring nodes
with linear weights, which preserves both mass and first moment.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import DegenerateGrid
from .params import StateGrid


@dataclass
class CrossSection:
    sgrid: StateGrid
    density: np.ndarray

    @property
    def mass(self):
        return trapezoid_mass(self.density, self.sgrid.spacing)

    @property
    def mean(self):
        return trapezoid_mass(self.sgrid.x * self.density, self.sgrid.spacing)


def trapezoid_mass(f, h):
    return h * (f.sum(axis=-1) - 0.5 * (f[..., 0] + f[..., -1]))


def normalize(f, h):
    return f / trapezoid_mass(f, h)


def hat(sgrid: StateGrid, point, mass=1.0):
    """Density of a point mass at ``point`` spread on its two neighbouring nodes."""
    h = sgrid.spacing
    pos = (point - sgrid.x_min) / h
    if pos < 1 or pos > sgrid.n_points - 2:
        raise DegenerateGrid(f"reinjection point {point:.6g} at or outside the state-grid edge")
    j = int(np.floor(pos))
    t = pos - j
    out = np.zeros(sgrid.n_points)
    out[j] = (1.0 - t) * mass / h
    out[j + 1] += t * mass / h
    return out


def neumann_laplacian_banded(n, h, coef):
    """(3, n) banded form of ``coef * D2`` with reflecting (ghost-node) ends.

    The discrete operator conserves trapezoidal mass exactly.
    """
    ab = np.zeros((3, n))
    c = coef / h**2
    ab[0, 1:] = c
    ab[1, :] = -2.0 * c
    ab[2, :-1] = c
    ab[0, 1] = 2.0 * c
    ab[2, -2] = 2.0 * c
    return ab


def banded_matvec(ab, v):
    out = ab[1] * v
    out[:-1] += ab[0, 1:] * v[1:]
    out[1:] += ab[2, :-1] * v[:-1]
    return out


def implicit_matrix(lap_ab, dt, diag_extra=1.0):
    """Banded form of ``diag_extra * I - dt * lap``."""
    ab = -dt * lap_ab
    ab[1] += diag_extra
    return ab


def dirichlet_laplacian_banded(x, lower, upper, coef):
    """Laplacian on the nodes strictly inside (lower, upper) with zero edge values.

    Uses the Shortley-Weller stencil next to the (generally off-grid) edges, so
    piecewise-linear functions vanishing at the edges are differentiated
    exactly.  Returns (index array of interior nodes, banded matrix).
    """
    h = x[1] - x[0]
    idx = np.nonzero((x > lower) & (x < upper))[0]
    m = idx.size
    if m < 3:
        raise DegenerateGrid(f"band ({lower:.4g}, {upper:.4g}) resolves fewer than 3 nodes")
    if idx[0] == 0 or idx[-1] == x.size - 1:
        raise DegenerateGrid("inaction band reaches the state-grid boundary")
    dl = x[idx[0]] - lower
    dr = upper - x[idx[-1]]
    # tiny edge distances make the stencil stiff but remain well posed
    dl = max(dl, 1e-9 * h)
    dr = max(dr, 1e-9 * h)
    ab = np.zeros((3, m))
    ab[0, 1:] = 1.0 / h**2
    ab[1, :] = -2.0 / h**2
    ab[2, :-1] = 1.0 / h**2
    ab[1, 0] = -2.0 / (dl * h)
    ab[0, 1] = 2.0 / (h * (dl + h))
    ab[1, -1] = -2.0 / (dr * h)
    ab[2, -2] = 2.0 / (h * (dr + h))
    return idx, coef * ab


def shift_density(cs: CrossSection, shift):
    """Translate a density by ``shift`` (x -> x + shift) and renormalize."""
    x = cs.sgrid.x
    f = np.interp(x - shift, x, cs.density, left=0.0, right=0.0)
    return CrossSection(cs.sgrid, normalize(f, cs.sgrid.spacing))


def inverse_cdf_sampler(cs: CrossSection):
    """Sampler ``(rng, n) -> draws`` from the density, linear CDF between nodes."""
    x = cs.sgrid.x
    h = cs.sgrid.spacing
    f = cs.density
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))])
    cdf /= cdf[-1]
    # drop flat stretches so the interpolation table is strictly increasing
    lo = np.searchsorted(cdf, 0.0, side="right") - 1
    hi = np.searchsorted(cdf, 1.0, side="left")
    xs, cs_ = x[lo:hi + 1], cdf[lo:hi + 1]
    keep = np.concatenate([[True], np.diff(cs_) > 0])
    xs, cs_ = xs[keep], cs_[keep]

    def sample(rng, n):
        return np.interp(rng.uniform(size=n), cs_, xs)

    return sample


def solve_tridiag(ab, rhs):
    return solve_banded((1, 1), ab, rhs)
