"""Stationary menu-cost band: grid convergence, psi^(1/4) scaling, tent density, edge continuity in the target."""
import argparse

import numpy as np

from stickymfg import solve_stationary_vi, stationary_density, validate_params
from stickymfg.menu_cost import adjustment_frequency


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--psi", type=float, default=0.01)
    ap.add_argument("--rho", type=float, default=0.02)
    args = ap.parse_args()
    p = validate_params(dict(sigma=0.1, theta=0, rho=args.rho, alpha=0, b_curv=20, psi=args.psi, delta=0.005,
                             horizon=10))
    est = (6 * p.sigma**2 * p.psi / p.b_curv) ** 0.25
    print(f"small-discounting estimate (6 sigma^2 psi / B)^(1/4) = {est:.6f}")
    print(f"{'points':>7} {'half-width':>11} {'psi-doubling / 2^(1/4)':>23} {'tent error':>11} {'frequency':>10}")
    for n in (401, 801, 1601, 3201):
        vg, band = solve_stationary_vi(p, x_points=n)
        _, band2 = solve_stationary_vi(p.replace(psi=2 * p.psi), x_points=n)
        xbar = float(band.half_width)
        x = vg.sgrid.x
        tent = np.maximum(1 - np.abs(x) / xbar, 0) / xbar
        err = np.max(np.abs(stationary_density(band, p, vg.sgrid).density - tent)) / tent.max()
        print(f"{n:7d} {xbar:11.6f} {float(band2.half_width) / xbar / 2**0.25:23.6f} {err:11.2e} "
              f"{adjustment_frequency(band, p):10.4f}")
    # edge position relative to a target moved across two grid cells: continuity and grid-phase ripple
    h = solve_stationary_vi(p)[0].sgrid.spacing
    rel = np.array([[float(b.lower) - t, float(b.upper) - t]
                    for t in np.linspace(0, 2 * h, 41) for b in [solve_stationary_vi(p, target=t)[1]]])
    print(f"edge ripple over two cells (801 points): lower {np.ptp(rel[:, 0]):.2e}, upper {np.ptp(rel[:, 1]):.2e}; "
          f"largest step {np.max(np.abs(np.diff(rel, axis=0))):.2e}")


if __name__ == "__main__":
    main()
