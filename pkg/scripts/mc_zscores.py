"""Calibrate the Monte-Carlo vs forward-PDE comparison: z-scores of the mean path at grid deciles across seeds.

With an unbiased simulator the z-scores are ~N(0, 1), so "all 11 deciles within 3 SE" fails for a few
percent of seeds by chance alone.
"""
import argparse

import numpy as np

from stickymfg import (build_state_grid, build_time_grid, ensemble_stats, evolve_density, simulate_markup_paths,
                       solve_stationary_vi, stationary_density, validate_params)
from stickymfg.calvo import calvo_stationary_density, evolve_calvo_density, reset_schedule, AggregatePath
from stickymfg.density import inverse_cdf_sampler, shift_density


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", choices=["calvo", "menu_cost"], default="menu_cost")
    ap.add_argument("--seeds", type=int, default=30)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--horizon", type=float, default=5.0)
    ap.add_argument("--slices", type=int, default=200)
    args = ap.parse_args()

    grid = build_time_grid(args.horizon, args.slices)
    if args.model == "menu_cost":
        p = validate_params(dict(sigma=0.1, theta=0, rho=0.02, alpha=0.5, b_curv=20, psi=0.01, delta=0.005,
                                 horizon=args.horizon))
        sg = build_state_grid(0.3, 801)
        _, band = solve_stationary_vi(p, sgrid=sg)
        f0 = shift_density(stationary_density(band, p, sg), -p.delta)
        pde = np.array([c.mean for c in evolve_density(f0, band, p, grid)])
        sim = dict(reset_rule=None, band=band)
    else:
        p = validate_params(dict(sigma=0.1, theta=1, rho=0.0, alpha=0.0, b_curv=20, psi=0.01, delta=0.01,
                                 horizon=args.horizon))
        sg = build_state_grid(2.0, 801)
        f0 = shift_density(calvo_stationary_density(p, sg, grid.dt), -p.delta)
        agg = AggregatePath(grid, np.zeros(grid.n_nodes), 1.0)
        resets = reset_schedule(agg, p)
        _, pde = evolve_calvo_density(f0, resets, p, grid)
        sim = dict(reset_rule=lambda s, x, a: 0.0, band=None)
    sampler = inverse_cdf_sampler(f0)
    idx = np.linspace(0, grid.n_slices, 11).round().astype(int)
    zs = []
    for seed in range(1, args.seeds + 1):
        ens = simulate_markup_paths(p, grid, sim["reset_rule"], args.paths, seed, x0=sampler, band=sim["band"],
                                    keep_paths=False)
        mean, var = ensemble_stats(ens)
        zs.append(((mean - pde) / np.sqrt(var / args.paths))[idx])
    zs = np.array(zs)
    print("mean z per decile", np.round(zs.mean(0), 2))
    print("sd z per decile  ", np.round(zs.std(0), 2))
    worst = np.abs(zs).max(1)
    print("max |z| per seed ", np.round(worst, 1))
    print(f"seeds with some |z| > 3: {int(np.sum(worst > 3))}/{args.seeds}")


if __name__ == "__main__":
    main()
