"""Path-integral solvers against the Riccati oracle on a linear-quadratic problem, with refinement ratios."""
import argparse
import math
import time

import numpy as np

from stickymfg import build_lattice, lq_control_problem, lq_reference, solve_foc, solve_kernel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--q", type=float, default=0.25)
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--qT", type=float, default=0.25)
    ap.add_argument("--sigma", type=float, default=0.5)
    args = ap.parse_args()
    q, r, qT, sigma = args.q, args.r, args.qT, args.sigma

    prob, r_eff = lq_control_problem(q, r, qT, sigma, 1.0)
    prev = None
    for n in (100, 200, 400, 800):
        lat = build_lattice(prob, n, 1.0, 101, check=False)
        res = solve_foc(prob, lat, 0.1)
        err = np.max(np.abs(res.x - lq_reference(q, r_eff, qT, 1.0, 0.1, n_out=n).x))
        ratio = f"{prev / err:.3f}" if prev else "-"
        print(f"FOC    n={n:4d} path error {err:.3e} ratio {ratio} newton={res.iterations} "
              f"min eig {res.min_eigenvalue:.3g}")
        prev = err

    horizon, hw = 0.5, 5.0
    kprob, _ = lq_control_problem(q, r, qT, sigma, horizon)
    pts = int(2 * hw / (0.25 * math.sqrt(horizon / 400))) + 2
    pts += 1 - pts % 2
    prev = None
    for n in (100, 200, 400):
        t = time.perf_counter()
        lat = build_lattice(kprob, n, hw, pts)
        ks = solve_kernel(kprob, lat, 1.0)
        ref = lq_reference(q, r_eff, qT, horizon, 0.1, n_out=n, noise_var=1.0 / (2 * r_eff))
        x = lat.sgrid.x
        c = np.abs(x) <= hw / 2
        err = np.max(np.abs(ks.values[0] - (ref.p[0] * x**2 + ref.c[0]))[c])
        ratio = f"{prev / err:.3f}" if prev else "-"
        print(f"kernel n={n:4d} value error {err:.3e} ratio {ratio} ({pts} states, {time.perf_counter() - t:.1f}s)")
        prev = err


if __name__ == "__main__":
    main()
