"""Calvo equilibria across alpha: decay rates, IRF areas against 1/sqrt(1 - alpha), convexity, critical alpha."""
import argparse
import math
import time

from stickymfg import compute_irf, find_critical_alpha, solve_equilibrium, validate_params
from stickymfg.response import SweepRow, convexity_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--alphas", type=float, nargs="+", default=[-1, 0, 0.15, 0.3, 0.45, 0.6, 0.75, 0.9, 0.99])
    ap.add_argument("--critical", action="store_true", help="also bisect for the critical alpha on [0.5, 1.5]")
    args = ap.parse_args()
    base = validate_params(dict(sigma=0.1, theta=1, rho=0, alpha=0, b_curv=20, psi=0.01, delta=0.01, horizon=10))
    print(f"{'alpha':>7} {'status':>10} {'iters':>6} {'rate':>9} {'theory':>9} {'area':>10} "
          f"{'area*sqrt(1-a)':>14} {'sec':>6}")
    rows = []
    for a in args.alphas:
        p = base.replace(alpha=a)
        t = time.perf_counter()
        eq = solve_equilibrium(p, "calvo", max_iter=5000)
        sec = time.perf_counter() - t
        lam = p.theta * math.sqrt(1 - a) if a < 1 else math.nan
        area = compute_irf(eq, p).area if eq.converged else math.nan
        rows.append(SweepRow(a, eq.status, area))
        print(f"{a:7.3g} {eq.status:>10} {eq.iterations:6d} {eq.agg.extrapolation_rate or math.nan:9.5f} "
              f"{lam:9.5f} {area:10.6f} {area * math.sqrt(max(1 - a, 0)):14.6f} {sec:6.1f}")
    print("convexity over the uniform prefix:", convexity_report(rows))
    if args.critical:
        t = time.perf_counter()
        rep = find_critical_alpha(base, "calvo", (0.5, 1.5), 6, max_iter=5000)
        print(f"critical alpha in [{rep.alpha_low:.5f}, {rep.alpha_high:.5f}] ({time.perf_counter() - t:.0f}s)")
        for a, status, area in rep.probes:
            print(f"  probe {a:.5f} {status} {area:.6g}")


if __name__ == "__main__":
    main()
