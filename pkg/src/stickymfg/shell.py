"""Config-driven command line: parse a ``key = value`` document, run one command, write CSVs.

Exit status: 0 success, 2 model-level breakdown (reported, not a crash), 1 error.
Floats are written as the shortest decimal that round-trips (``repr``), with
``\\n`` line endings, so outputs are byte-stable across runs and platforms.
"""
from dataclasses import dataclass, field
import math
import os
import sys
from typing import Optional, Tuple

import numpy as np

from .errors import ModelError, ParseError, UnknownKey, OutOfRange
from .params import STRUCTURAL_KEYS, ModelParams, build_state_grid, build_time_grid, default_halfwidth, validate_params

COMMANDS = ("simulate", "policy-calvo", "policy-menucost", "pathintegral-check", "equilibrium", "irf", "sweep",
            "critical-alpha")
NUMERIC_KEYS = ("n_slices", "x_points", "x_halfwidth", "n_paths", "seed", "damping", "tol", "max_iter")
OTHER_KEYS = ("command", "aggregation", "model", "output_dir")
ALL_KEYS = STRUCTURAL_KEYS + NUMERIC_KEYS + OTHER_KEYS
MODEL_ALIASES = {"calvo": "calvo", "menu_cost": "menu_cost", "menucost": "menu_cost", "menu-cost": "menu_cost"}
PATHS_CSV_LIMIT = 1000
CRITICAL_PROBES = 6


@dataclass(frozen=True)
class Numerics:
    n_slices: int = 400
    x_points: int = 801
    x_halfwidth: Optional[float] = None
    n_paths: int = 100000
    seed: int = 1
    damping: float = 0.5
    tol: float = 1e-6
    max_iter: int = 500
    aggregation_kind: str = "forward_pde"
    model_kind: str = "calvo"


@dataclass(frozen=True)
class RunSpec:
    command: str
    params: ModelParams
    numerics: Numerics = field(default_factory=Numerics)
    output_dir: str = "output"
    alphas: Tuple[float, ...] = ()  # every alpha given (a list for sweep, a range for critical-alpha)


def _number(text, line, key):
    try:
        v = float(text)
    except ValueError:
        raise ParseError(line, f"{key}: {text!r} is not a number") from None
    return v


def _integer(text, line, key):
    v = _number(text, line, key)
    if not math.isfinite(v) or v != int(v):
        raise ParseError(line, f"{key}: {text!r} is not an integer")
    return int(v)


def parse_config(text: str) -> RunSpec:
    """Parse a configuration document into a validated RunSpec."""
    raw = {}
    lines = {}
    for no, full in enumerate(text.splitlines(), start=1):
        body = full.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ParseError(no, f"expected 'key = value', got {body!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key:
            raise ParseError(no, "empty key")
        if key not in ALL_KEYS:
            raise UnknownKey(key)
        if key in raw:
            raise ParseError(no, f"duplicate key {key!r}")
        if not value:
            raise ParseError(no, f"{key}: empty value")
        raw[key] = value
        lines[key] = no

    if "command" not in raw:
        raise ParseError(0, "missing 'command'")
    command = raw["command"]
    if command not in COMMANDS:
        raise ParseError(lines["command"], f"unknown command {command!r}; expected one of {', '.join(COMMANDS)}")

    structural = {}
    alphas = ()
    for key in STRUCTURAL_KEYS:
        if key not in raw:
            continue
        if key == "alpha":
            parts = [p.strip() for p in raw[key].split(",")]
            alphas = tuple(_number(p, lines[key], key) for p in parts)
            if len(alphas) > 1 and command not in ("sweep", "critical-alpha"):
                raise ParseError(lines[key], f"alpha lists are only accepted by sweep and critical-alpha")
            if command == "critical-alpha" and len(alphas) != 2:
                raise ParseError(lines[key], "critical-alpha needs alpha = lo, hi")
            structural[key] = alphas[0]
        else:
            structural[key] = _number(raw[key], lines[key], key)
    params = validate_params(structural)

    kw = {}
    for key in ("n_slices", "x_points", "n_paths", "seed", "max_iter"):
        if key in raw:
            kw[key] = _integer(raw[key], lines[key], key)
    for key in ("x_halfwidth", "damping", "tol"):
        if key in raw:
            kw[key] = _number(raw[key], lines[key], key)
    if "aggregation" in raw:
        kw["aggregation_kind"] = raw["aggregation"]
    if "model" in raw:
        if raw["model"] not in MODEL_ALIASES:
            raise ParseError(lines["model"], f"unknown model {raw['model']!r}; expected calvo or menu_cost")
        kw["model_kind"] = MODEL_ALIASES[raw["model"]]
    numerics = Numerics(**kw)
    _validate_numerics(numerics)
    return RunSpec(command, params, numerics, raw.get("output_dir", "output"), alphas)


def _validate_numerics(n: Numerics):
    checks = [
        ("n_slices", n.n_slices, n.n_slices >= 1, "n_slices >= 1"),
        ("x_points", n.x_points, n.x_points >= 3 and n.x_points % 2 == 1, "odd x_points >= 3"),
        ("n_paths", n.n_paths, n.n_paths >= 1, "n_paths >= 1"),
        ("seed", n.seed, n.seed >= 0, "seed >= 0"),
        ("damping", n.damping, 0 < n.damping <= 1, "0 < damping <= 1"),
        ("tol", n.tol, n.tol > 0 and math.isfinite(n.tol), "tol > 0"),
        ("max_iter", n.max_iter, n.max_iter >= 1, "max_iter >= 1"),
        ("aggregation", n.aggregation_kind, n.aggregation_kind in ("forward_pde", "monte_carlo"),
         "forward_pde or monte_carlo"),
    ]
    if n.x_halfwidth is not None:
        checks.append(("x_halfwidth", n.x_halfwidth, n.x_halfwidth > 0 and math.isfinite(n.x_halfwidth),
                       "x_halfwidth > 0"))
    for name, value, ok, bound in checks:
        if not ok:
            raise OutOfRange(name, value, bound)


# ---------------------------------------------------------------- CSV


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path, header, columns):
    """Write equal-length columns; floats use the shortest round-trip decimal."""
    rows = zip(*columns)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


# ---------------------------------------------------------------- commands


def _solve_kwargs(spec: RunSpec):
    n = spec.numerics
    return dict(aggregation_kind=n.aggregation_kind, damping=n.damping, tol=n.tol, max_iter=n.max_iter,
                seed=n.seed, n_slices=n.n_slices, x_points=n.x_points, x_halfwidth=n.x_halfwidth,
                n_paths=n.n_paths)


def _sgrid(spec: RunSpec):
    n = spec.numerics
    return build_state_grid(n.x_halfwidth or default_halfwidth(spec.params, n.model_kind), n.x_points)


def _cmd_simulate(spec, out):
    from .calvo import calvo_stationary_density
    from .density import inverse_cdf_sampler
    from .jump_diffusion import BLOCK_SIZE, ensemble_stats, simulate_markup_paths
    from .menu_cost import solve_stationary_vi, stationary_density

    p, n = spec.params, spec.numerics
    grid = build_time_grid(p.horizon, n.n_slices)
    keep = min(n.n_paths, PATHS_CSV_LIMIT)
    if n.model_kind == "calvo":
        sampler = inverse_cdf_sampler(calvo_stationary_density(p, _sgrid(spec), grid.dt)) if p.theta > 0 else 0.0
        run = lambda count, keep_paths: simulate_markup_paths(p, grid, lambda s, x, a: 0.0, count, n.seed,
                                                             x0=sampler, keep_paths=keep_paths)
    else:
        _, band = solve_stationary_vi(p, 0.0, _sgrid(spec))
        sampler = inverse_cdf_sampler(stationary_density(band, p, _sgrid(spec)))
        run = lambda count, keep_paths: simulate_markup_paths(p.replace(theta=0.0), grid, None, count, n.seed,
                                                             x0=sampler, band=band, keep_paths=keep_paths)
    ens = run(n.n_paths, n.n_paths <= PATHS_CSV_LIMIT)
    mean, var = ensemble_stats(ens)
    n_adjust = ens.jump_log["time"].size
    if ens.paths is None:
        # whole blocks reproduce the full run's first paths exactly
        ens = run(min(n.n_paths, -(-keep // BLOCK_SIZE) * BLOCK_SIZE), True)
    paths = ens.paths[:keep]
    t = np.tile(grid.nodes, keep)
    pid = np.repeat(np.arange(keep), grid.n_nodes)
    write_csv(os.path.join(out, "paths.csv"), ["t", "path_id", "x"], [t, pid, paths.ravel()])
    print(f"simulate: {n.n_paths} paths, mean(T)={mean[-1]:.6g}, var(T)={var[-1]:.6g}, "
          f"adjustments={n_adjust}")
    return 0


def _cmd_policy_calvo(spec, out):
    from .calvo import AggregatePath, calvo_stationary_density, decay_rate, reset_schedule

    p, n = spec.params, spec.numerics
    grid = build_time_grid(p.horizon, n.n_slices)
    lam = decay_rate(p)
    agg = AggregatePath(grid, -p.delta * np.exp(-lam * grid.nodes), lam)
    xs = reset_schedule(agg, p)
    write_csv(os.path.join(out, "x_star.csv"), ["t", "x_star"], [grid.nodes, xs.values])
    sg = _sgrid(spec)
    cs = calvo_stationary_density(p, sg, grid.dt)
    write_csv(os.path.join(out, "density.csv"), ["x", "f"], [sg.x, cs.density])
    print(f"policy-calvo: decay rate {lam:.6g}, x_star(0)={xs.values[0]:.6g}")
    return 0


def _cmd_policy_menucost(spec, out):
    from .menu_cost import adjustment_frequency, solve_stationary_vi, stationary_density

    p = spec.params
    sg = _sgrid(spec)
    vg, band = solve_stationary_vi(p, 0.0, sg)
    write_csv(os.path.join(out, "value.csv"), ["x", "v"], [sg.x, vg.values])
    write_csv(os.path.join(out, "band.csv"), ["lower", "upper", "reset"],
              [[float(band.lower)], [float(band.upper)], [float(band.reset)]])
    cs = stationary_density(band, p, sg)
    write_csv(os.path.join(out, "density.csv"), ["x", "f"], [sg.x, cs.density])
    half = 0.5 * float(band.upper - band.lower)
    print(f"policy-menucost: band half-width {half:.6g}, reset {float(band.reset):.6g}, "
          f"adjustment frequency {adjustment_frequency(band, p):.6g}")
    return 0


def _cmd_pathintegral(spec, out):
    from .action import build_lattice, lq_control_problem, lq_reference, solve_foc

    p, n = spec.params, spec.numerics
    if p.sigma <= 0:
        raise OutOfRange("sigma", p.sigma, "sigma > 0 for the path-integral check")
    # the pricing loss as state cost, unit control cost, shocked initial gap
    problem, r_eff = lq_control_problem(p.b_curv, 1.0, 0.0, p.sigma, p.horizon)
    lat = build_lattice(problem, n.n_slices, n.x_halfwidth or 1.0, n.x_points, check=False)
    init = -p.delta
    res = solve_foc(problem, lat, init)
    ref = lq_reference(p.b_curv, r_eff, 0.0, p.horizon, init, n_out=n.n_slices)
    err_x = float(np.max(np.abs(res.x - ref.x)))
    u = np.append(res.u, np.nan)
    write_csv(os.path.join(out, "foc_path.csv"), ["t", "x", "u"], [lat.tgrid.nodes, res.x, u])
    print(f"pathintegral-check: action {res.action:.6g}, max path error vs Riccati {err_x:.3g}, "
          f"iterations {res.iterations}")
    return 0


def _write_equilibrium(eq, out):
    write_csv(os.path.join(out, "aggregate.csv"), ["t", "X"], [eq.agg.grid.nodes, eq.agg.values])
    write_csv(os.path.join(out, "residuals.csv"), ["iter", "residual"],
              [list(range(1, len(eq.residual_history) + 1)), eq.residual_history])


def _cmd_equilibrium(spec, out):
    from .mean_field import solve_equilibrium

    eq = solve_equilibrium(spec.params, spec.numerics.model_kind, **_solve_kwargs(spec))
    _write_equilibrium(eq, out)
    tail = f" ({eq.reason})" if eq.reason else ""
    print(f"equilibrium: {eq.status}{tail}, iterations {eq.iterations}, "
          f"final residual {eq.residual_history[-1]:.3g}")
    return 0 if eq.converged else 2


def _cmd_irf(spec, out):
    from .mean_field import solve_equilibrium
    from .response import compute_irf

    eq = solve_equilibrium(spec.params, spec.numerics.model_kind, **_solve_kwargs(spec))
    _write_equilibrium(eq, out)
    if not eq.converged:
        print(f"irf: {eq.status} ({eq.reason}), no IRF")
        return 2
    irf = compute_irf(eq, spec.params)
    write_csv(os.path.join(out, "irf.csv"), ["t", "Y"], [irf.grid.nodes, irf.output])
    print(f"irf: Converged, area {irf.area!r}, half_life {irf.half_life:.6g}, peak_time {irf.peak_time:.6g}, "
          f"hump {str(irf.hump).lower()}")
    return 0


def _cmd_sweep(spec, out):
    from .response import sweep_alpha

    alphas = sorted(spec.alphas or (spec.params.alpha,))
    table = sweep_alpha(spec.params, spec.numerics.model_kind, alphas, **_solve_kwargs(spec))
    rows = table.rows
    write_csv(os.path.join(out, "sweep.csv"), ["alpha", "status", "area", "half_life", "peak_time", "hump"],
              [[r.alpha for r in rows], [r.status for r in rows], [r.area for r in rows],
               [r.half_life for r in rows], [r.peak_time for r in rows], [r.hump for r in rows]])
    conv = table.convexity_report
    n_ok = sum(r.status == "Converged" for r in rows)
    print(f"sweep: {n_ok}/{len(rows)} converged, second-difference signs '{conv['signs']}'")
    return 0


def _cmd_critical(spec, out):
    from .mean_field import find_critical_alpha

    lo, hi = spec.alphas if len(spec.alphas) == 2 else (spec.params.alpha, spec.params.alpha)
    rep = find_critical_alpha(spec.params, spec.numerics.model_kind, (lo, hi), CRITICAL_PROBES,
                              **_solve_kwargs(spec))
    write_csv(os.path.join(out, "critical.csv"), ["alpha", "status", "area"],
              [[a for a, _, _ in rep.probes], [s for _, s, _ in rep.probes], [v for _, _, v in rep.probes]])
    print(f"critical-alpha: bracket [{rep.alpha_low!r}, {rep.alpha_high!r}], width {rep.width:.3g}")
    return 0


DISPATCH = {
    "simulate": _cmd_simulate,
    "policy-calvo": _cmd_policy_calvo,
    "policy-menucost": _cmd_policy_menucost,
    "pathintegral-check": _cmd_pathintegral,
    "equilibrium": _cmd_equilibrium,
    "irf": _cmd_irf,
    "sweep": _cmd_sweep,
    "critical-alpha": _cmd_critical,
}


def run_command(spec: RunSpec) -> int:
    """Run one command; returns the exit status (0 ok, 2 breakdown, 1 error)."""
    out = spec.output_dir
    try:
        os.makedirs(out, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(13, "Permission denied", out)
    except OSError as err:
        print(f"shell: cannot write to output directory {out!r}: {err.strerror or err}", file=sys.stderr)
        return 1
    try:
        return DISPATCH[spec.command](spec, out)
    except ModelError as err:
        print(f"{err.module}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"shell: I/O error on {err.filename or out!r}: {err.strerror or err}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(prog="stickymfg", description="Run one sticky-price mean-field command.")
    parser.add_argument("config", help="configuration file with 'key = value' lines")
    parser.add_argument("--output-dir", help="override output_dir from the config")
    args = parser.parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as err:
        print(f"shell: cannot read {args.config!r}: {err.strerror or err}", file=sys.stderr)
        return 1
    try:
        spec = parse_config(text)
    except ModelError as err:
        print(f"{err.module}: {type(err).__name__}: {err}", file=sys.stderr)
        return 1
    if args.output_dir:
        spec = RunSpec(spec.command, spec.params, spec.numerics, args.output_dir, spec.alphas)
    return run_command(spec)
