"""Markup-gap jump-diffusion simulation.

Between adjustments a firm's gap follows driftless Brownian motion with
volatility ``sigma``; at Poisson(theta) adjustment instants it jumps, either to
the value returned by a reset rule or by an i.i.d. normal test jump.  A band
policy (lower, upper, reset) adds state-dependent adjustment: a path is reset
at the first node where it has left the band or, by the Brownian-bridge test,
crossed an edge between nodes.

Random numbers come from one substream per block of ``BLOCK_SIZE`` paths,
keyed by ``(seed, block index)``; results do not depend on how blocks are
grouped for time stepping.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import EmptyEnsemble, NonFiniteState, OutOfRange
from .params import ModelParams, TimeGrid

BLOCK_SIZE = 1024
GROUP_BLOCKS = 16  # blocks time-stepped together; does not affect results


def block_rng(seed, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


@dataclass(frozen=True)
class AdjustmentTimes:
    events: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.events, dtype=float)
        if ev.size > 1 and np.any(np.diff(ev) <= 0):
            raise ValueError("adjustment times must be strictly increasing")

    def __len__(self):
        return len(self.events)


def sample_adjustment_times(theta, horizon, seed) -> AdjustmentTimes:
    """Event times of a rate-theta Poisson process on [0, horizon]."""
    if theta < 0:
        raise OutOfRange("theta", theta, "theta >= 0")
    if not horizon > 0:
        raise OutOfRange("horizon", horizon, "horizon > 0")
    if theta == 0:
        return AdjustmentTimes(np.empty(0))
    rng = np.random.default_rng(seed)
    chunk = max(16, int(2 * theta * horizon) + 16)
    times = []
    t = 0.0
    while True:
        arrivals = t + np.cumsum(rng.exponential(1.0 / theta, size=chunk))
        inside = arrivals[arrivals <= horizon]
        times.append(inside)
        if inside.size < chunk:
            break
        t = arrivals[-1]
    return AdjustmentTimes(np.concatenate(times))


@dataclass(frozen=True)
class SdeSpec:
    drift: Callable  # (s, u, x) -> mu
    vol: Callable  # (s, u, x) -> sigma >= 0
    control: Callable = lambda s, x: 0.0  # (s, x) -> u


def step_sde(spec: SdeSpec, s, x, dt, noise):
    """One Euler-Maruyama step of dX = mu ds + sigma dW."""
    if not dt > 0:
        raise OutOfRange("dt", dt, "dt > 0")
    u = spec.control(s, x)
    out = x + spec.drift(s, u, x) * dt + spec.vol(s, u, x) * np.sqrt(dt) * noise
    if not np.all(np.isfinite(out)):
        raise NonFiniteState(f"non-finite state at s={s}")
    return out


def simulate_sde(spec: SdeSpec, grid: TimeGrid, x0, n_paths, seed):
    """Euler-Maruyama paths of a controlled SDE, shape (n_paths, n_nodes)."""
    rng = np.random.default_rng(seed)
    out = np.empty((n_paths, grid.n_nodes))
    out[:, 0] = x0
    for k in range(grid.n_slices):
        out[:, k + 1] = step_sde(spec, grid.nodes[k], out[:, k], grid.dt, rng.standard_normal(n_paths))
    return out


@dataclass
class PathEnsemble:
    grid: TimeGrid
    paths: Optional[np.ndarray]  # (n_paths, n_nodes) or None when only moments were kept
    jump_log: dict  # arrays path_id, time, size
    diffusion_total: Optional[np.ndarray] = None
    n_paths: int = 0
    moments: Optional[tuple] = field(default=None, repr=False)  # (mean, M2) per node


def _as_node_array(v, n_nodes):
    return np.broadcast_to(np.asarray(v, dtype=float), (n_nodes,))


def _initial_values(x0, rng, n):
    if callable(x0):
        return np.asarray(x0(rng, n), dtype=float)
    return np.broadcast_to(np.asarray(x0, dtype=float), (n,)).astype(float)


def _draw_block(params, grid, rng, n, x0, jump_std, has_rule, has_band):
    """All random inputs of one block, in a fixed draw order."""
    ns = grid.n_slices
    dt = grid.dt
    x = _initial_values(x0, rng, n).copy()
    if params.theta > 0:
        counts = rng.poisson(params.theta * grid.horizon, size=n)
        total = int(counts.sum())
        ev_path = np.repeat(np.arange(n), counts)
        ev_time = rng.uniform(0.0, grid.horizon, size=total)
        order = np.lexsort((ev_time, ev_path))
        ev_path, ev_time = ev_path[order], ev_time[order]
        ev_jump = np.zeros(total) if has_rule else rng.normal(0.0, jump_std, size=total)
    else:
        ev_path = np.empty(0, int)
        ev_time = np.empty(0)
        ev_jump = np.empty(0)
    ev_node = np.clip(np.ceil(ev_time / dt - 1e-12).astype(int), 1, ns)
    noise = rng.standard_normal((n, ns))
    bridge_u = rng.uniform(size=(n, ns)) if has_band else None
    return x, ev_path, ev_time, ev_node, ev_jump, noise, bridge_u


def _simulate_group(params, grid, reset_rule, agg, draws, band, keep):
    """Time-step a group of blocks together; ``draws`` is a list of (offset, block draws)."""
    ns = grid.n_slices
    dt = grid.dt
    sq = params.sigma * np.sqrt(dt)

    x = np.concatenate([d[0] for _, d in draws])
    ev_path = np.concatenate([d[1] + off for off, d in draws])
    ev_time = np.concatenate([d[2] for _, d in draws])
    ev_node = np.concatenate([d[3] for _, d in draws])
    ev_jump = np.concatenate([d[4] for _, d in draws])
    noise = np.concatenate([d[5] for _, d in draws])
    bridge_u = np.concatenate([d[6] for _, d in draws]) if band is not None else None
    n = x.size

    if band is not None:
        lo = _as_node_array(band[0], grid.n_nodes)
        hi = _as_node_array(band[1], grid.n_nodes)
        rs = _as_node_array(band[2], grid.n_nodes)

    log_p, log_t, log_u = [], [], []
    # events grouped by node (stable, so each path's events stay in time order)
    node_order = np.argsort(ev_node, kind="stable")
    node_bounds = np.searchsorted(ev_node[node_order], np.arange(ns + 2))

    paths = np.empty((n, grid.n_nodes)) if keep else None
    xs_all = [None] * grid.n_nodes if not keep else None
    diff_total = np.zeros(n)

    def record(k, xs):
        if keep:
            paths[:, k] = xs
        else:
            xs_all[k] = xs

    if band is not None:
        out = (x < lo[0]) | (x > hi[0])
        if np.any(out):
            idx = np.nonzero(out)[0]
            log_p.append(idx)
            log_t.append(np.zeros(idx.size))
            log_u.append(rs[0] - x[idx])
            x[idx] = rs[0]
    record(0, x)

    for k in range(ns):
        inc = sq * noise[:, k]
        x_prev = x
        x = x + inc
        diff_total += inc
        s_next = grid.nodes[k + 1]
        a, b = node_bounds[k + 1], node_bounds[k + 2]
        if b > a:
            sel = node_order[a:b]
            pid = ev_path[sel]
            if reset_rule is None:
                np.add.at(x, pid, ev_jump[sel])
                log_u.append(ev_jump[sel])
            else:
                # paths are sorted, so repeated ids within a slice are adjacent
                order = np.argsort(pid, kind="stable")
                sel, pid = sel[order], pid[order]
                target = np.broadcast_to(np.asarray(reset_rule(s_next, x[pid], agg), dtype=float), pid.shape)
                # successive events in one slice: the first moves to target, the rest are zero jumps
                first = np.ones(pid.size, bool)
                first[1:] = pid[1:] != pid[:-1]
                sizes = np.where(first, target - x[pid], 0.0)
                x[pid] = target
                log_u.append(sizes)
            log_p.append(pid)
            log_t.append(ev_time[sel])
        if band is not None:
            out = (x < lo[k + 1]) | (x > hi[k + 1])
            if params.sigma > 0:
                var = params.sigma**2 * dt
                d_hi = np.maximum(hi[k] - x_prev, 0.0) * np.maximum(hi[k + 1] - x, 0.0)
                d_lo = np.maximum(x_prev - lo[k], 0.0) * np.maximum(x - lo[k + 1], 0.0)
                p_cross = np.exp(-2.0 * d_hi / var) + np.exp(-2.0 * d_lo / var)
                out |= bridge_u[:, k] < p_cross
            if np.any(out):
                idx = np.nonzero(out)[0]
                log_p.append(idx)
                log_t.append(np.full(idx.size, s_next))
                log_u.append(rs[k + 1] - x[idx])
                x[idx] = rs[k + 1]
        record(k + 1, x)
        if not np.all(np.isfinite(x)):
            raise NonFiniteState(f"non-finite markup gap at t={s_next}")

    log = {
        "path_id": np.concatenate(log_p) if log_p else np.empty(0, int),
        "time": np.concatenate(log_t) if log_t else np.empty(0),
        "size": np.concatenate(log_u) if log_u else np.empty(0),
    }
    return paths, log, diff_total, xs_all


def simulate_markup_paths(params: ModelParams, grid: TimeGrid, reset_rule=None, n_paths=1, seed=0, *,
                          x0=0.0, jump_std=0.01, band=None, agg=None, keep_paths=True) -> PathEnsemble:
    """Simulate ``n_paths`` markup-gap paths on ``grid``.

    ``x0`` is a scalar, an array of length ``n_paths``, or a sampler
    ``(rng, n) -> array``.  ``reset_rule(s, x, agg)`` gives the post-adjustment
    value at Poisson events; without it jumps are N(0, jump_std^2).  ``band`` is
    a (lower, upper, reset) triple of per-node arrays or scalars.  With
    ``keep_paths=False`` only per-node moments are stored.
    """
    if n_paths < 1:
        raise OutOfRange("n_paths", n_paths, "n_paths >= 1")
    if isinstance(x0, np.ndarray) and x0.ndim == 1 and x0.size == n_paths and n_paths > 1:
        x0_all = x0
    else:
        x0_all = None
    if band is not None and not isinstance(band, tuple):
        band = (band.lower, band.upper, band.reset)

    n_blocks = -(-n_paths // BLOCK_SIZE)
    all_paths = [] if keep_paths else None
    logs, diffs = [], []
    mean = np.zeros(grid.n_nodes)
    m2 = np.zeros(grid.n_nodes)
    count = 0
    for g0 in range(0, n_blocks, GROUP_BLOCKS):
        draws = []
        for blk in range(g0, min(g0 + GROUP_BLOCKS, n_blocks)):
            start = blk * BLOCK_SIZE
            n = min(BLOCK_SIZE, n_paths - start)
            init = x0_all[start:start + n] if x0_all is not None else x0
            d = _draw_block(params, grid, block_rng(seed, blk), n, init, jump_std, reset_rule is not None,
                            band is not None)
            draws.append((start - g0 * BLOCK_SIZE, d))
        p, log, dtot, xs_all = _simulate_group(params, grid, reset_rule, agg, draws, band, keep_paths)
        log["path_id"] = log["path_id"] + g0 * BLOCK_SIZE
        logs.append(log)
        diffs.append(dtot)
        n = dtot.size
        if keep_paths:
            all_paths.append(p)
            bm = p.mean(axis=0)
            bm2 = np.sum((p - bm) ** 2, axis=0)
        else:
            bm = np.array([v.mean() for v in xs_all])
            bm2 = np.array([np.sum((v - m) ** 2) for v, m in zip(xs_all, bm)])
        # Chan et al. pairwise combination of group moments
        tot = count + n
        d = bm - mean
        mean = mean + d * (n / tot)
        m2 = m2 + bm2 + d**2 * (count * n / tot)
        count = tot

    jump_log = {k: np.concatenate([lg[k] for lg in logs]) for k in ("path_id", "time", "size")}
    order = np.lexsort((jump_log["time"], jump_log["path_id"]))  # stable within (path, time)
    jump_log = {k: v[order] for k, v in jump_log.items()}
    return PathEnsemble(
        grid=grid,
        paths=np.vstack(all_paths) if keep_paths else None,
        jump_log=jump_log,
        diffusion_total=np.concatenate(diffs),
        n_paths=n_paths,
        moments=(mean, m2),
    )


def ensemble_stats(ens: PathEnsemble):
    """Pointwise cross-sectional mean and population variance."""
    if ens is None or ens.n_paths < 1:
        raise EmptyEnsemble("ensemble has no paths")
    if ens.paths is not None:
        return ens.paths.mean(axis=0), ens.paths.var(axis=0)
    mean, m2 = ens.moments
    return mean.copy(), m2 / ens.n_paths
