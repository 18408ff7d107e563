import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stickymfg import (SdeSpec, build_time_grid, ensemble_stats, sample_adjustment_times, simulate_markup_paths,
                       step_sde)
from stickymfg.errors import EmptyEnsemble, NonFiniteState, OutOfRange
from stickymfg.jump_diffusion import PathEnsemble
import stickymfg.jump_diffusion as jd

from conftest import make_params


def test_no_events_at_zero_rate():
    assert len(sample_adjustment_times(0.0, 10.0, 1)) == 0


def test_negative_rate_rejected():
    with pytest.raises(OutOfRange):
        sample_adjustment_times(-1.0, 10.0, 1)


def test_mean_count_over_seeds():
    counts = np.array([len(sample_adjustment_times(1.0, 10.0, s)) for s in range(10_000)])
    assert abs(counts.mean() - 10.0) < 3 * np.sqrt(10.0 / 10_000)


def test_interarrivals_exponential():
    # 1e5 pooled inter-arrivals from one long realisation (short windows drop the
    # straddling gap and bias the pooled sample)
    ev = sample_adjustment_times(2.0, 50_000.0, 3).events
    gaps = np.diff(np.concatenate([[0.0], ev]))[:100_000]
    assert gaps.size >= 99_000
    assert stats.kstest(gaps, "expon", args=(0, 0.5)).pvalue > 0.01


def test_window_counts_poisson():
    counts = np.array([len(sample_adjustment_times(2.0, 5.0, s)) for s in range(5000)])
    k = np.arange(0, 21)
    observed = np.array([np.sum(counts == i) for i in k[:-1]] + [np.sum(counts >= 20)])
    expected = np.append(stats.poisson.pmf(k[:-1], 10.0), stats.poisson.sf(19, 10.0)) * counts.size
    keep = expected >= 5
    chi2 = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    assert stats.chi2.sf(chi2, keep.sum() - 1) > 0.01


@given(st.floats(0.1, 5), st.floats(0.1, 20), st.integers(0, 2**31))
def test_adjustment_times_sorted_and_in_range(theta, horizon, seed):
    ev = sample_adjustment_times(theta, horizon, seed).events
    assert np.all(np.diff(ev) > 0)
    assert np.all((ev >= 0) & (ev <= horizon))
    again = sample_adjustment_times(theta, horizon, seed).events
    assert np.array_equal(ev, again)


def test_constant_paths_without_noise_or_jumps():
    p = make_params(sigma=0.0, theta=0.0)
    ens = simulate_markup_paths(p, build_time_grid(1.0, 20), None, 50, 3, x0=0.05)
    assert np.all(ens.paths == 0.05)


def test_brownian_variance():
    p = make_params(sigma=0.1, theta=0.0, horizon=4.0)
    grid = build_time_grid(4.0, 40)
    ens = simulate_markup_paths(p, grid, None, 100_000, 11, keep_paths=False)
    mean, var = ensemble_stats(ens)
    # standard error of the sample variance of a normal: var * sqrt(2 / n)
    assert abs(var[-1] - 0.04) < 3 * 0.04 * np.sqrt(2 / 100_000)
    assert abs(mean[-1]) < 3 * np.sqrt(0.04 / 100_000)


def test_renewal_second_moment():
    p = make_params(sigma=0.1, theta=1.0, horizon=15.0)
    grid = build_time_grid(15.0, 600)
    ens = simulate_markup_paths(p, grid, lambda s, x, a: 0.0, 20_000, 5, keep_paths=False)
    mean, var = ensemble_stats(ens)
    m2 = var[-1] + mean[-1] ** 2
    assert m2 == pytest.approx(0.01, rel=0.05)


def test_determinism_and_seed_dependence():
    p = make_params()
    grid = build_time_grid(2.0, 40)
    a = simulate_markup_paths(p, grid, None, 3000, 7)
    b = simulate_markup_paths(p, grid, None, 3000, 7)
    c = simulate_markup_paths(p, grid, None, 3000, 8)
    assert np.array_equal(a.paths, b.paths)
    for k in a.jump_log:
        assert np.array_equal(a.jump_log[k], b.jump_log[k])
    assert not np.array_equal(a.paths, c.paths)


def test_grouping_does_not_change_results(monkeypatch):
    p = make_params(theta=0.5)
    grid = build_time_grid(2.0, 30)
    a = simulate_markup_paths(p, grid, None, 5000, 3, band=(-0.07, 0.07, 0.0))
    monkeypatch.setattr(jd, "GROUP_BLOCKS", 1)
    b = simulate_markup_paths(p, grid, None, 5000, 3, band=(-0.07, 0.07, 0.0))
    assert np.array_equal(a.paths, b.paths)
    for k in a.jump_log:
        assert np.array_equal(a.jump_log[k], b.jump_log[k])


def test_whole_block_prefix_of_larger_run_is_identical():
    p = make_params()
    grid = build_time_grid(1.0, 10)
    n = 2 * jd.BLOCK_SIZE
    small = simulate_markup_paths(p, grid, lambda s, x, a: 0.01, n, 4)
    big = simulate_markup_paths(p, grid, lambda s, x, a: 0.01, n + 1500, 4)
    assert np.array_equal(small.paths, big.paths[:n])


def test_jump_accounting_and_placement():
    p = make_params(sigma=0.1, theta=2.0, horizon=3.0)
    grid = build_time_grid(3.0, 60)
    ens = simulate_markup_paths(p, grid, lambda s, x, a: 0.02 * np.sin(s), 500, 9, x0=0.01)
    log = ens.jump_log
    jumps = np.bincount(log["path_id"], weights=log["size"], minlength=500)
    recon = 0.01 + ens.diffusion_total + jumps
    assert np.max(np.abs(recon - ens.paths[:, -1])) <= 1e-10 * grid.n_slices
    assert np.all((log["time"] >= 0) & (log["time"] <= grid.horizon))
    # a reset at xi lands exactly on the rule's value at the first node >= xi
    last = {}
    for pid, t in zip(log["path_id"], log["time"]):
        last[pid] = t
    node = {pid: int(np.ceil(t / grid.dt - 1e-12)) for pid, t in last.items()}
    for pid, k in list(node.items())[:50]:
        assert ens.paths[pid, k] == pytest.approx(0.02 * np.sin(grid.nodes[k]), abs=1e-15)


def test_martingale_with_symmetric_jumps():
    p = make_params(sigma=0.1, theta=1.0, horizon=2.0)
    grid = build_time_grid(2.0, 40)
    ens = simulate_markup_paths(p, grid, None, 100_000, 21, x0=0.03, jump_std=0.05, keep_paths=False)
    mean, var = ensemble_stats(ens)
    se = np.sqrt(var / 100_000)
    assert np.all(np.abs(mean[1:] - 0.03) < 3 * se[1:] + 1e-15)


def test_band_policy_keeps_paths_inside():
    p = make_params(theta=0.0)
    grid = build_time_grid(5.0, 200)
    ens = simulate_markup_paths(p, grid, None, 2000, 2, band=(-0.05, 0.05, 0.0))
    assert np.all(np.abs(ens.paths) <= 0.05)
    assert ens.jump_log["time"].size > 0


def test_step_sde_examples():
    spec0 = SdeSpec(drift=lambda s, u, x: 0.0, vol=lambda s, u, x: 0.0)
    assert step_sde(spec0, 0.0, 0.3, 0.1, 1.7) == 0.3
    spec1 = SdeSpec(drift=lambda s, u, x: 1.0, vol=lambda s, u, x: 0.0)
    assert step_sde(spec1, 0.0, 0.0, 0.1, 0.0) == pytest.approx(0.1)
    with pytest.raises(OutOfRange):
        step_sde(spec1, 0.0, 0.0, 0.0, 0.0)
    bad = SdeSpec(drift=lambda s, u, x: np.inf, vol=lambda s, u, x: 0.0)
    with pytest.raises(NonFiniteState):
        step_sde(bad, 0.0, 0.0, 0.1, 0.0)


def test_step_sde_mean_reversion_first_order():
    spec = SdeSpec(drift=lambda s, u, x: -x, vol=lambda s, u, x: 0.0)
    errs = []
    for n in (100, 200, 400):
        x, dt = 1.0, 1.0 / n
        for k in range(n):
            x = step_sde(spec, k * dt, x, dt, 0.0)
        errs.append(abs(x - np.exp(-1.0)))
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.05)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.05)


def test_ensemble_stats_examples():
    grid = build_time_grid(1.0, 4)
    one = PathEnsemble(grid, np.full((1, 5), 0.05), {}, n_paths=1)
    m, v = ensemble_stats(one)
    assert np.allclose(m, 0.05) and np.all(v == 0)
    two = PathEnsemble(grid, np.vstack([np.zeros(5), np.full(5, 0.1)]), {}, n_paths=2)
    m, v = ensemble_stats(two)
    assert np.allclose(m, 0.05) and np.allclose(v, 0.0025)
    with pytest.raises(EmptyEnsemble):
        ensemble_stats(PathEnsemble(grid, np.empty((0, 5)), {}, n_paths=0))


def test_moment_only_stats_match_full_paths():
    p = make_params()
    grid = build_time_grid(1.0, 20)
    full = simulate_markup_paths(p, grid, None, 3000, 5)
    light = simulate_markup_paths(p, grid, None, 3000, 5, keep_paths=False)
    m1, v1 = ensemble_stats(full)
    m2, v2 = ensemble_stats(light)
    assert np.allclose(m1, m2, atol=1e-15) and np.allclose(v1, v2, rtol=1e-10)


def test_weak_convergence_in_dt():
    # E[exp(-x_T)] under a smooth functional; common samples make the dt-bias visible
    spec = SdeSpec(drift=lambda s, u, x: -x, vol=lambda s, u, x: 0.3)
    out = []
    for n in (10, 20, 40):
        from stickymfg.jump_diffusion import simulate_sde
        paths = simulate_sde(spec, build_time_grid(1.0, n), 1.0, 200_000, 1)
        out.append(np.mean(paths[:, -1]))
    exact = np.exp(-1.0)
    e = [abs(o - exact) for o in out]
    se = 0.3 / np.sqrt(200_000)
    assert e[2] < e[0]
    assert e[0] > 10 * se  # bias resolvable at the coarsest step
    assert e[0] / e[1] == pytest.approx(2.0, rel=0.3)
