import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from chaoskit.fourier import (SpectralField, cosine_density, kuramoto_kernel, random_kernel,
                              uniform_density, zero_kernel)
from chaoskit.particles import (SimConfig, drift, dump_snapshot, initial_ensemble,
                                load_snapshot, run, sample_initial, step)


def config(**kw):
    base = dict(N=8, sigma=0.5, dt=0.01, t_end=0.1, kernel=kuramoto_kernel(1.0),
                rho0=cosine_density(0.5), obs_times=(0.1,), replicas=5, seed=3)
    base.update(kw)
    return SimConfig(**base)


# initial law ---------------------------------------------------------------------

def test_uniform_initial_law(rng):
    x = sample_initial(uniform_density(), 20_000, rng)
    assert x.shape == (20_000, 1)
    assert stats.kstest(x[:, 0], "uniform").pvalue > 0.01


def test_cosine_initial_mean(rng):
    n = 40_000
    x = sample_initial(cosine_density(0.5), n, rng)
    mean = np.mean(np.cos(2 * np.pi * x[:, 0]))
    assert abs(mean - 0.25) <= 3 / math.sqrt(n)


def test_initial_law_ks_against_numeric_cdf(rng):
    rho0 = SpectralField.from_modes({0: 1, 1: 0.2 - 0.1j, -1: 0.2 + 0.1j, 3: 0.15, -3: 0.15},
                                    1, 1, probability=True)
    x = sample_initial(rho0, 100_000, rng)[:, 0]
    grid = np.linspace(0, 1, 20_001)
    dens = np.real(sum(c * np.exp(2j * np.pi * k * grid) for (k,), c in rho0.items()))
    cdf = np.concatenate([[0], np.cumsum((dens[1:] + dens[:-1]) / 2 * np.diff(grid))])
    ks = stats.kstest(x, lambda v: np.interp(v, grid, cdf)).statistic
    assert ks < 1.63 / math.sqrt(x.size)


def test_negative_density_rejected(rng):
    bad = SpectralField.from_modes({0: 1, 1: 0.8, -1: 0.8}, 1, 1, probability=True)
    with pytest.raises(ValueError, match="negative"):
        sample_initial(bad, 10, rng)


# drift ------------------------------------------------------------------------------

def test_zero_kernel_drift():
    assert not drift(np.random.default_rng(0).random((3, 1)), zero_kernel()).any()


def test_two_particle_drift():
    # (1/2)[K(0, 0) + K(0, 0.25)] = (1/2)[0 - sin(-pi/2)]
    X = np.array([[0.0], [0.25]])
    for mode in ("spectral", "direct"):
        assert drift(X, kuramoto_kernel(1.0), mode)[0, 0] == pytest.approx(0.5)


def test_drift_matches_pairwise_kernel(rng):
    kernel = random_kernel(rng, 1, 3, 2)
    X = rng.random((6, 1))
    pairwise = np.mean(kernel(X[:, None, :], X[None, :, :]), axis=1)
    assert np.max(np.abs(drift(X, kernel) - pairwise)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 2))
def test_spectral_matches_direct(seed, d):
    rng = np.random.default_rng(seed)
    kernel = random_kernel(rng, d, int(rng.integers(1, 4)), 2)
    X = rng.random((3, 7, d))
    gap = np.max(np.abs(drift(X, kernel, "spectral") - drift(X, kernel, "direct")))
    assert gap <= 1e-12


# stepping and runs --------------------------------------------------------------------

def test_no_noise_no_kernel_is_static():
    cfg = config(sigma=0.0, kernel=zero_kernel())
    ens = initial_ensemble(cfg)
    assert np.array_equal(step(ens, cfg).positions, ens.positions)


def test_brownian_increments():
    # wrap-free variance check through the circular second moment of mode 1
    sigma, t = 0.05, 0.5
    cfg = config(N=200, sigma=sigma, dt=0.01, t_end=t, kernel=zero_kernel(), rho0=uniform_density(),
                 obs_times=(0.0, t), replicas=50)
    (_, start), (_, end) = run(cfg)
    inc = np.exp(2j * np.pi * (end.positions - start.positions)).real.ravel()
    expected = math.exp(-4 * np.pi ** 2 * sigma * t)
    assert abs(inc.mean() - expected) < 4 * inc.std() / math.sqrt(inc.size)


def test_increment_variance_unwrapped():
    sigma, dt, n = 0.3, 1e-3, 20
    cfg = config(N=500, sigma=sigma, dt=dt, t_end=n * dt, kernel=zero_kernel(),
                 rho0=uniform_density(), obs_times=(0.0, n * dt), replicas=20)
    (_, a), (_, b) = run(cfg)
    diff = (b.positions - a.positions + 0.5) % 1.0 - 0.5
    var = diff.var()
    target = 2 * sigma * n * dt
    assert abs(var - target) < 5 * target * math.sqrt(2 / diff.size)


def test_equal_seeds_bit_identical():
    a = run(config())
    b = run(config())
    assert all(np.array_equal(x.positions, y.positions) for (_, x), (_, y) in zip(a, b))


def test_different_seeds_differ():
    assert not np.array_equal(run(config(seed=1))[0][1].positions, run(config(seed=2))[0][1].positions)


def test_blocks_and_threads_do_not_change_results():
    cfg = config(replicas=7, t_end=0.4, obs_times=(0.4,))
    ref = run(cfg, block_size=1000)[0][1].positions
    for bs, th in ((1, 1), (3, 1), (2, 3)):
        assert np.array_equal(run(cfg, block_size=bs, threads=th)[0][1].positions, ref)


def test_step_matches_run():
    cfg = config(t_end=0.4, obs_times=(0.4,))
    ens = initial_ensemble(cfg)
    for _ in range(cfg.n_steps):
        ens = step(ens, cfg)
    assert np.array_equal(ens.positions, run(cfg)[0][1].positions)


def test_zero_horizon_returns_initial_sample():
    cfg = config(t_end=0.0, obs_times=(0.0,))
    out = run(cfg)
    assert len(out) == 1
    assert np.array_equal(out[0][1].positions, initial_ensemble(cfg).positions)


def test_observation_times_snap_to_grid():
    cfg = config(dt=0.3, t_end=1.0, obs_times=(0.0, 1.0))
    times = [t for t, _ in run(cfg)]
    assert all(abs(a - b) <= cfg.dt / 2 for a, b in zip(times, (0.0, 1.0)))


def test_heat_decay_of_mode_one():
    cfg = config(N=2000, sigma=0.5, dt=1e-3, t_end=1.0, obs_times=(1.0,), kernel=zero_kernel(),
                 replicas=20)
    X = run(cfg)[0][1].positions
    per = np.cos(2 * np.pi * X[..., 0]).mean(axis=1)
    se = per.std(ddof=1) / math.sqrt(per.size)
    assert abs(per.mean() - 0.25 * math.exp(-4 * np.pi ** 2 * 0.5)) <= 3 * se


def test_positions_stay_in_unit_interval():
    X = run(config(sigma=5.0, t_end=0.5, obs_times=(0.5,)))[0][1].positions
    assert X.min() >= 0 and X.max() < 1


def test_config_violations_are_all_reported():
    errs = config(N=1, dt=0.0, sigma=-1.0, obs_times=(2.0,)).violations()
    assert len(errs) == 4
    with pytest.raises(ValueError, match="dt > 0"):
        run(config(dt=0.0))


def test_snapshot_round_trip(tmp_path):
    cfg = config()
    t, ens = run(cfg)[0]
    dump_snapshot(ens, tmp_path / "snap", cfg)
    X, header = load_snapshot(tmp_path / "snap")
    assert np.array_equal(X, ens.positions)
    assert header["layout"] == ["replica", "particle", "coordinate"]
    assert header["config"]["seed"] == cfg.seed
