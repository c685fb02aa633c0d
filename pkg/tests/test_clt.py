import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.clt import (CltReport, CumulantEstimator, TestFunction, berry_esseen_delta,
                          clt_cell, cumulant_bound, cumulant_bound_audit,
                          cumulants_from_correlations, empirical_cumulants, formula_cumulants,
                          ks_distance, linear_statistic, variance_limit)
from chaoskit.fourier import (SpectralField, cosine_density, eval_field, kuramoto_kernel, pair,
                              random_field, tensor_product, uniform_density)
from chaoskit.particles import SimConfig, run


@pytest.fixture(scope="module")
def kuramoto_snapshots():
    cfg = SimConfig(N=16, sigma=1.0, dt=0.01, t_end=0.3, kernel=kuramoto_kernel(2.0),
                    rho0=cosine_density(0.5), obs_times=(0.3,), replicas=2000, seed=5)
    return run(cfg)[0][1].positions


# linear statistics -------------------------------------------------------------------

def test_constant_statistic(rng):
    X = rng.random((3, 7, 1))
    assert np.allclose(linear_statistic(X, TestFunction.constant(2.5)), 2.5)


def test_cosine_statistic_hand_value():
    assert linear_statistic(np.array([[0.0], [0.5]]), TestFunction.cosine()) == pytest.approx(0.0)


def test_statistic_matches_power_sums(rng):
    phi = TestFunction.fejer(4)
    X = rng.random((5, 9, 1))
    direct = np.zeros(5, dtype=complex)
    for (k,), c in phi.field.items():
        direct += c * np.exp(2j * np.pi * k * X[..., 0]).sum(axis=1) / 9
    assert np.max(np.abs(linear_statistic(X, phi) - direct.real)) < 1e-12


def test_fejer_is_real_and_bounded():
    phi = TestFunction.fejer(8)
    x = np.linspace(0, 1, 101)
    vals = eval_field(phi.field, x)
    assert np.max(np.abs(vals.imag)) < 1e-12
    assert phi.l1 == pytest.approx(sum(1 - k / 9 for k in range(1, 9)))


# empirical cumulants -----------------------------------------------------------------

def test_normal_cumulants(rng):
    x = rng.normal(size=200_000)
    kap, se = empirical_cumulants(x, 4, groups=100)
    for got, want, s in zip(kap, (0, 1, 0, 0), se):
        assert abs(got - want) <= 4 * s


def test_constant_samples():
    kap, se = empirical_cumulants(np.full(100, 3.0), 4)
    assert kap[0] == pytest.approx(3.0)
    assert np.all(kap[1:] == 0) and np.all(se == 0)


def test_exponential_cumulants(rng):
    x = rng.exponential(size=200_000) + 5.0
    kap, se = empirical_cumulants(x, 3, groups=100)
    assert abs(kap[0] - 6) <= 4 * se[0]
    assert abs(kap[1] - 1) <= 4 * se[1]
    assert abs(kap[2] - 2) <= 4 * se[2]


def test_too_few_replicas():
    with pytest.raises(ValueError, match="replicas"):
        empirical_cumulants(np.zeros(30), 4)


# the correlation formula ---------------------------------------------------------------

def test_first_order_formula(rng):
    phi = TestFunction.fejer(2)
    g1 = random_field(rng, 1, 1, 2, real=True)
    assert cumulants_from_correlations(phi, {1: g1}, 10, 1) == pytest.approx(pair(phi.field, g1).real)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 50))
def test_second_order_formula(seed, N):
    rng = np.random.default_rng(seed)
    phi = TestFunction(random_field(rng, 1, 1, 2, real=True))
    g1 = random_field(rng, 1, 1, 4, real=True)
    g2 = random_field(rng, 2, 1, 2, real=True)
    g2 = SpectralField(0.5 * (g2.coeffs + g2.permute([1, 0]).coeffs), 2, 1, real=True)
    hand = (pair(phi.power(2), g1) / N - pair(phi.field, g1) ** 2 / N
            + (1 - 1 / N) * pair(tensor_product(phi.field, phi.field), g2)).real
    assert cumulants_from_correlations(phi, {1: g1, 2: g2}, N, 2) == pytest.approx(hand, abs=1e-12)


def test_formula_equals_empirical_on_same_data(kuramoto_snapshots):
    phi = TestFunction.cosine()
    s = linear_statistic(kuramoto_snapshots, phi)
    emp, _ = empirical_cumulants(s, 3)
    form, se = formula_cumulants(kuramoto_snapshots, phi, 3, groups=20)
    assert np.allclose(form, emp, rtol=1e-8, atol=1e-12)
    assert np.all(se > 0)


def test_cumulant_bounds():
    phi = TestFunction.cosine()
    assert cumulant_bound(phi, 1, 100) == pytest.approx(8.0)
    assert cumulant_bound(phi, 2, 64) == pytest.approx(1024 / 64)
    rows = cumulant_bound_audit(phi, [0.1, 0.01, 0.001], 64)
    assert all(r["passed"] for r in rows)
    assert berry_esseen_delta(phi, 64, 0.5) > 0


# KS and the variance limit ------------------------------------------------------------------

def test_ks_of_normal_samples(rng):
    ks, degenerate = ks_distance(rng.normal(size=100_000))
    assert ks <= 0.01 and not degenerate


def test_ks_of_point_mass():
    ks, degenerate = ks_distance(np.zeros(50))
    assert ks == pytest.approx(0.5) and degenerate


def test_variance_limit_without_interaction():
    b = SpectralField.zeros(2, 1, 1, real=True)
    assert variance_limit(TestFunction.cosine(), uniform_density(), b) == pytest.approx(0.5)


def test_variance_limit_of_constant(rng):
    # a pair correction integrates to zero in each variable
    c = np.array(random_field(rng, 2, 1, 2, real=True).coeffs)
    c[2, :] = c[:, 2] = 0
    b = SpectralField(c, 2, 1, real=True)
    assert variance_limit(TestFunction.constant(4.0), cosine_density(0.3), b) == pytest.approx(0, abs=1e-12)


def test_variance_limit_matches_quadrature():
    rho = cosine_density(0.6)
    phi = TestFunction.cosine()
    x = np.arange(256) / 256
    dens = eval_field(rho, x).real
    f = np.cos(2 * np.pi * x)
    quad = np.mean(f ** 2 * dens) - np.mean(f * dens) ** 2
    assert variance_limit(phi, rho, SpectralField.zeros(2, 1, 1)) == pytest.approx(quad)


# reports and estimator -----------------------------------------------------------------------

def test_clt_cell_and_report(kuramoto_snapshots):
    cell = clt_cell(kuramoto_snapshots, TestFunction.cosine(), 0.3, max_order=3, limit=0.5)
    assert cell.N == 16 and cell.n_variance > 0
    lines = CltReport([cell]).to_csv().splitlines()
    assert lines[0] == "N,t,kappa_order,value,se" and len(lines) == 4
    assert cell.summary()["variance_hypothesis_met"]


def test_estimator_api(kuramoto_snapshots):
    est = CumulantEstimator(max_order=3, jackknife_groups=20).fit(kuramoto_snapshots)
    assert est.cumulants_.shape == (3,)
    assert est.transform(kuramoto_snapshots).shape == (2000, 1)
    assert math.isfinite(est.ks_)
