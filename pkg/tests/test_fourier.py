import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chaoskit.fourier import (KernelSpec, SpectralField, apply_H, apply_inv_grad, apply_S,
                              cosine_density, eval_field, heat_propagate, kuramoto_kernel, norms,
                              pair, power, random_field, random_kernel, tensor_product,
                              uniform_density, zero_kernel)

TWO_PI = 2 * np.pi
seeds = st.integers(0, 2 ** 32 - 1)


def grid_coefficients(values, M):
    """Fourier coefficients from samples on a uniform grid, cut to the box of side 2M+1."""
    n = values.shape[0]
    c = np.fft.fftn(values) / values.size
    idx = np.r_[0:M + 1, n - M:n]
    for ax in range(values.ndim):
        c = np.take(c, idx, axis=ax)
    # reorder -M..M
    order = np.r_[M + 1:2 * M + 1, 0:M + 1]
    for ax in range(values.ndim):
        c = np.take(c, order, axis=ax)
    return c


def spectral_derivative(coeffs, axis):
    M = (coeffs.shape[axis] - 1) // 2
    shape = [1] * coeffs.ndim
    shape[axis] = -1
    return coeffs * (1j * TWO_PI * np.arange(-M, M + 1)).reshape(shape)


# evaluation -------------------------------------------------------------------

def test_constant_field_evaluates_to_constant():
    f = SpectralField.constant(2.5 - 1j, 2, 1)
    assert eval_field(f, [[0.3], [0.9]]) == pytest.approx(2.5 - 1j)


def test_cosine_pair_at_origin():
    f = SpectralField.from_modes({1: 1, -1: 1}, 1, 1)
    assert eval_field(f, 0.0) == pytest.approx(2.0)


def test_eval_matches_direct_sum(rng):
    f = random_field(rng, 1, 1, 4)
    x = np.arange(32) / 32
    direct = sum(c * np.exp(1j * TWO_PI * k * x) for (k,), c in f.items())
    assert np.max(np.abs(eval_field(f, x) - direct)) < 1e-12


def test_univariate_point_layouts_agree(rng):
    f = random_field(rng, 1, 1, 3)
    x = rng.random(7)
    assert np.allclose(eval_field(f, x[:, None, None]), eval_field(f, x))


def test_two_variable_eval_matches_direct_sum(rng):
    f = random_field(rng, 2, 1, 2)
    pts = rng.random((5, 2, 1))
    direct = [sum(c * np.exp(1j * TWO_PI * (a * p[0, 0] + b * p[1, 0])) for (a, b), c in f.items())
              for p in pts]
    assert np.allclose(eval_field(f, pts), direct, atol=1e-12)


# operators ------------------------------------------------------------------------

def test_H_of_zero_kernel_is_zero(rng):
    out = apply_H(zero_kernel(), random_field(rng, 2, 1, 2), 0, star=1)
    assert norms(out)["linf"] == 0


@pytest.mark.parametrize("a", [-2, 0, 1])
@pytest.mark.parametrize("b", [1, 0, -1])
def test_H_single_mode(a, b):
    c = 0.7 - 0.2j
    kernel = KernelSpec((((1,), (-1,), [c]),), dim=1, real=False)
    h = SpectralField.from_modes({(a, b): 1}, 2, 1, cutoff=3)
    out = apply_H(kernel, h, 0, star=1)
    expected = 2j * np.pi * (a + 1) * c if b == 1 else 0
    assert out.coefficient((a + 1,)) == pytest.approx(expected)
    assert norms(out)["linf"] == pytest.approx(abs(expected))


def test_H_matches_quadrature(rng):
    n, M = 32, 4
    kernel = random_kernel(rng, 1, 3, 2)
    h = random_field(rng, 2, 1, 2, real=True).resized(M)
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    hv = eval_field(h, np.stack([X, Y], axis=-1)[..., None])
    kv = kernel(X[..., None], Y[..., None])[..., 0]
    inner = np.mean(kv * hv, axis=1)
    oracle = spectral_derivative(grid_coefficients(inner, M), 0)
    out = apply_H(kernel, h, 0, star=1)
    assert np.max(np.abs(out.coeffs - oracle)) < 1e-10


def test_H_kills_mode_zero(rng):
    rho = cosine_density(0.4)
    out = apply_H(random_kernel(rng, 1, 2, 1), tensor_product(rho, rho), 0, star=1)
    assert out.coefficient((0,)) == 0


def test_S_diagonal_single_mode():
    c = 0.3j
    kernel = KernelSpec((((1,), (-1,), [c]),), dim=1, real=False)
    out = apply_S(kernel, SpectralField.from_modes({2: 1}, 1, 1, cutoff=3), 0, 0)
    assert out.coefficient(2) == pytest.approx(2j * np.pi * 2 * c)
    assert norms(out)["linf"] == pytest.approx(abs(2j * np.pi * 2 * c))


def test_S_offdiagonal_single_mode():
    c = 1.5
    kernel = KernelSpec((((2,), (-1,), [c]),), dim=1, real=False)
    h = SpectralField.from_modes({(0, 1): 1}, 2, 1, cutoff=3)
    out = apply_S(kernel, h, 0, 1)
    assert out.coefficient((2, 0)) == pytest.approx(2j * np.pi * 2 * c)
    assert norms(out)["linf"] == pytest.approx(abs(2j * np.pi * 2 * c))


def test_S_matches_quadrature(rng):
    n, M = 32, 5
    kernel = random_kernel(rng, 1, 2, 2)
    h = random_field(rng, 2, 1, 2, real=True).resized(M)
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    hv = eval_field(h, np.stack([X, Y], axis=-1)[..., None])
    kv = kernel(X[..., None], Y[..., None])[..., 0]
    oracle = spectral_derivative(grid_coefficients(kv * hv, M), 0)
    assert np.max(np.abs(apply_S(kernel, h, 0, 1).coeffs - oracle)) < 1e-10


def test_S_of_zero_kernel_is_zero(rng):
    assert norms(apply_S(zero_kernel(), random_field(rng, 2, 1, 2), 1, 0))["linf"] == 0


def test_inverse_gradient():
    f = SpectralField.from_modes({0: 3, 2: 4 * np.pi}, 1, 1)
    out = apply_inv_grad(f, 0)
    assert out.coefficient(0) == 0
    assert out.coefficient(2) == pytest.approx(1.0)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_lemma_bound_random(seed):
    rng = np.random.default_rng(seed)
    kernel = random_kernel(rng, 1, int(rng.integers(1, 4)), 2, real=bool(rng.integers(0, 2)))
    h = random_field(rng, 3, 1, 2)
    hn = norms(h)
    for out in (apply_inv_grad(apply_H(kernel, h, 0, star=2), 0),
                apply_inv_grad(apply_S(kernel, h, 1, 2), 1)):
        on = norms(out)
        for key in ("l2", "linf"):
            assert on[key] <= kernel.l1_mass * hn[key] * (1 + 1e-12)


# heat flow, products, norms -----------------------------------------------------------

def test_heat_zero_time_is_identity(rng):
    f = random_field(rng, 2, 1, 3)
    assert np.array_equal(heat_propagate(f, 1.3, 0.0).coeffs, f.coeffs)


def test_heat_single_mode():
    f = SpectralField.from_modes({1: 1}, 1, 1)
    assert heat_propagate(f, 1.0, 1.0).coefficient(1) == pytest.approx(np.exp(-4 * np.pi ** 2))


@settings(max_examples=40, deadline=None)
@given(seeds, st.floats(0, 0.05), st.floats(0, 0.05))
def test_heat_semigroup(seed, t1, t2):
    f = random_field(np.random.default_rng(seed), 2, 1, 3)
    two = heat_propagate(heat_propagate(f, 0.7, t1), 0.7, t2)
    one = heat_propagate(f, 0.7, t1 + t2)
    assert np.max(np.abs(two.coeffs - one.coeffs)) < 1e-14


def test_tensor_with_unit(rng):
    f = random_field(rng, 1, 1, 2)
    out = tensor_product(f, SpectralField.constant(1.0))
    assert out.num_vars == 2
    for (a,), c in f.items():
        assert out.coefficient((a, 0)) == c


def test_tensor_of_densities_is_density():
    out = tensor_product(cosine_density(0.3), uniform_density())
    assert out.probability and out.coefficient((0, 0)) == 1


def test_tensor_evaluates_as_product(rng):
    f, g = random_field(rng, 1, 1, 2), random_field(rng, 1, 1, 3)
    pts = rng.random((100, 2))
    both = eval_field(tensor_product(f, g), pts[:, :, None])
    assert np.allclose(both, eval_field(f, pts[:, 0]) * eval_field(g, pts[:, 1]), atol=1e-12)


def test_power_evaluates_pointwise(rng):
    f = random_field(rng, 1, 1, 2, real=True)
    x = rng.random(50)
    assert np.allclose(eval_field(power(f, 3), x), eval_field(f, x) ** 3)


def test_pair_is_integral(rng):
    f, g = random_field(rng, 1, 1, 3), random_field(rng, 1, 1, 2)
    x = np.arange(64) / 64
    assert pair(f, g) == pytest.approx(np.mean(eval_field(f, x) * eval_field(g, x)))


def test_norms_single_and_zero():
    assert norms(SpectralField.from_modes({(1, -2): 3 - 4j}, 2, 1)) == {"l2": 5.0, "linf": 5.0}
    assert norms(SpectralField.zeros(2, 1, 2)) == {"l2": 0.0, "linf": 0.0}


def test_l2_is_quadrature_norm(rng):
    f = random_field(rng, 1, 1, 8)
    x = np.arange(64) / 64
    quad = np.sqrt(np.mean(np.abs(eval_field(f, x)) ** 2))
    assert abs(norms(f)["l2"] - quad) < 1e-10


def test_serialization_round_trip(rng):
    f = random_field(rng, 2, 1, 2, real=True)
    back = SpectralField.from_dict(f.to_dict())
    assert np.array_equal(back.coeffs, f.coeffs) and back.real
    k = kuramoto_kernel(0.5)
    assert KernelSpec.from_dict(k.to_dict()).modes[0][2][0] == k.modes[0][2][0]


def test_kuramoto_kernel_values():
    k = kuramoto_kernel(1.0)
    assert k.l1_mass == pytest.approx(1.0)
    assert k(np.array([0.25]), np.array([0.0]))[0] == pytest.approx(-1.0)


def test_non_symmetric_real_kernel_rejected():
    with pytest.raises(ValueError):
        KernelSpec((((1,), (-1,), [1j]),), dim=1)
