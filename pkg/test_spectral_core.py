"""
Tests for the periodic-box Fourier machinery
"""
import math

import numpy as np
import pytest
from scipy.signal import convolve

from utils.errors import GridMismatchError, InvalidParameterError, SymmetryViolationError
from utils.spectral_core import (
    Grid,
    SpectralField,
    block_energies,
    dealias,
    divergence,
    dyadic_block,
    forward,
    gradient,
    heat_semigroup,
    inverse,
    jacobian,
    laplacian,
    leray_project,
    make_grid,
    random_bandlimited,
    shell_spectrum,
)


def _sin_field(grid, mode=1, axis=0):
    x = grid.coordinates()[axis]
    return np.broadcast_to(np.sin(2 * np.pi * mode * x / grid.box_len), grid.shape).copy()


def test_forward_matches_direct_sum():
    grid = make_grid(8, 2 * np.pi)
    samples = np.random.default_rng(3).standard_normal(grid.shape)

    x = np.arange(grid.n)
    phase = np.exp(-2j * np.pi * np.outer(grid.modes, x) / grid.n)
    oracle = np.einsum("ai,bj,ck,ijk->abc", phase, phase, phase, samples) / grid.n ** 3

    coeffs = forward(samples, grid).coeffs[0]
    assert np.max(np.abs(coeffs - oracle)) < 1e-12


def test_round_trip_32():
    grid = make_grid(32)
    samples = np.random.default_rng(5).standard_normal((3, *grid.shape))
    back = inverse(forward(samples, grid))
    assert back.shape == samples.shape
    assert np.max(np.abs(back - samples)) < 1e-12


def test_sine_convention():
    grid = make_grid(16)
    coeffs = forward(_sin_field(grid), grid).coeffs[0]
    assert coeffs[1, 0, 0] == pytest.approx(-0.5j, abs=1e-14)
    assert coeffs[-1, 0, 0] == pytest.approx(0.5j, abs=1e-14)
    coeffs[1, 0, 0] = coeffs[-1, 0, 0] = 0
    assert np.max(np.abs(coeffs)) < 1e-14


def test_grid_rejects_bad_sizes():
    with pytest.raises(InvalidParameterError):
        Grid(12)
    with pytest.raises(InvalidParameterError):
        Grid(4)
    with pytest.raises(InvalidParameterError):
        Grid(16, box_len=0.0)


def test_inverse_rejects_non_hermitian_coefficients():
    grid = make_grid(8)
    coeffs = np.zeros((1, *grid.shape), dtype=np.complex128)
    coeffs[0, 1, 0, 0] = 1.0
    with pytest.raises(SymmetryViolationError):
        inverse(SpectralField(grid, coeffs))


def test_mismatched_grids_refuse_arithmetic():
    a = forward(np.ones((8, 8, 8)), make_grid(8))
    b = forward(np.ones((16, 16, 16)), make_grid(16))
    with pytest.raises(GridMismatchError):
        a + b


def test_derivatives_of_sine():
    grid = make_grid(16)
    k = 2 * np.pi / grid.box_len
    f = _sin_field(grid, mode=2, axis=1)
    x2 = np.broadcast_to(grid.coordinates()[1], grid.shape)

    grad = inverse(gradient(forward(f, grid)))
    np.testing.assert_allclose(grad[1], 2 * k * np.cos(2 * k * x2), atol=1e-12)
    np.testing.assert_allclose(grad[0], 0.0, atol=1e-12)

    lap = inverse(laplacian(forward(f, grid)))
    np.testing.assert_allclose(lap, -(2 * k) ** 2 * f, atol=1e-12)


def test_jacobian_layout():
    grid = make_grid(16)
    k = 2 * np.pi / grid.box_len
    v = np.zeros((3, *grid.shape))
    v[0] = _sin_field(grid, axis=1)
    jac = jacobian(forward(v, grid))
    x2 = np.broadcast_to(grid.coordinates()[1], grid.shape)
    # [i, j] = d_j v_i
    np.testing.assert_allclose(jac[0, 1], k * np.cos(k * x2), atol=1e-12)
    np.testing.assert_allclose(jac[1, 0], 0.0, atol=1e-12)


def test_leray_projection_is_divergence_free_and_idempotent():
    grid = make_grid(16)
    v = random_bandlimited(grid, 4, seed=11, components=3)
    p = leray_project(v)
    assert np.max(np.abs(inverse(divergence(p)))) < 1e-12
    np.testing.assert_allclose(leray_project(p).coeffs, p.coeffs, atol=1e-14)


def test_leray_keeps_zero_mode():
    grid = make_grid(8)
    v = np.ones((3, *grid.shape)) * np.array([1.0, 2.0, 3.0])[:, None, None, None]
    projected = leray_project(forward(v, grid))
    np.testing.assert_allclose(projected.zero_mode(), [1.0, 2.0, 3.0])


def test_heat_semigroup_decays_single_mode():
    grid = make_grid(16)
    k = 2 * np.pi / grid.box_len
    f = _sin_field(grid, mode=3)
    evolved = inverse(heat_semigroup(forward(f, grid), 0.7))
    np.testing.assert_allclose(evolved, math.exp(-(3 * k) ** 2 * 0.7) * f, atol=1e-13)
    with pytest.raises(InvalidParameterError):
        heat_semigroup(forward(f, grid), -1.0)


def test_heat_semigroup_composes():
    spec = random_bandlimited(make_grid(16), 5, seed=8)
    twice = heat_semigroup(heat_semigroup(spec, 0.3), 1.1)
    once = heat_semigroup(spec, 1.4)
    assert np.max(np.abs(twice.coeffs - once.coeffs)) < 1e-13 * np.max(np.abs(spec.coeffs))


def test_heat_semigroup_widens_a_gaussian():
    grid = make_grid(64, 16 * np.pi)
    sigma, t = 2.0, 1.0
    x1, x2, x3 = (x - grid.box_len / 2 for x in grid.coordinates())
    r2 = x1 ** 2 + x2 ** 2 + x3 ** 2
    gauss = np.exp(-r2 / (2 * sigma ** 2))

    evolved = inverse(heat_semigroup(forward(gauss, grid), t))
    width2 = sigma ** 2 + 2 * t
    exact = (sigma ** 2 / width2) ** 1.5 * np.exp(-r2 / (2 * width2))
    assert np.max(np.abs(evolved - exact)) < 1e-10


def test_dealiased_product_matches_direct_convolution():
    grid = make_grid(16, 2 * np.pi)
    band = 5
    a = random_bandlimited(grid, band, seed=21)
    b = random_bandlimited(grid, band, seed=22)

    product = dealias(forward(inverse(a) * inverse(b), grid)).coeffs[0]

    idx = np.arange(-band, band + 1) % grid.n
    cube = np.ix_(idx, idx, idx)
    full = convolve(a.coeffs[0][cube], b.coeffs[0][cube], method="direct")
    inner = slice(band, 3 * band + 1)
    np.testing.assert_allclose(product[cube], full[inner, inner, inner], atol=1e-12 * np.max(np.abs(full)))

    outside = product.copy()
    outside[cube] = 0.0
    assert np.max(np.abs(outside)) == 0.0


def test_divergence_of_gradient_is_laplacian():
    f = random_bandlimited(make_grid(16), 4, seed=13)
    np.testing.assert_allclose(divergence(gradient(f)).coeffs, laplacian(f).coeffs, atol=1e-12)


def test_leray_removes_gradients():
    f = random_bandlimited(make_grid(16), 4, seed=14)
    grad = gradient(f)
    projected = leray_project(grad)
    assert np.max(np.abs(projected.coeffs)) < 1e-12 * np.max(np.abs(grad.coeffs))


def test_dealias_two_thirds_rule():
    grid = make_grid(32)
    keep = _sin_field(grid, mode=10)
    drop = _sin_field(grid, mode=11)
    np.testing.assert_allclose(inverse(dealias(forward(keep, grid))), keep, atol=1e-13)
    assert np.max(np.abs(inverse(dealias(forward(drop, grid))))) < 1e-13


def test_dyadic_blocks_partition_energy():
    grid = make_grid(16, 2 * np.pi)
    spec = forward(np.random.default_rng(1).standard_normal(grid.shape), grid).without_zero_mode()
    blocks = block_energies(spec)
    assert sum(blocks.values()) == pytest.approx(spec.l2_squared(), rel=1e-12)

    # |k| = 4 on a 2*pi box sits in block 2
    f = _sin_field(grid, mode=4)
    block = dyadic_block(forward(f, grid), 2)
    np.testing.assert_allclose(inverse(block), f, atol=1e-13)
    with pytest.raises(InvalidParameterError):
        dyadic_block(forward(f, grid), 40)


def test_shell_spectrum_excludes_zero_mode():
    grid = make_grid(8)
    f = 2.0 + _sin_field(grid)
    k2, energy = shell_spectrum(forward(f, grid))
    assert k2.tolist() == pytest.approx([(2 * np.pi / grid.box_len) ** 2])
    assert energy[0] == pytest.approx(0.5 * grid.volume, rel=1e-12)


def test_random_bandlimited_is_deterministic_across_resolutions():
    coarse = inverse(random_bandlimited(make_grid(16), 3, seed=4))
    fine = inverse(random_bandlimited(make_grid(32), 3, seed=4))
    np.testing.assert_allclose(fine[::2, ::2, ::2], coarse, atol=1e-12)
    assert abs(forward(coarse, make_grid(16)).zero_mode()[0]) < 1e-15
    with pytest.raises(InvalidParameterError):
        random_bandlimited(make_grid(16), 6, seed=0)
