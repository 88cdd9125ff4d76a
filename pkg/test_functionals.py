"""
Tests for norms, energy functionals and the inequality harness
"""
import math

import numpy as np
import pytest

from utils.errors import InvalidParameterError
from utils.functionals import (
    INEQUALITIES,
    besov_dyadic_norm,
    besov_equivalence_sweep,
    check_inequality,
    energy_E0,
    energy_E1,
    energy_E2,
    functionals_row,
    heat_norm_search,
    lorentz_31_norm,
    lp_norm,
    smallness_diagnostics,
    sobolev_neg1_norm,
    sweep,
)
from utils.ledger import LEDGER_COLUMNS
from utils.spectral_core import inverse, make_grid, random_bandlimited
from utils.state_model import FluidState, InitialData, make_initial


def _uniform_state(grid, rho_bar, w_bar):
    ones = np.ones(grid.shape)
    return FluidState(grid=grid, time=0.0, rho=rho_bar * ones,
                      w=np.asarray(w_bar)[:, None, None, None] * ones, u=np.zeros((3, *grid.shape)))


def _sine(grid, mode=1):
    x1 = np.broadcast_to(grid.coordinates()[0], grid.shape)
    return np.sin(2 * np.pi * mode * x1 / grid.box_len)


def test_energies_of_uniform_particle_flow():
    grid = make_grid(8)
    rho_bar, w_bar = 2.0, np.array([0.5, -1.0, 0.0])
    state = _uniform_state(grid, rho_bar, w_bar)
    speed2 = float(w_bar @ w_bar)

    e0, d0 = energy_E0(state)
    assert e0 == pytest.approx(0.5 * rho_bar * speed2 * grid.volume, rel=1e-12)
    assert d0 == pytest.approx(rho_bar * speed2 * grid.volume, rel=1e-12)

    e1, d1, _ = energy_E1(state)
    assert e1 == pytest.approx(rho_bar * speed2 * grid.volume, rel=1e-12)

    # u_t = rho (w - u) and w_t = u - w in the zero mode
    e2, _ = energy_E2(state)
    assert e2 == pytest.approx((rho_bar ** 2 + rho_bar) * speed2 * grid.volume, rel=1e-12)
    assert d1 == pytest.approx(e1 + rho_bar ** 2 * speed2 * grid.volume, rel=1e-12)


def test_energies_vanish_at_rest():
    grid = make_grid(8)
    state = _uniform_state(grid, 1.0, [0.0, 0.0, 0.0])
    assert energy_E0(state) == (0.0, 0.0)
    assert energy_E2(state) == (0.0, 0.0)


def test_shear_mode_is_a_stokes_eigenmode():
    grid = make_grid(16)
    amplitude = 0.1
    state = make_initial(InitialData(generator="shear_mode", amplitude=0.0, u_amplitude=amplitude), grid)
    k2 = (2 * np.pi / grid.box_len) ** 2
    u_l2sq = amplitude ** 2 * grid.volume / 2

    e1, d1, _ = energy_E1(state)
    e2, d2 = energy_E2(state)
    assert e1 == pytest.approx(k2 * u_l2sq, rel=1e-10)
    assert d1 == pytest.approx(k2 ** 2 * u_l2sq, rel=1e-10)
    assert e2 == pytest.approx(k2 ** 2 * u_l2sq, rel=1e-10)
    assert d2 == pytest.approx(k2 ** 3 * u_l2sq, rel=1e-10)


@pytest.mark.parametrize("sigma", [0.5, 1.5])
def test_heat_norm_of_single_mode_matches_closed_form(sigma):
    grid = make_grid(32)
    k = 2 * 2 * np.pi / grid.box_len
    z = _sine(grid, mode=2)

    result = heat_norm_search(z, sigma, grid)

    t_star = sigma / (2 * k ** 2)
    exact = t_star ** (sigma / 2) * math.exp(-k ** 2 * t_star) * math.sqrt(grid.volume / 2)
    assert result.value == pytest.approx(exact, rel=1e-3)
    assert result.t_star == pytest.approx(t_star, rel=2e-2)
    assert not result.resolution_limited


def test_heat_norm_rejects_bad_sigma():
    grid = make_grid(8)
    with pytest.raises(InvalidParameterError):
        heat_norm_search(_sine(grid), 2.0, grid)
    with pytest.raises(InvalidParameterError):
        heat_norm_search(_sine(grid), 0.0, grid)


def test_heat_and_dyadic_norms_are_equivalent():
    frame = besov_equivalence_sweep(n=32, count=5, band=2, seed=99)
    assert len(frame) == 10
    assert frame["ratio"].between(1 / 8, 8).all()


def test_dyadic_norm_of_single_block():
    grid = make_grid(16, 2 * np.pi)
    z = _sine(grid, mode=4)
    l2 = math.sqrt(grid.volume / 2)
    for q in (1, 2, math.inf):
        assert besov_dyadic_norm(z, 0.5, q, grid) == pytest.approx(2 ** 1.0 * l2, rel=1e-12)
    with pytest.raises(InvalidParameterError):
        besov_dyadic_norm(z, 0.5, 3, grid)


def test_negative_sobolev_norm_of_single_mode():
    grid = make_grid(16)
    k = 2 * np.pi * 3 / grid.box_len
    value = sobolev_neg1_norm(_sine(grid, mode=3), grid)
    assert value == pytest.approx(math.sqrt(grid.volume / 2) / k, rel=1e-12)


def test_lorentz_and_lp_norms_of_constant():
    grid = make_grid(8)
    c = np.full(grid.shape, 2.0)
    assert lorentz_31_norm(c, grid) == pytest.approx(3 * 2.0 * grid.box_len, rel=1e-12)
    assert lp_norm(c, grid, 2) == pytest.approx(2.0 * math.sqrt(grid.volume), rel=1e-12)
    assert lp_norm(c, grid, math.inf) == 2.0


@pytest.mark.parametrize("name", INEQUALITIES)
def test_inequality_ratios_are_amplitude_invariant(name):
    grid = make_grid(16)
    z = inverse(random_bandlimited(grid, 3, seed=21))
    base = check_inequality(name, z, grid)
    scaled = check_inequality(name, 8.0 * z, grid)
    assert base.ratio is not None and base.ratio > 0
    assert scaled.ratio == pytest.approx(base.ratio, rel=1e-12)


def test_inequality_degenerate_and_unknown_inputs():
    grid = make_grid(8)
    result = check_inequality("GN", np.zeros(grid.shape), grid)
    assert result.degenerate and result.ratio is None
    with pytest.raises(InvalidParameterError):
        check_inequality("poincare", np.ones(grid.shape), grid)


def test_inequality_sweep_has_no_resolution_blow_up():
    frame = sweep(resolutions=(32, 64), count=3, band=2, seed=2024)
    assert set(frame["inequality"]) == set(INEQUALITIES)
    coarse = frame[frame["n"] == 32].set_index("inequality")["max_ratio"]
    fine = frame[frame["n"] == 64].set_index("inequality")["max_ratio"]
    assert (fine <= 2 * coarse).all()


def test_functionals_row_covers_every_column():
    grid = make_grid(16)
    spec = InitialData(generator="taylor_green_like", u_amplitude=0.2, w_amplitude=0.1)
    state = make_initial(spec, grid)
    row = functionals_row(state)
    assert list(row) == LEDGER_COLUMNS
    assert all(v >= 0 for v in row.values())
    assert row["int_D0"] == 0.0
    assert row["mass"] == pytest.approx(float(np.sum(state.rho)) * grid.cell_volume)

    light = functionals_row(state, besov=False, higher_order=False)
    assert light["u_besov_m1_2"] == 0.0 and light["E2"] == 0.0 and light["D1"] == 0.0
    assert light["E1"] == pytest.approx(row["E1"], rel=1e-12)


def test_smallness_diagnostics():
    grid = make_grid(16)
    spec = InitialData(generator="taylor_green_like", u_amplitude=1e-3, w_amplitude=1e-3)
    diag = smallness_diagnostics(make_initial(spec, grid))
    assert diag["smallness_first"] == pytest.approx(diag["u_h1"] + diag["sqrt_rho_w_l2"] + diag["w_lipschitz"])
    assert diag["u_besov_1_2_1"] > 0
    assert diag["e1_condition"] == 1.0
