"""
Tests for initial data, FluidState and validation
"""
import numpy as np
import pytest
from pydantic import ValidationError

from utils.errors import GridMismatchError, InvalidParameterError
from utils.functionals import mass
from utils.spectral_core import divergence, inverse, make_grid
from utils.state_model import FluidState, InitialData, initial_diagnostics, make_initial, validate


def _zero_state(grid, **changes):
    state = FluidState(
        grid=grid,
        time=0.0,
        rho=np.ones(grid.shape),
        w=np.zeros((3, *grid.shape)),
        u=np.zeros((3, *grid.shape)),
    )
    return state.replace(**changes)


@pytest.mark.parametrize("generator", [
    "gaussian_bump_density",
    "projected_bandlimited_noise",
    "shear_mode",
    "taylor_green_like",
    "uniform",
])
def test_generators_produce_valid_states(generator):
    grid = make_grid(32)
    spec = InitialData(generator=generator, sigma=8.0, u_amplitude=0.1, w_amplitude=0.05, seed=3)
    state = make_initial(spec, grid)

    report = validate(state)
    assert report.ok, report.kinds()
    assert state.time == 0.0
    assert state.rho.min() >= 0
    assert np.max(np.abs(inverse(divergence(state.u_hat)))) < 1e-10


def test_generators_are_deterministic():
    grid = make_grid(32)
    spec = InitialData(generator="projected_bandlimited_noise", sigma=8.0, u_amplitude=0.2, seed=9)
    a = make_initial(spec, grid)
    b = make_initial(spec, grid)
    assert np.array_equal(a.u, b.u)
    assert np.array_equal(a.rho, b.rho)


def test_gaussian_bump_peak_sits_at_center():
    grid = make_grid(32)
    center = (10.0, 20.0, 30.0)
    state = make_initial(InitialData(generator="gaussian_bump_density", sigma=7.0, center=center), grid)
    peak = np.unravel_index(np.argmax(state.rho), grid.shape)
    np.testing.assert_allclose(np.array(peak) * grid.spacing, center, atol=grid.spacing)


def test_gaussian_bump_mass_matches_closed_form():
    grid = make_grid(64, 16 * np.pi)
    sigma, amplitude = 3.2, 1.5
    state = make_initial(InitialData(generator="gaussian_bump_density", sigma=sigma, amplitude=amplitude), grid)
    expected = amplitude * (2 * np.pi * sigma ** 2) ** 1.5
    assert mass(state.rho, grid) == pytest.approx(expected, rel=1e-8)


def test_make_initial_rejects_bad_parameters():
    grid = make_grid(16)
    with pytest.raises(InvalidParameterError):
        make_initial(InitialData(generator="uniform", amplitude=-1.0), grid)
    with pytest.raises(InvalidParameterError):
        make_initial(InitialData(generator="shear_mode", mode=9), grid)
    # sigma below four grid spacings
    with pytest.raises(InvalidParameterError):
        make_initial(InitialData(generator="gaussian_bump_density", sigma=0.5), grid)


def test_initial_data_forbids_unknown_fields():
    with pytest.raises(ValidationError):
        InitialData(generator="uniform", colour="red")
    with pytest.raises(ValidationError):
        InitialData(generator="vortex_ring")


def test_state_shape_checks():
    grid = make_grid(8)
    with pytest.raises(GridMismatchError):
        FluidState(grid=grid, time=0.0, rho=np.ones((4, 4, 4)),
                   w=np.zeros((3, *grid.shape)), u=np.zeros((3, *grid.shape)))
    with pytest.raises(GridMismatchError):
        FluidState(grid=grid, time=0.0, rho=np.ones(grid.shape),
                   w=np.zeros(grid.shape), u=np.zeros((3, *grid.shape)))


def test_validate_reports_negative_density():
    grid = make_grid(8)
    rho = np.ones(grid.shape)
    rho[1, 2, 3] = -0.5
    report = validate(_zero_state(grid, rho=rho))
    assert report.kinds() == ["negative-density"]
    assert report.violations[0].location == (1, 2, 3)
    assert report.violations[0].magnitude == pytest.approx(0.5)


def test_validate_reports_divergence():
    grid = make_grid(16)
    x1 = np.broadcast_to(grid.coordinates()[0], grid.shape)
    u = np.zeros((3, *grid.shape))
    u[0] = np.sin(2 * np.pi * x1 / grid.box_len)
    assert "divergence" in validate(_zero_state(grid, u=u)).kinds()


def test_validate_reports_non_finite():
    grid = make_grid(8)
    w = np.zeros((3, *grid.shape))
    w[2, 0, 0, 0] = np.nan
    assert validate(_zero_state(grid, w=w)).kinds() == ["non-finite-w"]


def test_initial_diagnostics_uniform_density():
    grid = make_grid(8)
    state = make_initial(InitialData(generator="uniform", amplitude=2.0), grid)
    diag = initial_diagnostics(state)
    assert diag["rho_l1"] == pytest.approx(2.0 * grid.volume)
    assert diag["rho_inf"] == pytest.approx(2.0)
    assert diag["u_h1"] == 0.0
    assert diag["w_lipschitz"] == 0.0
