"""
Tests for characteristic tracing and the flow-map density
"""
import numpy as np
import pytest
from scipy.integrate import solve_ivp

from utils.density_transport import VelocityHistory, density_from_flow, trace_characteristic
from utils.errors import HistoryRangeError, InvalidParameterError
from utils.run_config import parse_config
from utils.runner import run
from utils.spectral_core import make_grid

TIMES = np.linspace(0.0, 1.0, 21)


def _analytic_w(t, x1, x2, x3):
    """Linear in time, so snapshots interpolate it exactly in t"""
    a = 1.0 + 0.5 * t
    return a * np.stack([
        0.3 * np.sin(x2) + 0.2 * np.cos(x1),
        0.2 * np.sin(x3) + 0.0 * x1,
        0.25 * np.cos(x1) + 0.0 * x2,
    ])


def _analytic_div(t, x1):
    return -(1.0 + 0.5 * t) * 0.2 * np.sin(x1)


def _history(grid):
    x1, x2, x3 = (np.broadcast_to(c, grid.shape) for c in grid.coordinates())
    return VelocityHistory.from_snapshots(grid, TIMES, [_analytic_w(t, x1, x2, x3) for t in TIMES])


def test_characteristics_match_ode_reference():
    grid = make_grid(32, 2 * np.pi)
    history = _history(grid)
    start = np.array([[1.0, 4.0, 2.5], [0.3, 5.9, 3.1], [2.2, 0.1, 6.0]])

    foot, integral = trace_characteristic(start, history, 1.0, substeps=8)

    def backward(s, y):
        x = y[:3]
        vel = _analytic_w(1.0 - s, x[0], x[1], x[2])
        return np.concatenate([-vel, [_analytic_div(1.0 - s, x[0])]])

    for p in range(start.shape[1]):
        ref = solve_ivp(backward, (0.0, 1.0), np.concatenate([start[:, p], [0.0]]),
                        rtol=1e-11, atol=1e-12)
        y = ref.y[:, -1]
        gap = np.mod(foot[:, p] - y[:3] + np.pi, 2 * np.pi) - np.pi
        assert np.max(np.abs(gap)) < 1e-3
        assert integral[p] == pytest.approx(y[3], abs=1e-3)


def test_single_point_tracing_returns_vectors():
    grid = make_grid(16, 2 * np.pi)
    foot, integral = trace_characteristic(np.array([1.0, 1.0, 1.0]), _history(grid), 0.5)
    assert foot.shape == (3,)
    assert np.isscalar(integral) or integral.shape == ()


def test_uniform_drift_shifts_density():
    grid = make_grid(32, 2 * np.pi)
    drift = np.array([0.4, -0.3, 0.2])
    ws = [np.broadcast_to(drift[:, None, None, None], (3, *grid.shape)).copy() for _ in TIMES]
    history = VelocityHistory.from_snapshots(grid, TIMES, ws)

    x1, x2, x3 = grid.coordinates()
    rho0 = np.exp(0.5 * (np.cos(x1) + np.cos(x2) + np.cos(x3))) * np.ones(grid.shape)
    rho = density_from_flow(rho0, history, 1.0)

    exact = np.exp(0.5 * (np.cos(x1 - drift[0]) + np.cos(x2 - drift[1]) + np.cos(x3 - drift[2])))
    assert np.max(np.abs(rho - exact)) < 1e-3 * np.max(exact)


def test_flow_map_preserves_sign_exactly():
    grid = make_grid(16, 2 * np.pi)
    rho0 = np.zeros(grid.shape)
    rho0[4:8, 4:8, 4:8] = 1.0
    rho = density_from_flow(rho0, _history(grid), 1.0, substeps=2)
    assert rho.min() >= 0.0
    assert rho.max() > 0.0


def test_history_validation():
    grid = make_grid(8, 2 * np.pi)
    w = np.zeros((3, *grid.shape))
    with pytest.raises(InvalidParameterError):
        VelocityHistory.from_snapshots(grid, [0.0, 0.1, 0.3], [w, w, w])
    with pytest.raises(InvalidParameterError):
        VelocityHistory.from_snapshots(grid, [0.0, 0.1], [w])
    history = VelocityHistory.from_snapshots(grid, [0.0, 0.1, 0.2], [w, w, w])
    with pytest.raises(HistoryRangeError):
        trace_characteristic(np.zeros(3), history, 0.5)
    with pytest.raises(HistoryRangeError):
        trace_characteristic(np.zeros(3), history, 0.1, t_stop=0.2)


SMALL_DATA = """
n = {n}
dt = {dt}
t_end = 1.0
cadence = 1
init.generator = taylor_green_like
init.u_amplitude = 0.2
init.w_amplitude = 0.3
output.keep_trajectory = true
"""


def _flow_discrepancy(n, dt):
    trajectory, _ = run(parse_config(SMALL_DATA.format(n=n, dt=dt)), write_files=False)
    history = VelocityHistory.from_states(trajectory.states)
    final = trajectory.final
    rho_flow = density_from_flow(trajectory.states[0].rho, history, final.time)
    assert rho_flow.min() >= 0.0
    return float(np.sqrt(np.sum((rho_flow - final.rho) ** 2) * final.grid.cell_volume))


def test_flow_map_converges_to_spectral_density():
    coarse = _flow_discrepancy(16, 0.1)
    fine = _flow_discrepancy(32, 0.05)
    assert fine * 3 <= coarse


def test_divergence_free_shear_keeps_density_bounds():
    grid = make_grid(32, 2 * np.pi)
    x1, x2, _ = (np.broadcast_to(c, grid.shape) for c in grid.coordinates())
    w = np.zeros((3, *grid.shape))
    w[0] = 0.5 * np.sin(x2)
    times = np.linspace(0.0, 1.0, 11)
    history = VelocityHistory.from_snapshots(grid, times, [w] * len(times))

    rho0 = np.exp(0.5 * np.cos(x1))
    rho = density_from_flow(rho0, history, 1.0)
    assert rho.max() == pytest.approx(rho0.max(), abs=1e-4 * rho0.max())
    assert rho.min() == pytest.approx(rho0.min(), abs=1e-4 * rho0.max())


def test_tracing_composes_over_intermediate_times():
    grid = make_grid(16, 2 * np.pi)
    history = _history(grid)
    start = np.array([[1.0, 4.0, 2.5], [0.3, 5.9, 3.1], [2.2, 0.1, 6.0]])

    foot, integral = trace_characteristic(start, history, 1.0)
    middle, first = trace_characteristic(start, history, 1.0, t_stop=0.5)
    end, second = trace_characteristic(middle, history, 0.5)

    gap = np.mod(end - foot + np.pi, 2 * np.pi) - np.pi
    assert np.max(np.abs(gap)) < 1e-10
    np.testing.assert_allclose(first + second, integral, atol=1e-10)
