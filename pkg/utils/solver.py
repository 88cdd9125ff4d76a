"""
Time integration of the Euler / Navier-Stokes coupling

Advection and drag are explicit and dealiased; diffusion of u is taken
exactly per mode by an integrating factor (Lawson Runge-Kutta). The
nonconservative form advances (rho, w, u); the conservative form advances
(rho, rho*w, u) and recovers w by division.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

import config
from utils.errors import (
    CFLViolationError,
    DensityFloorError,
    InvalidParameterError,
    NonFiniteStateError,
)
from utils.spectral_core import (
    Grid,
    SpectralField,
    dealias,
    divergence,
    forward,
    inverse,
    jacobian,
    laplacian,
    leray_project,
    sup_norm,
)
from utils.state_model import FluidState

VARIANTS = ("nonconservative", "conservative")

Coeffs = Tuple[np.ndarray, np.ndarray, np.ndarray]


@dataclass(frozen=True)
class StepScheme:
    """Discretization choices, fixed for the whole run"""

    variant: str = "nonconservative"
    order: int = 2
    integrating_factor: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise InvalidParameterError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.order not in (2, 4):
            raise InvalidParameterError(f"order must be 2 or 4, got {self.order}")


# ---------------------------------------------------------------------------
# Right-hand sides on raw coefficient arrays
# ---------------------------------------------------------------------------

def _physical(grid: Grid, coeffs: np.ndarray) -> np.ndarray:
    return inverse(SpectralField(grid, coeffs))


def _advect(a: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """(a . grad) v from samples of a and of d_j v_i"""
    return np.einsum("j...,ij...->i...", a, grad_v)


def _dealiased(grid: Grid, samples: np.ndarray) -> np.ndarray:
    return dealias(forward(samples, grid)).coeffs


def _density_flux_tendency(grid: Grid, rho: np.ndarray, w: np.ndarray) -> np.ndarray:
    flux = SpectralField(grid, _dealiased(grid, rho[None] * w))
    return -divergence(flux).coeffs


def _euler_tendency(grid: Grid, w_hat: np.ndarray, u_hat: np.ndarray, w: np.ndarray) -> np.ndarray:
    grad_w = jacobian(SpectralField(grid, w_hat))
    return -_dealiased(grid, _advect(w, grad_w)) + (u_hat - w_hat)


def _ns_forcing(grid: Grid, u_hat: np.ndarray, u: np.ndarray, drag: np.ndarray) -> np.ndarray:
    """Unprojected N = -(u.grad)u + drag, both dealiased"""
    grad_u = jacobian(SpectralField(grid, u_hat))
    return -_dealiased(grid, _advect(u, grad_u)) + _dealiased(grid, drag)


def _pressure_from_forcing(grid: Grid, forcing: np.ndarray) -> np.ndarray:
    kx, ky, kz = grid.kd_axes
    kd2 = grid.kd2
    inv = np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
    k_dot_n = kx * forcing[0] + ky * forcing[1] + kz * forcing[2]
    return (-1j * k_dot_n * inv)[None]


# ---------------------------------------------------------------------------
# Public tendencies of a state
# ---------------------------------------------------------------------------

def rhs_density(state: FluidState) -> SpectralField:
    """-div(rho w) with the product dealiased"""
    return SpectralField(state.grid, _density_flux_tendency(state.grid, state.rho, state.w))


def rhs_euler_velocity(state: FluidState) -> SpectralField:
    """-(w.grad)w + (u - w)"""
    return SpectralField(
        state.grid,
        _euler_tendency(state.grid, state.w_hat.coeffs, state.u_hat.coeffs, state.w),
    )


def rhs_ns_velocity(state: FluidState) -> Tuple[SpectralField, SpectralField]:
    """
    Projected NS tendency without diffusion, and the zero-mean pressure

    Returns (Leray(-(u.grad)u + rho(w - u)), P) where P solves
    -Laplacian P = div((u.grad)u - rho(w - u)).
    """
    grid = state.grid
    forcing = _ns_forcing(grid, state.u_hat.coeffs, state.u, state.rho[None] * (state.w - state.u))
    tendency = leray_project(SpectralField(grid, forcing))
    return tendency, SpectralField(grid, _pressure_from_forcing(grid, forcing))


def pressure(state: FluidState) -> SpectralField:
    return rhs_ns_velocity(state)[1]


def time_derivatives(state: FluidState) -> Tuple[SpectralField, SpectralField]:
    """(u_t, w_t) from the equations, diffusion included in u_t"""
    tendency, _ = rhs_ns_velocity(state)
    return laplacian(state.u_hat) + tendency, rhs_euler_velocity(state)


# ---------------------------------------------------------------------------
# Lawson integrating-factor Runge-Kutta
# ---------------------------------------------------------------------------

Factors = Tuple[Optional[np.ndarray], ...]


def _scale(factors: Factors, q: Sequence[np.ndarray]) -> Coeffs:
    return tuple(x if f is None else f * x for f, x in zip(factors, q))


def _axpy(q: Sequence[np.ndarray], h: float, k: Sequence[np.ndarray]) -> Coeffs:
    return tuple(x + h * y for x, y in zip(q, k))


def _lawson_step(
    q: Coeffs,
    rhs: Callable[[Coeffs], Coeffs],
    full: Factors,
    half: Factors,
    dt: float,
    order: int,
) -> Coeffs:
    if order == 2:
        k1 = rhs(q)
        a = _scale(half, _axpy(q, dt / 2, k1))
        k2 = rhs(a)
        return _axpy(_scale(full, q), dt, _scale(half, k2))

    k1 = rhs(q)
    a = _scale(half, _axpy(q, dt / 2, k1))
    k2 = rhs(a)
    b = _axpy(_scale(half, q), dt / 2, k2)
    k3 = rhs(b)
    c = _axpy(_scale(full, q), dt, _scale(half, k3))
    k4 = rhs(c)
    combo = tuple(
        e1 + 2 * (e2 + e3) + e4
        for e1, e2, e3, e4 in zip(_scale(full, k1), _scale(half, k2), _scale(half, k3), k4)
    )
    return _axpy(_scale(full, q), dt / 6, combo)


def _diffusion_factors(grid: Grid, dt: float, enabled: bool) -> Tuple[Factors, Factors]:
    if not enabled:
        return (None, None, None), (None, None, None)
    return (None, None, np.exp(-grid.k2 * dt)), (None, None, np.exp(-grid.k2 * dt / 2))


def _project(grid: Grid, u_hat: np.ndarray) -> np.ndarray:
    return leray_project(SpectralField(grid, u_hat)).coeffs


def check_cfl(state: FluidState, dt: float, cfl: float = config.CFL_NUMBER):
    """Refuse dt > cfl * h / max(|u|, |w|)"""
    if not dt > 0:
        raise InvalidParameterError(f"dt must be positive, got {dt}")
    speed = max(sup_norm(state.u), sup_norm(state.w))
    if speed > 0 and dt > cfl * state.grid.spacing / speed:
        raise CFLViolationError(
            f"dt={dt:.3e} exceeds {cfl} * h / max|v| = {cfl * state.grid.spacing / speed:.3e} "
            f"at t={state.time:.4g} (max|v|={speed:.3e})"
        )


def _check_finite(arrays: Sequence[np.ndarray], names: Sequence[str], time: float):
    for name, arr in zip(names, arrays):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteStateError(f"{name} became non-finite while stepping from t={time:.6g}")


def step(
    state: FluidState,
    dt: float,
    scheme: StepScheme = StepScheme(),
    cfl: float = config.CFL_NUMBER,
    rho_floor: Optional[float] = None,
) -> FluidState:
    """Advance one step of size dt"""
    check_cfl(state, dt, cfl)
    if scheme.variant == "conservative":
        return step_conservative(state, dt, scheme, rho_floor=rho_floor)

    grid = state.grid

    def rhs(q: Coeffs) -> Coeffs:
        rho_hat, w_hat, u_hat = q
        u_hat = _project(grid, u_hat)
        rho, w, u = _physical(grid, rho_hat), _physical(grid, w_hat), _physical(grid, u_hat)
        d_rho = _density_flux_tendency(grid, rho, w)
        d_w = _euler_tendency(grid, w_hat, u_hat, w)
        d_u = _project(grid, _ns_forcing(grid, u_hat, u, rho[None] * (w - u)))
        if not scheme.integrating_factor:
            d_u = d_u + laplacian(SpectralField(grid, u_hat)).coeffs
        return d_rho, d_w, d_u

    full, half = _diffusion_factors(grid, dt, scheme.integrating_factor)
    q0 = (state.rho_hat.coeffs, state.w_hat.coeffs, state.u_hat.coeffs)
    rho_hat, w_hat, u_hat = _lawson_step(q0, rhs, full, half, dt, scheme.order)
    u_hat = _project(grid, u_hat)
    _check_finite((rho_hat, w_hat, u_hat), ("rho", "w", "u"), state.time)

    return FluidState(
        grid=grid,
        time=state.time + dt,
        rho=_physical(grid, rho_hat),
        w=_physical(grid, w_hat),
        u=_physical(grid, u_hat),
    )


def _check_floor(rho: np.ndarray, floor: float, time: float):
    rho_min = float(rho.min())
    if rho_min < floor or rho_min <= 0:
        raise DensityFloorError(
            f"min rho={rho_min:.3e} below floor {floor:.3e} near t={time:.6g}; "
            "the momentum form cannot recover w"
        )


def _recover_velocity(rho: np.ndarray, momentum: np.ndarray, floor: float, time: float) -> np.ndarray:
    _check_floor(rho, floor, time)
    return momentum / rho[None]


def step_conservative(
    state: FluidState,
    dt: float,
    scheme: StepScheme = StepScheme(variant="conservative"),
    rho_floor: Optional[float] = None,
) -> FluidState:
    """
    Advance (rho, m = rho w, u) one step in momentum form

    rho_floor defaults to RHO_FLOOR_FACTOR * max(rho) of the given state.
    """
    grid = state.grid
    floor = config.RHO_FLOOR_FACTOR * float(state.rho.max()) if rho_floor is None else rho_floor
    _check_floor(state.rho, floor, state.time)

    def rhs(q: Coeffs) -> Coeffs:
        rho_hat, m_hat, u_hat = q
        u_hat = _project(grid, u_hat)
        rho, m, u = _physical(grid, rho_hat), _physical(grid, m_hat), _physical(grid, u_hat)
        w = _recover_velocity(rho, m, floor, state.time)

        d_rho = -divergence(SpectralField(grid, m_hat)).coeffs
        # (div(m w^T))_i = sum_j d_j (m_i w_j)
        flux = np.stack([_dealiased(grid, m[i][None] * w) for i in range(3)])
        kd = grid.kd_axes
        div_flux = sum(1j * kd[j] * flux[:, j] for j in range(3))
        rho_u = _dealiased(grid, rho[None] * u)
        d_m = -div_flux + rho_u - m_hat
        d_u = _project(grid, _ns_forcing(grid, u_hat, u, m - rho[None] * u))
        if not scheme.integrating_factor:
            d_u = d_u + laplacian(SpectralField(grid, u_hat)).coeffs
        return d_rho, d_m, d_u

    full, half = _diffusion_factors(grid, dt, scheme.integrating_factor)
    m0 = forward(state.rho[None] * state.w, grid).coeffs
    q0 = (state.rho_hat.coeffs, m0, state.u_hat.coeffs)
    rho_hat, m_hat, u_hat = _lawson_step(q0, rhs, full, half, dt, scheme.order)
    u_hat = _project(grid, u_hat)
    _check_finite((rho_hat, m_hat, u_hat), ("rho", "rho*w", "u"), state.time)

    rho = _physical(grid, rho_hat)
    w = _recover_velocity(rho, _physical(grid, m_hat), floor, state.time + dt)
    logger.trace(f"conservative step to t={state.time + dt:.6g}, min rho={rho.min():.3e}")
    return FluidState(grid=grid, time=state.time + dt, rho=rho, w=w, u=_physical(grid, u_hat))
