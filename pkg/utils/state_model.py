"""
Fluid state, initial-data generators and state validation
"""
import dataclasses
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

import config
from utils.errors import GridMismatchError, InvalidParameterError
from utils.spectral_core import (
    Grid,
    SpectralField,
    dealias,
    divergence,
    forward,
    gradient,
    inverse,
    jacobian,
    leray_project,
    pointwise_magnitude,
    random_bandlimited,
)

GENERATORS = (
    "gaussian_bump_density",
    "projected_bandlimited_noise",
    "shear_mode",
    "taylor_green_like",
    "uniform",
)

Vector3 = Tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class FluidState:
    """
    Snapshot (t, rho, w, u) of the coupled system on one grid

    The physical samples are canonical; spectral coefficients and the
    pressure are derived on first access and cached.
    """

    grid: Grid
    time: float
    rho: np.ndarray
    w: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        if self.rho.shape != self.grid.shape:
            raise GridMismatchError(f"rho has shape {self.rho.shape}, expected {self.grid.shape}")
        for name in ("w", "u"):
            arr = getattr(self, name)
            if arr.shape != (3, *self.grid.shape):
                raise GridMismatchError(f"{name} has shape {arr.shape}, expected (3, {self.grid.n}, ...)")
        if self.time < 0:
            raise InvalidParameterError(f"state time must be >= 0, got {self.time}")

    @cached_property
    def rho_hat(self) -> SpectralField:
        return forward(self.rho, self.grid)

    @cached_property
    def w_hat(self) -> SpectralField:
        return forward(self.w, self.grid)

    @cached_property
    def u_hat(self) -> SpectralField:
        return forward(self.u, self.grid)

    @cached_property
    def grad_u(self) -> np.ndarray:
        return jacobian(self.u_hat)

    @cached_property
    def grad_w(self) -> np.ndarray:
        return jacobian(self.w_hat)

    @cached_property
    def pressure(self) -> np.ndarray:
        """Zero-mean pressure from the Stokes relation"""
        from utils.solver import pressure

        return inverse(pressure(self))

    def replace(self, **changes) -> "FluidState":
        return dataclasses.replace(self, **changes)


def lipschitz_norm(samples: np.ndarray, grid: Grid) -> float:
    """Grid surrogate of the C^{0,1} norm: ||v||_inf + ||grad v||_inf"""
    spec = forward(samples, grid)
    if spec.is_vector:
        grad = jacobian(spec).reshape(9, *grid.shape)
    else:
        grad = inverse(gradient(spec))
    return float(pointwise_magnitude(samples).max() + pointwise_magnitude(grad).max())


def initial_diagnostics(state: FluidState) -> Dict[str, float]:
    """The data-size quantities a smallness condition is stated in"""
    grid = state.grid
    rho_pos = np.clip(state.rho, 0.0, None)
    u_l2sq = state.u_hat.l2_squared()
    grad_u_l2sq = float(np.sum(state.grad_u ** 2) * grid.cell_volume)
    return {
        "rho_l1": float(np.sum(np.abs(state.rho)) * grid.cell_volume),
        "rho_inf": float(np.max(np.abs(state.rho))),
        "u_h1": float(np.sqrt(u_l2sq + grad_u_l2sq)),
        "sqrt_rho_w_l2": float(np.sqrt(np.sum(rho_pos * state.w ** 2) * grid.cell_volume)),
        "w_lipschitz": lipschitz_norm(state.w, grid),
    }


class InitialData(BaseModel):
    """Generator name plus parameters; every generator is deterministic in `seed`"""

    model_config = ConfigDict(extra="forbid")

    generator: Literal[
        "gaussian_bump_density",
        "projected_bandlimited_noise",
        "shear_mode",
        "taylor_green_like",
        "uniform",
    ]
    amplitude: float = 1.0
    sigma: float = 2.0
    seed: int = 0
    u_amplitude: float = 0.0
    w_amplitude: float = 0.0
    rho_floor: float = 0.0
    u_mean: Vector3 = (0.0, 0.0, 0.0)
    w_mean: Vector3 = (0.0, 0.0, 0.0)
    mode: int = 1
    center: Optional[Vector3] = None


def _periodic_offsets(grid: Grid, center: Vector3) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-image displacement x - center on the torus"""
    half = grid.box_len / 2
    return tuple(
        np.mod(x - c + half, grid.box_len) - half
        for x, c in zip(grid.coordinates(), center)
    )


def _gaussian(grid: Grid, center: Vector3, sigma: float) -> np.ndarray:
    dx, dy, dz = _periodic_offsets(grid, center)
    return np.exp(-(dx ** 2 + dy ** 2 + dz ** 2) / (2 * sigma ** 2))


def _normalized(samples: np.ndarray, peak: float) -> np.ndarray:
    top = float(pointwise_magnitude(samples).max())
    if top == 0.0 or peak == 0.0:
        return np.zeros_like(samples)
    return samples * (peak / top)


def _uniform_vector(grid: Grid, mean: Vector3) -> np.ndarray:
    return np.broadcast_to(np.asarray(mean, dtype=np.float64)[:, None, None, None], (3, *grid.shape)).copy()


def _gaussian_bump(spec: InitialData, grid: Grid):
    center = spec.center or (grid.box_len / 2,) * 3
    bump = _gaussian(grid, center, spec.sigma)
    rho = spec.amplitude * bump + spec.rho_floor

    # swirl around the bump: (d2 G, -d1 G, 0) is divergence-free
    grad = inverse(gradient(forward(bump, grid)))
    swirl = np.stack([grad[1], -grad[0], np.zeros(grid.shape)])
    u = _normalized(swirl, spec.u_amplitude) + _uniform_vector(grid, spec.u_mean)

    wide = _gaussian(grid, center, 2 * spec.sigma)
    w = _uniform_vector(grid, spec.w_mean)
    w[0] += spec.w_amplitude * wide
    return rho, w, u


def _bandlimited_noise(spec: InitialData, grid: Grid):
    band = max(1, min(grid.n // 3, int(grid.box_len / (2 * np.pi * spec.sigma))))
    logger.debug(f"band-limited noise: |m| <= {band} (sigma={spec.sigma})")

    s = inverse(random_bandlimited(grid, band, spec.seed, components=1))
    rho = spec.rho_floor + spec.amplitude * (1.0 + 0.5 * _normalized(s, 1.0))

    u_field = leray_project(random_bandlimited(grid, band, spec.seed + 1, components=3))
    u = _normalized(inverse(u_field), spec.u_amplitude) + _uniform_vector(grid, spec.u_mean)

    w_field = random_bandlimited(grid, band, spec.seed + 2, components=3)
    w = _normalized(inverse(w_field), spec.w_amplitude) + _uniform_vector(grid, spec.w_mean)
    return rho, w, u


def _shear(spec: InitialData, grid: Grid):
    _, x2, _ = grid.coordinates()
    profile = np.broadcast_to(np.sin(2 * np.pi * spec.mode * x2 / grid.box_len), grid.shape)
    rho = np.full(grid.shape, spec.amplitude + spec.rho_floor)

    u = _uniform_vector(grid, spec.u_mean)
    u[0] += spec.u_amplitude * profile
    w = _uniform_vector(grid, spec.w_mean)
    w[0] += spec.w_amplitude * profile
    return rho, w, u


def _taylor_green(spec: InitialData, grid: Grid):
    kappa = 2 * np.pi * spec.mode / grid.box_len
    x1, x2, x3 = grid.coordinates()
    cell = np.stack([
        np.broadcast_to(np.sin(kappa * x1) * np.cos(kappa * x2) * np.cos(kappa * x3), grid.shape),
        np.broadcast_to(-np.cos(kappa * x1) * np.sin(kappa * x2) * np.cos(kappa * x3), grid.shape),
        np.zeros(grid.shape),
    ])
    ccc = np.broadcast_to(np.cos(kappa * x1) * np.cos(kappa * x2) * np.cos(kappa * x3), grid.shape)
    rho = spec.rho_floor + spec.amplitude * (1.0 + 0.5 * ccc)

    u = spec.u_amplitude * cell + _uniform_vector(grid, spec.u_mean)
    w = spec.w_amplitude * cell + _uniform_vector(grid, spec.w_mean)
    return rho, w, u


def _uniform(spec: InitialData, grid: Grid):
    rho = np.full(grid.shape, spec.amplitude + spec.rho_floor)
    return rho, _uniform_vector(grid, spec.w_mean), _uniform_vector(grid, spec.u_mean)


_BUILDERS = {
    "gaussian_bump_density": _gaussian_bump,
    "projected_bandlimited_noise": _bandlimited_noise,
    "shear_mode": _shear,
    "taylor_green_like": _taylor_green,
    "uniform": _uniform,
}

_USES_SIGMA = ("gaussian_bump_density", "projected_bandlimited_noise")


def make_initial(spec: InitialData, grid: Grid) -> FluidState:
    """
    Build the t = 0 state for a generator spec

    u is dealiased and Leray-projected, w is dealiased; rho is left as sampled
    so it stays nonnegative.
    """
    if spec.amplitude < 0:
        raise InvalidParameterError(f"density amplitude must be >= 0, got {spec.amplitude}")
    if spec.rho_floor < 0:
        raise InvalidParameterError(f"rho_floor must be >= 0, got {spec.rho_floor}")
    if spec.mode < 1 or spec.mode > grid.n // 3:
        raise InvalidParameterError(f"mode must lie in [1, {grid.n // 3}], got {spec.mode}")
    if spec.generator in _USES_SIGMA and spec.sigma < config.MIN_SIGMA_CELLS * grid.spacing:
        raise InvalidParameterError(
            f"sigma={spec.sigma:.4g} is under-resolved: needs >= {config.MIN_SIGMA_CELLS} "
            f"grid spacings ({config.MIN_SIGMA_CELLS * grid.spacing:.4g})"
        )

    rho, w, u = _BUILDERS[spec.generator](spec, grid)
    u = inverse(leray_project(dealias(forward(u, grid))))
    w = inverse(dealias(forward(w, grid)))

    state = FluidState(grid=grid, time=0.0, rho=np.ascontiguousarray(rho), w=w, u=u)
    diagnostics = initial_diagnostics(state)
    logger.info(
        f"Initial data '{spec.generator}' on {grid.n}^3: "
        + ", ".join(f"{key}={value:.4e}" for key, value in diagnostics.items())
    )
    return state


@dataclass
class Violation:
    kind: str
    magnitude: float
    location: Optional[Tuple[int, ...]] = None


@dataclass
class ValidationReport:
    """Invariant violations found in a state plus the Lipschitz size of w"""

    violations: List[Violation] = field(default_factory=list)
    w_lipschitz: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> List[str]:
        return [v.kind for v in self.violations]


def validate(state: FluidState) -> ValidationReport:
    """Report every invariant violation; never raises and never mutates the state"""
    report = ValidationReport()

    for name in ("rho", "w", "u"):
        arr = getattr(state, name)
        bad = ~np.isfinite(arr)
        if bad.any():
            where = tuple(int(i) for i in np.argwhere(bad)[0])
            report.violations.append(Violation(f"non-finite-{name}", float(bad.sum()), where))
    if not report.ok:
        return report

    rho_scale = float(np.max(np.abs(state.rho)))
    floor = -config.NEGATIVE_RHO_FACTOR * rho_scale
    rho_min = float(state.rho.min())
    if rho_min < floor:
        where = tuple(int(i) for i in np.unravel_index(np.argmin(state.rho), state.rho.shape))
        report.violations.append(Violation("negative-density", -rho_min, where))

    div_u = inverse(divergence(state.u_hat))
    div_max = float(np.max(np.abs(div_u)))
    grad_scale = float(pointwise_magnitude(state.grad_u.reshape(9, *state.grid.shape)).max())
    # near-constant u: measure against the lowest wavenumber times |u|
    k_min = 2 * np.pi / state.grid.box_len
    grad_scale = max(grad_scale, k_min * float(pointwise_magnitude(state.u).max()), np.finfo(float).tiny)
    if div_max > config.DIVERGENCE_TOLERANCE * grad_scale:
        where = tuple(int(i) for i in np.unravel_index(np.argmax(np.abs(div_u)), div_u.shape))
        report.violations.append(Violation("divergence", div_max, where))

    report.w_lipschitz = lipschitz_norm(state.w, state.grid)
    if report.violations:
        logger.warning(f"State at t={state.time:.4g} has violations: {report.kinds()}")
    return report
