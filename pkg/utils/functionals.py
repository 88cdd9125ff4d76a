"""
Norms, energy/dissipation functionals and the inequality harness
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from scipy.optimize import minimize_scalar

import config
from utils.errors import InvalidParameterError
from utils.ledger import LEDGER_COLUMNS
from utils.solver import pressure, time_derivatives
from utils.spectral_core import (
    Grid,
    SpectralField,
    block_energies,
    forward,
    integrate,
    inverse,
    jacobian,
    gradient,
    make_grid,
    pointwise_magnitude,
    random_bandlimited,
    shell_spectrum,
    warn_if_mean,
)
from utils.state_model import FluidState, initial_diagnostics

INEQUALITIES = ("GN", "interpo", "L31", "embed", "embed0")


# ========== PLAIN NORMS ==========

def mass(rho: np.ndarray, grid: Grid) -> float:
    """Integral of rho over the box"""
    return integrate(rho, grid)


def _nonnegative_density(state: FluidState) -> np.ndarray:
    rho_min = float(state.rho.min())
    if rho_min < 0:
        logger.debug(f"clamping rho (min {rho_min:.3e}) to 0 for weighted norms at t={state.time:.4g}")
        return np.clip(state.rho, 0.0, None)
    return state.rho


def _weighted_l2sq(rho: np.ndarray, v: np.ndarray, grid: Grid) -> float:
    """int rho |v|^2"""
    return float(np.sum(rho * np.sum(v ** 2, axis=0)) * grid.cell_volume)


def _gradient_l2sq(spec: SpectralField) -> float:
    """||grad z||^2 (Frobenius for vectors) via Parseval"""
    return float(spec.grid.volume * np.sum(spec.grid.kd2 * np.abs(spec.coeffs) ** 2))


def _hessian_l2sq(spec: SpectralField) -> float:
    return float(spec.grid.volume * np.sum(spec.grid.kd2 ** 2 * np.abs(spec.coeffs) ** 2))


def _gradient_magnitude(samples: np.ndarray, grid: Grid) -> np.ndarray:
    """Pointwise |grad z| (Frobenius norm of the Jacobian for vectors)"""
    spec = forward(samples, grid)
    if spec.is_vector:
        return pointwise_magnitude(jacobian(spec).reshape(9, *grid.shape))
    return pointwise_magnitude(inverse(gradient(spec)))


def _as_spectral(z: Union[SpectralField, np.ndarray], grid: Optional[Grid]) -> SpectralField:
    if isinstance(z, SpectralField):
        return z
    if grid is None:
        raise InvalidParameterError("physical samples need a grid")
    return forward(z, grid)


# ========== ENERGY FUNCTIONALS ==========

def energy_E0(state: FluidState) -> Tuple[float, float]:
    """E0 = (||sqrt(rho) w||^2 + ||u||^2)/2 and D0 = ||sqrt(rho)(w - u)||^2 + ||grad u||^2"""
    grid = state.grid
    rho = _nonnegative_density(state)
    e0 = 0.5 * (_weighted_l2sq(rho, state.w, grid) + state.u_hat.l2_squared())
    d0 = _weighted_l2sq(rho, state.w - state.u, grid) + _gradient_l2sq(state.u_hat)
    return e0, d0


def friction_radius(rho0_inf: float) -> float:
    """R = max(1, 2 ||rho0||_inf)"""
    return max(1.0, 2.0 * rho0_inf)


def energy_E1(state: FluidState, rho0_inf: Optional[float] = None) -> Tuple[float, float, float]:
    """
    E1 = ||sqrt(rho)(w - u)||^2 + ||grad u||^2
    D1 = ||sqrt(rho)(w - u)||^2 + ||u_t||^2
    D1_tilde = D1/2 + ||grad^2 u||^2/(24R) + ||grad P||^2/(12R)

    R uses the initial density bound when given, else the current one.
    """
    grid = state.grid
    rho = _nonnegative_density(state)
    slip = _weighted_l2sq(rho, state.w - state.u, grid)
    e1 = slip + _gradient_l2sq(state.u_hat)

    u_t, _ = time_derivatives(state)
    d1 = slip + u_t.l2_squared()

    radius = friction_radius(float(np.max(np.abs(state.rho))) if rho0_inf is None else rho0_inf)
    grad_p_l2sq = _gradient_l2sq(pressure(state))
    d1_tilde = d1 / 2 + _hessian_l2sq(state.u_hat) / (24 * radius) + grad_p_l2sq / (12 * radius)
    return e1, d1, d1_tilde


def _second_order_terms(state: FluidState) -> Tuple[float, float, float]:
    grid = state.grid
    rho = _nonnegative_density(state)
    u_t_hat, w_t_hat = time_derivatives(state)
    u_t, w_t = inverse(u_t_hat), inverse(w_t_hat)
    wt_l2sq = _weighted_l2sq(rho, w_t, grid)
    e2 = u_t_hat.l2_squared() + wt_l2sq
    d2 = _gradient_l2sq(u_t_hat) + 2 * _weighted_l2sq(rho, u_t - w_t, grid)
    return e2, d2, wt_l2sq


def energy_E2(state: FluidState) -> Tuple[float, float]:
    """E2 = ||u_t||^2 + ||sqrt(rho) w_t||^2,  D2 = ||grad u_t||^2 + 2||sqrt(rho)(u_t - w_t)||^2"""
    e2, d2, _ = _second_order_terms(state)
    return e2, d2


# ========== BESOV / SOBOLEV / LORENTZ ==========

@dataclass
class HeatNormResult:
    value: float
    t_star: float
    resolution_limited: bool


def heat_norm_search(
    z: Union[SpectralField, np.ndarray],
    sigma: float,
    grid: Optional[Grid] = None,
    points_per_decade: int = config.HEAT_NORM_POINTS_PER_DECADE,
) -> HeatNormResult:
    """
    sup_t t^{sigma/2} ||e^{t Lap} z|| over t in [h^2, (L/2)^2]

    Log-spaced scan followed by a bounded Brent refinement around the best
    sample. Flags the result when the best t sits on either end of the range.
    """
    if not 0 < sigma <= 1.5:
        raise InvalidParameterError(f"sigma must lie in (0, 3/2], got {sigma}")
    spec = warn_if_mean(_as_spectral(z, grid), "besov_heat_norm")
    g = spec.grid
    t_min, t_max = g.spacing ** 2, (g.box_len / 2) ** 2
    if not t_max > t_min:
        raise InvalidParameterError(f"empty heat-norm t-grid [{t_min}, {t_max}]")

    k2, energy = shell_spectrum(spec)
    if energy.size == 0 or not np.any(energy > 0):
        return HeatNormResult(0.0, t_min, False)

    def profile(log_t: np.ndarray) -> np.ndarray:
        t = np.exp(np.atleast_1d(log_t))
        damped = np.exp(-2.0 * np.outer(t, k2)) @ energy
        return t ** (sigma / 2) * np.sqrt(damped)

    decades = math.log10(t_max / t_min)
    count = max(2, int(math.ceil(decades * points_per_decade)) + 1)
    log_ts = np.linspace(math.log(t_min), math.log(t_max), count)
    values = profile(log_ts)
    best = int(np.argmax(values))

    lo, hi = log_ts[max(best - 1, 0)], log_ts[min(best + 1, count - 1)]
    refined = minimize_scalar(lambda s: -profile(s)[0], bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-10})
    value, log_t_star = float(values[best]), float(log_ts[best])
    if refined.success and -refined.fun > value:
        value, log_t_star = float(-refined.fun), float(refined.x)

    limited = best in (0, count - 1)
    if limited:
        logger.warning(
            f"heat-norm supremum for sigma={sigma} sits at the edge of [{t_min:.3g}, {t_max:.3g}]; "
            "value is resolution-limited"
        )
    return HeatNormResult(value, math.exp(log_t_star), limited)


def besov_heat_norm(z: Union[SpectralField, np.ndarray], sigma: float, grid: Optional[Grid] = None) -> float:
    """Negative Besov norm B^{-sigma}_{2,inf} through the heat semigroup"""
    return heat_norm_search(z, sigma, grid).value


def besov_dyadic_norm(
    z: Union[SpectralField, np.ndarray],
    s: float,
    q: float,
    grid: Optional[Grid] = None,
) -> float:
    """l^q over dyadic blocks of 2^{js} ||block_j z||; q in {1, 2, inf}"""
    if q not in (1, 2, math.inf):
        raise InvalidParameterError(f"q must be 1, 2 or inf, got {q}")
    spec = warn_if_mean(_as_spectral(z, grid), "besov_dyadic_norm")
    blocks = block_energies(spec)
    terms = np.array([2.0 ** (j * s) * math.sqrt(e) for j, e in blocks.items()])
    if q == 1:
        return float(terms.sum())
    if q == 2:
        return float(math.sqrt(np.sum(terms ** 2)))
    return float(terms.max()) if terms.size else 0.0


def sobolev_neg1_norm(z: Union[SpectralField, np.ndarray], grid: Optional[Grid] = None) -> float:
    """Homogeneous H^{-1} norm, sqrt(L^3 sum_{k != 0} |z_hat|^2/|k|^2)"""
    spec = warn_if_mean(_as_spectral(z, grid), "sobolev_neg1_norm")
    k2 = spec.grid.k2
    weight = np.divide(1.0, k2, out=np.zeros_like(k2), where=k2 > 0)
    return float(math.sqrt(spec.grid.volume * np.sum(weight * np.abs(spec.coeffs) ** 2)))


def lorentz_31_norm(samples: np.ndarray, grid: Grid) -> float:
    """
    L^{3,1} norm from the decreasing rearrangement

    sum_i 3 (V_i^{1/3} - V_{i-1}^{1/3}) z*_i with V_i = i * cell volume.
    """
    p = config.LORENTZ_EXPONENT
    z_star = np.sort(pointwise_magnitude(samples).ravel())[::-1]
    volumes = np.arange(z_star.size + 1) * grid.cell_volume
    weights = p * np.diff(volumes ** (1.0 / p))
    return float(np.dot(weights, z_star))


def lp_norm(samples: np.ndarray, grid: Grid, p: float) -> float:
    mag = pointwise_magnitude(samples)
    if math.isinf(p):
        return float(mag.max())
    return float((np.sum(mag ** p) * grid.cell_volume) ** (1.0 / p))


# ========== INEQUALITY HARNESS ==========

@dataclass
class InequalityResult:
    """LHS/RHS of one inequality on one field; ratio is None when degenerate"""

    name: str
    lhs: float
    rhs: float
    ratio: Optional[float]
    degenerate: bool = False


def check_inequality(name: str, z: np.ndarray, grid: Grid, p: float = config.INEQUALITY_SWEEP["embed0_p"]) -> InequalityResult:
    """
    Ratio LHS/RHS for one of GN, interpo, L31, embed, embed0

      GN       ||z||_inf^2 / (||grad z|| ||grad^2 z||)
      interpo  ||z|| / (||grad z||^{3/5} ||z||_{B^{-3/2}_{2,inf}}^{2/5})
      L31      ||z||_{L^{3,1}}^2 / (||z|| ||grad z||)
      embed    ||z||_inf / || |grad z| ||_{L^{3,1}}
      embed0   ||z||_{B^{-s}_{2,inf}} / ||z||_{L^p},  s = 3/p - 3/2
    """
    if name not in INEQUALITIES:
        raise InvalidParameterError(f"unknown inequality {name!r}; expected one of {INEQUALITIES}")
    samples = np.asarray(z, dtype=np.float64)
    if not np.any(samples):
        logger.debug(f"{name}: zero field is degenerate")
        return InequalityResult(name, 0.0, 0.0, None, degenerate=True)

    spec = forward(samples, grid)
    if name == "GN":
        lhs = float(pointwise_magnitude(samples).max()) ** 2
        rhs = math.sqrt(_gradient_l2sq(spec) * _hessian_l2sq(spec))
    elif name == "interpo":
        lhs = spec.l2_norm()
        rhs = _gradient_l2sq(spec) ** 0.3 * besov_heat_norm(spec, 1.5) ** 0.4
    elif name == "L31":
        lhs = lorentz_31_norm(samples, grid) ** 2
        rhs = spec.l2_norm() * math.sqrt(_gradient_l2sq(spec))
    elif name == "embed":
        lhs = float(pointwise_magnitude(samples).max())
        rhs = lorentz_31_norm(_gradient_magnitude(samples, grid), grid)
    else:
        s = 3.0 / p - 1.5
        lhs = besov_heat_norm(spec, s)
        rhs = lp_norm(samples, grid, p)

    if rhs == 0.0:
        return InequalityResult(name, lhs, rhs, None, degenerate=True)
    return InequalityResult(name, lhs, rhs, lhs / rhs)


def _field_ratios(n: int, box_len: float, band: int, seed: int, names: Sequence[str], p: float) -> Dict[str, float]:
    grid = make_grid(n, box_len)
    samples = inverse(random_bandlimited(grid, band, seed))
    return {name: check_inequality(name, samples, grid, p).ratio for name in names}


def sweep(
    names: Sequence[str] = INEQUALITIES,
    resolutions: Sequence[int] = config.INEQUALITY_SWEEP["resolutions"],
    count: int = config.INEQUALITY_SWEEP["count"],
    band: int = config.INEQUALITY_SWEEP["band"],
    seed: int = config.INEQUALITY_SWEEP["seed"],
    box_len: float = config.DEFAULT_BOX_LEN,
    p: float = config.INEQUALITY_SWEEP["embed0_p"],
) -> pd.DataFrame:
    """
    Max and mean ratio per (resolution, inequality) over a random ensemble

    Field i uses seed + i on every resolution, so each resolution sees the
    same continuum fields.
    """
    records = []
    for n in resolutions:
        with ThreadPoolExecutor(max_workers=config.SWEEP_WORKERS) as pool:
            results = list(pool.map(
                lambda i: _field_ratios(n, box_len, band, seed + i, names, p),
                range(count),
            ))
        for name in names:
            ratios = np.array([r[name] for r in results if r[name] is not None])
            records.append({
                "n": n,
                "inequality": name,
                "max_ratio": float(ratios.max()) if ratios.size else float("nan"),
                "mean_ratio": float(ratios.mean()) if ratios.size else float("nan"),
                "count": int(ratios.size),
            })
        logger.info(f"Inequality sweep at {n}^3 done ({count} fields)")
    return pd.DataFrame.from_records(records)


def besov_equivalence_sweep(
    n: int = config.BESOV_SWEEP["n"],
    count: int = config.BESOV_SWEEP["count"],
    band: int = config.BESOV_SWEEP["band"],
    seed: int = config.BESOV_SWEEP["seed"],
    sigmas: Sequence[float] = (0.5, 1.5),
    box_len: float = config.DEFAULT_BOX_LEN,
) -> pd.DataFrame:
    """Heat-semigroup norm over dyadic norm, B^{-sigma}_{2,inf}, on a random ensemble"""
    grid = make_grid(n, box_len)
    rows = []
    for i in range(count):
        spec = random_bandlimited(grid, band, seed + i)
        for sigma in sigmas:
            heat = besov_heat_norm(spec, sigma)
            dyadic = besov_dyadic_norm(spec, -sigma, math.inf)
            rows.append({"field": i, "sigma": sigma, "heat": heat, "dyadic": dyadic, "ratio": heat / dyadic})
    return pd.DataFrame.from_records(rows)


# ========== SMALLNESS AND LEDGER ROWS ==========

def lipschitz_sup(state: FluidState) -> Tuple[float, float]:
    """(||grad w||_inf, ||grad u||_inf), pointwise Frobenius norms"""
    shape = state.grid.shape
    grad_w = pointwise_magnitude(state.grad_w.reshape(9, *shape)).max()
    grad_u = pointwise_magnitude(state.grad_u.reshape(9, *shape)).max()
    return float(grad_w), float(grad_u)


def smallness_diagnostics(state: FluidState) -> Dict[str, float]:
    """
    Data-size quantities and the two smallness sums

    first:    ||u0||_{H^1} + ||sqrt(rho0) w0|| + ||w0||_{C^{0,1}}
    critical: E0(0) + ||u0||_{B^{1/2}_{2,1}} + ||w0||_{C^{0,1}}
    plus whether E1(0) <= exp(-E0(0))/2.
    """
    diag = initial_diagnostics(state)
    e0, _ = energy_E0(state)
    e1, _, _ = energy_E1(state)
    u_fluct = state.u_hat.without_zero_mode()
    has_velocity = bool(np.any(u_fluct.coeffs))
    diag["E0"] = e0
    diag["E1"] = e1
    diag["u_besov_1_2_1"] = besov_dyadic_norm(u_fluct, 0.5, 1) if has_velocity else 0.0
    diag["u_besov_m1_2"] = besov_heat_norm(u_fluct, 0.5) if has_velocity else 0.0
    diag["smallness_first"] = diag["u_h1"] + diag["sqrt_rho_w_l2"] + diag["w_lipschitz"]
    diag["smallness_critical"] = e0 + diag["u_besov_1_2_1"] + diag["w_lipschitz"]
    diag["e1_condition"] = float(e1 <= math.exp(-e0) / 2)
    return diag


@dataclass
class LedgerRecorder:
    """
    Builds ledger rows and accumulates running time integrals

    observe() must see every step (trapezoid rule); row() is taken at the
    ledger cadence after observe() of the same state.
    """

    rho0_inf: float
    besov: bool = True
    higher_order: bool = True
    weight_a0: float = config.WEIGHTED_INTEGRAL["a0"]
    weight_beta: float = config.WEIGHTED_INTEGRAL["beta"]
    integrals: Dict[str, float] = field(default_factory=lambda: {
        "int_D0": 0.0,
        "int_grad_u_inf": 0.0,
        "int_grad_w_inf": 0.0,
        "int_exp_u_inf": 0.0,
        "int_weighted_D1_tilde": 0.0,
    })
    _last: Optional[Dict[str, float]] = None
    _last_time: Optional[float] = None
    _cache: Dict[str, float] = field(default_factory=dict)

    def _integrands(self, state: FluidState) -> Dict[str, float]:
        e0, d0 = energy_E0(state)
        grad_w_inf, grad_u_inf = lipschitz_sup(state)
        u_inf = float(pointwise_magnitude(state.u).max())
        self._cache = {"E0": e0, "D0": d0, "grad_w_inf": grad_w_inf, "grad_u_inf": grad_u_inf, "u_inf": u_inf}
        if self.higher_order:
            e1, d1, d1_tilde = energy_E1(state, self.rho0_inf)
            self._cache.update({"E1": e1, "D1": d1, "D1_tilde": d1_tilde})
        else:
            d1_tilde = 0.0
        weight = (1 + self.weight_a0 * state.time) ** self.weight_beta
        return {
            "int_D0": d0,
            "int_grad_u_inf": grad_u_inf,
            "int_grad_w_inf": grad_w_inf,
            "int_exp_u_inf": math.exp(state.time) * u_inf,
            "int_weighted_D1_tilde": weight * d1_tilde,
        }

    def observe(self, state: FluidState):
        current = self._integrands(state)
        if self._last is not None:
            h = state.time - self._last_time
            for key, value in current.items():
                self.integrals[key] += 0.5 * h * (value + self._last[key])
        self._last, self._last_time = current, state.time

    def row(self, state: FluidState) -> Dict[str, float]:
        if self._last_time != state.time:
            self.observe(state)
        grid = state.grid
        cache = self._cache
        rho = _nonnegative_density(state)

        if "E1" in cache:
            e1, d1, d1_tilde = cache["E1"], cache["D1"], cache["D1_tilde"]
        else:
            e1 = _weighted_l2sq(rho, state.w - state.u, grid) + _gradient_l2sq(state.u_hat)
            d1 = d1_tilde = 0.0
        if self.higher_order:
            e2, d2, wt_l2sq = _second_order_terms(state)
        else:
            e2 = d2 = wt_l2sq = 0.0

        u_fluct = state.u_hat.without_zero_mode()
        if self.besov and np.any(u_fluct.coeffs):
            besov = (
                besov_heat_norm(u_fluct, 0.5),
                besov_heat_norm(u_fluct, 1.5),
                besov_dyadic_norm(u_fluct, 0.5, 1),
            )
        else:
            besov = (0.0, 0.0, 0.0)

        row = {
            "t": state.time,
            "mass": mass(state.rho, grid),
            "E0": cache["E0"],
            "D0": cache["D0"],
            "E1": e1,
            "D1": d1,
            "D1_tilde": d1_tilde,
            "E2": e2,
            "D2": d2,
            "u_besov_m1_2": besov[0],
            "u_besov_m3_2": besov[1],
            "u_besov_1_2_1": besov[2],
            "w_inf": float(pointwise_magnitude(state.w).max()),
            "grad_w_inf": cache["grad_w_inf"],
            "grad_u_inf": cache["grad_u_inf"],
            "rho_inf": float(np.max(np.abs(state.rho))),
            "u_inf": cache["u_inf"],
            "sqrt_rho_w_inf": float(np.max(np.sqrt(rho) * pointwise_magnitude(state.w))),
            "grad_u_l2sq": _gradient_l2sq(state.u_hat),
            "slip_l2sq": _weighted_l2sq(rho, state.w - state.u, grid),
            "sqrt_rho_wt_l2sq": wt_l2sq,
        }
        row.update(self.integrals)
        return {c: row[c] for c in LEDGER_COLUMNS}


def functionals_row(state: FluidState, rho0_inf: Optional[float] = None, besov: bool = True,
                    higher_order: bool = True) -> Dict[str, float]:
    """Single ledger row for a lone state (running integrals zero)"""
    recorder = LedgerRecorder(
        rho0_inf=float(np.max(np.abs(state.rho))) if rho0_inf is None else rho0_inf,
        besov=besov,
        higher_order=higher_order,
    )
    recorder.observe(state)
    return recorder.row(state)
