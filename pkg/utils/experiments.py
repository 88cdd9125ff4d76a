"""
Experiment drivers
Decay-rate fitting, ledger monitoring, twin-run stability and long-time density
"""
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel
from scipy.optimize import minimize_scalar

import config
from utils.errors import DecayFitError, InvalidParameterError
from utils.functionals import friction_radius, lipschitz_sup, sobolev_neg1_norm
from utils.ledger import EnergyLedger
from utils.run_config import RunConfig
from utils.runner import Trajectory, run
from utils.solver import rhs_density, time_derivatives
from utils.spectral_core import (
    Grid,
    dealias,
    forward,
    inverse,
    jacobian,
    leray_project,
    make_grid,
    pointwise_magnitude,
    random_bandlimited,
)
from utils.state_model import FluidState, make_initial


# ========== DECAY FITTING ==========

@dataclass
class DecayFit:
    """value(t) ~ scale * (1 + a t)^(-beta) on [t_lo, t_hi]"""

    a: float
    beta: float
    t_lo: float
    t_hi: float
    residual: float
    scale: float = 1.0
    points: int = 0

    def model(self, t: np.ndarray) -> np.ndarray:
        return self.scale * (1 + self.a * np.asarray(t)) ** (-self.beta)


def box_window_end(box_len: float) -> float:
    """Latest time a whole-space decay law is fitted on a periodic box"""
    return (config.BOX_WINDOW_FRACTION * box_len) ** 2


def _ols(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """y ~ c - beta x; returns (c, beta, sum of squared residuals)"""
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    slope = float(np.dot(xc, yc)) / sxx if sxx > 0 else 0.0
    c = float(y.mean() - slope * x.mean())
    resid = y - (c + slope * x)
    return c, -slope, float(np.dot(resid, resid))


def decay_fit(
    t: Sequence[float],
    values: Sequence[float],
    window: Optional[Tuple[float, float]] = None,
    min_points: int = config.DECAY_FIT["min_points"],
) -> DecayFit:
    """
    Fit log(value) = c - beta * log(1 + a t)

    a comes from a log-spaced scan refined by bounded Brent search on log a;
    c and beta are closed-form least squares for each trial a.
    """
    t = np.asarray(t, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if t.shape != values.shape or t.ndim != 1:
        raise DecayFitError("t and values must be 1-D sequences of equal length")
    if t.size == 0:
        raise DecayFitError("empty series")
    t_lo, t_hi = window if window is not None else (float(t.min()), float(t.max()))
    if not t_lo < t_hi:
        raise DecayFitError(f"empty window [{t_lo}, {t_hi}]")
    if t_hi < t.min() or t_lo > t.max():
        raise DecayFitError(f"window [{t_lo}, {t_hi}] lies outside the series [{t.min()}, {t.max()}]")

    mask = (t >= t_lo) & (t <= t_hi)
    tw, vw = t[mask], values[mask]
    if tw.size < min_points:
        raise DecayFitError(f"{tw.size} points in window, need >= {min_points}")
    if np.any(vw <= 0) or not np.all(np.isfinite(vw)):
        raise DecayFitError("values in the fit window must be positive and finite")
    if np.any(tw < 0):
        raise DecayFitError("fit times must be >= 0")
    y = np.log(vw)

    def sse(log_a: float) -> float:
        return _ols(np.log1p(math.exp(log_a) * tw), y)[2]

    lo10, hi10 = config.DECAY_FIT["log10_a_range"]
    grid = np.linspace(lo10 * math.log(10), hi10 * math.log(10), config.DECAY_FIT["scan_points"])
    scores = np.array([sse(g) for g in grid])
    best = int(np.argmin(scores))
    lo, hi = grid[max(best - 1, 0)], grid[min(best + 1, grid.size - 1)]
    refined = minimize_scalar(sse, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    log_a = float(refined.x) if refined.success and refined.fun <= scores[best] else float(grid[best])

    a = math.exp(log_a)
    c, beta, _ = _ols(np.log1p(a * tw), y)
    fit = DecayFit(a=a, beta=beta, t_lo=float(t_lo), t_hi=float(t_hi), residual=0.0,
                   scale=math.exp(c), points=int(tw.size))
    fit.residual = float(np.max(np.abs(fit.model(tw) / vw - 1)))
    logger.info(f"Decay fit on [{t_lo:.4g}, {t_hi:.4g}]: a={a:.6g}, beta={beta:.6g}, residual={fit.residual:.2e}")
    return fit


def heat_decay_series(
    grid: Grid,
    sigma: float,
    times: Sequence[float],
    project: bool = False,
) -> np.ndarray:
    """
    ||e^{t Lap} u0||^2 for u0 = G e1, G a centred Gaussian of width sigma

    Evaluated mode-wise, no time stepping. With project=True the nonzero
    modes are Leray-projected first (the zero mode cannot be).
    """
    times = np.asarray(times, dtype=np.float64)
    if np.any(times < 0):
        raise InvalidParameterError("heat evolution times must be >= 0")
    center = grid.box_len / 2
    x1, x2, x3 = grid.coordinates()
    gauss = np.exp(-((x1 - center) ** 2 + (x2 - center) ** 2 + (x3 - center) ** 2) / (2 * sigma ** 2))
    u0 = np.zeros((3, *grid.shape))
    u0[0] = gauss
    spec = forward(u0, grid)
    if project:
        spec = leray_project(spec)

    power = (np.sum(np.abs(spec.coeffs) ** 2, axis=0) * grid.volume).ravel()
    shells = np.bincount(grid.m2.ravel(), weights=power)
    used = np.nonzero(shells)[0]
    k2 = (2 * np.pi / grid.box_len) ** 2 * used.astype(np.float64)
    return np.exp(-2.0 * np.outer(times, k2)) @ shells[used]


@dataclass
class EnsDecayReport:
    """Monotonicity of a ledger column after t_from and its decay fit"""

    column: str
    t_from: float
    monotone: bool
    max_increase: float
    fit: DecayFit
    beta_min: float

    @property
    def holds(self) -> bool:
        return self.monotone and self.fit.beta >= self.beta_min


def ens_decay(
    ledger: EnergyLedger,
    column: str = config.ENS_DECAY["column"],
    t_from: float = config.ENS_DECAY["t_from"],
    window: Optional[Tuple[float, float]] = None,
    beta_min: float = config.ENS_DECAY["beta_min"],
) -> EnsDecayReport:
    """
    Check that `column` is nonincreasing for t >= t_from and fit its decay

    The fit window defaults to [t_from, last ledger time].
    """
    t = ledger.column("t")
    values = ledger.column(column)
    tail = values[t >= t_from]
    if tail.size < 2:
        raise DecayFitError(f"fewer than two ledger rows after t={t_from}")
    steps = np.diff(tail)
    max_increase = float(max(steps.max(), 0.0))
    fit = decay_fit(t, values, window=window or (t_from, float(t.max())))
    report = EnsDecayReport(column=column, t_from=t_from, monotone=max_increase == 0.0,
                            max_increase=max_increase, fit=fit, beta_min=beta_min)
    if not report.holds:
        logger.warning(
            f"{column} decay check failed: monotone={report.monotone} "
            f"(max increase {max_increase:.3e}), beta={fit.beta:.4g} (need >= {beta_min})"
        )
    return report


# ========== LEDGER MONITOR ==========

@dataclass
class MonitorReport:
    """Per-row check series plus a summary of the worst values"""

    series: pd.DataFrame
    summary: Dict[str, float] = field(default_factory=dict)

    @property
    def w_bound_ok(self) -> bool:
        return bool(self.summary.get("w_bound_min_slack", 0.0) >= 0)

    @property
    def rho_bound_ok(self) -> bool:
        return bool(self.summary.get("rho_bound_min_slack", 0.0) >= 0)


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.full(num.shape, np.nan)
    positive = den > 0
    out[positive] = num[positive] / den[positive]
    return out


def monitor(ledger: EnergyLedger, w_tolerance: float = 1e-3) -> MonitorReport:
    """
    Check a completed run's ledger

    energy residual |E0 + int D0 - E0(0)|; the w maximum-principle bound
    e^{-t}(||w0||_inf + int e^s ||u||_inf) with slack; the Lipschitz
    controls; ratio series for the E1 inequalities (constants unknown, data
    only); the density growth bound and the sqrt(rho) w_t bound.
    """
    frame = ledger.to_frame()
    if frame.empty:
        return MonitorReport(series=frame)
    t = frame["t"].to_numpy()
    first = frame.iloc[0]
    w0_inf, rho0_inf, grad_w0_inf = first["w_inf"], first["rho_inf"], first["grad_w_inf"]
    radius = friction_radius(rho0_inf)

    series = pd.DataFrame({"t": t})
    series["energy_residual"] = np.abs(frame["E0"] + frame["int_D0"] - first["E0"])

    w_bound = np.exp(-t) * (math.exp(t[0]) * w0_inf + frame["int_exp_u_inf"].to_numpy())
    series["w_bound"] = w_bound
    series["w_bound_slack"] = w_bound + w_tolerance * w0_inf - frame["w_inf"]

    series["int_grad_u_inf"] = frame["int_grad_u_inf"]
    series["int_grad_w_inf"] = frame["int_grad_w_inf"]
    series["rho_inf"] = frame["rho_inf"]
    rho_bound = rho0_inf * np.exp(math.sqrt(3) * frame["int_grad_w_inf"].to_numpy())
    series["rho_bound_slack"] = rho_bound * (1 + 1e-12) - frame["rho_inf"]

    grad_w_scale = (grad_w0_inf + frame["int_grad_u_inf"].to_numpy()) * np.exp(frame["int_grad_w_inf"].to_numpy())
    series["grad_w_ratio"] = _safe_ratio(frame["grad_w_inf"].to_numpy(), grad_w_scale)

    e1 = frame["E1"].to_numpy()
    de1 = np.gradient(e1, t) if len(t) > 1 else np.zeros_like(e1)
    transport = (frame["sqrt_rho_w_inf"] ** 2 + frame["u_inf"] ** 2).to_numpy() * frame["grad_u_l2sq"].to_numpy()
    series["H1b_ratio"] = _safe_ratio(de1 + frame["D1"].to_numpy(), transport)
    series["H1e_ratio"] = _safe_ratio(
        de1 + frame["D1_tilde"].to_numpy(),
        transport + frame["grad_u_l2sq"].to_numpy() ** 3 / radius,
    )
    series["wt_bound_slack"] = (
        2 * frame["D1"] + 4 * frame["grad_w_inf"] * frame["E0"] - frame["sqrt_rho_wt_l2sq"]
    )
    series["composite_energy"] = 2 * frame["E0"] + 6 * frame["E1"] + t * (frame["E1"] + frame["E2"])

    def worst(name: str, fn) -> float:
        values = series[name].to_numpy()
        values = values[np.isfinite(values)]
        return float(fn(values)) if values.size else float("nan")

    summary = {
        "max_energy_residual": worst("energy_residual", np.max),
        "w_bound_min_slack": worst("w_bound_slack", np.min),
        "rho_bound_min_slack": worst("rho_bound_slack", np.min),
        "int_grad_u_inf": float(frame["int_grad_u_inf"].iloc[-1]),
        "int_grad_w_inf": float(frame["int_grad_w_inf"].iloc[-1]),
        "max_rho_inf": float(frame["rho_inf"].max()),
        "max_grad_w_ratio": worst("grad_w_ratio", np.max),
        "max_H1b_ratio": worst("H1b_ratio", np.max),
        "max_H1e_ratio": worst("H1e_ratio", np.max),
        "wt_bound_min_slack": worst("wt_bound_slack", np.min),
    }
    report = MonitorReport(series=series, summary=summary)
    if not report.w_bound_ok:
        logger.warning(f"w maximum-principle bound violated (min slack {summary['w_bound_min_slack']:.3e})")
    logger.info(
        f"Monitor: energy residual {summary['max_energy_residual']:.3e}, "
        f"w slack {summary['w_bound_min_slack']:.3e}, int|grad u|_inf {summary['int_grad_u_inf']:.3e}"
    )
    return report


# ========== TWIN RUNS ==========

class Perturbation(BaseModel):
    """Relative perturbation of one initial field by a band-limited random shape"""

    target: Literal["u", "w", "rho"] = config.TWIN_RUN["target"]
    epsilon: float = config.TWIN_RUN["epsilon"]
    seed: int = config.TWIN_RUN["seed"]
    band: int = config.TWIN_RUN["band"]


def perturb(state: FluidState, spec: Perturbation) -> FluidState:
    grid = state.grid
    if spec.epsilon == 0:
        return state.replace()
    components = 1 if spec.target == "rho" else 3
    shape = random_bandlimited(grid, spec.band, spec.seed, components=components)
    if spec.target == "u":
        shape = leray_project(shape)
    samples = inverse(dealias(shape))
    samples = samples / float(pointwise_magnitude(samples).max())

    if spec.target == "u":
        return state.replace(u=state.u + spec.epsilon * samples)
    if spec.target == "w":
        return state.replace(w=state.w + spec.epsilon * samples)
    return state.replace(rho=state.rho * (1 + spec.epsilon * samples))


@dataclass
class StabilityReport:
    """Difference functionals between two runs and the stability-inequality residual"""

    series: pd.DataFrame

    @property
    def max_dE(self) -> float:
        return float(self.series["dE"].max())

    def worst_excess(self) -> float:
        """max over samples of (lhs - rhs)/|rhs|; 0 when every lhs <= rhs"""
        lhs = self.series["ddt_dE"] + self.series["dD"]
        rhs = self.series["rhs"]
        excess = (lhs - rhs).to_numpy()
        scale = np.abs(rhs.to_numpy())
        with np.errstate(divide="ignore", invalid="ignore"):
            rel = np.where(excess <= 0, 0.0, excess / scale)
        return float(np.max(rel)) if rel.size else 0.0

    def holds(self, tolerance: float = 0.05) -> bool:
        return self.worst_excess() <= tolerance


def difference_terms(base: FluidState, other: FluidState) -> Dict[str, float]:
    """dE, dD, ||drho||_{H^-1}, instantaneous d/dt dE and the stability right-hand side"""
    grid = base.grid
    cell = grid.cell_volume
    rho2 = np.clip(other.rho, 0.0, None)
    dw = other.w - base.w
    du = other.u - base.u
    drho = other.rho - base.rho

    dE = float(np.sum(rho2 * np.sum(dw ** 2, axis=0)) * cell + np.sum(du ** 2) * cell)
    du_hat = forward(du, grid)
    grad_du = float(grid.volume * np.sum(grid.kd2 * np.abs(du_hat.coeffs) ** 2))
    dD = grad_du + float(np.sum(rho2 * np.sum((dw - du) ** 2, axis=0)) * cell)
    drho_hm1 = sobolev_neg1_norm(forward(drho, grid).without_zero_mode())

    u1_t, w1_t = (inverse(f) for f in time_derivatives(base))
    u2_t, w2_t = (inverse(f) for f in time_derivatives(other))
    rho2_t = inverse(rhs_density(other))
    ddt_dE = float(
        np.sum(rho2_t * np.sum(dw ** 2, axis=0)) * cell
        + 2 * np.sum(rho2 * np.sum(dw * (w2_t - w1_t), axis=0)) * cell
        + 2 * np.sum(du * (u2_t - u1_t)) * cell
    )

    grad_w1, grad_u1 = lipschitz_sup(base)
    slip = base.w - base.u
    slip_hat = forward(slip, grid)

    grad_slip = float(pointwise_magnitude(jacobian(slip_hat).reshape(9, *grid.shape)).max())
    slip_inf = float(pointwise_magnitude(slip).max())
    rhs = 3 * max(grad_w1, grad_u1) * dE + (slip_inf ** 2 + grad_slip) * drho_hm1 ** 2
    return {"t": base.time, "dE": dE, "dD": dD, "drho_hm1": drho_hm1, "ddt_dE": ddt_dE, "rhs": rhs}


def twin_run(cfg: RunConfig, perturbation: Perturbation) -> StabilityReport:
    """Evolve base and perturbed data side by side and compare them at the ledger cadence"""
    grid = make_grid(cfg.n, cfg.L)
    base0 = make_initial(cfg.init, grid)
    other0 = perturb(base0, perturbation)
    twin_cfg = cfg.model_copy(update={"output": cfg.output.model_copy(update={"keep_trajectory": True})})

    with ThreadPoolExecutor(max_workers=2) as pool:
        futures = [pool.submit(run, twin_cfg, s, False) for s in (base0, other0)]
        (base, _), (other, _) = (f.result() for f in futures)

    rows = [difference_terms(b, o) for b, o in zip(base.states, other.states)]
    series = pd.DataFrame.from_records(rows)
    series["residual"] = series["ddt_dE"] + series["dD"] - series["rhs"]
    report = StabilityReport(series=series)
    logger.success(
        f"Twin run ({perturbation.target}, eps={perturbation.epsilon:g}): "
        f"max dE={report.max_dE:.3e}, worst excess={report.worst_excess():.3e}"
    )
    return report


# ========== LONG-TIME DENSITY ==========

@dataclass
class DensityLongtimeReport:
    rho_inf: np.ndarray = field(repr=False)
    series: pd.DataFrame = field(repr=False)
    precondition_met: bool = False
    monotone: bool = False
    exponent: float = float("nan")


def bump_center(rho: np.ndarray, grid: Grid) -> np.ndarray:
    """Centre of a single bump from the phase of the first Fourier mode on each axis"""
    coeffs = forward(rho, grid).coeffs[0]
    k = 2 * np.pi / grid.box_len
    phases = np.angle([coeffs[1, 0, 0], coeffs[0, 1, 0], coeffs[0, 0, 1]])
    return np.mod(-phases / k, grid.box_len)


def _nearest(states: Sequence[FluidState], t: float) -> FluidState:
    return min(states, key=lambda s: abs(s.time - t))


def density_longtime(
    trajectory: Union[Trajectory, Sequence[FluidState]],
    t_monotone_from: float = config.DENSITY_LONGTIME["t_monotone_from"],
) -> DensityLongtimeReport:
    """
    rho_inf ~ rho(t_end), the H^-1 distance series to it, and the tail flux
    int_t^{t_end} ||rho w||_{L^1}; monotone decay is checked on
    [t_monotone_from, t_end/2]
    """
    states = list(trajectory.states if isinstance(trajectory, Trajectory) else trajectory)
    if len(states) < 2:
        raise InvalidParameterError("need at least two states")
    grid = states[0].grid
    final = states[-1]
    rho_inf = final.rho
    t_end = final.time

    def hm1(a: np.ndarray, b: np.ndarray) -> float:
        return sobolev_neg1_norm(forward(a - b, grid).without_zero_mode())

    t = np.array([s.time for s in states])
    distance = np.array([hm1(s.rho, rho_inf) for s in states])
    flux = np.array([float(np.sum(pointwise_magnitude(s.rho[None] * s.w)) * grid.cell_volume) for s in states])
    # reverse cumulative trapezoid
    pieces = 0.5 * np.diff(t) * (flux[1:] + flux[:-1])
    tail = np.concatenate([np.cumsum(pieces[::-1])[::-1], [0.0]])
    series = pd.DataFrame({"t": t, "hm1_distance": distance, "flux_l1": flux, "tail_flux": tail})

    half = _nearest(states, t_end / 2)
    late = hm1(final.rho, half.rho)
    early = hm1(half.rho, states[0].rho)
    precondition = late < config.DENSITY_LONGTIME["convergence_factor"] * early
    if not precondition:
        logger.warning(
            f"rho has not settled: ||rho(T) - rho(T/2)|| = {late:.3e} vs "
            f"{config.DENSITY_LONGTIME['convergence_factor']} * {early:.3e}"
        )

    window = (t >= t_monotone_from) & (t <= t_end / 2)
    values = distance[window]
    tol = 1e-12 * max(float(distance.max()), np.finfo(float).tiny)
    monotone = bool(values.size >= 2 and np.all(np.diff(values) <= tol))

    exponent = float("nan")
    fit_mask = window & (distance > 0) & (t > 0)
    if fit_mask.sum() >= 2:
        exponent = float(np.polyfit(np.log(t[fit_mask]), np.log(distance[fit_mask]), 1)[0])

    logger.info(f"Density long-time: monotone={monotone}, exponent={exponent:.3f}, settled={precondition}")
    return DensityLongtimeReport(
        rho_inf=rho_inf, series=series, precondition_met=bool(precondition),
        monotone=monotone, exponent=exponent,
    )
