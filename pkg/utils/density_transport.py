"""
Semi-Lagrangian density from the flow map of w

rho(t, x) = rho0(y) * exp(-int_0^t (div w)(s, W_s(y)) ds) with y = W_t^{-1}(x),
evaluated by tracing characteristics backward through stored w snapshots.
"""
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import ndimage

from utils.errors import HistoryRangeError, InvalidParameterError
from utils.spectral_core import Grid, divergence, forward, inverse
from utils.state_model import FluidState

_SPACING_TOLERANCE = 1e-9


def _periodic_spline(samples: np.ndarray) -> np.ndarray:
    return ndimage.spline_filter(samples, order=3, mode="grid-wrap")


@dataclass
class VelocityHistory:
    """
    Uniformly spaced w snapshots with div w, stored as periodic cubic-spline
    coefficients so every lookup is a plain map_coordinates call
    """

    grid: Grid
    times: np.ndarray
    w_coeffs: np.ndarray = field(repr=False)      # (T, 3, n, n, n)
    div_coeffs: np.ndarray = field(repr=False)    # (T, n, n, n)

    @classmethod
    def from_snapshots(cls, grid: Grid, times: Sequence[float], ws: Sequence[np.ndarray]) -> "VelocityHistory":
        times = np.asarray(times, dtype=np.float64)
        if len(times) != len(ws) or len(times) == 0:
            raise InvalidParameterError("need one w snapshot per time and at least one snapshot")
        if len(times) > 1:
            gaps = np.diff(times)
            if np.any(gaps <= 0):
                raise InvalidParameterError("snapshot times must be strictly increasing")
            if np.max(np.abs(gaps - gaps[0])) > _SPACING_TOLERANCE * max(1.0, gaps[0]):
                raise InvalidParameterError("snapshot times must be uniformly spaced")

        w_coeffs = np.empty((len(times), 3, *grid.shape))
        div_coeffs = np.empty((len(times), *grid.shape))
        for i, w in enumerate(ws):
            div_w = inverse(divergence(forward(w, grid)))
            div_coeffs[i] = _periodic_spline(div_w)
            for c in range(3):
                w_coeffs[i, c] = _periodic_spline(np.asarray(w[c], dtype=np.float64))
        return cls(grid=grid, times=times, w_coeffs=w_coeffs, div_coeffs=div_coeffs)

    @classmethod
    def from_states(cls, states: Sequence[FluidState]) -> "VelocityHistory":
        if not states:
            raise InvalidParameterError("empty trajectory")
        return cls.from_snapshots(states[0].grid, [s.time for s in states], [s.w for s in states])

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    def check_time(self, t: float):
        slack = _SPACING_TOLERANCE * max(1.0, abs(self.end))
        if t < self.start - slack or t > self.end + slack:
            raise HistoryRangeError(f"t={t} outside history [{self.start}, {self.end}]")

    def _bracket(self, t: float) -> Tuple[int, float]:
        if len(self.times) == 1:
            return 0, 0.0
        i = int(np.clip(math.floor((t - self.start) / self.spacing), 0, len(self.times) - 2))
        theta = (t - self.times[i]) / self.spacing
        return i, float(np.clip(theta, 0.0, 1.0))

    def sample(self, t: float, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """w (3, P) and div w (P) at physical points (3, P), linear in time"""
        coords = np.mod(points, self.grid.box_len) / self.grid.spacing
        i, theta = self._bracket(t)

        def at(k: int) -> Tuple[np.ndarray, np.ndarray]:
            vel = np.stack([
                ndimage.map_coordinates(self.w_coeffs[k, c], coords, order=3, mode="grid-wrap", prefilter=False)
                for c in range(3)
            ])
            div = ndimage.map_coordinates(self.div_coeffs[k], coords, order=3, mode="grid-wrap", prefilter=False)
            return vel, div

        vel, div = at(i)
        if theta > 0.0:
            vel1, div1 = at(i + 1)
            vel = (1 - theta) * vel + theta * vel1
            div = (1 - theta) * div + theta * div1
        return vel, div


def trace_characteristic(
    x: np.ndarray,
    history: VelocityHistory,
    t: float,
    t_stop: Optional[float] = None,
    substeps: int = 1,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Trace dX/ds = w(s, X) backward from (t, x) to s = t_stop (default: history start)

    Midpoint rule for both the path and the line integral of div w, with
    `substeps` steps per snapshot interval. Points are (3,) or (3, P);
    returns (foot points wrapped into the box, int div w along the path).
    """
    if substeps < 1:
        raise InvalidParameterError(f"substeps must be >= 1, got {substeps}")
    t_stop = history.start if t_stop is None else t_stop
    history.check_time(t)
    history.check_time(t_stop)
    if t_stop > t:
        raise HistoryRangeError(f"t_stop={t_stop} is after t={t}")

    points = np.asarray(x, dtype=np.float64)
    single = points.ndim == 1
    pos = points.reshape(3, -1).copy()
    integral = np.zeros(pos.shape[1])

    span = t - t_stop
    if span > 0:
        nominal = history.spacing / substeps if history.spacing > 0 else span
        count = max(1, int(math.ceil(span / nominal - 1e-9)))
        delta = span / count
        s = t
        for _ in range(count):
            vel, _ = history.sample(s, pos)
            mid = pos - 0.5 * delta * vel
            vel_mid, div_mid = history.sample(s - 0.5 * delta, mid)
            pos = pos - delta * vel_mid
            integral += delta * div_mid
            s -= delta

    foot = np.mod(pos, history.grid.box_len)
    if single:
        return foot[:, 0], integral[0]
    return foot, integral


def density_from_flow(
    rho0: np.ndarray,
    history: VelocityHistory,
    t: float,
    substeps: int = 1,
) -> np.ndarray:
    """
    rho(t) on every grid point from rho0 and the flow of w

    rho0 is read at the foot points with a periodic cubic spline whose
    negative lobes are cut at zero, so rho0 >= 0 gives rho(t) >= 0 exactly.
    """
    grid = history.grid
    x1, x2, x3 = grid.coordinates()
    points = np.stack([np.broadcast_to(c, grid.shape).ravel() for c in (x1, x2, x3)])
    foot, integral = trace_characteristic(points, history, t, substeps=substeps)

    coeffs = _periodic_spline(np.asarray(rho0, dtype=np.float64))
    rho_foot = ndimage.map_coordinates(coeffs, foot / grid.spacing, order=3, mode="grid-wrap", prefilter=False)
    if np.all(rho0 >= 0):
        rho_foot = np.maximum(rho_foot, 0.0)
    rho = (rho_foot * np.exp(-integral)).reshape(grid.shape)
    logger.debug(f"flow-map density at t={t:.4g}: min={rho.min():.3e}, max={rho.max():.3e}")
    return rho
