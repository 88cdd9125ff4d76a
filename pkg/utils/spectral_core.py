"""
Periodic-box Fourier machinery
Transforms, differential operators, Leray projection, heat semigroup,
two-thirds dealiasing and dyadic frequency blocks on a cubic grid.

Convention: f(x) = sum_m f_hat(m) exp(i k.x) with k = 2*pi*m/L and
f_hat = fftn(f) / n^3, so sin(2*pi*x1/L) has f_hat(+1,0,0) = -i/2 and
f_hat(-1,0,0) = +i/2. Arrays are indexed (x1, x2, x3); vector fields carry
their component on a leading axis.
"""
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Tuple

import numpy as np
import scipy.fft
from loguru import logger

import config
from utils.errors import GridMismatchError, InvalidParameterError, SymmetryViolationError

_AXES = (-3, -2, -1)
_NO_BLOCK = np.iinfo(np.int64).min


@dataclass(frozen=True)
class Grid:
    """Cubic periodic box with n points per axis and side length box_len"""

    n: int
    box_len: float = config.DEFAULT_BOX_LEN

    def __post_init__(self):
        if self.n < config.MIN_POINTS or self.n & (self.n - 1):
            raise InvalidParameterError(f"n must be a power of two >= {config.MIN_POINTS}, got {self.n}")
        if not self.box_len > 0:
            raise InvalidParameterError(f"box_len must be positive, got {self.box_len}")

    @property
    def spacing(self) -> float:
        return self.box_len / self.n

    @property
    def cell_volume(self) -> float:
        return self.spacing ** 3

    @property
    def volume(self) -> float:
        return self.box_len ** 3

    @property
    def shape(self) -> Tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer modes in FFT order: 0, 1, ..., n/2-1, -n/2, ..., -1"""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Per-axis table k = 2*pi*m/L"""
        return 2 * np.pi * self.modes / self.box_len

    @cached_property
    def k_axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.wavenumbers
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def kd_axes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Derivative wavenumbers: the Nyquist entry carries no derivative"""
        k = self.wavenumbers.copy()
        k[self.n // 2] = 0.0
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def k2(self) -> np.ndarray:
        kx, ky, kz = self.k_axes
        return kx ** 2 + ky ** 2 + kz ** 2

    @cached_property
    def kd2(self) -> np.ndarray:
        kx, ky, kz = self.kd_axes
        return kx ** 2 + ky ** 2 + kz ** 2

    @cached_property
    def m2(self) -> np.ndarray:
        """Integer |m|^2 per mode; k2 = (2*pi/L)^2 * m2"""
        m = self.modes
        return m[:, None, None] ** 2 + m[None, :, None] ** 2 + m[None, None, :] ** 2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        keep = np.abs(self.modes) <= self.n / 3
        return keep[:, None, None] & keep[None, :, None] & keep[None, None, :]

    @cached_property
    def block_index(self) -> np.ndarray:
        """Dyadic index j with 2^j <= |k| < 2^(j+1); the zero mode gets a sentinel"""
        kmag = np.sqrt(self.k2)
        index = np.full(self.shape, _NO_BLOCK, dtype=np.int64)
        nonzero = kmag > 0
        j = np.floor(np.log2(kmag[nonzero]))
        # log2 round-off at exact powers of two
        j = np.where(2.0 ** (j + 1) <= kmag[nonzero], j + 1, j)
        j = np.where(2.0 ** j > kmag[nonzero], j - 1, j)
        index[nonzero] = j.astype(np.int64)
        return index

    @cached_property
    def dyadic_range(self) -> range:
        used = self.block_index[self.block_index != _NO_BLOCK]
        return range(int(used.min()), int(used.max()) + 1)

    def coordinates(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.spacing
        return x[:, None, None], x[None, :, None], x[None, None, :]


@lru_cache(maxsize=16)
def make_grid(n: int, box_len: float = config.DEFAULT_BOX_LEN) -> Grid:
    """Shared grid instance so wavenumber tables are built once per (n, L)"""
    return Grid(n, box_len)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a scalar (1 component) or vector (3 components) field"""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.ndim != 4 or self.coeffs.shape[1:] != self.grid.shape:
            raise GridMismatchError(f"coefficients of shape {self.coeffs.shape} do not fit {self.grid}")
        if self.coeffs.shape[0] not in (1, 3):
            raise GridMismatchError(f"fields have 1 or 3 components, got {self.coeffs.shape[0]}")

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @property
    def is_vector(self) -> bool:
        return self.components == 3

    def component(self, i: int) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs[i:i + 1])

    def zero_mode(self) -> np.ndarray:
        return self.coeffs[:, 0, 0, 0].copy()

    def without_zero_mode(self) -> "SpectralField":
        coeffs = self.coeffs.copy()
        coeffs[:, 0, 0, 0] = 0.0
        return SpectralField(self.grid, coeffs)

    def scaled(self, factor) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs * factor)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def l2_squared(self) -> float:
        """Squared L2 norm over the box via Parseval"""
        return float(self.grid.volume * np.sum(np.abs(self.coeffs) ** 2))

    def l2_norm(self) -> float:
        return float(np.sqrt(self.l2_squared()))


def _check_same(a: SpectralField, b: SpectralField):
    if a.grid != b.grid or a.components != b.components:
        raise GridMismatchError("fields live on different grids or have different shapes")


def _as_components(samples: np.ndarray, grid: Grid) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape == grid.shape:
        return samples[None]
    if samples.ndim == 4 and samples.shape[0] in (1, 3) and samples.shape[1:] == grid.shape:
        return samples
    raise GridMismatchError(f"samples of shape {samples.shape} do not match {grid.n}^3 per component")


def forward(samples: np.ndarray, grid: Grid) -> SpectralField:
    """Normalized Fourier coefficients of real samples (scalar or 3-vector)"""
    data = _as_components(samples, grid)
    coeffs = scipy.fft.fftn(data, axes=_AXES, norm="forward", workers=config.FFT_WORKERS)
    return SpectralField(grid, coeffs)


def inverse(spec: SpectralField) -> np.ndarray:
    """
    Real samples of a spectral field

    Returns an (n, n, n) array for scalars and (3, n, n, n) for vectors.
    Raises SymmetryViolationError when the coefficients are not the
    transform of a real field.
    """
    data = scipy.fft.ifftn(spec.coeffs, axes=_AXES, norm="forward", workers=config.FFT_WORKERS)
    residue = float(np.max(np.abs(data.imag))) if data.size else 0.0
    scale = max(float(np.max(np.abs(data.real))), np.finfo(float).tiny)
    if residue > config.SYMMETRY_TOLERANCE * scale:
        raise SymmetryViolationError(
            f"imaginary residue {residue:.3e} exceeds tolerance (scale {scale:.3e})"
        )
    real = np.ascontiguousarray(data.real)
    return real[0] if spec.components == 1 else real


def gradient(spec: SpectralField) -> SpectralField:
    if spec.components != 1:
        raise GridMismatchError("gradient takes a scalar field")
    kx, ky, kz = spec.grid.kd_axes
    c = spec.coeffs[0]
    return SpectralField(spec.grid, np.stack([1j * kx * c, 1j * ky * c, 1j * kz * c]))


def divergence(spec: SpectralField) -> SpectralField:
    if spec.components != 3:
        raise GridMismatchError("divergence takes a vector field")
    kx, ky, kz = spec.grid.kd_axes
    c = spec.coeffs
    return SpectralField(spec.grid, (1j * (kx * c[0] + ky * c[1] + kz * c[2]))[None])


def laplacian(spec: SpectralField) -> SpectralField:
    return SpectralField(spec.grid, -spec.grid.kd2 * spec.coeffs)


def jacobian(spec: SpectralField) -> np.ndarray:
    """Physical samples of d_j v_i as a (3, 3, n, n, n) array (i = component, j = direction)"""
    if spec.components != 3:
        raise GridMismatchError("jacobian takes a vector field")
    kd = spec.grid.kd_axes
    coeffs = np.stack([1j * kd[j] * spec.coeffs for j in range(3)], axis=1)
    data = scipy.fft.ifftn(coeffs, axes=_AXES, norm="forward", workers=config.FFT_WORKERS)
    return np.ascontiguousarray(data.real)


def leray_project(v: SpectralField) -> SpectralField:
    """v - k (k.v)/|k|^2 mode-wise; the zero mode passes through unchanged"""
    if v.components != 3:
        raise GridMismatchError("leray_project takes a vector field")
    grid = v.grid
    kx, ky, kz = grid.kd_axes
    kd2 = grid.kd2
    inv = np.divide(1.0, kd2, out=np.zeros_like(kd2), where=kd2 > 0)
    c = v.coeffs
    kdotv = (kx * c[0] + ky * c[1] + kz * c[2]) * inv
    return SpectralField(grid, np.stack([c[0] - kx * kdotv, c[1] - ky * kdotv, c[2] - kz * kdotv]))


def heat_semigroup(spec: SpectralField, t: float) -> SpectralField:
    """exp(t * Laplacian), i.e. multiplication by exp(-|k|^2 t)"""
    if t < 0:
        raise InvalidParameterError(f"heat semigroup needs t >= 0, got {t}")
    if t == 0:
        return SpectralField(spec.grid, spec.coeffs.copy())
    return SpectralField(spec.grid, spec.coeffs * np.exp(-spec.grid.k2 * t))


def dealias(spec: SpectralField) -> SpectralField:
    """Two-thirds rule: zero every mode with some |m_j| > n/3"""
    return SpectralField(spec.grid, spec.coeffs * spec.grid.dealias_mask)


def dyadic_block(spec: SpectralField, j: int) -> SpectralField:
    """Sharp annulus 2^j <= |k| < 2^(j+1)"""
    if j not in spec.grid.dyadic_range:
        raise InvalidParameterError(
            f"dyadic block {j} outside resolvable range "
            f"[{spec.grid.dyadic_range.start}, {spec.grid.dyadic_range.stop - 1}]"
        )
    return SpectralField(spec.grid, spec.coeffs * (spec.grid.block_index == j))


def block_energies(spec: SpectralField) -> dict:
    """Squared L2 norm of every dyadic block, keyed by j"""
    grid = spec.grid
    power = np.sum(np.abs(spec.coeffs) ** 2, axis=0) * grid.volume
    index = grid.block_index
    return {j: float(power[index == j].sum()) for j in grid.dyadic_range}


def shell_spectrum(spec: SpectralField) -> Tuple[np.ndarray, np.ndarray]:
    """
    Squared L2 norm grouped by integer |m|^2 shell (zero mode excluded)

    Returns (k2 per shell, energy per shell) with k2 = (2*pi/L)^2 |m|^2.
    """
    grid = spec.grid
    power = (np.sum(np.abs(spec.coeffs) ** 2, axis=0) * grid.volume).ravel()
    m2 = grid.m2.ravel()
    energy = np.bincount(m2, weights=power)
    energy[0] = 0.0
    # round-off shells below this floor are dropped
    floor = 1e-24 * float(energy.max())
    shells = np.nonzero(energy > floor)[0]
    return (2 * np.pi / grid.box_len) ** 2 * shells.astype(np.float64), energy[shells]


def pointwise_magnitude(samples: np.ndarray) -> np.ndarray:
    """|v| at every point for a vector (leading component axis) or |f| for a scalar"""
    samples = np.asarray(samples)
    if samples.ndim == 3:
        return np.abs(samples)
    return np.sqrt(np.sum(samples.reshape(-1, *samples.shape[-3:]) ** 2, axis=0))


def sup_norm(samples: np.ndarray) -> float:
    return float(np.max(pointwise_magnitude(samples)))


def integrate(samples: np.ndarray, grid: Grid) -> float:
    """Box quadrature (trapezoidal == spectral zero mode on a periodic grid)"""
    return float(np.sum(samples) * grid.cell_volume)


def warn_if_mean(spec: SpectralField, where: str) -> SpectralField:
    """Drop the zero mode before a homogeneous norm, logging when it was not zero"""
    mean = np.abs(spec.zero_mode())
    if np.any(mean > 1e-14 * max(1.0, float(np.max(np.abs(spec.coeffs))))):
        logger.warning(f"{where}: dropping nonzero mean {float(mean.max()):.3e}")
    return spec.without_zero_mode()


def random_bandlimited(grid: Grid, band: int, seed: int, components: int = 1) -> SpectralField:
    """
    Real random field with modes |m_j| <= band and zero mean

    The coefficients depend only on (band, seed, components), so the same
    seed gives the same continuum field on every resolution that holds it.
    """
    if band < 1 or band > grid.n // 3:
        raise InvalidParameterError(f"band must lie in [1, {grid.n // 3}] for n = {grid.n}, got {band}")
    rng = np.random.default_rng(seed)
    width = 2 * band + 1
    raw = rng.standard_normal((components, width, width, width)) \
        + 1j * rng.standard_normal((components, width, width, width))
    # index i holds mode i - band, so flipping every axis maps m to -m
    raw = 0.5 * (raw + np.conj(raw[:, ::-1, ::-1, ::-1]))
    raw[:, band, band, band] = 0.0

    coeffs = np.zeros((components, *grid.shape), dtype=np.complex128)
    idx = np.arange(-band, band + 1) % grid.n
    coeffs[np.ix_(range(components), idx, idx, idx)] = raw
    return SpectralField(grid, coeffs)
