"""Fourier representation of velocity fields on the torus [0, 2π]³.

Coefficients are stored on the cube of modes |k_i| ≤ K in FFT order along
every axis (0, 1, …, K, −K, …, −1), with the normalization

    û_k = (2π)⁻³ ∫ u(x) e^{−ik·x} dx

so that u(x) = Σ_k û_k e^{ik·x} and ‖u‖² = (2π)³ Σ_k |û_k|².
"""

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.fft

from .errors import ParameterError, ResolutionError

logger = logging.getLogger(__name__)

TORUS_VOLUME = (2.0 * np.pi) ** 3
SPATIAL_AXES = (-3, -2, -1)


def fft_workers() -> int:
    """Thread count handed to scipy.fft (CBF_FFT_WORKERS, default 1)."""
    return max(1, int(os.environ.get("CBF_FFT_WORKERS", "1")))


def _read_only(array: np.ndarray) -> np.ndarray:
    view = array.view()
    view.flags.writeable = False
    return view


def even_ceil(value: float) -> int:
    n = int(np.ceil(value - 1e-12))
    return n + (n % 2)


# ---------------------------------------------------------------------------
# Wavenumber tables
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def mode_axis(K: int) -> np.ndarray:
    """Integer wavenumbers of the cube along one axis, in FFT order."""
    n = 2 * K + 1
    return _read_only(np.rint(scipy.fft.fftfreq(n, d=1.0 / n)).astype(np.int64))


@lru_cache(maxsize=None)
def wavevectors(K: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    k = mode_axis(K).astype(float)
    return (_read_only(k[:, None, None]), _read_only(k[None, :, None]), _read_only(k[None, None, :]))


@lru_cache(maxsize=None)
def k_squared(K: int) -> np.ndarray:
    kx, ky, kz = wavevectors(K)
    return _read_only(kx ** 2 + ky ** 2 + kz ** 2)


@lru_cache(maxsize=None)
def negated_index(K: int) -> np.ndarray:
    """Position of −k for each position k along one cube axis."""
    n = 2 * K + 1
    return _read_only((-np.arange(n)) % n)


@lru_cache(maxsize=None)
def _grid_index(K: int, M: int) -> np.ndarray:
    """Positions of the cube modes inside a length-M FFT axis."""
    return _read_only(np.r_[0:K + 1, M - K:M])


# ---------------------------------------------------------------------------
# Field types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    mu: float
    alpha: float = 0.0
    beta: float = 0.0
    r: float = 3.0

    def __post_init__(self):
        for name in ("mu", "alpha", "beta", "r"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value}")
        if self.mu <= 0:
            raise ParameterError(f"mu must be > 0, got {self.mu}")
        if self.alpha < 0:
            raise ParameterError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta < 0:
            raise ParameterError(f"beta must be >= 0, got {self.beta}")
        if self.r < 1:
            raise ParameterError(f"r must be >= 1, got {self.r}")


@dataclass(frozen=True)
class SpectralField:
    """Velocity field as Fourier coefficients on the cube |k_i| ≤ K.

    Args:
        coefficients: complex array of shape (3, 2K+1, 2K+1, 2K+1) in FFT order.
        grid_size: collocation points per axis, at least 2K+2.
    """

    coefficients: np.ndarray
    grid_size: int

    def __post_init__(self):
        coefficients = np.asarray(self.coefficients, dtype=np.complex128)
        if coefficients.ndim != 4 or coefficients.shape[0] != 3:
            raise ParameterError(f"expected coefficients of shape (3, n, n, n), got {coefficients.shape}")
        n = coefficients.shape[1]
        if n % 2 == 0 or coefficients.shape[1:] != (n, n, n):
            raise ParameterError(f"coefficient cube must be (2K+1)³, got {coefficients.shape[1:]}")
        K = (n - 1) // 2
        if self.grid_size < 2 * K + 2:
            raise ResolutionError(f"grid size {self.grid_size} cannot resolve K={K}; need N >= {2 * K + 2}")
        object.__setattr__(self, "coefficients", _read_only(coefficients))
        object.__setattr__(self, "grid_size", int(self.grid_size))

    @property
    def resolution(self) -> int:
        return (self.coefficients.shape[1] - 1) // 2

    @classmethod
    def zeros(cls, K: int, grid_size: int) -> "SpectralField":
        n = 2 * K + 1
        return cls(np.zeros((3, n, n, n), dtype=np.complex128), grid_size)

    def with_coefficients(self, coefficients: np.ndarray) -> "SpectralField":
        return SpectralField(coefficients, self.grid_size)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coefficients(self.coefficients + other.coefficients)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.with_coefficients(self.coefficients - other.coefficients)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.with_coefficients(self.coefficients * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return self.with_coefficients(-self.coefficients)


@dataclass(frozen=True)
class PhysicalField:
    """Real velocity samples of shape (3, N, N, N) on the uniform grid x_j = 2πj/N."""

    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 4 or samples.shape[0] != 3 or len(set(samples.shape[1:])) != 1:
            raise ParameterError(f"expected samples of shape (3, N, N, N), got {samples.shape}")
        object.__setattr__(self, "samples", _read_only(samples))

    @property
    def grid_size(self) -> int:
        return self.samples.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.samples ** 2, axis=0))


@dataclass(frozen=True)
class NormReport:
    l2_sq: float
    grad_l2_sq: float
    lp: float
    i_r: float


# ---------------------------------------------------------------------------
# Transforms
# ---------------------------------------------------------------------------

def grid_points(N: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Coordinates of the collocation grid, indexed (x, y, z)."""
    x = 2.0 * np.pi * np.arange(N) / N
    return np.meshgrid(x, x, x, indexing="ij")


def physical_from_coefficients(coefficients: np.ndarray, M: int) -> np.ndarray:
    """Evaluate cube coefficients on the M³ grid; leading axes are batched."""
    n = coefficients.shape[-1]
    K = (n - 1) // 2
    if M < 2 * K + 1:
        raise ResolutionError(f"grid of {M} points cannot hold modes up to K={K}")
    idx = _grid_index(K, M)
    half = np.zeros(coefficients.shape[:-3] + (M, M, M // 2 + 1), dtype=np.complex128)
    half[..., idx[:, None, None], idx[None, :, None], np.arange(K + 1)[None, None, :]] = coefficients[..., :K + 1]
    return scipy.fft.irfftn(half, s=(M, M, M), axes=SPATIAL_AXES, norm="forward", workers=fft_workers())


def coefficients_from_physical(samples: np.ndarray, K: int) -> np.ndarray:
    """Forward transform of real samples, keeping only the cube |k_i| ≤ K."""
    M = samples.shape[-1]
    if M < 2 * K + 1:
        raise ResolutionError(f"grid of {M} points cannot supply modes up to K={K}")
    half = scipy.fft.rfftn(samples, axes=SPATIAL_AXES, norm="forward", workers=fft_workers())
    idx = _grid_index(K, M)
    n = 2 * K + 1
    out = np.empty(samples.shape[:-3] + (n, n, n), dtype=np.complex128)
    out[..., :K + 1] = half[..., idx[:, None, None], idx[None, :, None], np.arange(K + 1)[None, None, :]]
    neg = negated_index(K)
    mirrored = out[..., :K + 1][..., neg, :, :][..., :, neg, :]
    out[..., K + 1:] = np.conj(mirrored[..., neg[K + 1:]])
    return out


def to_physical(f: SpectralField, grid_size: Optional[int] = None) -> PhysicalField:
    return PhysicalField(physical_from_coefficients(f.coefficients, grid_size or f.grid_size))


def to_spectral(p: PhysicalField, K: int, grid_size: Optional[int] = None) -> SpectralField:
    return SpectralField(coefficients_from_physical(p.samples, K), grid_size or p.grid_size)


# ---------------------------------------------------------------------------
# Per-mode operators
# ---------------------------------------------------------------------------

def project_coefficients(coefficients: np.ndarray) -> np.ndarray:
    K = (coefficients.shape[-1] - 1) // 2
    kx, ky, kz = wavevectors(K)
    k2 = k_squared(K)
    safe = np.where(k2 == 0, 1.0, k2)
    k_dot_c = (kx * coefficients[0] + ky * coefficients[1] + kz * coefficients[2]) / safe
    out = np.stack([coefficients[0] - kx * k_dot_c,
                    coefficients[1] - ky * k_dot_c,
                    coefficients[2] - kz * k_dot_c])
    out[:, 0, 0, 0] = 0.0
    return out


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the component of every mode along k and the mean mode."""
    return f.with_coefficients(project_coefficients(f.coefficients))


def divergence_defect(f: SpectralField) -> float:
    """max_k |k·û_k| relative to max_k |k||û_k| (0 for the zero field)."""
    K = f.resolution
    kx, ky, kz = wavevectors(K)
    c = f.coefficients
    div = np.abs(kx * c[0] + ky * c[1] + kz * c[2])
    scale = np.max(np.sqrt(k_squared(K)) * np.sqrt(np.sum(np.abs(c) ** 2, axis=0)))
    if scale == 0:
        return 0.0
    return float(np.max(div) / scale)


def hermitian_defect(f: SpectralField) -> float:
    neg = negated_index(f.resolution)
    c = f.coefficients
    mirrored = np.conj(c[:, neg][:, :, neg][:, :, :, neg])
    scale = np.max(np.abs(c))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(c - mirrored)) / scale)


def cube_mask(K: int, n: int) -> np.ndarray:
    k = np.abs(mode_axis(K))
    return (k[:, None, None] <= n) & (k[None, :, None] <= n) & (k[None, None, :] <= n)


def ball_mask(K: int, n: float) -> np.ndarray:
    return k_squared(K) <= n * n


def truncate_modes(f: SpectralField, n: int) -> SpectralField:
    """Galerkin truncation S_n onto the cube [−n, n]³."""
    if n < 0:
        raise ParameterError(f"truncation order must be >= 0, got {n}")
    if n > f.resolution:
        raise ResolutionError(f"cannot truncate to n={n}: field only carries modes up to K={f.resolution}")
    return f.with_coefficients(np.where(cube_mask(f.resolution, n), f.coefficients, 0.0))


def truncate_ball(f: SpectralField, n: int) -> SpectralField:
    """Spherical truncation |k| ≤ n, kept for comparison with the cube."""
    if n > f.resolution:
        raise ResolutionError(f"cannot truncate to n={n}: field only carries modes up to K={f.resolution}")
    return f.with_coefficients(np.where(ball_mask(f.resolution, n), f.coefficients, 0.0))


def resize(f: SpectralField, K: int, grid_size: Optional[int] = None) -> SpectralField:
    """Embed into (or cut down to) the cube of half-width K."""
    grid_size = grid_size or f.grid_size
    n_old, n_new = 2 * f.resolution + 1, 2 * K + 1
    out = np.zeros((3, n_new, n_new, n_new), dtype=np.complex128)
    common = min(f.resolution, K)
    src = _grid_index(common, n_old)
    dst = _grid_index(common, n_new)
    out[:, dst[:, None, None], dst[None, :, None], dst[None, None, :]] = \
        f.coefficients[:, src[:, None, None], src[None, :, None], src[None, None, :]]
    return SpectralField(out, grid_size)


def derivative(f: SpectralField, axis: int) -> SpectralField:
    """∂/∂x_axis applied componentwise."""
    k = wavevectors(f.resolution)[axis]
    return f.with_coefficients(1j * k * f.coefficients)


def gradient_coefficients(coefficients: np.ndarray) -> np.ndarray:
    """Coefficients of ∂_j u_i, shape (3, 3, n, n, n) indexed [i, j]."""
    K = (coefficients.shape[-1] - 1) // 2
    return np.stack([1j * k * coefficients for k in wavevectors(K)], axis=1)


# ---------------------------------------------------------------------------
# Norms and integrals
# ---------------------------------------------------------------------------

def l2_sq(f: SpectralField) -> float:
    return float(TORUS_VOLUME * np.sum(np.abs(f.coefficients) ** 2))


def inner_product(f: SpectralField, g: SpectralField) -> float:
    if f.resolution != g.resolution:
        raise ResolutionError(f"cannot pair fields with K={f.resolution} and K={g.resolution}")
    return float(TORUS_VOLUME * np.sum((f.coefficients * np.conj(g.coefficients)).real))


def gradient_norm_sq(f: SpectralField) -> float:
    return float(TORUS_VOLUME * np.sum(k_squared(f.resolution) * np.abs(f.coefficients) ** 2))


def laplacian_norm_sq(f: SpectralField) -> float:
    return float(TORUS_VOLUME * np.sum(k_squared(f.resolution) ** 2 * np.abs(f.coefficients) ** 2))


def polynomial_degree(power: float) -> Optional[int]:
    """Degree of |u|^power as a polynomial in u, or None when it is not one."""
    if power >= 0 and float(power).is_integer() and int(power) % 2 == 0:
        return int(power)
    return None


def integrand_degree(r: float) -> Optional[int]:
    """Degree of the integrands |u|^{r+1}, |∇u|²|u|^{r−1} and (−Δu)·|u|^{r−1}u.

    They are polynomials in (u, ∇u, Δu) only for odd integer r.
    """
    if polynomial_degree(r - 1) is None:
        return None
    return int(r) + 1


def quadrature_grid_size(f: SpectralField, degree: Optional[int] = None) -> int:
    """Grid on which trapezoidal quadrature of a degree-`degree` integrand is exact.

    Non-polynomial integrands (degree None) use the factor-2 padded grid.
    """
    if degree is None:
        return 2 * f.grid_size
    return even_ceil(max(f.grid_size, degree * f.resolution + 2))


def torus_integral(values: np.ndarray) -> float:
    """Trapezoidal quadrature over the torus of samples on a uniform grid."""
    return float(TORUS_VOLUME * np.mean(values))


def lp_norm(f: PhysicalField, q: float) -> float:
    if not np.isfinite(q) or q < 1:
        raise ParameterError(f"q must be finite and >= 1, got {q}")
    return torus_integral(f.magnitude() ** q) ** (1.0 / q)


def lp_power(f: SpectralField, q: float) -> float:
    """∫|u|^q on the quadrature grid that suits that integrand."""
    M = quadrature_grid_size(f, polynomial_degree(q))
    return torus_integral(to_physical(f, M).magnitude() ** q)


def field_lp_norm(f: SpectralField, q: float) -> float:
    return lp_power(f, q) ** (1.0 / q)


def physical_gradient(f: SpectralField, M: int) -> Tuple[np.ndarray, np.ndarray]:
    """Samples of u (3, M, M, M) and of ∂_j u_i (3, 3, M, M, M) from one batched transform."""
    c = f.coefficients
    batched = np.concatenate([c[None], gradient_coefficients(c)], axis=0)
    samples = physical_from_coefficients(batched, M)
    return samples[0], samples[1:]


def weighted_gradient_integral(f: SpectralField, r: float) -> float:
    """I_r(u) = ∫ |∇u|² |u|^{r−1}."""
    M = quadrature_grid_size(f, integrand_degree(r))
    u, du = physical_gradient(f, M)
    magnitude = np.sqrt(np.sum(u ** 2, axis=0))
    return torus_integral(np.sum(du ** 2, axis=(0, 1)) * magnitude ** (r - 1))


def norm_report(f: SpectralField, q: float, r: float) -> NormReport:
    return NormReport(
        l2_sq=l2_sq(f),
        grad_l2_sq=gradient_norm_sq(f),
        lp=field_lp_norm(f, q),
        i_r=weighted_gradient_integral(f, r),
    )
