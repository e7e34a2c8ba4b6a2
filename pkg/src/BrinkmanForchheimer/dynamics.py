"""Right-hand side of the convective Brinkman–Forchheimer equations.

    ∂t u = μΔu − αu − P[(u·∇)u] − P[β|u|^{r−1}u]

Nonlinear terms are formed pseudo-spectrally on padded grids. The pressure
gradient never appears: the Leray projection P removes it.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .errors import ResolutionError
from .spectral import (
    ModelParams,
    SpectralField,
    coefficients_from_physical,
    even_ceil,
    gradient_coefficients,
    k_squared,
    physical_from_coefficients,
    project_coefficients,
    resize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Padding:
    factor: float
    exact: bool
    description: Optional[str] = None


class Dealiasing(Enum):
    THREE_HALVES = Padding(factor=1.5, exact=True, description="quadratic convection, 3/2 rule")
    DOUBLE = Padding(factor=2.0, exact=True, description="cubic absorption (r = 3)")
    DOUBLE_INEXACT = Padding(factor=2.0, exact=False, description="non-polynomial absorption, remainder is quadrature error")


def _is_odd_integer(r: float) -> bool:
    return float(r).is_integer() and int(r) % 2 == 1


def absorption_padding(r: float) -> Padding:
    """Padding that makes |u|^{r−1}u alias-free whenever that is possible."""
    if _is_odd_integer(r) and r > 3:
        return Padding(factor=(r + 1) / 2, exact=True, description=f"degree-{int(r)} absorption")
    if _is_odd_integer(r):
        return Dealiasing.DOUBLE.value
    return Dealiasing.DOUBLE_INEXACT.value


def padded_size(N: int, padding: Padding) -> int:
    return even_ceil(padding.factor * N)


def _require_alias_free(K: int, M: int, degree: int, what: str):
    # A degree-d product carries modes up to dK; they fold back onto |k| ≤ K unless M > (d+1)K.
    if M <= (degree + 1) * K:
        raise ResolutionError(f"{what}: padded grid {M} cannot dealias degree {degree} at K={K}")


_warned_inexact = set()


def _warn_inexact(r: float):
    if r not in _warned_inexact:
        _warned_inexact.add(r)
        logger.warning("r=%s is not an odd integer: absorption aliasing is reported as quadrature error", r)


# ---------------------------------------------------------------------------
# Array-level kernels (used by the time integrator)
# ---------------------------------------------------------------------------

def convective_coefficients(c: np.ndarray, N: int) -> np.ndarray:
    """Coefficients of P[(u·∇)u] in gradient form u_j ∂_j u_i."""
    K = (c.shape[-1] - 1) // 2
    M = padded_size(N, Dealiasing.THREE_HALVES.value)
    _require_alias_free(K, M, 2, "convective term")
    batched = np.concatenate([c[None], gradient_coefficients(c)], axis=0)
    samples = physical_from_coefficients(batched, M)
    u, du = samples[0], samples[1:]
    advection = np.einsum("jxyz,ijxyz->ixyz", u, du)
    return project_coefficients(coefficients_from_physical(advection, K))


def absorption_coefficients(c: np.ndarray, N: int, beta: float, r: float) -> np.ndarray:
    """Coefficients of −P[β|u|^{r−1}u]."""
    if beta == 0:
        return np.zeros_like(c)
    if r == 1:
        return -beta * project_coefficients(c)
    K = (c.shape[-1] - 1) // 2
    padding = absorption_padding(r)
    M = padded_size(N, padding)
    if padding.exact:
        _require_alias_free(K, M, int(r), "absorption term")
    else:
        _warn_inexact(r)
    u = physical_from_coefficients(c, M)
    magnitude = np.sqrt(np.sum(u ** 2, axis=0))
    return -beta * project_coefficients(coefficients_from_physical(magnitude ** (r - 1) * u, K))


def linear_symbol(K: int, params: ModelParams) -> np.ndarray:
    """Per-mode rate −(μ|k|² + α) of the viscous and Darcy terms."""
    return -(params.mu * k_squared(K) + params.alpha)


def nonlinear_coefficients(c: np.ndarray, N: int, params: ModelParams) -> np.ndarray:
    """−P[(u·∇)u] − P[β|u|^{r−1}u], the part the integrator treats explicitly."""
    return absorption_coefficients(c, N, params.beta, params.r) - convective_coefficients(c, N)


# ---------------------------------------------------------------------------
# Field-level operations
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RhsBreakdown:
    convective: SpectralField
    absorption: SpectralField
    darcy: SpectralField
    viscous: SpectralField

    @property
    def total(self) -> SpectralField:
        return self.convective + self.absorption + self.darcy + self.viscous


def convective_term(u: SpectralField) -> SpectralField:
    """Leray-projected (u·∇)u, dealiased with the 3/2 rule."""
    return u.with_coefficients(convective_coefficients(u.coefficients, u.grid_size))


def absorption_term(u: SpectralField, beta: float, r: float) -> SpectralField:
    """Leray-projected −β|u|^{r−1}u."""
    return u.with_coefficients(absorption_coefficients(u.coefficients, u.grid_size, beta, r))


def rhs(u: SpectralField, p: ModelParams) -> RhsBreakdown:
    c = u.coefficients
    return RhsBreakdown(
        convective=-convective_term(u),
        absorption=absorption_term(u, p.beta, p.r),
        darcy=u.with_coefficients(-p.alpha * c),
        viscous=u.with_coefficients(-p.mu * k_squared(u.resolution) * c),
    )


def parabolic_rescale(u: SpectralField, lam: int, grid_size: Optional[int] = None) -> SpectralField:
    """u_λ(x) = λ u(λx): mode k moves to λk with its amplitude multiplied by λ.

    The rescaled field lives on the cube of half-width λK and, unless told
    otherwise, on a grid λ times finer. A snapshot of u at time t becomes a
    snapshot of u_λ at time t/λ² (see `rescaled_time`).
    """
    if int(lam) != lam or lam < 1:
        raise ResolutionError(f"lambda must be a positive integer to stay 2π-periodic, got {lam}")
    lam = int(lam)
    K = u.resolution
    target = lam * K
    grid_size = grid_size or lam * u.grid_size
    if grid_size < 2 * target + 2:
        raise ResolutionError(f"rescaling by {lam} needs K={target}, beyond the capacity of a {grid_size}-point grid")
    if lam == 1:
        return resize(u, K, grid_size)
    n_old, n_new = 2 * K + 1, 2 * target + 1
    out = np.zeros((3, n_new, n_new, n_new), dtype=np.complex128)
    # position p of wavenumber k in FFT order maps to position of λk
    dst = (lam * np.r_[0:K + 1, -K:0]) % n_new
    src = np.arange(n_old)
    out[:, dst[:, None, None], dst[None, :, None], dst[None, None, :]] = \
        lam * u.coefficients[:, src[:, None, None], src[None, :, None], src[None, None, :]]
    return SpectralField(out, grid_size)


def rescaled_time(t: float, lam: int) -> float:
    return t / lam ** 2


def rescaled_params(p: ModelParams, lam: int) -> ModelParams:
    """Coefficients under which u_λ solves the equation: (μ, λ²α, λ^{3−r}β, r)."""
    return ModelParams(mu=p.mu, alpha=lam ** 2 * p.alpha, beta=lam ** (3 - p.r) * p.beta, r=p.r)


def rescale_identity_error(u: SpectralField, p: ModelParams, lam: int) -> float:
    """max relative mismatch between rhs(u_λ) and λ³·(rhs(u) evaluated at λx).

    λ²·parabolic_rescale carries exactly that λ³ factor.
    """
    u_lam = parabolic_rescale(u, lam)
    lhs = rhs(u_lam, rescaled_params(p, lam)).total.coefficients
    expected = (lam ** 2) * parabolic_rescale(rhs(u, p).total, lam).coefficients
    scale = np.max(np.abs(expected))
    if scale == 0:
        return float(np.max(np.abs(lhs)))
    return float(np.max(np.abs(lhs - expected)) / scale)
