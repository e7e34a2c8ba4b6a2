"""Functional inequalities and weak-formulation checks, evaluated numerically.

Everything here is pure: fields and trajectories in, reports out. Spatial
integrals use trapezoidal quadrature on grids chosen by
`quadrature_grid_size`, which is exact whenever the integrand is a polynomial
in u and its derivatives (odd integer r).
"""

import itertools
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .dynamics import absorption_term, convective_term
from .errors import ParameterError
from .mollifier import (
    Mollifier,
    TrajectorySamples,
    mollified_test_function,
    mollify_trajectory,
    time_derivative,
    truncate_trajectory,
    window_indices,
)
from .spectral import (
    TORUS_VOLUME,
    ModelParams,
    PhysicalField,
    SpectralField,
    gradient_norm_sq,
    inner_product,
    integrand_degree,
    k_squared,
    l2_sq,
    lp_power,
    physical_from_coefficients,
    gradient_coefficients,
    quadrature_grid_size,
    to_physical,
    torus_integral,
    truncate_ball,
    truncate_modes,
    weighted_gradient_integral,
)

logger = logging.getLogger(__name__)

SANDWICH_TOLERANCE = 1e-8
IDENTITY_TOLERANCE = 1e-8


# ---------------------------------------------------------------------------
# I_r ≤ M ≤ r·I_r
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichReport:
    """I_r = ∫|∇u|²|u|^{r−1}, M = ∫(−Δu)·|u|^{r−1}u and r·I_r.

    `identity_error` is the relative defect of
    M = I_r + ((r−1)/4)∫|u|^{r−3}|∇|u|²|², or None for r < 3.
    """

    r: float
    i_r: float
    m: float
    r_i_r: float
    identity_error: Optional[float]
    identity_exact: bool

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.i_r, self.m, self.r_i_r

    @property
    def lower_slack(self) -> float:
        return (self.m - self.i_r) / self._scale

    @property
    def upper_slack(self) -> float:
        return (self.r_i_r - self.m) / self._scale

    @property
    def _scale(self) -> float:
        return max(abs(self.r_i_r), np.finfo(float).tiny)

    @property
    def passed(self) -> bool:
        ok = self.i_r >= 0 and min(self.lower_slack, self.upper_slack) >= -SANDWICH_TOLERANCE
        if self.identity_exact and self.identity_error is not None:
            ok = ok and self.identity_error <= IDENTITY_TOLERANCE
        return ok


def absorption_sandwich(u: SpectralField, r: float) -> SandwichReport:
    if r < 1:
        raise ParameterError(f"r must be >= 1, got {r}")
    degree = integrand_degree(r)
    M = quadrature_grid_size(u, degree)
    c = u.coefficients
    batched = np.concatenate([c[None], gradient_coefficients(c), (k_squared(u.resolution) * c)[None]], axis=0)
    samples = physical_from_coefficients(batched, M)
    v, dv, minus_lap = samples[0], samples[1:4], samples[4]
    magnitude = np.sqrt(np.sum(v ** 2, axis=0))
    weight = magnitude ** (r - 1)

    i_r = torus_integral(np.sum(dv ** 2, axis=(0, 1)) * weight)
    m = torus_integral(np.sum(minus_lap * v, axis=0) * weight)

    identity_error = None
    if r >= 3:
        # ∂_j|u|² = 2 Σ_i u_i ∂_j u_i; |u| itself is never differentiated
        grad_sq_magnitude = 2.0 * np.einsum("ixyz,ijxyz->jxyz", v, dv)
        extra = torus_integral(magnitude ** (r - 3) * np.sum(grad_sq_magnitude ** 2, axis=0))
        predicted = i_r + (r - 1) / 4.0 * extra
        identity_error = abs(m - predicted) / max(abs(m), np.finfo(float).tiny) if m != 0 else abs(predicted)
    return SandwichReport(r=r, i_r=i_r, m=m, r_i_r=r * i_r, identity_error=identity_error,
                          identity_exact=degree is not None)


def lp_gradient_ratio(u: SpectralField, r: float) -> Optional[float]:
    """‖u‖^{r+1}_{L^{3(r+1)}} / I_r(u), or None when I_r(u) = 0."""
    i_r = weighted_gradient_integral(u, r)
    if i_r <= 0:
        return None
    q = 3.0 * (r + 1)
    return lp_power(u, q) ** ((r + 1) / q) / i_r


# ---------------------------------------------------------------------------
# Nikol'skiĭ seminorm
# ---------------------------------------------------------------------------

def _shift_vectors(M: int, delta: float) -> List[Tuple[int, int, int]]:
    """Grid shifts a with 0 < |a|·2π/M < δ, one representative of each ±a pair."""
    spacing = 2.0 * np.pi / M
    reach = int(np.ceil(delta / spacing))
    shifts = []
    for a in itertools.product(range(-reach, reach + 1), repeat=3):
        if a <= (0, 0, 0):
            continue
        if 0 < spacing * np.sqrt(a[0] ** 2 + a[1] ** 2 + a[2] ** 2) < delta:
            shifts.append(a)
    return shifts


def nikolskii_seminorm(u: PhysicalField, s: float, p: float, delta: float = np.pi) -> float:
    """sup over grid shifts 0 < |h| < δ of ∫|u(x+h) − u(x)|^p dx / |h|^{sp}.

    Shifts h and −h give the same integral, so only one of each pair is visited.
    """
    if not 0 < s < 1:
        raise ParameterError(f"s must lie in (0, 1), got {s}")
    if p < 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    if not 0 < delta <= np.pi:
        raise ParameterError(f"delta must lie in (0, π], got {delta}")
    M = u.grid_size
    spacing = 2.0 * np.pi / M
    samples = u.samples
    best = 0.0
    for a in _shift_vectors(M, delta):
        shifted = np.roll(samples, shift=(-a[0], -a[1], -a[2]), axis=(1, 2, 3))
        difference = np.sqrt(np.sum((shifted - samples) ** 2, axis=0))
        length = spacing * np.sqrt(a[0] ** 2 + a[1] ** 2 + a[2] ** 2)
        best = max(best, torus_integral(difference ** p) / length ** (s * p))
    return best


def nikolskii_norm(u: PhysicalField, s: float, p: float, delta: float = np.pi) -> float:
    """‖u‖_p^p plus the seminorm."""
    return torus_integral(u.magnitude() ** p) + nikolskii_seminorm(u, s, p, delta)


@dataclass(frozen=True)
class NikolskiiPair:
    seminorm: float
    i_r: float

    @property
    def ratio(self) -> Optional[float]:
        return self.seminorm / self.i_r if self.i_r > 0 else None


def nikolskii_pair(u: SpectralField, r: float, delta: float = np.pi) -> NikolskiiPair:
    """Seminorm with s = 2/(r+1), p = r+1 next to I_r, for tracking the empirical constant."""
    return NikolskiiPair(
        seminorm=nikolskii_seminorm(to_physical(u), 2.0 / (r + 1), r + 1, delta),
        i_r=weighted_gradient_integral(u, r),
    )


# ---------------------------------------------------------------------------
# Truncation and density
# ---------------------------------------------------------------------------

def truncation_errors(f: SpectralField, orders: Sequence[int], q: float = 4.0, ball: bool = False) -> List[float]:
    """‖S_n f − f‖_{L^q} for each n (ball truncation |k| ≤ n when `ball`)."""
    truncate = truncate_ball if ball else truncate_modes
    errors = []
    for n in orders:
        e = truncate(f, n) - f
        errors.append(lp_power(e, q) ** (1.0 / q))
    return errors


def _time_integral(times: np.ndarray, values: Sequence[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(integrate.simpson(np.asarray(values), x=times))


def space_time_norms(e: TrajectorySamples, indices: Optional[Sequence[int]] = None) -> Tuple[float, float]:
    """(‖e‖_{L⁴(L⁴)}, ‖e‖_{L²(V)}) over the samples in `indices` (all by default)."""
    indices = list(range(e.times.size)) if indices is None else list(indices)
    times = e.times[indices]
    l4 = [lp_power(e.fields[i], 4.0) for i in indices]
    grad = [gradient_norm_sq(e.fields[i]) for i in indices]
    return _time_integral(times, l4) ** 0.25, _time_integral(times, grad) ** 0.5


@dataclass(frozen=True)
class DensityPoint:
    n: int
    h: float
    l4_error: float
    v_error: float

    @property
    def combined(self) -> float:
        return self.l4_error + self.v_error


def density_experiment(w: TrajectorySamples, schedule: Sequence[Tuple[int, float]]) -> List[DensityPoint]:
    """Error of (S_n w)^h against w along a schedule of (n, h)."""
    points = []
    for n, h in schedule:
        approx = mollify_trajectory(truncate_trajectory(w, n), Mollifier(h))
        error = approx.with_stacked(approx.stacked() - w.stacked())
        l4, v = space_time_norms(error)
        logger.debug("density n=%d h=%.4g: L4 %.3e, V %.3e", n, h, l4, v)
        points.append(DensityPoint(n=n, h=h, l4_error=l4, v_error=v))
    return points


def dyadic_schedule(levels: Sequence[int]) -> List[Tuple[int, float]]:
    return [(2 ** j, 2.0 ** -j) for j in levels]


def mollification_error(v: TrajectorySamples, m: Mollifier, interior: bool = True) -> float:
    """‖v^h − v‖ in L⁴(L⁴), over [t0+h, T−h] when `interior` (the ends lose half the kernel mass)."""
    smoothed = mollify_trajectory(v, m)
    error = smoothed.with_stacked(smoothed.stacked() - v.stacked())
    indices = list(range(v.times.size))
    if interior:
        lo, hi = v.times[0] + m.h, v.times[-1] - m.h
        indices = [i for i, t in enumerate(v.times) if lo - 1e-12 <= t <= hi + 1e-12]
    return space_time_norms(error, indices)[0]


def convergence_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(step)."""
    slope, _ = np.polyfit(np.log(np.asarray(steps)), np.log(np.asarray(errors)), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Weak formulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakFormTerms:
    """Terms of the weak formulation tested against φ over [t0, t1].

        −∫⟨u, ∂tφ⟩ + μ∫⟨∇u, ∇φ⟩ + α∫⟨u, φ⟩ + ∫⟨(u·∇)u, φ⟩ + β∫⟨|u|^{r−1}u, φ⟩
            = −⟨u(t1), φ(t1)⟩ + ⟨u(t0), φ(t0)⟩
    """

    time: float
    viscous: float
    darcy: float
    convective: float
    absorption: float
    end: float
    start: float

    @property
    def lhs(self) -> float:
        return -self.time + self.viscous + self.darcy + self.convective + self.absorption

    @property
    def rhs(self) -> float:
        return -self.end + self.start


def _gradient_pairing(a: SpectralField, b: SpectralField) -> float:
    return float(TORUS_VOLUME * np.sum(k_squared(a.resolution) * (a.coefficients * np.conj(b.coefficients)).real))


def weak_form_terms(v: TrajectorySamples, phi: TrajectorySamples, p: ModelParams,
                    t0: float, t1: float) -> WeakFormTerms:
    if v.times.shape != phi.times.shape or np.max(np.abs(v.times - phi.times)) > 1e-12 * max(1.0, v.times[-1]):
        raise ParameterError("trajectory and test function must share one time grid")
    if not t0 < t1:
        raise ParameterError(f"need t0 < t1, got {t0}, {t1}")
    indices = window_indices(v, t0, t1)
    times = v.times[indices]
    dphi = time_derivative(phi)

    time_term, viscous, darcy, convective, absorption = [], [], [], [], []
    for i in indices:
        u, f = v.fields[i], phi.fields[i]
        time_term.append(inner_product(u, dphi.fields[i]))
        viscous.append(_gradient_pairing(u, f))
        darcy.append(inner_product(u, f))
        convective.append(inner_product(convective_term(u), f) if l2_sq(f) > 0 else 0.0)
        absorption.append(-inner_product(absorption_term(u, p.beta, p.r), f) if p.beta > 0 and l2_sq(f) > 0 else 0.0)

    return WeakFormTerms(
        time=_time_integral(times, time_term),
        viscous=p.mu * _time_integral(times, viscous),
        darcy=p.alpha * _time_integral(times, darcy),
        convective=_time_integral(times, convective),
        absorption=_time_integral(times, absorption),
        end=inner_product(v.fields[indices[-1]], phi.fields[indices[-1]]),
        start=inner_product(v.fields[indices[0]], phi.fields[indices[0]]),
    )


def weak_form_residual(v: TrajectorySamples, phi: TrajectorySamples, p: ModelParams,
                       t0: float, t1: float) -> float:
    """|LHS − RHS| of the weak formulation, relative to ‖u(t0)‖²."""
    terms = weak_form_terms(v, phi, p, t0, t1)
    defect = abs(terms.lhs - terms.rhs)
    scale = l2_sq(v.fields[v.index_of(t0)])
    if scale == 0:
        return defect
    return defect / scale


# ---------------------------------------------------------------------------
# Pieces of the energy-equality argument
# ---------------------------------------------------------------------------

def antisymmetry_defect(v: TrajectorySamples, m: Mollifier, t1: float) -> float:
    """∫₀^{t1}∫₀^{t1} η̇_h(s−τ)⟨u(s), u(τ)⟩ dτ ds, zero for an even kernel."""
    indices = window_indices(v, v.times[0], t1)
    times = v.times[indices]
    stacked = np.stack([v.fields[i].coefficients for i in indices])
    flat = stacked.reshape(len(indices), -1)
    gram = TORUS_VOLUME * (flat @ np.conj(flat).T).real
    w = np.full(len(indices), v.spacing)
    w[[0, -1]] *= 0.5
    kernel = m.kernel_derivative(times[:, None] - times[None, :])
    return float(w @ (kernel * gram) @ w)


def boundary_pairing(v: TrajectorySamples, m: Mollifier, t1: float) -> float:
    """⟨u(t1), (uχ_[0,t1])^h(t1)⟩ / ‖u(t1)‖², which tends to 1/2 as h → 0."""
    smoothed = mollify_trajectory(v, m, window=(v.times[0], t1))
    i = v.index_of(t1)
    energy = l2_sq(v.fields[i])
    if energy == 0:
        return 0.5
    return inner_product(v.fields[i], smoothed.fields[i]) / energy


@dataclass(frozen=True)
class EnergyIdentityReport:
    terms: WeakFormTerms
    end_fraction: float
    start_fraction: float
    defect: float


def mollified_energy_identity(v: TrajectorySamples, n: int, m: Mollifier, p: ModelParams,
                              t1: float) -> EnergyIdentityReport:
    """Test the solution against its own truncated, mollified self on [0, t1].

    In the limit the time and convective terms vanish and the two pairings
    become half energies, leaving
    ½‖u(t1)‖² + μ∫‖∇u‖² + α∫‖u‖² + β∫‖u‖^{r+1}_{L^{r+1}} = ½‖u(0)‖².
    `defect` measures that balance with the finite-(n, h) terms.
    """
    t0 = float(v.times[0])
    phi = mollified_test_function(v, n, m, t1)
    terms = weak_form_terms(v, phi, p, t0, t1)
    end_energy = l2_sq(v.fields[v.index_of(t1)])
    start_energy = l2_sq(v.fields[0])
    balance = terms.end + terms.viscous + terms.darcy + terms.absorption - terms.start
    return EnergyIdentityReport(
        terms=terms,
        end_fraction=terms.end / end_energy if end_energy > 0 else 0.5,
        start_fraction=terms.start / start_energy if start_energy > 0 else 0.5,
        defect=abs(balance) / start_energy if start_energy > 0 else abs(balance),
    )


def l2_continuity(v: TrajectorySamples) -> float:
    """max_i ‖u(t_{i+1}) − u(t_i)‖ / ‖u(t_0)‖."""
    scale = np.sqrt(l2_sq(v.fields[0]))
    stacked = v.stacked()
    jumps = np.sqrt(TORUS_VOLUME * np.sum(np.abs(np.diff(stacked, axis=0)) ** 2, axis=(1, 2, 3, 4)))
    if jumps.size == 0:
        return 0.0
    return float(np.max(jumps) / scale) if scale > 0 else float(np.max(jumps))
