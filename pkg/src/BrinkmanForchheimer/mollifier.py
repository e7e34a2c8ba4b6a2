"""Time mollification of sampled trajectories.

η is the normalized bump exp(−1/(1−s²)) on (−1, 1) and η_h(s) = η(s/h)/h.
A trajectory is extended by zero outside its window, so at either end of the
window only half of the kernel mass is seen.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .errors import ParameterError, UnderResolvedMollifierError
from .spectral import SpectralField, truncate_modes

logger = logging.getLogger(__name__)

AXIOM_TOLERANCE = 1e-10


def _bump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
    return out


def _bump_derivative(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(-1.0 / (1.0 - si ** 2)) * (-2.0 * si / (1.0 - si ** 2) ** 2)
    return out


@lru_cache(maxsize=None)
def bump_mass() -> float:
    mass, _ = integrate.quad(lambda s: float(_bump(np.array(s))), -1.0, 1.0, epsabs=1e-15, epsrel=1e-14, limit=200)
    return mass


@dataclass(frozen=True)
class MollifierAxioms:
    evenness: float
    unit_mass: float
    half_mass: float

    @property
    def passed(self) -> bool:
        return max(self.evenness, self.unit_mass, self.half_mass) <= AXIOM_TOLERANCE


@dataclass(frozen=True)
class Mollifier:
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise ParameterError(f"mollifier width must be > 0, got {self.h}")

    def profile(self, s) -> np.ndarray:
        """η(s), with unit integral over (−1, 1)."""
        return _bump(s) / bump_mass()

    def kernel(self, s) -> np.ndarray:
        """η_h(s) = η(s/h)/h."""
        return self.profile(np.asarray(s, dtype=float) / self.h) / self.h

    def kernel_derivative(self, s) -> np.ndarray:
        return _bump_derivative(np.asarray(s, dtype=float) / self.h) / (bump_mass() * self.h ** 2)

    def axioms(self) -> MollifierAxioms:
        """Errors in evenness, ∫η_h = 1 and ∫₀^h η_h = 1/2."""
        s = np.linspace(-self.h, self.h, 2001)
        scale = float(np.max(self.kernel(s)))
        evenness = float(np.max(np.abs(self.kernel(s) - self.kernel(-s)))) / scale
        f = lambda x: float(self.kernel(np.array(x)))
        total, _ = integrate.quad(f, -self.h, self.h, epsabs=1e-15, epsrel=1e-14, limit=200)
        half, _ = integrate.quad(f, 0.0, self.h, epsabs=1e-15, epsrel=1e-14, limit=200)
        return MollifierAxioms(evenness=evenness, unit_mass=abs(total - 1.0), half_mass=abs(half - 0.5))


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectorySamples:
    """Fields sampled on a uniform, strictly increasing time grid."""

    times: np.ndarray
    fields: Tuple[SpectralField, ...]

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        fields = tuple(self.fields)
        if times.ndim != 1 or times.size != len(fields):
            raise ParameterError(f"{times.size} times for {len(fields)} fields")
        if times.size > 1:
            steps = np.diff(times)
            if np.any(steps <= 0):
                raise ParameterError("sample times must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > 1e-9 * steps[0]:
                raise ParameterError("sample times must be uniformly spaced")
        times.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "fields", fields)

    @property
    def spacing(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    def stacked(self) -> np.ndarray:
        return np.stack([f.coefficients for f in self.fields])

    def with_stacked(self, coefficients: np.ndarray, times: Optional[np.ndarray] = None) -> "TrajectorySamples":
        grid_size = self.fields[0].grid_size
        times = self.times if times is None else times
        return TrajectorySamples(times, tuple(SpectralField(c, grid_size) for c in coefficients))

    def index_of(self, t: float) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(self.spacing, 1.0):
            raise ParameterError(f"t={t} is not a sample time")
        return i

    def map(self, fn) -> "TrajectorySamples":
        return TrajectorySamples(self.times, tuple(fn(f) for f in self.fields))


def discrete_kernel_mass(m: Mollifier, dt: float) -> float:
    """Σ_{j∈Z} Δt η_h(jΔt), the mass the sampled kernel actually carries."""
    j = np.arange(-int(np.ceil(m.h / dt)) - 1, int(np.ceil(m.h / dt)) + 2)
    return float(dt * np.sum(m.kernel(j * dt)))


def mollification_weights(times: np.ndarray, m: Mollifier, window: Optional[Tuple[float, float]] = None) -> np.ndarray:
    """Matrix W with v^h(t_i) = Σ_j W_ij v(t_j).

    Samples outside `window` count as zero; samples on its edges get half
    weight (trapezoid), so the discrete half-mass property holds exactly.
    """
    dt = float(times[1] - times[0])
    lo, hi = (times[0], times[-1]) if window is None else window
    weights = np.where((times >= lo - 1e-12) & (times <= hi + 1e-12), 1.0, 0.0)
    weights[np.isclose(times, lo, rtol=0, atol=1e-9 * dt)] = 0.5
    weights[np.isclose(times, hi, rtol=0, atol=1e-9 * dt)] = 0.5
    C = discrete_kernel_mass(m, dt)
    return m.kernel(times[:, None] - times[None, :]) * (weights * dt / C)[None, :]


def _check_resolution(v: TrajectorySamples, m: Mollifier):
    if v.times.size < 2:
        raise ParameterError("a trajectory needs at least two samples")
    T = v.times[-1] - v.times[0]
    if m.h >= T:
        raise UnderResolvedMollifierError(f"h={m.h} must be below the trajectory length {T}")
    if m.h < 2 * v.spacing:
        raise UnderResolvedMollifierError(f"h={m.h} is below twice the sample spacing {v.spacing}")


def mollify_trajectory(v: TrajectorySamples, m: Mollifier,
                       window: Optional[Tuple[float, float]] = None) -> TrajectorySamples:
    """v^h = v ∗ η_h by quadrature on the sample grid (v·χ_window ∗ η_h when a window is given)."""
    _check_resolution(v, m)
    W = mollification_weights(v.times, m, window)
    return v.with_stacked(np.tensordot(W, v.stacked(), axes=(1, 0)))


def truncate_trajectory(v: TrajectorySamples, n: int) -> TrajectorySamples:
    return v.map(lambda f: truncate_modes(f, n))


def mollified_test_function(v: TrajectorySamples, n: int, m: Mollifier, t1: float) -> TrajectorySamples:
    """φ = (S_n v · χ_[0,t1])^h, the test function built from the solution itself."""
    return mollify_trajectory(truncate_trajectory(v, n), m, window=(v.times[0], t1))


# ---------------------------------------------------------------------------
# Time differentiation
# ---------------------------------------------------------------------------

_FORWARD = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0
_SKEWED = np.array([-3.0, -10.0, 18.0, -6.0, 1.0]) / 12.0
_CENTRAL = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def derivative_matrix(n: int, dt: float) -> np.ndarray:
    """Fourth-order finite differences: central inside, one-sided at the two ends."""
    if n < 5:
        raise ParameterError(f"fourth-order differences need at least 5 samples, got {n}")
    D = np.zeros((n, n))
    for i in range(2, n - 2):
        D[i, i - 2:i + 3] = _CENTRAL
    D[0, 0:5] = _FORWARD
    D[1, 0:5] = _SKEWED
    D[n - 1, n - 5:n] = -_FORWARD[::-1]
    D[n - 2, n - 5:n] = -_SKEWED[::-1]
    return D / dt


def time_derivative(v: TrajectorySamples) -> TrajectorySamples:
    D = derivative_matrix(v.times.size, v.spacing)
    return v.with_stacked(np.tensordot(D, v.stacked(), axes=(1, 0)))


def sample_trajectory(fields: Sequence[SpectralField], times: Sequence[float]) -> TrajectorySamples:
    return TrajectorySamples(np.asarray(times, dtype=float), tuple(fields))


def window_indices(v: TrajectorySamples, t0: float, t1: float) -> List[int]:
    return list(range(v.index_of(t0), v.index_of(t1) + 1))
