"""Initial velocity fields.

Analytic fields are sampled on the collocation grid and transformed, which is
exact for fields band-limited inside the cube; every field is then projected
so the zero-mean and divergence-free invariants hold to roundoff.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import ParameterError, ResolutionError
from .spectral import (
    TORUS_VOLUME,
    PhysicalField,
    SpectralField,
    grid_points,
    k_squared,
    l2_sq,
    leray_project,
    negated_index,
    to_spectral,
)

DEFAULT_K = 10
DEFAULT_N = 32


def _from_samples(samples, K: int, N: int, band: int) -> SpectralField:
    if K < band:
        raise ResolutionError(f"this field needs K >= {band}, got K={K}")
    return leray_project(to_spectral(PhysicalField(np.stack(samples)), K, N))


def ic_taylor_green(K: int = DEFAULT_K, N: int = DEFAULT_N) -> SpectralField:
    """(sin x cos y cos z, −cos x sin y cos z, 0)."""
    x, y, z = grid_points(N)
    return _from_samples([np.sin(x) * np.cos(y) * np.cos(z),
                          -np.cos(x) * np.sin(y) * np.cos(z),
                          np.zeros_like(x)], K, N, band=1)


def ic_shear(K: int = DEFAULT_K, N: int = DEFAULT_N) -> SpectralField:
    """(sin y, 0, 0)."""
    x, y, z = grid_points(N)
    return _from_samples([np.sin(y), np.zeros_like(x), np.zeros_like(x)], K, N, band=1)


def ic_beltrami(K: int = DEFAULT_K, N: int = DEFAULT_N) -> SpectralField:
    """ABC flow with A = B = C = 1."""
    x, y, z = grid_points(N)
    return _from_samples([np.sin(z) + np.cos(y), np.sin(x) + np.cos(z), np.sin(y) + np.cos(x)], K, N, band=1)


def ic_multi_harmonic(K: int = DEFAULT_K, N: int = DEFAULT_N, decay: float = 0.2) -> SpectralField:
    """Taylor–Green plus Σ_{m=1..K} decay^m (sin my, sin mz, sin mx)."""
    x, y, z = grid_points(N)
    u = [np.sin(x) * np.cos(y) * np.cos(z), -np.cos(x) * np.sin(y) * np.cos(z), np.zeros_like(x)]
    for m in range(1, K + 1):
        a = decay ** m
        u[0] = u[0] + a * np.sin(m * y)
        u[1] = u[1] + a * np.sin(m * z)
        u[2] = u[2] + a * np.sin(m * x)
    return _from_samples(u, K, N, band=1)


def ic_random_spectrum(seed: int, slope: float = -2.0, amplitude: float = 1.0,
                       K: int = DEFAULT_K, N: int = DEFAULT_N) -> SpectralField:
    """Random phases with mode amplitudes ∝ |k|^slope, scaled to rms speed `amplitude`.

    Deterministic in `seed`.
    """
    if K < 1:
        raise ParameterError(f"K must be >= 1, got {K}")
    n = 2 * K + 1
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    neg = negated_index(K)
    c = 0.5 * (c + np.conj(c[:, neg][:, :, neg][:, :, :, neg]))
    k2 = k_squared(K)
    shell = np.where(k2 > 0, np.sqrt(np.where(k2 > 0, k2, 1.0)) ** slope, 0.0)
    field = leray_project(SpectralField(c * shell, N))
    energy = l2_sq(field)
    if energy == 0:
        return field
    rms = np.sqrt(energy / TORUS_VOLUME)
    return field * (amplitude / rms)


@dataclass(frozen=True)
class InitialCondition:
    name: str
    build: Callable[..., SpectralField]
    random: bool = False


class InitialConditions(Enum):
    TAYLOR_GREEN = InitialCondition(name="taylor_green", build=ic_taylor_green)
    SHEAR = InitialCondition(name="shear", build=ic_shear)
    BELTRAMI = InitialCondition(name="beltrami", build=ic_beltrami)
    MULTI_HARMONIC = InitialCondition(name="multi_harmonic", build=ic_multi_harmonic)
    RANDOM_SPECTRUM = InitialCondition(name="random_spectrum", build=ic_random_spectrum, random=True)

    @classmethod
    def names(cls):
        return [member.value.name for member in cls]

    @classmethod
    def lookup(cls, name: str) -> "InitialConditions":
        for member in cls:
            if member.value.name == name:
                return member
        raise ParameterError(f"unknown initial condition {name!r}; choose from {cls.names()}")


def build_initial_condition(name: str, K: int, N: int, seed: Optional[int] = None,
                            slope: float = -2.0, amplitude: float = 1.0) -> SpectralField:
    ic = InitialConditions.lookup(name).value
    if ic.random:
        return ic.build(seed=0 if seed is None else seed, slope=slope, amplitude=amplitude, K=K, N=N)
    return ic.build(K=K, N=N)
