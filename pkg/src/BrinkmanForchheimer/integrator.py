"""Integrating-factor Runge–Kutta time stepping with embedded error control.

The viscous and Darcy terms are integrated exactly through the factor
exp(−(μ|k|² + α)t); the convective and absorption terms go through the
classical four-stage scheme. A third-order companion built from the
first-same-as-last stage N(u_{n+1}) gives the local error estimate, and that
stage is reused as the first stage of the following step.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .dynamics import linear_symbol, nonlinear_coefficients
from .errors import (
    BlowUpError,
    DissipativityError,
    ParameterError,
    StepRejected,
    StepSizeError,
)
from .spectral import (
    TORUS_VOLUME,
    ModelParams,
    SpectralField,
    gradient_norm_sq,
    l2_sq,
    physical_from_coefficients,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StepControl:
    """Step-size policy of a run.

    With `adaptive` off every step uses the same dt and nothing is rejected.
    """

    dt_min: float = 1e-6
    dt_max: float = 0.05
    tol: float = 1e-8
    adaptive: bool = True
    blowup_factor: float = 1e6
    cfl: float = 1.0
    absorption_safety: float = 2.0
    safety: float = 0.9
    growth: float = 2.0
    shrink: float = 0.2

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt_max:
            raise ParameterError(f"need 0 < dt_min <= dt_max, got dt_min={self.dt_min}, dt_max={self.dt_max}")
        for name in ("tol", "blowup_factor", "cfl", "absorption_safety"):
            if getattr(self, name) <= 0:
                raise ParameterError(f"{name} must be > 0")

    def clamp(self, dt: float) -> float:
        return min(max(dt, self.dt_min), self.dt_max)


@dataclass(frozen=True)
class StepperState:
    field: SpectralField
    time: float
    dt: float
    step_count: int
    params: ModelParams
    # ‖∇u‖² at t = 0 of the run; the blow-up guard is a multiple of it
    initial_gradient: Optional[float] = None
    # N(field), carried over from the previous step's last stage
    nonlinear: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.time < 0:
            raise ParameterError(f"time must be >= 0, got {self.time}")
        if self.dt <= 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if self.nonlinear is not None:
            self.nonlinear.flags.writeable = False


Observer = Callable[[StepperState], None]


# ---------------------------------------------------------------------------
# Stability ceiling
# ---------------------------------------------------------------------------

def stability_bound(u: SpectralField, p: ModelParams, dt_max: Optional[float] = None,
                    cfl: float = 1.0, absorption_safety: float = 2.0) -> float:
    """min(c₁/(K·max|u|), c₂/(β·max|u|^{r−1} + α)), clamped to dt_max when given."""
    samples = physical_from_coefficients(u.coefficients, u.grid_size)
    speed = float(np.max(np.sqrt(np.sum(samples ** 2, axis=0))))
    bound = np.inf
    if speed > 0 and u.resolution > 0:
        bound = cfl / (u.resolution * speed)
    damping = p.alpha + (p.beta * speed ** (p.r - 1) if p.beta > 0 else 0.0)
    if damping > 0:
        bound = min(bound, absorption_safety / damping)
    if dt_max is not None:
        bound = min(bound, dt_max)
    return float(bound)


# ---------------------------------------------------------------------------
# One step
# ---------------------------------------------------------------------------

def _norm(c: np.ndarray) -> float:
    return float(np.sqrt(TORUS_VOLUME * np.sum(np.abs(c) ** 2)))


def _ifrk4(c: np.ndarray, k1: np.ndarray, dt: float, N: int, params: ModelParams):
    K = (c.shape[-1] - 1) // 2
    L = linear_symbol(K, params)
    E = np.exp(L * dt)
    E2 = np.exp(L * (dt / 2))
    a = E2 * (c + (dt / 2) * k1)
    k2 = nonlinear_coefficients(a, N, params)
    b = E2 * c + (dt / 2) * k2
    k3 = nonlinear_coefficients(b, N, params)
    d = E * c + dt * E2 * k3
    k4 = nonlinear_coefficients(d, N, params)
    c1 = E * c + (dt / 6) * (E * k1 + 2 * E2 * (k2 + k3) + k4)
    k5 = nonlinear_coefficients(c1, N, params)
    error = (dt / 6) * (k4 - k5)
    return c1, k5, error


def step(s: StepperState, control: StepControl = StepControl(), dt: Optional[float] = None) -> StepperState:
    """Advance one step of size `dt` (default `s.dt`).

    Raises:
        StepRejected: adaptive control found the error ratio above 1.
        StepSizeError: a rejection happened with dt already at dt_min.
        DissipativityError: ‖u‖² grew by more than `control.tol` relative.
        BlowUpError: the new field is not finite.
    """
    dt = s.dt if dt is None else dt
    c = s.field.coefficients
    N = s.field.grid_size
    k1 = s.nonlinear if s.nonlinear is not None else nonlinear_coefficients(c, N, s.params)
    c1, k5, error = _ifrk4(c, k1, dt, N, s.params)

    if not np.all(np.isfinite(c1)):
        raise BlowUpError(f"non-finite coefficients at t={s.time + dt:.6g}", state=s)

    scale = max(_norm(c), _norm(c1))
    ratio = _norm(error) / (control.tol * scale) if scale > 0 else 0.0
    proposal = dt * min(control.growth, max(control.shrink, control.safety * ratio ** -0.25)) if ratio > 0 \
        else dt * control.growth

    if control.adaptive and ratio > 1.0:
        if dt <= control.dt_min * (1 + 1e-12):
            raise StepSizeError(f"error ratio {ratio:.3e} at dt_min={control.dt_min:.3e} (t={s.time:.6g})")
        raise StepRejected(ratio, control.clamp(proposal))

    energy_before = TORUS_VOLUME * np.sum(np.abs(c) ** 2)
    energy_after = TORUS_VOLUME * np.sum(np.abs(c1) ** 2)
    if energy_after - energy_before > control.tol * max(energy_before, np.finfo(float).tiny):
        raise DissipativityError(
            f"‖u‖² grew from {energy_before:.12e} to {energy_after:.12e} at t={s.time + dt:.6g}")

    next_dt = control.clamp(proposal) if control.adaptive else s.dt
    return StepperState(
        field=s.field.with_coefficients(c1),
        time=s.time + dt,
        dt=next_dt,
        step_count=s.step_count + 1,
        params=s.params,
        initial_gradient=s.initial_gradient,
        nonlinear=k5,
    )


# ---------------------------------------------------------------------------
# Driving loop
# ---------------------------------------------------------------------------

def integrate(s: StepperState, t_end: float, observers: Iterable[Observer] = (),
              cadence: int = 1, control: StepControl = StepControl()) -> StepperState:
    """Step until `t_end`, calling observers every `cadence` steps and after the last one.

    The last step is shortened so the final time is exactly `t_end`, and no
    step is longer than the current dt. The blow-up guard is
    `control.blowup_factor` times `s.initial_gradient`, so a run split into
    several calls trips it exactly where a single call would.
    """
    if t_end < s.time:
        raise ParameterError(f"t_end={t_end} lies before the current time {s.time}")
    if cadence < 1:
        raise ParameterError(f"cadence must be >= 1, got {cadence}")
    observers = list(observers)
    reference = s.initial_gradient if s.initial_gradient is not None else gradient_norm_sq(s.field)
    guard = control.blowup_factor * reference
    logger.info("integrating t=%.6g -> %.6g (dt=%.3e, %s)", s.time, t_end, s.dt,
                "adaptive" if control.adaptive else "fixed")

    while s.time < t_end:
        dt = s.dt
        if control.adaptive:
            dt = min(dt, stability_bound(s.field, s.params, control.dt_max, control.cfl, control.absorption_safety))
            dt = max(dt, control.dt_min)
        remaining = t_end - s.time
        last = remaining <= dt * (1 + 1e-9)
        if last:
            dt = remaining
        elif remaining - dt < control.dt_min:
            # halve what is left rather than leave a sliver below dt_min
            dt = remaining / 2
        try:
            new = step(s, control, dt)
        except StepRejected as rejection:
            logger.debug("t=%.6g: %s", s.time, rejection)
            s = replace(s, dt=rejection.suggested_dt)
            continue
        if last:
            new = replace(new, time=t_end)

        grad = gradient_norm_sq(new.field)
        if guard > 0 and grad > guard:
            raise BlowUpError(f"‖∇u‖²={grad:.3e} exceeds guard {guard:.3e} at t={new.time:.6g}", state=s)
        s = new
        if last or s.step_count % cadence == 0:
            for observer in observers:
                observer(s)

    logger.info("reached t=%.6g after %d steps", s.time, s.step_count)
    return s


def initial_state(u: SpectralField, params: ModelParams, control: StepControl, dt: float) -> StepperState:
    return StepperState(field=u, time=0.0, dt=control.clamp(dt), step_count=0, params=params,
                        initial_gradient=gradient_norm_sq(u))


def energy(s: StepperState) -> float:
    return l2_sq(s.field)
