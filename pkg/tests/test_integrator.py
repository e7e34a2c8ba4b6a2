import numpy as np
import pytest

from BrinkmanForchheimer.dynamics import nonlinear_coefficients
from BrinkmanForchheimer.errors import BlowUpError, ParameterError, StepRejected, StepSizeError
from BrinkmanForchheimer.initial_conditions import ic_random_spectrum, ic_shear, ic_taylor_green
from BrinkmanForchheimer.integrator import (
    StepControl,
    StepperState,
    energy,
    initial_state,
    integrate,
    stability_bound,
    step,
)
from BrinkmanForchheimer.spectral import ModelParams, SpectralField, gradient_norm_sq, l2_sq

FIXED = StepControl(adaptive=False)


def _state(u, params, dt=0.01, control=FIXED):
    return initial_state(u, params, control, dt)


# ---------------------------------------------------------------------------
# Stability ceiling
# ---------------------------------------------------------------------------

class TestStabilityBound:
    def test_taylor_green(self):
        u = ic_taylor_green(K=10, N=32)
        bound = stability_bound(u, ModelParams(mu=1.0, beta=1.0, r=3.0))
        assert bound == pytest.approx(0.1, rel=1e-12)

    def test_clamped_to_dt_max(self):
        u = ic_taylor_green(K=10, N=32)
        assert stability_bound(u, ModelParams(mu=1.0, beta=1.0, r=3.0), dt_max=0.05) == 0.05

    def test_absorption_limits_step(self):
        u = ic_taylor_green(K=10, N=32) * 10.0
        # c₁/(K·max|u|) = 0.01 sits below c₂/(β·max|u|²) = 0.02
        bound = stability_bound(u, ModelParams(mu=1.0, beta=1.0, r=3.0))
        assert bound == pytest.approx(0.01, rel=1e-12)
        heavy = stability_bound(u, ModelParams(mu=1.0, beta=10.0, r=3.0))
        assert heavy == pytest.approx(2.0 / 1000.0, rel=1e-12)

    def test_zero_field_has_no_ceiling(self):
        assert stability_bound(SpectralField.zeros(4, 12), ModelParams(mu=1.0)) == np.inf


# ---------------------------------------------------------------------------
# Single steps
# ---------------------------------------------------------------------------

class TestStep:
    def test_zero_field_stays_zero(self):
        s = step(_state(SpectralField.zeros(4, 12), ModelParams(mu=1.0, beta=1.0)), FIXED)
        assert l2_sq(s.field) == 0.0
        assert (s.step_count, s.time) == (1, 0.01)

    def test_carries_nonlinear_term_of_new_field(self):
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        s = step(_state(ic_random_spectrum(4, K=4, N=12), params), FIXED)
        assert np.array_equal(s.nonlinear, nonlinear_coefficients(s.field.coefficients, 12, params))

    def test_rejection_suggests_smaller_step(self):
        control = StepControl(tol=1e-14)
        s = _state(ic_random_spectrum(4, amplitude=3.0, K=4, N=12), ModelParams(mu=0.1, beta=1.0), dt=0.05,
                   control=control)
        with pytest.raises(StepRejected) as info:
            step(s, control)
        assert info.value.error_ratio > 1
        assert control.shrink * 0.05 <= info.value.suggested_dt < 0.05

    def test_rejection_at_dt_min(self):
        control = StepControl(dt_min=0.05, dt_max=0.05, tol=1e-16)
        s = _state(ic_random_spectrum(4, amplitude=3.0, K=4, N=12), ModelParams(mu=0.1, beta=1.0), dt=0.05,
                   control=control)
        with pytest.raises(StepSizeError):
            step(s, control)

    def test_state_rejects_negative_time(self):
        with pytest.raises(ParameterError):
            StepperState(field=SpectralField.zeros(2, 6), time=-1.0, dt=0.1, step_count=0,
                         params=ModelParams(mu=1.0))


# ---------------------------------------------------------------------------
# Driving loop
# ---------------------------------------------------------------------------

class TestIntegrate:
    def test_shear_decays_exactly(self):
        # (u·∇)u = 0 and β = 0, so each step is the exact decay factor
        u = ic_shear(K=4, N=12)
        s = integrate(_state(u, ModelParams(mu=0.3)), 0.5, control=FIXED)
        ratio = s.field.coefficients[0, 0, 1, 0] / u.coefficients[0, 0, 1, 0]
        assert ratio == pytest.approx(np.exp(-0.15), rel=1e-13)

    def test_lands_on_end_time(self):
        s = integrate(_state(ic_taylor_green(K=4, N=12), ModelParams(mu=0.1, beta=0.3), dt=0.03), 0.1,
                      control=FIXED)
        assert s.time == 0.1
        assert s.step_count == 4

    def test_observers_follow_cadence(self):
        seen = []
        integrate(_state(ic_taylor_green(K=4, N=12), ModelParams(mu=0.1, beta=0.3), dt=0.01), 0.095,
                  observers=[lambda s: seen.append(s.step_count)], cadence=3, control=FIXED)
        assert seen == [3, 6, 9, 10]

    def test_end_before_start(self):
        s = _state(ic_taylor_green(K=4, N=12), ModelParams(mu=0.1))
        with pytest.raises(ParameterError):
            integrate(s, -1.0)

    def test_energy_decreases(self):
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        s0 = _state(ic_random_spectrum(2, K=4, N=12), params)
        energies = []
        integrate(s0, 0.2, observers=[lambda s: energies.append(energy(s))], control=FIXED)
        assert all(b <= a for a, b in zip([energy(s0)] + energies, energies))

    def test_adaptive_run_respects_tolerance(self):
        control = StepControl(tol=1e-10, dt_max=0.05)
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        u = ic_random_spectrum(2, K=4, N=12)
        coarse = integrate(initial_state(u, params, control, 0.01), 0.3, control=control)
        fine = integrate(_state(u, params, dt=1e-3), 0.3, control=FIXED)
        err = np.sqrt(l2_sq(coarse.field - fine.field) / l2_sq(fine.field))
        assert err < 1e-7, f"adaptive error {err:.3e}"

    def test_blow_up_guard(self):
        control = StepControl(adaptive=False, blowup_factor=1e-3)
        s0 = _state(ic_taylor_green(K=4, N=12), ModelParams(mu=0.1, beta=0.3), control=control)
        with pytest.raises(BlowUpError) as info:
            integrate(s0, 0.1, control=control)
        assert info.value.state.step_count == 0

    def test_blow_up_guard_survives_a_restart(self):
        # ‖∇u‖² dips below its initial value and later rises past it, so a guard
        # rebuilt from the field at t = 0.5 would sit lower than the run's guard
        params = ModelParams(mu=0.01, beta=0.01, r=3.0)
        s0 = _state(ic_taylor_green(K=4, N=12), params)
        history = []
        integrate(s0, 1.0, observers=[lambda s: history.append((s.time, gradient_norm_sq(s.field)))],
                  control=FIXED)
        early = max([s0.initial_gradient] + [g for t, g in history if t <= 0.5])
        final = history[-1][1]
        assert final > early, f"‖∇u‖² history {history}"

        control = StepControl(adaptive=False, blowup_factor=0.5 * (early + final) / s0.initial_gradient)
        with pytest.raises(BlowUpError) as single:
            integrate(s0, 1.0, control=control)
        half = integrate(s0, 0.5, control=control)
        assert half.initial_gradient == s0.initial_gradient
        with pytest.raises(BlowUpError) as split:
            integrate(half, 1.0, control=control)
        assert split.value.state.step_count == single.value.state.step_count
        assert split.value.state.time == pytest.approx(single.value.state.time, abs=1e-12)

    def test_last_step_never_exceeds_dt(self):
        # the remainder after one full step is below dt_min, so what is left is halved
        times = []
        end = 0.05 + 5e-7
        s = integrate(_state(ic_taylor_green(K=4, N=12), ModelParams(mu=0.1, beta=0.3), dt=0.05), end,
                      observers=[lambda s: times.append(s.time)], control=FIXED)
        assert s.time == end
        assert s.step_count == 2
        assert np.diff([0.0] + times).max() <= 0.05

    def test_runs_are_deterministic(self):
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        u = ic_random_spectrum(9, K=4, N=12)
        a = integrate(_state(u, params), 0.1, control=FIXED)
        b = integrate(_state(u, params), 0.1, control=FIXED)
        assert a.field.coefficients.tobytes() == b.field.coefficients.tobytes()


# ---------------------------------------------------------------------------
# Order of accuracy
# ---------------------------------------------------------------------------

class TestConvergence:
    def test_fourth_order(self):
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        u = ic_random_spectrum(5, K=4, N=10)
        reference = integrate(_state(u, params, dt=0.25 / 320), 0.25, control=FIXED).field
        errors = []
        for n in (10, 20, 40):
            s = integrate(_state(u, params, dt=0.25 / n), 0.25, control=FIXED)
            errors.append(np.sqrt(l2_sq(s.field - reference)))
        ratios = [a / b for a, b in zip(errors, errors[1:])]
        assert all(10 < q < 24 for q in ratios), f"errors {errors}, ratios {ratios}"
