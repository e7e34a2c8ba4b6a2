"""Tests comparing the simulator against closed-form reference values and the desk-scale acceptance runs.

Reference values are exact integrals over the torus [0, 2π]³ for the shear
field (sin y, 0, 0) and the Taylor–Green vortex. The acceptance runs take
minutes and are marked `slow`; skip them with `pytest -m "not slow"`.
"""

from dataclasses import replace
from math import comb
from pathlib import Path

import numpy as np
import pytest

from BrinkmanForchheimer.commands import cmd_check_inequalities, cmd_rescale_test, cmd_run, cmd_sweep, run_trajectory
from BrinkmanForchheimer.config import RunConfig
from BrinkmanForchheimer.inequalities import (
    absorption_sandwich,
    convergence_order,
    density_experiment,
    dyadic_schedule,
    lp_gradient_ratio,
    truncation_errors,
    weak_form_residual,
)
from BrinkmanForchheimer.initial_conditions import ic_multi_harmonic, ic_random_spectrum, ic_shear, ic_taylor_green
from BrinkmanForchheimer.integrator import StepControl, initial_state, integrate
from BrinkmanForchheimer.ledger import EnergyLedger
from BrinkmanForchheimer.mollifier import Mollifier, mollified_test_function, sample_trajectory
from BrinkmanForchheimer.monitors import gronwall_constant
from BrinkmanForchheimer.spectral import (
    ModelParams,
    gradient_norm_sq,
    l2_sq,
    laplacian_norm_sq,
    lp_power,
    to_physical,
)

CONFIGS = Path(__file__).resolve().parent / "configs"
PI3 = np.pi ** 3

# Shear field (sin y, 0, 0)
REFERENCE_SHEAR = {
    "l2_sq": 4 * PI3,
    "gradient_norm_sq": 4 * PI3,
    "laplacian_norm_sq": 4 * PI3,
    "l4_power": 3 * PI3,
    "l12_power": 8 * PI3 * comb(12, 6) / 2 ** 12,
    "I3": PI3,
    "M": 3 * PI3,
}

# Taylor–Green vortex (sin x cos y cos z, −cos x sin y cos z, 0)
REFERENCE_TAYLOR_GREEN = {
    "l2_sq": 2 * PI3,
    "gradient_norm_sq": 6 * PI3,
    "laplacian_norm_sq": 18 * PI3,
    "max_velocity": 1.0,
}

# (β, μ, r) → Gronwall constant
REFERENCE_GRONWALL = {
    (1.0, 1.0, 4.0): 4.0 / 27.0,
    (1.0, 1.0, 5.0): 0.25,
}


def max_velocity(f):
    return float(np.max(to_physical(f).magnitude()))


def _ledger_run(config, track_regularity=False):
    with EnergyLedger(config.params, track_regularity=track_regularity) as ledger:
        return run_trajectory(config, ledger)


def _trajectory(u, params, dt, T):
    control = StepControl(adaptive=False)
    fields = [u]
    integrate(initial_state(u, params, control, dt), T, observers=[lambda s: fields.append(s.field)],
              control=control)
    return sample_trajectory(fields, np.arange(len(fields)) * dt)


# ---------------------------------------------------------------------------
# Closed-form reference values
# ---------------------------------------------------------------------------

class TestShearReference:
    @pytest.fixture(scope="class")
    def shear(self):
        return ic_shear(K=4, N=12)

    def test_norms(self, shear):
        assert l2_sq(shear) == pytest.approx(REFERENCE_SHEAR["l2_sq"], rel=1e-13)
        assert gradient_norm_sq(shear) == pytest.approx(REFERENCE_SHEAR["gradient_norm_sq"], rel=1e-13)
        assert laplacian_norm_sq(shear) == pytest.approx(REFERENCE_SHEAR["laplacian_norm_sq"], rel=1e-13)
        assert lp_power(shear, 4.0) == pytest.approx(REFERENCE_SHEAR["l4_power"], rel=1e-12)
        assert lp_power(shear, 12.0) == pytest.approx(REFERENCE_SHEAR["l12_power"], rel=1e-12)

    def test_sandwich_attains_upper_bound(self, shear):
        report = absorption_sandwich(shear, 3.0)
        assert report.i_r == pytest.approx(REFERENCE_SHEAR["I3"], rel=1e-12)
        assert report.m == pytest.approx(REFERENCE_SHEAR["M"], rel=1e-12)
        assert abs(report.m - report.r_i_r) <= 1e-10 * report.m

    def test_lp_gradient_ratio(self, shear):
        expected = REFERENCE_SHEAR["l12_power"] ** (1 / 3) / REFERENCE_SHEAR["I3"]
        assert lp_gradient_ratio(shear, 3.0) == pytest.approx(expected, rel=1e-10)


class TestTaylorGreenReference:
    @pytest.fixture(scope="class")
    def vortex(self):
        return ic_taylor_green(K=10, N=32)

    @pytest.mark.parametrize("name, measure", [
        ("l2_sq", l2_sq),
        ("gradient_norm_sq", gradient_norm_sq),
        ("laplacian_norm_sq", laplacian_norm_sq),
        ("max_velocity", max_velocity),
    ])
    def test_values(self, vortex, name, measure):
        value = measure(vortex)
        expected = REFERENCE_TAYLOR_GREEN[name]
        assert value == pytest.approx(expected, rel=1e-12), f"{name}: expected {expected}, got {value}"


class TestGronwallReference:
    @pytest.mark.parametrize("key", sorted(REFERENCE_GRONWALL))
    def test_constant(self, key):
        assert gronwall_constant(*key) == pytest.approx(REFERENCE_GRONWALL[key], rel=1e-14)


# ---------------------------------------------------------------------------
# Acceptance runs
# ---------------------------------------------------------------------------

@pytest.mark.slow
class TestEnergyEquality:
    @pytest.fixture(scope="class")
    def base(self):
        return RunConfig.from_path(CONFIGS / "taylor_green.ini")

    def test_residual(self, base):
        result = _ledger_run(base)
        assert result.relative_residual <= 1e-6, f"relative residual {result.relative_residual:.3e}"

    def test_inequality_at_every_pair(self, base):
        result = _ledger_run(base)
        slack = result.energy_inequality.min_slack
        assert slack >= -1e-8 * result.rows[0].E, f"slack {slack:.3e} at {result.energy_inequality.worst_pair}"

    def test_fourth_order_in_dt(self, base):
        steps = [4e-3, 2e-3, 1e-3]
        residuals = []
        for dt in steps:
            config = replace(base, dt=dt, output=replace(base.output, cadence=1))
            result = _ledger_run(config)
            residuals.append(abs(result.rows[-1].R) / result.rows[0].E)
        order = convergence_order(steps, residuals)
        assert 3.5 <= order <= 4.5, f"residuals {residuals}, order {order:.2f}"


@pytest.mark.slow
class TestSpatialRefinement:
    @pytest.mark.parametrize("r", [3.0, 4.0])
    def test_lp_gradient_ratio(self, r):
        coarse = lp_gradient_ratio(ic_random_spectrum(11, K=4, N=16), r)
        fine = lp_gradient_ratio(ic_random_spectrum(11, K=4, N=32), r)
        assert abs(fine - coarse) < 0.01 * fine, f"r={r}: N=16 gives {coarse}, N=32 gives {fine}"

    def test_energy_residual_does_not_grow(self):
        base = RunConfig.from_path(CONFIGS / "taylor_green.ini")
        residuals = [_ledger_run(replace(base, N=N, K=K)).relative_residual for N, K in [(16, 7), (32, 15)]]
        assert residuals[1] <= 1.05 * residuals[0], f"residuals {residuals}"


@pytest.mark.slow
class TestThresholdSweep:
    def test_no_increase_above_threshold(self, tmp_path):
        config = RunConfig.from_path(CONFIGS / "threshold_sweep.ini")
        frame = cmd_sweep(config, [0.25, 0.5, 1.0], [0.25, 0.5, 1.0], [3.0], tmp_path / "sweep.csv")
        assert len(frame) == 9
        asserted = frame[frame["threshold_met"]]
        assert len(asserted) == 6
        assert (asserted["monotonicity_violations"] == 0).all()
        assert not frame["blow_up"].any()


@pytest.mark.slow
class TestGronwallBound:
    @pytest.mark.parametrize("r", [4.0, 5.0])
    def test_bound(self, r):
        config = RunConfig.from_path(CONFIGS / "gronwall_r5.ini").with_params(r=r)
        result = _ledger_run(config, track_regularity=True)
        report = result.gronwall
        assert report is not None and report.differential_checked
        assert report.constant == pytest.approx(REFERENCE_GRONWALL[(1.0, 1.0, r)], rel=1e-14)
        assert report.passed, f"r={r}: {report}"


@pytest.mark.slow
class TestInequalitySuite:
    def test_hundred_fields(self):
        suite = cmd_check_inequalities(0, [2.0, 3.0, 4.0, 7.0], 25)
        assert len(suite.sandwich) == 100
        assert suite.passed
        for report in suite.sandwich:
            if report.r >= 3:
                assert report.identity_error <= 1e-8


@pytest.mark.slow
class TestMollifierAndTruncation:
    def test_truncation_strictly_decreasing(self):
        errors = truncation_errors(ic_multi_harmonic(K=10, N=32), (2, 4, 8))
        assert errors[0] > errors[1] > errors[2]

    def test_density_along_dyadic_schedule(self):
        w = _trajectory(ic_multi_harmonic(K=16, N=34), ModelParams(mu=0.1, beta=0.3, r=3.0), 1.0 / 64, 1.0)
        points = density_experiment(w, dyadic_schedule([1, 2, 3, 4]))
        combined = [p.combined for p in points]
        assert all(b < a for a, b in zip(combined, combined[1:])), f"combined errors {combined}"


class TestRescaling:
    @pytest.mark.parametrize("r", [3.0, 2.0])
    def test_identity(self, r):
        report = cmd_rescale_test(2, r)
        assert report.error <= 1e-10, f"r={r}: {report.error:.3e}"


@pytest.mark.slow
class TestWeakFormRefinement:
    def test_residual_decreases(self):
        params = ModelParams(mu=0.1, beta=0.3, r=3.0)
        u = ic_random_spectrum(0, K=4, N=10)
        residuals = []
        for h, dt in [(0.2, 0.01), (0.1, 0.0025), (0.05, 0.000625)]:
            v = _trajectory(u, params, dt, 1.0)
            phi = mollified_test_function(v, 4, Mollifier(h), 0.5)
            residuals.append(weak_form_residual(v, phi, params, 0.0, 0.5))
        assert residuals[0] > residuals[1] > residuals[2], f"residuals {residuals}"
        assert residuals[-1] <= 1e-4


class TestDeterminism:
    def test_resume_is_bit_identical(self, tmp_path):
        config = RunConfig(params=ModelParams(mu=0.1, beta=0.3, r=3.0), N=10, K=4, T=2.0 ** -4, dt=2.0 ** -9,
                           control=StepControl(adaptive=False))
        config = replace(config, output=replace(config.output, cadence=16, checkpoint_every=16))
        cmd_run(config, tmp_path / "full")
        cmd_run(replace(config, T=2.0 ** -5), tmp_path / "part")
        cmd_run(config, tmp_path / "part", resume=tmp_path / "part" / "checkpoint_000016.cbf")
        full = (tmp_path / "full" / "ledger.ndjson").read_bytes()
        assert (tmp_path / "part" / "ledger.ndjson").read_bytes() == full
