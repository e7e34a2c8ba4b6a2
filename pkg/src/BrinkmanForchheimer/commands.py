"""Subcommands behind app.py.

Each command returns a report object; `app.py` prints it and turns it into an
exit code. Assertion failures are raised as `InequalityViolation` after the
outputs (ledger, CSV) are complete.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .checkpoint import CHECKPOINT_GLOB, checkpoint_name, load_checkpoint, save_checkpoint
from .config import RunConfig
from .dynamics import rescale_identity_error
from .errors import (
    BlowUpError,
    DissipativityError,
    InequalityViolation,
    LedgerError,
    ParameterError,
    StepSizeError,
)
from .inequalities import SandwichReport, absorption_sandwich, lp_gradient_ratio, nikolskii_pair, truncation_errors
from .initial_conditions import build_initial_condition, ic_multi_harmonic, ic_random_spectrum, ic_shear
from .integrator import StepperState, initial_state, integrate
from .ledger import EnergyLedger, LedgerRow, read_rows, replay_balance
from .mollifier import Mollifier
from .monitors import (
    EnergyInequalityReport,
    GronwallReport,
    MonotonicityReport,
    energy_inequality_report,
    gronwall_monitor,
    monotonicity_monitor,
    threshold_met,
)
from .spectral import ModelParams, gradient_norm_sq, l2_sq, lp_power

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.ini"
SWEEP_COLUMNS = (
    "mu", "beta", "r", "final_residual", "monotonicity_violations", "max_increase",
    "threshold_met", "blow_up", "failure", "wall_time",
)
RESCALE_TOLERANCE = 1e-10
AUDIT_TOLERANCE = 1e-12


class ExitCode(IntEnum):
    OK = 0
    CONFIG_ERROR = 2
    ASSERTION_FAILED = 3
    BLOW_UP = 4
    NUMERICAL_FAILURE = 5


def sweep_workers() -> int:
    return max(1, int(os.environ.get("CBF_WORKERS", "1")))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

@dataclass
class RunResult:
    state: StepperState
    rows: List[LedgerRow]
    energy_inequality: EnergyInequalityReport
    monotonicity: MonotonicityReport
    gronwall: Optional[GronwallReport] = None
    checkpoints: List[Path] = field(default_factory=list)

    @property
    def relative_residual(self) -> float:
        if not self.rows or self.rows[0].E == 0:
            return 0.0
        return self.rows[-1].R / self.rows[0].E

    def violations(self) -> List[str]:
        found = []
        if not self.energy_inequality.passed:
            found.append(f"energy inequality slack {self.energy_inequality.min_slack:.3e} "
                         f"at {self.energy_inequality.worst_pair}")
        if not self.monotonicity.passed:
            found.append(f"‖∇u‖² increased {self.monotonicity.violations} times "
                         f"(max {self.monotonicity.max_increase:.3e})")
        if self.gronwall is not None and not self.gronwall.passed:
            found.append(f"Gronwall bound: {self.gronwall.bound_violations} row violations, "
                         f"{self.gronwall.differential_violations} differential violations")
        return found


def _reports(rows: Sequence[LedgerRow], params: ModelParams):
    gronwall = gronwall_monitor(rows, params) if params.r > 3 and params.beta > 0 else None
    return energy_inequality_report(rows), monotonicity_monitor(rows, params), gronwall


def run_trajectory(config: RunConfig, ledger: EnergyLedger, state: Optional[StepperState] = None,
                   out_dir: Optional[Path] = None) -> RunResult:
    """Integrate `config` to its end time, recording into `ledger`.

    A fresh run (`state` None) records the initial row and, with an output
    directory, the step-0 checkpoint. Rows are recorded every `cadence` steps
    and checkpoints written every `checkpoint_every` steps, both always at T.
    """
    output = config.output
    checkpoints: List[Path] = []
    if state is None:
        u0 = build_initial_condition(config.initial.ic, config.K, config.N, seed=config.initial.seed,
                                     slope=config.initial.slope, amplitude=config.initial.amplitude)
        state = initial_state(u0, config.params, config.control, config.dt)
        ledger.record(state.field, state.time)
        if out_dir is not None:
            checkpoints.append(save_checkpoint(state, out_dir / checkpoint_name(0)))

    def observe(s: StepperState):
        final = s.time == config.T
        if final or s.step_count % output.cadence == 0:
            ledger.record(s.field, s.time)
        if out_dir is not None and (final or s.step_count % output.checkpoint_every == 0):
            checkpoints.append(save_checkpoint(s, out_dir / checkpoint_name(s.step_count)))

    if state.time < config.T:
        state = integrate(state, config.T, observers=[observe], cadence=1, control=config.control)
    rows = ledger.snapshot()
    inequality, monotonicity, gronwall = _reports(rows, config.params)
    return RunResult(state, rows, inequality, monotonicity, gronwall, checkpoints)


def cmd_run(config: RunConfig, out_dir: Union[str, Path], resume: Optional[Union[str, Path]] = None) -> RunResult:
    """One trajectory: ledger and checkpoints in `out_dir`.

    With `resume` the run continues from that checkpoint; ledger rows after its
    time are dropped and the ledger file continues from there.

    Raises:
        BlowUpError: the guard tripped; the ledger up to that point is kept.
        InequalityViolation: a monitor failed; all outputs are written first.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_NAME).write_text(config.to_text(), encoding="utf-8")
    ledger_path = out_dir / config.output.ledger

    state = None
    if resume is not None:
        state = load_checkpoint(resume)
        if state.params != config.params:
            raise ParameterError(f"checkpoint parameters {state.params} differ from the configuration")
        ledger = EnergyLedger.load(ledger_path, config.params, reopen=True, until=state.time)
        if ledger.track_regularity != config.output.track_regularity and len(ledger):
            raise LedgerError("regularity tracking differs between the ledger and the configuration")
        logger.info("resuming from %s at t=%.6g (step %d, %d ledger rows kept)",
                    resume, state.time, state.step_count, len(ledger))
    else:
        ledger = EnergyLedger(config.params, ledger_path, track_regularity=config.output.track_regularity)

    with ledger:
        try:
            result = run_trajectory(config, ledger, state=state, out_dir=out_dir)
        except BlowUpError as exc:
            logger.warning("blow-up: %s", exc)
            if exc.state is not None:
                save_checkpoint(exc.state, out_dir / checkpoint_name(exc.state.step_count))
            raise

    logger.info("run finished: t=%.6g, %d rows, relative residual %.3e",
                result.state.time, len(result.rows), result.relative_residual)
    failures = result.violations()
    if failures:
        raise InequalityViolation("; ".join(failures), report=result)
    return result


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _sweep_cell(job: Tuple[str, float, float, float]) -> Dict[str, object]:
    config_text, mu, beta, r = job
    config = RunConfig.from_text(config_text).with_params(mu=mu, beta=beta, r=r)
    started = time.perf_counter()
    row: Dict[str, object] = {"mu": mu, "beta": beta, "r": r, "threshold_met": threshold_met(config.params),
                              "failure": ""}
    try:
        with EnergyLedger(config.params) as ledger:
            result = run_trajectory(config, ledger)
    except BlowUpError as exc:
        logger.warning("cell mu=%g beta=%g r=%g blew up: %s", mu, beta, r, exc)
        row.update(final_residual=np.nan, monotonicity_violations=0, max_increase=np.nan, blow_up=True)
    except (StepSizeError, DissipativityError) as exc:
        logger.warning("cell mu=%g beta=%g r=%g failed: %s", mu, beta, r, exc)
        row.update(final_residual=np.nan, monotonicity_violations=0, max_increase=np.nan, blow_up=False,
                   failure=type(exc).__name__)
    else:
        row.update(final_residual=result.relative_residual,
                   monotonicity_violations=result.monotonicity.violations,
                   max_increase=result.monotonicity.max_increase,
                   blow_up=False)
    row["wall_time"] = time.perf_counter() - started
    return row


def _cell_label(row) -> str:
    label = f"mu={row.mu:g}, beta={row.beta:g}"
    if row.failure:
        label += f", {row.failure}"
    return f"({label})"


def cmd_sweep(config: RunConfig, mus: Sequence[float], betas: Sequence[float], rs: Sequence[float],
              out_csv: Union[str, Path], workers: Optional[int] = None) -> pd.DataFrame:
    """One trajectory per (μ, β, r) cell, summarised in a CSV.

    Cells run in separate processes when `workers` (default $CBF_WORKERS) is
    above one. A cell whose integration fails (step size or dissipativity)
    is recorded with the error name in `failure` and does not stop the
    others. Raises InequalityViolation, after the CSV is written, when a
    cell with r = 3, 4μβ ≥ 1 shows an increase of ‖∇u‖², blows up or fails.
    """
    text = config.to_text()
    jobs = [(text, float(mu), float(beta), float(r)) for r in rs for mu in mus for beta in betas]
    workers = sweep_workers() if workers is None else workers
    print(f"Sweeping {len(jobs)} cells with {workers} worker(s) …")
    if workers == 1:
        rows = [_sweep_cell(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))

    frame = pd.DataFrame(rows, columns=list(SWEEP_COLUMNS))
    out_csv = Path(out_csv)
    out_csv.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(out_csv, index=False)
    logger.info("sweep summary written to %s", out_csv)

    asserted = frame[frame["threshold_met"]]
    failed = asserted[(asserted["monotonicity_violations"] > 0) | asserted["blow_up"] | (asserted["failure"] != "")]
    if not failed.empty:
        cells = ", ".join(_cell_label(row) for row in failed.itertuples())
        raise InequalityViolation(f"‖∇u‖² not verified non-increasing in cells above the threshold: {cells}",
                                  report=frame)
    return frame


# ---------------------------------------------------------------------------
# check-inequalities
# ---------------------------------------------------------------------------

CHECK_K = 4
CHECK_N = 12
NIKOLSKII_FIELDS = 5
MOLLIFIER_WIDTHS = (0.05, 0.1, 0.5, 1.0)
TRUNCATION_ORDERS = (2, 4, 8)


@dataclass
class InequalitySuite:
    sandwich: List[SandwichReport] = field(default_factory=list)
    ratios: List[Tuple[float, Optional[float]]] = field(default_factory=list)
    nikolskii: List[Tuple[float, float]] = field(default_factory=list)
    analytic: Optional[SandwichReport] = None
    mollifier_passed: bool = True
    truncation: List[float] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"r": s.r, "lower_slack": s.lower_slack, "upper_slack": s.upper_slack,
              "identity_error": s.identity_error, "passed": s.passed} for s in self.sandwich]
        ).groupby("r").agg(
            fields=("passed", "size"),
            min_lower_slack=("lower_slack", "min"),
            min_upper_slack=("upper_slack", "min"),
            max_identity_error=("identity_error", "max"),
            failures=("passed", lambda passed: int((~passed).sum())),
        )


def cmd_check_inequalities(seed: int, rs: Sequence[float], fields: int) -> InequalitySuite:
    """Run the functional-inequality checks on `fields` random fields per r.

    Raises InequalityViolation listing every failed check.
    """
    suite = InequalitySuite()
    samples = [ic_random_spectrum(seed + i, K=CHECK_K, N=CHECK_N) for i in range(fields)]
    print(f"Checking {len(samples)} fields for r in {list(rs)} …")
    for r in rs:
        for i, u in enumerate(samples):
            report = absorption_sandwich(u, r)
            suite.sandwich.append(report)
            if not report.passed:
                suite.failures.append(f"sandwich r={r:g} field {i}: {report.as_tuple()}")
            ratio = lp_gradient_ratio(u, r)
            suite.ratios.append((r, ratio))
            if ratio is not None and not (np.isfinite(ratio) and ratio > 0):
                suite.failures.append(f"L^{{3(r+1)}} ratio r={r:g} field {i}: {ratio}")
        for u in samples[:NIKOLSKII_FIELDS]:
            pair = nikolskii_pair(u, r)
            suite.nikolskii.append((r, pair.ratio))
            if pair.ratio is not None and not np.isfinite(pair.ratio):
                suite.failures.append(f"Nikol'skii ratio r={r:g} is not finite")

    shear = absorption_sandwich(ic_shear(CHECK_K, CHECK_N), 3.0)
    suite.analytic = shear
    if abs(shear.m - 3.0 * shear.i_r) > 1e-10 * abs(shear.m):
        suite.failures.append(f"shear field: M={shear.m!r} is not 3 I_3={3.0 * shear.i_r!r}")

    for h in MOLLIFIER_WIDTHS:
        axioms = Mollifier(h).axioms()
        if not axioms.passed:
            suite.mollifier_passed = False
            suite.failures.append(f"mollifier h={h}: {axioms}")

    suite.truncation = truncation_errors(ic_multi_harmonic(10, 32), TRUNCATION_ORDERS)
    if not all(b < a for a, b in zip(suite.truncation, suite.truncation[1:])):
        suite.failures.append(f"truncation errors not decreasing: {suite.truncation}")

    if suite.failures:
        raise InequalityViolation("; ".join(suite.failures), report=suite)
    return suite


# ---------------------------------------------------------------------------
# rescale-test
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RescaleReport:
    lam: int
    r: float
    alpha: float
    error: float
    tolerance: float = RESCALE_TOLERANCE

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def cmd_rescale_test(lam: int, r: float, alpha: float = 0.0, seed: int = 0) -> RescaleReport:
    """rhs(u_λ) against the rescaled rhs(u) for a random field at K=4, N=12."""
    u = ic_random_spectrum(seed, K=CHECK_K, N=CHECK_N)
    params = ModelParams(mu=1.0, alpha=alpha, beta=1.0, r=r)
    report = RescaleReport(lam=lam, r=r, alpha=alpha, error=rescale_identity_error(u, params, lam))
    if not report.passed:
        raise InequalityViolation(
            f"rescaling identity error {report.error:.3e} above {report.tolerance:.0e}", report=report)
    return report


# ---------------------------------------------------------------------------
# energy-audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    table: pd.DataFrame
    balance: pd.DataFrame
    energy_inequality: EnergyInequalityReport
    unmatched: int

    @property
    def max_mismatch(self) -> float:
        """Largest relative error over the recomputed E, G, P (checkpoints) and D, A, R (ledger rows)."""
        worst = 0.0
        if not self.table.empty:
            worst = float(self.table[["E_error", "G_error", "P_error"]].to_numpy().max())
        if not self.balance.empty:
            worst = max(worst, float(self.balance[["D_error", "A_error", "R_error"]].to_numpy().max()))
        return worst

    @property
    def passed(self) -> bool:
        return self.max_mismatch <= AUDIT_TOLERANCE and self.energy_inequality.passed


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(abs(b), np.finfo(float).tiny) if a != b else 0.0


def _ledger_path(directory: Path) -> Path:
    config_path = directory / CONFIG_NAME
    if config_path.exists():
        return directory / RunConfig.from_path(config_path).output.ledger
    candidates = sorted(directory.glob("*.ndjson"))
    if not candidates:
        raise LedgerError(f"no ledger found in {directory}")
    return candidates[0]


def _audit_params(directory: Path, checkpoints: Sequence[Path]) -> ModelParams:
    config_path = directory / CONFIG_NAME
    if config_path.exists():
        return RunConfig.from_path(config_path).params
    if checkpoints:
        return load_checkpoint(checkpoints[0]).params
    raise LedgerError(f"no configuration or checkpoint in {directory} to take the model parameters from")


def _balance_table(rows: Sequence[LedgerRow], params: ModelParams) -> pd.DataFrame:
    records = [{"t": row.t, "D_error": _relative(D, row.D), "A_error": _relative(A, row.A),
                "R_error": _relative(R, row.R)}
               for row, (D, A, R) in zip(rows, replay_balance(rows, params))]
    return pd.DataFrame(records, columns=["t", "D_error", "A_error", "R_error"])


def cmd_energy_audit(directory: Union[str, Path]) -> AuditReport:
    """Recompute E, G and P from every checkpoint and D, A and R from the ledger's own columns.

    Checkpoints are matched to ledger rows by exact time. D, A and R are
    replayed over every row with the model parameters of the run.
    """
    directory = Path(directory)
    rows = read_rows(_ledger_path(directory))
    by_time = {row.t: row for row in rows}
    paths = sorted(directory.glob(CHECKPOINT_GLOB))
    print(f"Auditing {len(paths)} checkpoints against {len(rows)} ledger rows …")

    records, unmatched = [], 0
    for path in paths:
        state = load_checkpoint(path)
        row = by_time.get(state.time)
        if row is None:
            unmatched += 1
            logger.debug("%s: no ledger row at t=%r", path.name, state.time)
            continue
        E, G = l2_sq(state.field), gradient_norm_sq(state.field)
        P = lp_power(state.field, state.params.r + 1)
        records.append({
            "step": state.step_count, "t": state.time,
            "E": E, "E_error": _relative(E, row.E),
            "G": G, "G_error": _relative(G, row.G),
            "P": P, "P_error": _relative(P, row.P),
        })

    table = pd.DataFrame(records, columns=["step", "t", "E", "E_error", "G", "G_error", "P", "P_error"])
    balance = _balance_table(rows, _audit_params(directory, paths))
    report = AuditReport(table=table, balance=balance, energy_inequality=energy_inequality_report(rows),
                         unmatched=unmatched)
    if not report.passed:
        raise InequalityViolation(
            f"audit failed: max column mismatch {report.max_mismatch:.3e}, "
            f"energy inequality slack {report.energy_inequality.min_slack:.3e}", report=report)
    return report
