"""Checks run over a finished (or partial) energy ledger."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ParameterError
from .ledger import EnergyLedger, LedgerRow
from .spectral import ModelParams

logger = logging.getLogger(__name__)

MONOTONICITY_TOLERANCE = 1e-8
GRONWALL_TOLERANCE = 1e-6
ENERGY_INEQUALITY_TOLERANCE = 1e-8

Rows = Union[EnergyLedger, Sequence[LedgerRow]]


def _rows(ledger: Rows) -> Sequence[LedgerRow]:
    return ledger.snapshot() if isinstance(ledger, EnergyLedger) else list(ledger)


def _column(rows: Sequence[LedgerRow], key: str) -> np.ndarray:
    return np.array([getattr(row, key) for row in rows], dtype=float)


# ---------------------------------------------------------------------------
# ‖∇u‖² nonincreasing for r = 3, 4μβ ≥ 1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MonotonicityReport:
    active: bool
    violations: int
    max_increase: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return not self.active or self.violations == 0


def threshold_met(p: ModelParams) -> bool:
    return p.r == 3 and 4.0 * p.mu * p.beta >= 1.0


def monotonicity_monitor(ledger: Rows, p: ModelParams) -> MonotonicityReport:
    """Count increases of ‖∇u‖² between consecutive rows.

    The count is only asserted (`passed`) when r = 3 and 4μβ ≥ 1; otherwise the
    report carries the largest increase for information.
    """
    G = _column(_rows(ledger), "G")
    if G.size < 2:
        return MonotonicityReport(threshold_met(p), 0, 0.0, 0.0)
    tolerance = MONOTONICITY_TOLERANCE * float(np.max(G))
    increases = np.diff(G)
    max_increase = float(max(np.max(increases), 0.0))
    violations = int(np.count_nonzero(increases > tolerance))
    report = MonotonicityReport(threshold_met(p), violations, max_increase, tolerance)
    if report.active and violations:
        logger.warning("‖∇u‖² increased %d times (max %.3e) although 4μβ=%.3g >= 1",
                       violations, max_increase, 4 * p.mu * p.beta)
    return report


# ---------------------------------------------------------------------------
# Gronwall bound for r > 3
# ---------------------------------------------------------------------------

def gronwall_constant(beta: float, mu: float, r: float) -> float:
    """c(β, μ, r) = (2/(βμ(r−1)))^{2/(r−3)} · (r−3)/(r−1)."""
    if r <= 3:
        raise ParameterError(f"the Gronwall constant needs r > 3, got r={r}")
    if beta <= 0:
        raise ParameterError("the Gronwall constant needs beta > 0")
    return (2.0 / (beta * mu * (r - 1))) ** (2.0 / (r - 3)) * (r - 3) / (r - 1)


@dataclass(frozen=True)
class GronwallReport:
    constant: float
    max_bound_ratio: float
    bound_violations: int
    differential_checked: bool
    differential_violations: int
    max_differential_excess: float

    @property
    def passed(self) -> bool:
        return self.bound_violations == 0 and self.differential_violations == 0


def gronwall_monitor(ledger: Rows, p: ModelParams) -> GronwallReport:
    """Check ‖∇u(t)‖² ≤ ‖∇u(0)‖² exp(c t/μ) at every row.

    When the ledger carries H and I the differential form
    d/dt‖∇u‖² + μ‖Δu‖² + βI_r ≤ (c/μ)‖∇u‖² is checked at the rows too, with
    the time derivative taken by second-order differences.
    """
    c = gronwall_constant(p.beta, p.mu, p.r)
    rows = _rows(ledger)
    if not rows:
        return GronwallReport(c, 0.0, 0, False, 0, 0.0)
    t = _column(rows, "t")
    G = _column(rows, "G")
    t = t - t[0]
    bound = G[0] * np.exp(c * t / p.mu)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(bound > 0, G / bound, np.where(G > 0, np.inf, 0.0))
    bound_violations = int(np.count_nonzero(G > bound * (1 + GRONWALL_TOLERANCE)))

    checked = rows[0].H is not None and len(rows) >= 3
    violations, max_excess = 0, 0.0
    if checked:
        H = _column(rows, "H")
        I = _column(rows, "I")
        dG = np.gradient(G, t, edge_order=2)
        lhs = dG + p.mu * H + p.beta * I
        rhs = (c / p.mu) * G
        scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), np.finfo(float).tiny)
        excess = (lhs - rhs) / scale
        violations = int(np.count_nonzero(excess > GRONWALL_TOLERANCE))
        max_excess = float(np.max(excess))
    return GronwallReport(c, float(np.max(ratio)), bound_violations, checked, violations, max_excess)


# ---------------------------------------------------------------------------
# Energy inequality over all pairs t0 < t1
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyInequalityReport:
    min_slack: float
    worst_pair: Optional[Tuple[float, float]]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.min_slack >= -self.tolerance


def energy_inequality_report(ledger: Rows) -> EnergyInequalityReport:
    """Worst slack of E(t1) + [D+A](t0→t1) ≤ E(t0) over every recorded pair.

    With F = E + D + A the inequality reads F(t1) ≤ F(t0), so the worst pair
    pairs each t1 with the smallest F seen before it.
    """
    rows = _rows(ledger)
    if not rows:
        return EnergyInequalityReport(0.0, None, 0.0)
    tolerance = ENERGY_INEQUALITY_TOLERANCE * rows[0].E
    if len(rows) < 2:
        return EnergyInequalityReport(0.0, None, tolerance)
    F = _column(rows, "E") + _column(rows, "D") + _column(rows, "A")
    running_min = np.minimum.accumulate(F)
    running_arg = np.maximum.accumulate(np.where(F == running_min, np.arange(F.size), 0))
    slack = running_min[:-1] - F[1:]
    worst = int(np.argmin(slack))
    pair = (rows[running_arg[worst]].t, rows[worst + 1].t)
    return EnergyInequalityReport(float(slack[worst]), pair, tolerance)
