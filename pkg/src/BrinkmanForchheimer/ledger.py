"""Energy ledger: the terms of the energy balance along a trajectory.

Each row holds

    E = ‖u‖²                       G = ‖∇u‖²
    D = 2∫₀ᵗ (μ‖∇u‖² + α‖u‖²)      P = ‖u‖^{r+1}_{L^{r+1}}
    A = 2β∫₀ᵗ P                    R = |E + D + A − E(0)|

and, when regularity tracking is on, H = ‖Δu‖² and I = I_r(u). The running
integrals use composite Simpson on the recorded instants (nonuniform spacing
allowed). Rows are appended to an NDJSON file, one object per line, flushed as
they are written.
"""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import LedgerError
from .spectral import (
    ModelParams,
    SpectralField,
    gradient_norm_sq,
    l2_sq,
    laplacian_norm_sq,
    lp_power,
    weighted_gradient_integral,
)

logger = logging.getLogger(__name__)

LEDGER_KEYS = ("t", "E", "D", "A", "G", "R", "P")


@dataclass(frozen=True)
class LedgerRow:
    t: float
    E: float
    D: float
    A: float
    G: float
    R: float
    P: float
    H: Optional[float] = None
    I: Optional[float] = None

    def to_record(self) -> Dict[str, float]:
        record = {key: getattr(self, key) for key in LEDGER_KEYS}
        if self.H is not None:
            record["H"] = self.H
            record["I"] = self.I
        return record

    @classmethod
    def from_record(cls, record: Dict[str, float]) -> "LedgerRow":
        missing = [key for key in LEDGER_KEYS if key not in record]
        if missing:
            raise LedgerError(f"ledger row is missing keys {missing}")
        return cls(**{key: float(record[key]) for key in LEDGER_KEYS},
                   H=_optional(record.get("H")), I=_optional(record.get("I")))


def _optional(value) -> Optional[float]:
    return None if value is None else float(value)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


# ---------------------------------------------------------------------------
# Running Simpson
# ---------------------------------------------------------------------------

def simpson_pair(t: np.ndarray, f: np.ndarray) -> float:
    """∫ over [t0, t2] of the parabola through three samples."""
    h0, h1 = t[1] - t[0], t[2] - t[1]
    return (h0 + h1) / 6.0 * ((2.0 - h1 / h0) * f[0]
                              + (h0 + h1) ** 2 / (h0 * h1) * f[1]
                              + (2.0 - h0 / h1) * f[2])


def simpson_last_interval(t: np.ndarray, f: np.ndarray) -> float:
    """∫ over [t1, t2] of the parabola through three samples."""
    h0, h1 = t[1] - t[0], t[2] - t[1]
    return h1 / 6.0 * (-h1 ** 2 / (h0 * (h0 + h1)) * f[0]
                       + (h1 + 3.0 * h0) / h0 * f[1]
                       + (2.0 * h1 + 3.0 * h0) / (h0 + h1) * f[2])


def running_integral(index: int, times: List[float], integrand: List[float], cumulative: List[float]) -> float:
    """Value of ∫₀^t at row `index`, from the newest (up to three) samples and earlier cumulative values.

    Even rows close a Simpson pair; odd rows add the last interval of the
    parabola through the three newest samples (row 1 uses the trapezoid).
    """
    i = index
    if i == 0:
        return 0.0
    if i == 1:
        return 0.5 * (times[-1] - times[-2]) * (integrand[-2] + integrand[-1])
    t = np.asarray(times[-3:])
    f = np.asarray(integrand[-3:])
    if i % 2 == 0:
        return cumulative[i - 2] + simpson_pair(t, f)
    return cumulative[i - 1] + simpson_last_interval(t, f)


def replay_balance(rows: Sequence[LedgerRow], params: ModelParams) -> List[Tuple[float, float, float]]:
    """(D, A, R) of every row, recomputed from the t, E, G and P columns.

    Uses the same running quadrature as `EnergyLedger.record`, so an untouched
    ledger replays bit for bit.
    """
    dissipation: List[float] = []
    absorption: List[float] = []
    balance = []
    for index, row in enumerate(rows):
        window = rows[max(0, index - 2):index + 1]
        times = [w.t for w in window]
        D = running_integral(index, times, [2.0 * (params.mu * w.G + params.alpha * w.E) for w in window],
                             dissipation)
        A = running_integral(index, times, [2.0 * params.beta * w.P for w in window], absorption)
        dissipation.append(D)
        absorption.append(A)
        balance.append((D, A, abs(row.E + D + A - rows[0].E)))
    return balance


# ---------------------------------------------------------------------------
# Ledger
# ---------------------------------------------------------------------------

class EnergyLedger:
    """Single-writer energy ledger, optionally mirrored to an NDJSON file."""

    def __init__(self, params: ModelParams, path: Optional[Union[str, Path]] = None,
                 track_regularity: bool = False, rows: Iterable[LedgerRow] = ()):
        self.params = params
        self.track_regularity = track_regularity
        self._rows: List[LedgerRow] = []
        self._dissipation: List[float] = []
        self._absorption: List[float] = []
        self._path = Path(path) if path is not None else None
        self._file = None
        for row in rows:
            self._append(row)
        if self._path is not None:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self._path, "w", encoding="utf-8")
            for row in self._rows:
                self._write(row)
            self._file.flush()

    # -- persistence --------------------------------------------------------

    @classmethod
    def load(cls, path: Union[str, Path], params: ModelParams, reopen: bool = False,
             until: Optional[float] = None) -> "EnergyLedger":
        """Replay an NDJSON ledger; rows after `until` are dropped.

        With `reopen` the ledger keeps writing to `path` (the file is rewritten
        with the kept rows first).
        """
        rows = read_rows(path)
        if until is not None:
            rows = [row for row in rows if row.t <= until]
        track = bool(rows) and rows[0].H is not None
        return cls(params, path if reopen else None, track_regularity=track, rows=rows)

    def _write(self, row: LedgerRow):
        self._file.write(json.dumps(row.to_record(), default=_json_default) + "\n")

    def close(self):
        if self._file is not None:
            self._file.flush()
            self._file.close()
            self._file = None

    def __enter__(self) -> "EnergyLedger":
        return self

    def __exit__(self, *args) -> None:
        self.close()

    @property
    def path(self) -> Optional[Path]:
        return self._path

    # -- rows ---------------------------------------------------------------

    @property
    def rows(self) -> List[LedgerRow]:
        return list(self._rows)

    def snapshot(self) -> List[LedgerRow]:
        """Completed rows so far; safe to hand to a reader."""
        return list(self._rows)

    def __len__(self) -> int:
        return len(self._rows)

    def column(self, key: str) -> np.ndarray:
        return np.array([getattr(row, key) for row in self._rows], dtype=float)

    def _append(self, row: LedgerRow):
        if self._rows and not row.t > self._rows[-1].t:
            raise LedgerError(f"non-monotone time: {row.t!r} after {self._rows[-1].t!r}")
        self._rows.append(row)
        self._dissipation.append(row.D)
        self._absorption.append(row.A)

    def record(self, u: SpectralField, t: float) -> LedgerRow:
        """Append the row for the field `u` at time `t`."""
        if self._rows and not t > self._rows[-1].t:
            raise LedgerError(f"non-monotone time: {t!r} after {self._rows[-1].t!r}")
        p = self.params
        E = l2_sq(u)
        G = gradient_norm_sq(u)
        P = lp_power(u, p.r + 1)
        times = [row.t for row in self._rows[-2:]] + [t]
        dissipation_rate = [2.0 * (p.mu * row.G + p.alpha * row.E) for row in self._rows[-2:]]
        dissipation_rate.append(2.0 * (p.mu * G + p.alpha * E))
        absorption_rate = [2.0 * p.beta * row.P for row in self._rows[-2:]] + [2.0 * p.beta * P]
        index = len(self._rows)
        D = running_integral(index, times, dissipation_rate, self._dissipation)
        A = running_integral(index, times, absorption_rate, self._absorption)
        E0 = self._rows[0].E if self._rows else E
        row = LedgerRow(
            t=float(t), E=E, D=D, A=A, G=G, R=abs(E + D + A - E0), P=P,
            H=laplacian_norm_sq(u) if self.track_regularity else None,
            I=weighted_gradient_integral(u, p.r) if self.track_regularity else None,
        )
        self._append(row)
        if self._file is not None:
            self._write(row)
            self._file.flush()
        return row

    def observer(self):
        """Callable for `integrate` that records each observed state."""
        def observe(state):
            self.record(state.field, state.time)
        return observe

    def relative_residual(self) -> float:
        if not self._rows or self._rows[0].E == 0:
            return 0.0
        return self._rows[-1].R / self._rows[0].E

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.to_record() for row in self._rows])


def record(u: SpectralField, t: float, p: ModelParams, ledger: Optional[EnergyLedger] = None) -> EnergyLedger:
    """Functional form of `EnergyLedger.record`: returns the ledger with the new row."""
    if ledger is None:
        ledger = EnergyLedger(p)
    ledger.record(u, t)
    return ledger


def read_rows(path: Union[str, Path]) -> List[LedgerRow]:
    rows = []
    with open(path, encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record_ = json.loads(line)
            except json.JSONDecodeError as exc:
                raise LedgerError(f"{path}:{number}: {exc}") from exc
            rows.append(LedgerRow.from_record(record_))
    return rows
