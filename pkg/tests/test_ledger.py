import json

import numpy as np
import pytest

from BrinkmanForchheimer.errors import LedgerError
from BrinkmanForchheimer.initial_conditions import ic_random_spectrum, ic_shear
from BrinkmanForchheimer.ledger import (
    LEDGER_KEYS,
    EnergyLedger,
    LedgerRow,
    read_rows,
    record,
    replay_balance,
    simpson_last_interval,
    simpson_pair,
)
from BrinkmanForchheimer.spectral import ModelParams

PI3 = np.pi ** 3


@pytest.fixture
def shear():
    return ic_shear(K=4, N=12)


def _decaying_shear(u, mu, times):
    return [(t, u * float(np.exp(-mu * t))) for t in times]


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

class TestSimpson:
    @pytest.mark.parametrize("t", [[0.0, 0.1, 0.3], [1.0, 1.5, 1.6], [0.0, 0.5, 1.0]])
    def test_pair_is_exact_for_quadratics(self, t):
        t = np.array(t)
        f = 3 * t ** 2 - t + 2
        exact = (t[2] ** 3 - t[0] ** 3) - (t[2] ** 2 - t[0] ** 2) / 2 + 2 * (t[2] - t[0])
        assert simpson_pair(t, f) == pytest.approx(exact, rel=1e-13)

    @pytest.mark.parametrize("t", [[0.0, 0.1, 0.3], [1.0, 1.5, 1.6]])
    def test_last_interval_is_exact_for_quadratics(self, t):
        t = np.array(t)
        f = 3 * t ** 2 - t + 2
        exact = (t[2] ** 3 - t[1] ** 3) - (t[2] ** 2 - t[1] ** 2) / 2 + 2 * (t[2] - t[1])
        assert simpson_last_interval(t, f) == pytest.approx(exact, rel=1e-13)


# ---------------------------------------------------------------------------
# Rows
# ---------------------------------------------------------------------------

class TestRows:
    def test_single_row_has_zero_residual(self, shear):
        ledger = record(shear, 0.0, ModelParams(mu=1.0, beta=1.0))
        (row,) = ledger.rows
        assert (row.t, row.D, row.A, row.R) == (0.0, 0.0, 0.0, 0.0)
        assert row.E == pytest.approx(4 * PI3, rel=1e-13)
        assert row.P == pytest.approx(3 * PI3, rel=1e-12)

    @pytest.mark.parametrize("second", [0.0, -0.1])
    def test_time_must_increase(self, shear, second):
        ledger = EnergyLedger(ModelParams(mu=1.0))
        ledger.record(shear, 0.0)
        with pytest.raises(LedgerError):
            ledger.record(shear, second)

    def test_record_round_trip(self):
        row = LedgerRow(t=0.1, E=1.0, D=0.2, A=0.3, G=4.0, R=1e-12, P=0.5)
        assert LedgerRow.from_record(row.to_record()) == row
        assert set(row.to_record()) == set(LEDGER_KEYS)

    def test_missing_key(self):
        with pytest.raises(LedgerError):
            LedgerRow.from_record({"t": 0.0, "E": 1.0})

    def test_regularity_columns(self, shear):
        ledger = EnergyLedger(ModelParams(mu=1.0, beta=1.0, r=3.0), track_regularity=True)
        row = ledger.record(shear, 0.0)
        assert row.H == pytest.approx(4 * PI3, rel=1e-13)
        assert row.I == pytest.approx(PI3, rel=1e-12)
        assert "H" in row.to_record()


# ---------------------------------------------------------------------------
# Energy balance on an exact solution
# ---------------------------------------------------------------------------

class TestBalance:
    @pytest.mark.parametrize("alpha", [0.0, 0.5])
    def test_heat_flow_balances(self, shear, alpha):
        # without absorption the shear decays like exp(−(μ + α)t) and D absorbs the loss
        mu = 0.4
        ledger = EnergyLedger(ModelParams(mu=mu, alpha=alpha))
        for t, u in _decaying_shear(shear, mu + alpha, np.linspace(0.0, 1.0, 41)):
            ledger.record(u, t)
        assert ledger.relative_residual() < 1e-7, f"residual {ledger.relative_residual():.3e}"
        assert ledger.rows[-1].A == 0.0

    def test_nonuniform_spacing(self, shear):
        mu = 0.4
        times = np.concatenate([np.linspace(0.0, 0.5, 26), np.linspace(0.53, 1.0, 25)])
        ledger = EnergyLedger(ModelParams(mu=mu))
        for t, u in _decaying_shear(shear, mu, times):
            ledger.record(u, t)
        assert ledger.relative_residual() < 1e-7

    def test_column_and_frame(self, shear):
        ledger = EnergyLedger(ModelParams(mu=1.0))
        for t, u in _decaying_shear(shear, 1.0, [0.0, 0.1, 0.2]):
            ledger.record(u, t)
        assert ledger.column("t").tolist() == [0.0, 0.1, 0.2]
        frame = ledger.to_frame()
        assert list(frame.columns) == list(LEDGER_KEYS)
        assert len(frame) == 3

    def test_replay_reproduces_running_integrals(self):
        params = ModelParams(mu=0.2, alpha=0.1, beta=0.5, r=3.0)
        u = ic_random_spectrum(6, K=3, N=8)
        ledger = EnergyLedger(params)
        for t in [0.0, 0.05, 0.12, 0.2, 0.31, 0.4]:
            ledger.record(u * float(np.exp(-t)), t)
        rows = ledger.rows
        assert replay_balance(rows, params) == [(row.D, row.A, row.R) for row in rows]

    def test_replay_ignores_stored_running_integrals(self, shear):
        params = ModelParams(mu=1.0)
        ledger = EnergyLedger(params)
        for t, u in _decaying_shear(shear, 1.0, [0.0, 0.1, 0.2, 0.3]):
            ledger.record(u, t)
        rows = ledger.rows
        tampered = rows[:2] + [LedgerRow(**{**rows[2].to_record(), "D": 2 * rows[2].D})] + rows[3:]
        assert replay_balance(tampered, params)[2][0] == rows[2].D


# ---------------------------------------------------------------------------
# NDJSON persistence
# ---------------------------------------------------------------------------

class TestPersistence:
    def test_rows_are_written_as_they_arrive(self, tmp_path, shear):
        path = tmp_path / "ledger.ndjson"
        with EnergyLedger(ModelParams(mu=1.0, beta=0.5), path) as ledger:
            ledger.record(shear, 0.0)
            assert len(path.read_text().splitlines()) == 1
            ledger.record(shear * 0.9, 0.1)
        lines = path.read_text().splitlines()
        assert [json.loads(line)["t"] for line in lines] == [0.0, 0.1]

    def test_reload_is_exact(self, tmp_path):
        path = tmp_path / "ledger.ndjson"
        u = ic_random_spectrum(1, K=3, N=8)
        with EnergyLedger(ModelParams(mu=0.3, beta=0.5), path) as ledger:
            for i, t in enumerate([0.0, 0.1, 0.25]):
                ledger.record(u * (1.0 - 0.1 * i), t)
            written = ledger.rows
        assert read_rows(path) == written

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "ledger.ndjson"
        path.write_text('{"t": 0.0, "E": 1.0, "D": 0, "A": 0, "G": 1, "R": 0, "P": 1}\n{not json\n')
        with pytest.raises(LedgerError):
            read_rows(path)

    def test_resumed_ledger_matches_uninterrupted(self, tmp_path, shear):
        params = ModelParams(mu=0.4, beta=0.2)
        samples = _decaying_shear(shear, 0.4, np.linspace(0.0, 0.5, 11))

        full = tmp_path / "full.ndjson"
        with EnergyLedger(params, full) as ledger:
            for t, u in samples:
                ledger.record(u, t)

        partial = tmp_path / "partial.ndjson"
        with EnergyLedger(params, partial) as ledger:
            for t, u in samples[:8]:
                ledger.record(u, t)
        with EnergyLedger.load(partial, params, reopen=True, until=samples[5][0]) as ledger:
            assert len(ledger) == 6
            for t, u in samples[6:]:
                ledger.record(u, t)

        assert partial.read_bytes() == full.read_bytes()
