#!/usr/bin/env python3
"""Energy-balance residual under dt refinement, written as JSON.

Runs the Taylor–Green configuration at each step size with a ledger row
after every step, then fits the order of the final relative residual.

    python tools/convergence_study.py [config] [out.json]
"""

import datetime
import hashlib
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
# the package lives under src/ and is not installed
sys.path.insert(0, str(ROOT))
sys.path.insert(0, str(ROOT / "src"))

from BrinkmanForchheimer.commands import run_trajectory
from BrinkmanForchheimer.config import RunConfig
from BrinkmanForchheimer.inequalities import convergence_order
from BrinkmanForchheimer.ledger import EnergyLedger

STEPS = (4e-3, 2e-3, 1e-3)


def table_digest(table):
    """MD5 over the compact, key-sorted JSON of the convergence table."""
    canonical = json.dumps(table, sort_keys=True, separators=(",", ":"))
    return hashlib.md5(canonical.encode("utf-8")).hexdigest()


def main():
    config_path = Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "configs" / "taylor_green.ini"
    out_path = Path(sys.argv[2]) if len(sys.argv) > 2 else ROOT / "runs" / "convergence.json"
    base = RunConfig.from_path(config_path)

    runs = []
    for step in STEPS:
        print(f"Computing dt={step:g} …")
        config = replace(base, dt=step, output=replace(base.output, cadence=1))
        started = time.perf_counter()
        with EnergyLedger(config.params) as ledger:
            result = run_trajectory(config, ledger)
        runs.append({
            "dt": step,
            "steps": result.state.step_count,
            "residual": abs(result.rows[-1].R) / result.rows[0].E,
            "energySlack": result.energy_inequality.min_slack,
            "wallTime": round(time.perf_counter() - started, 3),
        })

    order = convergence_order([r["dt"] for r in runs], [r["residual"] for r in runs])
    table = {
        "createdAt": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
        "config": base.to_text(),
        "runs": runs,
        "order": order,
    }
    digest = table_digest(table)
    table["md5"] = digest

    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(json.dumps(table, indent=2), encoding="utf-8")

    print(f"Wrote {out_path}")
    for r in runs:
        print(f"  dt={r['dt']:g}: residual {r['residual']:.3e} after {r['steps']} steps ({r['wallTime']} s)")
    print(f"  order {order:.2f}")
    print(f"  table digest {digest}")


if __name__ == "__main__":
    main()
