"""Run configuration: flat `key = value` INI text with fixed sections.

See docs/CONFIGURATION.md for the key table.
"""

import configparser
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from .errors import CBFError, ConfigError
from .initial_conditions import DEFAULT_K, DEFAULT_N, InitialConditions
from .integrator import StepControl
from .spectral import ModelParams


@dataclass(frozen=True)
class InitialSpec:
    ic: str = "taylor_green"
    seed: int = 0
    slope: float = -2.0
    amplitude: float = 1.0


@dataclass(frozen=True)
class OutputSpec:
    cadence: int = 1
    checkpoint_every: int = 100
    ledger: str = "ledger.ndjson"
    track_regularity: bool = False


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams = field(default_factory=lambda: ModelParams(mu=1.0, alpha=0.0, beta=1.0, r=3.0))
    N: int = DEFAULT_N
    K: int = DEFAULT_K
    T: float = 1.0
    dt: float = 1e-3
    control: StepControl = field(default_factory=StepControl)
    initial: InitialSpec = field(default_factory=InitialSpec)
    output: OutputSpec = field(default_factory=OutputSpec)

    def validate(self) -> "RunConfig":
        if self.K < 1:
            raise ConfigError(f"K must be >= 1, got {self.K}", "grid", "K")
        if self.N < 2 * self.K + 2:
            raise ConfigError(f"N={self.N} is below 2K+2={2 * self.K + 2}", "grid", "N")
        if self.T < 0:
            raise ConfigError(f"T must be >= 0, got {self.T}", "time", "T")
        if not self.control.dt_min <= self.dt <= self.control.dt_max:
            raise ConfigError(f"dt={self.dt} lies outside [dt_min, dt_max]", "time", "dt")
        if self.output.cadence < 1:
            raise ConfigError("cadence must be >= 1", "output", "cadence")
        if self.output.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1", "output", "checkpoint_every")
        if self.initial.ic not in InitialConditions.names():
            raise ConfigError(f"unknown initial condition {self.initial.ic!r}", "initial", "ic")
        return self

    def with_params(self, **changes) -> "RunConfig":
        return replace(self, params=replace(self.params, **changes))

    # -- text form ----------------------------------------------------------

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse configuration: {exc}", line=getattr(exc, "lineno", None)) from exc

        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError("unknown section", section, line=_line_of(text, section))
            for key in parser[section]:
                if key not in _SCHEMA[section]:
                    raise ConfigError("unknown key", section, key, _line_of(text, section, key))

        values: Dict[Tuple[str, str], object] = {}
        for section, keys in _SCHEMA.items():
            for key, (kind, default) in keys.items():
                raw = parser.get(section, key, fallback=None) if parser.has_section(section) else None
                if raw is None:
                    values[section, key] = default
                    continue
                try:
                    values[section, key] = _convert(kind, raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value {raw!r}: {exc}", section, key, _line_of(text, section, key)) from exc

        try:
            config = cls(
                params=ModelParams(mu=values["model", "mu"], alpha=values["model", "alpha"],
                                   beta=values["model", "beta"], r=values["model", "r"]),
                N=values["grid", "N"],
                K=values["grid", "K"],
                T=values["time", "T"],
                dt=values["time", "dt"],
                control=StepControl(
                    dt_min=values["time", "dt_min"], dt_max=values["time", "dt_max"],
                    tol=values["time", "tol"], adaptive=values["time", "adaptive"],
                    blowup_factor=values["time", "blowup_factor"], cfl=values["time", "cfl"],
                    absorption_safety=values["time", "absorption_safety"]),
                initial=InitialSpec(ic=values["initial", "ic"], seed=values["initial", "seed"],
                                    slope=values["initial", "slope"], amplitude=values["initial", "amplitude"]),
                output=OutputSpec(cadence=values["output", "cadence"],
                                  checkpoint_every=values["output", "checkpoint_every"],
                                  ledger=values["output", "ledger"],
                                  track_regularity=values["output", "track_regularity"]),
            )
        except ConfigError:
            raise
        except CBFError as exc:
            section, key = _guess_location(str(exc))
            raise ConfigError(str(exc), section, key, _line_of(text, section, key) if section else None) from exc
        try:
            return config.validate()
        except ConfigError as exc:
            if exc.line is None and exc.section:
                raise ConfigError(str(exc).split("] ", 1)[-1], exc.section, exc.key,
                                  _line_of(text, exc.section, exc.key)) from exc
            raise

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "RunConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        """Canonical form: every section and key, in schema order."""
        current = self._flat_values()
        lines: List[str] = []
        for section, keys in _SCHEMA.items():
            if lines:
                lines.append("")
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_format(current[section, key])}")
        return "\n".join(lines) + "\n"

    def _flat_values(self) -> Dict[Tuple[str, str], object]:
        p, c, i, o = self.params, self.control, self.initial, self.output
        return {
            ("model", "mu"): p.mu, ("model", "alpha"): p.alpha, ("model", "beta"): p.beta, ("model", "r"): p.r,
            ("grid", "N"): self.N, ("grid", "K"): self.K,
            ("time", "T"): self.T, ("time", "dt"): self.dt, ("time", "dt_min"): c.dt_min,
            ("time", "dt_max"): c.dt_max, ("time", "tol"): c.tol, ("time", "adaptive"): c.adaptive,
            ("time", "blowup_factor"): c.blowup_factor, ("time", "cfl"): c.cfl,
            ("time", "absorption_safety"): c.absorption_safety,
            ("initial", "ic"): i.ic, ("initial", "seed"): i.seed, ("initial", "slope"): i.slope,
            ("initial", "amplitude"): i.amplitude,
            ("output", "cadence"): o.cadence, ("output", "checkpoint_every"): o.checkpoint_every,
            ("output", "ledger"): o.ledger, ("output", "track_regularity"): o.track_regularity,
        }


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _convert(kind, raw: str):
    if kind is bool:
        return _bool(raw)
    if kind is str:
        return raw.strip()
    return kind(raw.strip())


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


_SCHEMA: Dict[str, Dict[str, Tuple[type, object]]] = {
    "model": {"mu": (float, 1.0), "alpha": (float, 0.0), "beta": (float, 1.0), "r": (float, 3.0)},
    "grid": {"N": (int, DEFAULT_N), "K": (int, DEFAULT_K)},
    "time": {
        "T": (float, 1.0), "dt": (float, 1e-3),
        "dt_min": (float, StepControl.dt_min), "dt_max": (float, StepControl.dt_max),
        "tol": (float, StepControl.tol), "adaptive": (bool, StepControl.adaptive),
        "blowup_factor": (float, StepControl.blowup_factor), "cfl": (float, StepControl.cfl),
        "absorption_safety": (float, StepControl.absorption_safety),
    },
    "initial": {"ic": (str, InitialSpec.ic), "seed": (int, InitialSpec.seed),
                "slope": (float, InitialSpec.slope), "amplitude": (float, InitialSpec.amplitude)},
    "output": {"cadence": (int, OutputSpec.cadence), "checkpoint_every": (int, OutputSpec.checkpoint_every),
               "ledger": (str, OutputSpec.ledger), "track_regularity": (bool, OutputSpec.track_regularity)},
}


def _line_of(text: str, section: str, key: Optional[str] = None) -> Optional[int]:
    """1-based line of `key` inside `[section]` (or of the section header)."""
    current = None
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        header = re.match(r"^\[(.+)\]$", stripped)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return number
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", stripped):
            return number
    return None


def _guess_location(message: str) -> Tuple[Optional[str], Optional[str]]:
    for section, keys in _SCHEMA.items():
        for key in keys:
            if re.match(rf"^{re.escape(key)}\b", message):
                return section, key
    return None, None
