"""Exception hierarchy shared by the solver, the diagnostics and the CLI."""

from typing import Optional


class CBFError(Exception):
    """Base class for every error raised by this package."""


class ResolutionError(CBFError, ValueError):
    """A mode count or grid size exceeds what the field can represent."""


class ParameterError(CBFError, ValueError):
    """Model parameters or inputs violate a documented precondition."""


class UnderResolvedMollifierError(CBFError, ValueError):
    """The mollifier width is too small for the time grid (or too large for the window)."""


class StepRejected(CBFError):
    """The embedded error estimate exceeded the tolerance; retry with `suggested_dt`."""

    def __init__(self, error_ratio: float, suggested_dt: float):
        super().__init__(f"step rejected: error ratio {error_ratio:.3e}, retry with dt={suggested_dt:.3e}")
        self.error_ratio = error_ratio
        self.suggested_dt = suggested_dt


class StepSizeError(CBFError):
    """A step was rejected although dt already sits at dt_min."""


class BlowUpError(CBFError):
    """‖∇u‖² crossed the guard or the field stopped being finite.

    `state` is the last accepted stepper state, so callers can still write it out.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class DissipativityError(CBFError):
    """An accepted step increased ‖u‖² by more than the step tolerance."""


class LedgerError(CBFError, ValueError):
    """Non-monotone time or a malformed ledger file."""


class CheckpointError(CBFError):
    """Base class for checkpoint decoding failures."""


class MagicMismatch(CheckpointError):
    pass


class VersionMismatch(CheckpointError):
    pass


class TruncatedPayload(CheckpointError):
    pass


class ChecksumMismatch(CheckpointError):
    pass


class ConfigError(CBFError):
    """A run configuration could not be parsed or validated."""

    def __init__(self, message: str, section: Optional[str] = None,
                 key: Optional[str] = None, line: Optional[int] = None):
        location = ".".join(part for part in (section, key) if part)
        prefix = ""
        if line is not None:
            prefix = f"line {line}: "
        if location:
            prefix += f"[{location}] "
        super().__init__(prefix + message)
        self.section = section
        self.key = key
        self.line = line


class InequalityViolation(CBFError, AssertionError):
    """A monitored inequality failed its assertion."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report
