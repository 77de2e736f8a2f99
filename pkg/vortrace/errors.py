"""Exception types raised by vortrace."""

from typing import Optional, Sequence


class VortraceError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(VortraceError, ValueError):
    """Operands live on different Galerkin cutoffs."""


class ArgumentError(VortraceError, ValueError):
    """Invalid step size, horizon, ensemble or sample alignment."""


class BlowUpError(VortraceError, FloatingPointError):
    def __init__(self, time: float, step: int, max_modulus: float, partial=None):
        super().__init__(
            f"solution blew up at t={time:.6g} (step {step}): max |c_k| = {max_modulus:.3e}"
        )
        self.time = time
        self.step = step
        self.max_modulus = max_modulus
        # PathRecord (or other partial result) accumulated before the failure
        self.partial = partial


class InvariantError(VortraceError, AssertionError):
    def __init__(self, message: str, worst_time: float, worst_ratio: float):
        super().__init__(f"{message} (worst at t={worst_time:.6g}, ratio={worst_ratio:.12g})")
        self.worst_time = worst_time
        self.worst_ratio = worst_ratio


class DegeneracyError(VortraceError, ValueError):
    def __init__(self, modes: Sequence[tuple]):
        listed = ", ".join(f"({k1},{k2})" for k1, k2 in modes[:8])
        more = "" if len(modes) <= 8 else f" and {len(modes) - 8} more"
        super().__init__(f"q_k = 0 on control modes {listed}{more}")
        self.modes = list(modes)


class NumericError(VortraceError, ArithmeticError):
    """Singular or ill-conditioned matrix where a regular one is required."""


class ConfigError(VortraceError, ValueError):
    def __init__(self, problems: Sequence[tuple], source: Optional[str] = None):
        self.problems = list(problems)  # (field path, message)
        head = f"invalid configuration{f' in {source}' if source else ''}"
        body = "; ".join(f"{path}: {msg}" for path, msg in self.problems)
        super().__init__(f"{head}: {body}")

    @property
    def fields(self):
        return [path for path, _ in self.problems]


class SnapshotFormatError(VortraceError, ValueError):
    """Snapshot blob with bad magic, unknown version or truncated payload."""
