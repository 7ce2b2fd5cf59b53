"""Exception hierarchy shared by every qpf module."""

from __future__ import annotations


class QpfError(Exception):
    """Base class for all library errors."""


class ValidationError(QpfError, ValueError):
    """Input violates a documented precondition."""


class SingularMatrixError(QpfError, ArithmeticError):
    def __init__(self, pivot_index: int, pivot_value: float):
        self.pivot_index = pivot_index
        self.pivot_value = pivot_value
        super().__init__(
            f"matrix is singular to working precision at pivot {pivot_index} "
            f"(|pivot| = {abs(pivot_value):.3e})"
        )


class ConvergenceError(QpfError, ArithmeticError):
    def __init__(self, sweeps: int, off_norm: float):
        self.sweeps = sweeps
        self.off_norm = off_norm
        super().__init__(
            f"Jacobi iteration did not converge after {sweeps} sweeps "
            f"(off-diagonal norm {off_norm:.3e})"
        )


class NormalizationError(ValidationError):
    def __init__(self, norm: float):
        self.norm = norm
        super().__init__(f"amplitude vector is not normalized (norm = {norm:.12g})")


class ImpossibleOutcomeError(QpfError):
    """Projection onto an outcome that has (numerically) zero probability."""


class RescalingRequiredError(ValidationError):
    """An eigenvalue lies outside the open interval (0, 1)."""


class InsufficientAccuracyError(ValidationError):
    """A floor-truncated eigenvalue is zero, so its reciprocal is undefined."""

    def __init__(self, index: int, bits: int):
        self.index = index
        self.bits = bits
        super().__init__(
            f"eigenvalue {index} truncates to zero at {bits} bits; more accuracy bits are needed"
        )


class DegeneratePostSelectionError(QpfError):
    pass


class BranchCollisionError(QpfError):
    def __init__(self, prefixes: list[str]):
        self.prefixes = prefixes
        super().__init__(f"eigenvalues share bit prefixes: {', '.join(prefixes)}")


class CalibrationError(QpfError):
    def __init__(self, row: int, best_residual: float, tolerance: float):
        self.row = row
        self.best_residual = best_residual
        self.tolerance = tolerance
        super().__init__(
            f"no sign assignment for component {row} meets tolerance {tolerance:g} "
            f"(best residual {best_residual:.4g})"
        )


class ResourceCapError(QpfError):
    """Configuration needs more simulated qubits than the configured cap allows."""


class GridFormatError(ValidationError):
    def __init__(self, message: str, line: int | None = None, field: str | None = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
