"""Exception types shared across the engine."""


class KamreduceError(Exception):
    """Base class for all engine errors."""


class ParameterError(KamreduceError):
    """Invalid argument or configuration value."""


class ResolutionError(KamreduceError):
    """A numerical resolution check failed (quadrature, grid, ...)."""


class BasisMismatchError(KamreduceError):
    """Two operands live over different truncated bases."""


class StructuralError(KamreduceError):
    """A structural assumption (symmetry, block layout) is violated."""


class PreconditionError(KamreduceError):
    """A mathematical hypothesis required by an operation does not hold."""


class ConfigError(KamreduceError):
    """Aggregated configuration validation failure."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in self.problems))


class SmallDivisorError(KamreduceError):
    """A divisor k.w - alpha + beta fell below its Melnikov bound.

    Carries the offending Fourier index and cluster pair so drivers can
    report which frequency got excluded and why.
    """

    def __init__(self, k, w_row, w_col, value, bound):
        self.k = tuple(int(c) for c in k)
        self.w_row = int(w_row)
        self.w_col = int(w_col)
        self.value = float(value)
        self.bound = float(bound)
        super().__init__(
            f"small divisor at k={self.k}, clusters ({self.w_row},{self.w_col}): "
            f"|{self.value:.6e}| < {self.bound:.6e}"
        )
