"""
Exception hierarchy shared by every layer.
Services raise these; only the CLI maps them to exit codes.
"""


class DusssError(Exception):
    """Base class for all errors raised by this package"""


class ShapeError(DusssError, ValueError):
    """Operand shapes are incompatible for an operation"""


class DomainError(DusssError, ValueError):
    """An input lies outside the mathematical domain of an operation"""


class GraphError(DusssError, RuntimeError):
    """Misuse of the compute graph (non-scalar loss, double backward, detached loss)"""


class OptimizerError(DusssError, RuntimeError):
    """Optimizer step requested for parameters without gradients"""


class ConfigError(DusssError, ValueError):
    """Run configuration failed validation"""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(
            "invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations)
        )


class DataFormatError(DusssError, ValueError):
    """A file on disk does not follow its expected format"""


class DatasetError(DusssError, ValueError):
    """A dataset manifest violates a sample invariant"""


class CheckpointError(DusssError, ValueError):
    """A checkpoint is missing, malformed or incompatible with the model"""


class NonFiniteLossError(DusssError, FloatingPointError):
    """A training loss became NaN or Inf"""

    def __init__(self, message: str, stats: dict | None = None):
        self.stats = stats or {}
        super().__init__(message)
