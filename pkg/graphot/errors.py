"""Exception hierarchy for graphot"""


class GraphOTError(Exception):
    """Base class for all graphot errors"""


class ConfigError(GraphOTError):
    """Invalid configuration value"""


class UsageError(GraphOTError):
    """Invalid command-line usage (unknown solver, missing option)"""


class GraphValidationError(GraphOTError):
    """A SparseGraph violates its invariants"""


class CapacityError(GraphOTError):
    """Graph has more nodes than the padding size N"""


class SizeError(GraphOTError):
    """Instance too large for an exhaustive search"""


class DimensionError(GraphOTError):
    """Shapes of the inputs do not agree"""


class DomainError(GraphOTError):
    """Input outside the domain of a numerical routine"""


class UnsupportedError(GraphOTError):
    """Operation not supported for this input (e.g. no factorization)"""


class GenerationError(GraphOTError):
    """Synthetic graph generation failed"""


class DataError(GraphOTError):
    """Unreadable or malformed data file"""


class DivergenceError(GraphOTError):
    """Training produced a non-finite loss"""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(f"step {step}: {message}" if message else f"Non-finite loss at step {step}")
