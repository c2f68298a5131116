"""
Exception hierarchy for the federated simulation framework.

Every failure raised on purpose by fedsim derives from FedSimError so the
CLI can map it to a clean exit status. Degenerate-but-legal situations
(empty attacker history, zero-norm root update, ...) are NOT errors; they are
reported through statuses on the returned objects.
"""

from typing import Optional


class FedSimError(Exception):
    """Base class for all fedsim errors"""


class ConfigurationError(FedSimError, ValueError):
    """Invalid or inconsistent parameters (layer sizes, c/k preconditions, ...)"""


class DataError(FedSimError, ValueError):
    """Invalid data handed to a model, partitioner or loader"""


class IngestionError(DataError):
    """Malformed CSV/IDX input"""


class NumericalError(DataError):
    """A computation produced NaN or Inf"""


class AggregationError(FedSimError):
    """Update sets the server cannot combine (dimension mismatch, empty set)"""


class AttackError(FedSimError):
    """An attack crafter received inputs it cannot perturb"""


class ComparisonError(FedSimError):
    """Two experiment results that are not paired runs were compared"""


class ExperimentError(FedSimError):
    """A round failed; carries the failing round index"""

    def __init__(self, message: str, round_index: Optional[int] = None):
        super().__init__(message)
        self.round_index = round_index

    def __str__(self) -> str:
        base = super().__str__()
        if self.round_index is None:
            return base
        return f"round {self.round_index}: {base}"


__all__ = [
    "FedSimError",
    "ConfigurationError",
    "DataError",
    "IngestionError",
    "NumericalError",
    "AggregationError",
    "AttackError",
    "ComparisonError",
    "ExperimentError",
]
