"""fedprio: deterministic federated-learning simulation with prioritized
multi-criteria client weighting."""

__version__ = "0.1.0"

from .criteria import measure_cohort, normalize_cohort
from .data import ClientShard, PartitionSpec, Sample
from .errors import ConfigurationError, DataFormatError, FederationError, FedPrioError
from .learner import ModelSpec, Parameters, TrainerConfig
from .scoring import compute_weights, score_mean, score_prioritized

__all__ = [
    "__version__",
    "ClientShard",
    "ConfigurationError",
    "DataFormatError",
    "FederationError",
    "FedPrioError",
    "ModelSpec",
    "Parameters",
    "PartitionSpec",
    "Sample",
    "TrainerConfig",
    "compute_weights",
    "measure_cohort",
    "normalize_cohort",
    "score_mean",
    "score_prioritized",
]
