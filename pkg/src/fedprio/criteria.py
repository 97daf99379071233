"""Per-client measurable properties and their cohort-level normalization.

Five built-in criteria, named as they appear in configs and report columns:

    DS  local dataset size (train split)
    LD  label diversity (distinct labels in the train split)
    MW  model-divergence weight, 1 / sqrt(||global - local||_2 + 1)
    CB  class balance for binary tasks, min(#pos, #neg) / max(#pos, #neg)
    IS  fraction of sharp samples

Raw measurements are per-client pure functions; `normalize_cohort` turns the
raw values of one criterion over the round's cohort into shares that sum to 1.
Clients are assumed to report honestly; there is no verification layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ClientShard
from .errors import ConfigurationError
from .learner import Parameters

CRITERIA = ("DS", "LD", "MW", "CB", "IS")


@dataclass
class ClientObservation:
    """What one client reports after local training in a round."""

    client_id: str
    train_size: int
    label_counts: dict[int, int]
    sharp_count: int
    received_global: Parameters
    trained_local: Parameters

    @classmethod
    def from_shard(
        cls, shard: ClientShard, received_global: Parameters, trained_local: Parameters
    ) -> "ClientObservation":
        return cls(
            client_id=shard.client_id,
            train_size=shard.n_train,
            label_counts=shard.label_counts(),
            sharp_count=shard.sharp_count(),
            received_global=received_global,
            trained_local=trained_local,
        )


def raw_DS(obs: ClientObservation) -> float:
    return float(obs.train_size)


def raw_LD(obs: ClientObservation) -> float:
    return float(len(obs.label_counts))


def raw_MW(obs: ClientObservation) -> float:
    """Large when the trained local model stayed near the received global model."""
    if obs.trained_local.size != obs.received_global.size:
        raise RuntimeError("global/local parameter vectors differ in length")
    divergence = float(np.linalg.norm(obs.received_global.values - obs.trained_local.values))
    return 1.0 / np.sqrt(divergence + 1.0)


def raw_CB(obs: ClientObservation) -> float:
    if any(label not in (0, 1) for label in obs.label_counts):
        raise ConfigurationError("criterion CB applies to binary tasks only")
    pos = obs.label_counts.get(1, 0)
    neg = obs.label_counts.get(0, 0)
    lo, hi = min(pos, neg), max(pos, neg)
    return lo / hi if hi else 0.0


def raw_IS(obs: ClientObservation) -> float:
    return obs.sharp_count / obs.train_size


RAW_MEASURES = {"DS": raw_DS, "LD": raw_LD, "MW": raw_MW, "CB": raw_CB, "IS": raw_IS}


def normalize_cohort(raws) -> np.ndarray:
    """Shares raw_a / sum(raws); uniform fallback when every raw is zero."""
    raws = np.asarray(raws, dtype=np.float64)
    if raws.size == 0:
        raise ValueError("empty cohort")
    if (raws < 0).any():
        raise ValueError("negative raw criterion value")
    total = raws.sum()
    if total == 0.0:
        return np.full(raws.size, 1.0 / raws.size)
    return raws / total


@dataclass
class CohortCriteria:
    """Raw and normalized criteria for one round's cohort, columns in `names` order."""

    client_ids: tuple[str, ...]
    names: tuple[str, ...]
    raw: np.ndarray  # (n_clients, n_criteria)
    normalized: np.ndarray  # same shape, each column sums to 1


def measure_cohort(observations: list[ClientObservation], names) -> CohortCriteria:
    """Measure each named criterion on every cohort member and normalize per column."""
    names = tuple(names)
    for name in names:
        if name not in RAW_MEASURES:
            raise ConfigurationError(f"unknown criterion {name!r}")
    if not observations:
        raise ValueError("empty cohort")
    raw = np.empty((len(observations), len(names)))
    for j, name in enumerate(names):
        measure = RAW_MEASURES[name]
        raw[:, j] = [measure(obs) for obs in observations]
    normalized = np.column_stack([normalize_cohort(raw[:, j]) for j in range(len(names))])
    return CohortCriteria(
        client_ids=tuple(o.client_id for o in observations),
        names=names,
        raw=raw,
        normalized=normalized,
    )
