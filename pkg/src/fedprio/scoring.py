"""Score functions over criteria tuples and the per-cohort weight computation.

The prioritized score is a sum of prefix products,

    f(c) = c_1 + c_1*c_2 + ... + c_1*c_2*...*c_m,

so a poorly met high-priority criterion suppresses everything after it, and a
zero annihilates the tail outright. The mean-style score returns the plain sum
of the tuple: the 1/m factor cancels in the final normalization, and the sum
form reproduces worked numbers directly.

Weights divide each client's score by the cohort total Z, giving a convex
weighting for the aggregation step.
"""

from __future__ import annotations

import logging

import numpy as np

from .criteria import CohortCriteria

logger = logging.getLogger("fedprio")

SCORE_FUNCTIONS = ("prioritized", "mean")


def _validate_unit_interval(matrix: np.ndarray) -> None:
    if matrix.size and not ((matrix >= 0.0) & (matrix <= 1.0)).all():
        raise ValueError("criteria values must lie in [0, 1]")


def score_prioritized_many(matrix: np.ndarray) -> np.ndarray:
    """Prioritized score of each row of an (n, m) matrix of [0,1] values.

    Products and the final sum both accumulate left to right, so zeroing a
    coordinate truncates the score to its prefix bit-exactly (numpy's pairwise
    row sums would regroup the additions and break that identity).
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] == 0:
        raise ValueError("empty criteria tuple")
    _validate_unit_interval(matrix)
    prefix = np.ones(matrix.shape[0])
    total = np.zeros(matrix.shape[0])
    for j in range(matrix.shape[1]):
        prefix = prefix * matrix[:, j]
        total = total + prefix
    return total


def score_mean_many(matrix: np.ndarray) -> np.ndarray:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    if matrix.shape[1] == 0:
        raise ValueError("empty criteria tuple")
    _validate_unit_interval(matrix)
    return matrix.sum(axis=1)


def score_prioritized(values) -> float:
    """Priority-ordered score of one criteria tuple; in [0, m], zero iff c_1 = 0."""
    return float(score_prioritized_many(np.asarray(values, dtype=np.float64))[0])


def score_mean(values) -> float:
    """Order-insensitive score of one criteria tuple (plain sum)."""
    return float(score_mean_many(np.asarray(values, dtype=np.float64))[0])


_MANY = {"prioritized": score_prioritized_many, "mean": score_mean_many}


def compute_weights(
    cohort: CohortCriteria, kind: str = "prioritized", ordering=None
) -> tuple[np.ndarray, float]:
    """Aggregation weights for the cohort: w_a = f(c_a) / Z with Z = sum of scores.

    `ordering` lists criterion names highest priority first and must be a
    selection of the cohort's measured criteria; it defaults to the measured
    order. Returns (weights, Z). When every score is zero the weights fall
    back to uniform and a warning is logged.
    """
    if kind not in _MANY:
        raise ValueError(f"unknown score function {kind!r}")
    names = tuple(ordering) if ordering is not None else cohort.names
    if len(set(names)) != len(names):
        raise ValueError("criteria ordering contains duplicates")
    try:
        columns = [cohort.names.index(name) for name in names]
    except ValueError:
        missing = [n for n in names if n not in cohort.names]
        raise ValueError(f"criteria {missing} were not measured on this cohort") from None
    if cohort.normalized.shape[0] == 0:
        raise ValueError("empty cohort")
    scores = _MANY[kind](cohort.normalized[:, columns])
    z = float(scores.sum())
    if z == 0.0:
        logger.warning("all cohort scores are zero; falling back to uniform weights")
        return np.full(len(scores), 1.0 / len(scores)), z
    return scores / z, z
