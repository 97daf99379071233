"""Evaluation protocol: weighted global accuracy, rounds-to-target tables,
gain tables against a baseline, prediction-level comparison counts, and the
CSV report writers.

All functions are pure post-processing over immutable round records. CSV
output is fully deterministic: fixed headers, floats at 6 decimal places,
rows ordered by (round, client id) or by the caller's experiment order.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

NOT_REACHED = "NR"  # CSV sentinel for cells never reached within max_rounds


def devices_needed(fraction: float, n_devices: int) -> int:
    """At-least count for a device fraction: ceil(fraction * n), guarded against float fuzz."""
    return int(math.ceil(fraction * n_devices - 1e-9))


def global_accuracy(accuracies, test_sizes) -> float:
    """Local accuracies averaged with local test-set sizes as weights.

    The accuracies must be correct/total fractions of the paired sizes; the
    integer correct counts are recovered exactly (they are within half an ulp
    of accuracy * size), which makes the result identical to pooling all test
    sets and counting: sum(correct) / sum(size).
    """
    accuracies = np.asarray(accuracies, dtype=np.float64)
    test_sizes = np.asarray(test_sizes, dtype=np.int64)
    if accuracies.size == 0:
        raise ValueError("no device accuracies to aggregate")
    if accuracies.shape != test_sizes.shape:
        raise ValueError("accuracy and test-size vectors differ in length")
    if (test_sizes <= 0).any():
        raise ValueError("test sizes must be positive")
    if ((accuracies < 0) | (accuracies > 1)).any():
        raise ValueError("accuracies must lie in [0, 1]")
    correct = np.rint(accuracies * test_sizes)
    return float(correct.sum() / test_sizes.sum())


def rounds_to_target(records, target: float, fraction: float) -> int | None:
    """First 1-based round where >= ceil(fraction * devices) devices hit `target`.

    Returns None when the trace never gets there.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    for record in records:
        n_devices = len(record.device_accuracy)
        needed = devices_needed(fraction, n_devices)
        if int((record.device_accuracy >= target).sum()) >= needed:
            return record.round_index
    return None


@dataclass
class TargetTable:
    """Rounds-to-target for every (target accuracy, device fraction) cell."""

    targets: tuple[float, ...]
    fractions: tuple[float, ...]
    cells: dict[tuple[float, float], int | None]

    def cell(self, target: float, fraction: float) -> int | None:
        return self.cells[(target, fraction)]


def target_table(records, targets, fractions) -> TargetTable:
    targets = tuple(targets)
    fractions = tuple(fractions)
    cells = {
        (t, f): rounds_to_target(records, t, f) for t in targets for f in fractions
    }
    return TargetTable(targets=targets, fractions=fractions, cells=cells)


@dataclass
class GainTable:
    """Per-cell round gains of a candidate over the baseline (positive = faster).

    Cells that neither run reached are reported as 0 and flagged; cells where
    either side was substituted with max_rounds feed flagged per-target
    averages.
    """

    targets: tuple[float, ...]
    fractions: tuple[float, ...]
    gains: dict[tuple[float, float], int]
    both_not_reached: dict[tuple[float, float], bool]
    averages: dict[float, float]
    average_flags: dict[float, bool]


def gain_table(baseline: TargetTable, candidate: TargetTable, max_rounds: int) -> GainTable:
    """baseline_rounds - candidate_rounds per cell, NOT-REACHED counted as max_rounds."""
    if baseline.targets != candidate.targets or baseline.fractions != candidate.fractions:
        raise ValueError("baseline and candidate tables cover different grids")
    gains: dict[tuple[float, float], int] = {}
    both_nr: dict[tuple[float, float], bool] = {}
    averages: dict[float, float] = {}
    avg_flags: dict[float, bool] = {}
    for t in baseline.targets:
        substituted = False
        for f in baseline.fractions:
            b = baseline.cells[(t, f)]
            c = candidate.cells[(t, f)]
            if b is None and c is None:
                gains[(t, f)] = 0
                both_nr[(t, f)] = True
                substituted = True
                continue
            if b is None or c is None:
                substituted = True
            gains[(t, f)] = (b if b is not None else max_rounds) - (
                c if c is not None else max_rounds
            )
            both_nr[(t, f)] = False
        averages[t] = float(np.mean([gains[(t, f)] for f in baseline.fractions]))
        avg_flags[t] = substituted
    return GainTable(
        targets=baseline.targets,
        fractions=baseline.fractions,
        gains=gains,
        both_not_reached=both_nr,
        averages=averages,
        average_flags=avg_flags,
    )


@dataclass
class ComparisonMatrix:
    """Joint correctness counts over pooled test samples (baseline vs candidate)."""

    bw_cw: int  # baseline wrong, candidate wrong
    bw_cr: int  # baseline wrong, candidate right
    br_cw: int  # baseline right, candidate wrong
    br_cr: int  # baseline right, candidate right

    @property
    def total(self) -> int:
        return self.bw_cw + self.bw_cr + self.br_cw + self.br_cr


def comparison_matrix(baseline_preds, candidate_preds, labels) -> ComparisonMatrix:
    baseline_preds = np.asarray(baseline_preds)
    candidate_preds = np.asarray(candidate_preds)
    labels = np.asarray(labels)
    if not (len(baseline_preds) == len(candidate_preds) == len(labels)):
        raise ValueError("prediction and label vectors differ in length")
    b_right = baseline_preds == labels
    c_right = candidate_preds == labels
    return ComparisonMatrix(
        bw_cw=int((~b_right & ~c_right).sum()),
        bw_cr=int((~b_right & c_right).sum()),
        br_cw=int((b_right & ~c_right).sum()),
        br_cr=int((b_right & c_right).sum()),
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_trace_csv(path, runs) -> None:
    """`runs` is an ordered list of (experiment_id, records)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "experiment_id", "global_accuracy"])
        for experiment_id, records in runs:
            for record in records:
                writer.writerow([record.round_index, experiment_id, _fmt(record.global_accuracy)])


def write_device_accuracy_csv(path, records, client_ids, test_sizes) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "client_id", "accuracy", "test_size"])
        for record in records:
            for cid, acc, size in zip(client_ids, record.device_accuracy, test_sizes):
                writer.writerow([record.round_index, cid, _fmt(acc), int(size)])


def write_target_table_csv(path, tables) -> None:
    """`tables` is an ordered list of (experiment_id, TargetTable)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment_id", "target", "fraction", "rounds"])
        for experiment_id, table in tables:
            for t in table.targets:
                for f in table.fractions:
                    rounds = table.cells[(t, f)]
                    writer.writerow(
                        [
                            experiment_id,
                            _fmt(t),
                            _fmt(f),
                            NOT_REACHED if rounds is None else rounds,
                        ]
                    )


def write_gain_table_csv(path, gain_tables) -> None:
    """`gain_tables` is an ordered list of (candidate_id, GainTable).

    Cell rows carry the signed gain; the flag marks cells that neither run
    reached (forced to 0). After each target's cells comes a row with
    fraction column `avg`, flagged when any cell in the row was substituted.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate_id", "target", "fraction", "gain", "avg_flag"])
        for candidate_id, table in gain_tables:
            for t in table.targets:
                for f in table.fractions:
                    writer.writerow(
                        [
                            candidate_id,
                            _fmt(t),
                            _fmt(f),
                            table.gains[(t, f)],
                            int(table.both_not_reached[(t, f)]),
                        ]
                    )
                writer.writerow(
                    [
                        candidate_id,
                        _fmt(t),
                        "avg",
                        _fmt(table.averages[t]),
                        int(table.average_flags[t]),
                    ]
                )


def write_comparison_csv(path, matrices) -> None:
    """`matrices` is an ordered list of (candidate_id, ComparisonMatrix)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["candidate_id", "bw_cw", "bw_cr", "br_cw", "br_cr"])
        for candidate_id, matrix in matrices:
            writer.writerow(
                [candidate_id, matrix.bw_cw, matrix.bw_cr, matrix.br_cw, matrix.br_cr]
            )
