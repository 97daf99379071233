"""Experiment execution: build data, drive the federation, emit reports.

A run directory always contains the echoed config, a deterministic manifest
(seed, parameter/config hashes -- no timestamps, so re-runs are byte-identical)
and the five CSV reports. A sweep shares one data partition and one cohort
schedule across all of its runs, so gain tables compare the weighting scheme
in isolation.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, SweepSpec, experiment_id
from .data import ClientShard, load_idx, partition, read_jsonl, synth_generate
from .errors import ConfigurationError
from .federation import (
    ExperimentResult,
    FederationState,
    derived_rng,
    run_experiment,
)
from .learner import ModelSpec, TrainerConfig
from .metrics import (
    TargetTable,
    comparison_matrix,
    gain_table,
    rounds_to_target,
    target_table,
    write_comparison_csv,
    write_device_accuracy_csv,
    write_gain_table_csv,
    write_target_table_csv,
    write_trace_csv,
)

logger = logging.getLogger("fedprio")

# Purpose tags for harness-level seed streams (federation uses 0-2).
_SEED_DATA = 10
_SEED_PARTITION = 11


@dataclass
class DatasetInfo:
    num_classes: int
    input_dim: int
    has_sharpness: bool  # data carries real sharpness metadata (IS applicable)


def build_dataset(cfg: ExperimentConfig):
    """Materialize the configured dataset. Returns (samples, DatasetInfo)."""
    ds = cfg.dataset
    if ds.kind == "synthetic_multiclass":
        samples = synth_generate(
            "multiclass_gaussian", ds.synth_multiclass, derived_rng(cfg.seed, _SEED_DATA)
        )
        has_sharpness = False
    elif ds.kind == "synthetic_binary_users":
        samples = synth_generate(
            "binary_user", ds.synth_binary, derived_rng(cfg.seed, _SEED_DATA)
        )
        has_sharpness = True
    elif ds.kind == "idx":
        samples = load_idx(ds.images_path, ds.labels_path)
        has_sharpness = False
    else:
        samples = read_jsonl(ds.jsonl_path)
        has_sharpness = True
    if not samples:
        raise ConfigurationError("dataset: no samples loaded")
    num_classes = int(max(s.label for s in samples)) + 1
    return samples, DatasetInfo(
        num_classes=max(num_classes, 2),
        input_dim=int(len(samples[0].features)),
        has_sharpness=has_sharpness,
    )


def build_shards(cfg: ExperimentConfig):
    """Dataset plus partition, both derived from the experiment seed."""
    samples, info = build_dataset(cfg)
    shards = partition(samples, cfg.dataset.partition, derived_rng(cfg.seed, _SEED_PARTITION))
    return shards, info


def _check_applicability(cfg: ExperimentConfig, info: DatasetInfo, criteria) -> None:
    if "CB" in criteria and info.num_classes != 2:
        raise ConfigurationError("criteria: CB requires a binary task")
    if "IS" in criteria and not info.has_sharpness:
        raise ConfigurationError("criteria: IS requires sharpness-bearing data")


def _model_spec(cfg: ExperimentConfig, info: DatasetInfo) -> ModelSpec:
    return ModelSpec(
        input_dim=info.input_dim,
        num_classes=info.num_classes,
        hidden_units=cfg.hidden_units,
    )


def _trainer(cfg: ExperimentConfig) -> TrainerConfig:
    return TrainerConfig(
        learning_rate=cfg.trainer.learning_rate,
        local_epochs=cfg.trainer.local_epochs,
        batch_size=cfg.trainer.batch_size,
    )


def execute(
    cfg: ExperimentConfig,
    ordering=None,
    *,
    shards: list[ClientShard] | None = None,
    info: DatasetInfo | None = None,
    capture_locals: bool = False,
    on_round=None,
) -> ExperimentResult:
    """Run one experiment in memory and return its result.

    `shards`/`info` let a sweep reuse one partition across runs; otherwise
    they are built from the config. `ordering` overrides cfg.criteria.
    """
    if shards is None:
        shards, info = build_shards(cfg)
    ordering = tuple(ordering) if ordering is not None else cfg.criteria
    _check_applicability(cfg, info, ordering)
    state = FederationState.create(shards, _model_spec(cfg, info), _trainer(cfg), cfg.seed)
    return run_experiment(
        state,
        ordering=ordering,
        score_kind=cfg.score_fn,
        client_fraction=cfg.trainer.client_fraction,
        max_rounds=cfg.trainer.max_rounds,
        aggregation=cfg.trainer.aggregation,
        targets=cfg.targets,
        device_fractions=cfg.device_fractions,
        early_stop=cfg.trainer.early_stop,
        capture_locals=capture_locals,
        on_round=on_round,
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _manifest(cfg: ExperimentConfig, run_ids, results) -> dict:
    return {
        "package_version": __version__,
        "seed": cfg.seed,
        "config_sha256": _sha256(json.dumps(cfg.raw, sort_keys=True).encode()),
        "initial_params_sha256": _sha256(results[0].initial_params.values.tobytes()),
        "runs": [
            {
                "experiment_id": rid,
                "rounds_executed": len(res.records),
                "best_round": res.best_round,
                "best_global_accuracy": res.best_global_accuracy,
            }
            for rid, res in zip(run_ids, results)
        ],
    }


def _emit_run_dir(
    out_dir: Path,
    cfg: ExperimentConfig,
    rid: str,
    ordering,
    result: ExperimentResult,
    table: TargetTable,
    baseline_table: TargetTable,
    baseline_result: ExperimentResult,
) -> None:
    """Write one run directory: config echo, manifest, and the five reports."""
    out_dir.mkdir(parents=True, exist_ok=True)
    echo = {"experiment_id": rid, **cfg.raw, "criteria": list(ordering)}
    _write_json(out_dir / "config.json", echo)
    _write_json(out_dir / "manifest.json", _manifest(cfg, [rid], [result]))
    write_trace_csv(out_dir / "trace.csv", [(rid, result.records)])
    write_device_accuracy_csv(
        out_dir / "device_accuracy.csv", result.records, result.client_ids, result.test_sizes
    )
    write_target_table_csv(out_dir / "target_table.csv", [(rid, table)])
    gains = gain_table(baseline_table, table, cfg.trainer.max_rounds)
    write_gain_table_csv(out_dir / "gain_table.csv", [(rid, gains)])
    matrix = comparison_matrix(
        baseline_result.best_predictions, result.best_predictions, result.pooled_labels
    )
    write_comparison_csv(out_dir / "comparison.csv", [(rid, matrix)])


def run_single(cfg: ExperimentConfig, out_dir, on_round=None) -> ExperimentResult:
    """Execute one run and write its reports; the run is its own baseline."""
    result = execute(cfg, on_round=on_round)
    rid = experiment_id(cfg.criteria)
    table = target_table(result.records, cfg.targets, cfg.device_fractions)
    _emit_run_dir(Path(out_dir), cfg, rid, cfg.criteria, result, table, table, result)
    return result


@dataclass
class SweepOutcome:
    run_ids: tuple[str, ...]  # baseline first
    results: list[ExperimentResult]
    tables: list[TargetTable]


def run_sweep(sweep: SweepSpec, out_dir) -> SweepOutcome:
    """Run baseline plus every ordering over a shared partition and cohort schedule."""
    for message in sweep.warnings:
        logger.warning("%s", message)
    out_dir = Path(out_dir)
    cfg = sweep.base
    shards, info = build_shards(cfg)

    run_orderings = [sweep.baseline, *sweep.orderings]
    run_ids = tuple(experiment_id(o) for o in run_orderings)
    results: list[ExperimentResult] = []
    tables: list[TargetTable] = []
    for rid, ordering in zip(run_ids, run_orderings):
        logger.info("sweep run %s starting", rid)
        try:
            result = execute(cfg, ordering, shards=shards, info=info)
        except Exception as exc:
            raise type(exc)(f"sweep run {rid}: {exc}") from exc
        results.append(result)
        tables.append(target_table(result.records, cfg.targets, cfg.device_fractions))

    baseline_result, baseline_table = results[0], tables[0]
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "config.json", {"baseline": run_ids[0], "runs": list(run_ids), **cfg.raw})
    _write_json(out_dir / "manifest.json", _manifest(cfg, run_ids, results))
    write_trace_csv(out_dir / "trace.csv", list(zip(run_ids, (r.records for r in results))))
    write_target_table_csv(out_dir / "target_table.csv", list(zip(run_ids, tables)))
    candidates = list(zip(run_ids[1:], results[1:], tables[1:]))
    write_gain_table_csv(
        out_dir / "gain_table.csv",
        [(rid, gain_table(baseline_table, table, cfg.trainer.max_rounds)) for rid, _, table in candidates],
    )
    write_comparison_csv(
        out_dir / "comparison.csv",
        [
            (
                rid,
                comparison_matrix(
                    baseline_result.best_predictions, res.best_predictions, res.pooled_labels
                ),
            )
            for rid, res, _ in candidates
        ],
    )
    for rid, ordering, result, table in zip(run_ids, run_orderings, results, tables):
        _emit_run_dir(
            out_dir / "runs" / rid.replace(">", "-"),
            cfg,
            rid,
            ordering,
            result,
            table,
            baseline_table,
            baseline_result,
        )
    return SweepOutcome(run_ids=run_ids, results=results, tables=tables)


# ---------------------------------------------------------------------------
# Learning-rate grid search
# ---------------------------------------------------------------------------


@dataclass
class LrSearchResult:
    chosen: float | None  # None when no grid value reaches the target
    target: float
    fraction: float
    rounds_by_lr: dict[float, int | None]


def grid_search_lr(
    cfg: ExperimentConfig, grid, target: float | None = None, fraction: float = 0.5
) -> LrSearchResult:
    """Pick the learning rate whose baseline run first reaches the target.

    Runs the baseline criteria for each grid value and returns the value with
    the smallest rounds-to-target at (target, fraction); ties go to the
    smaller rate. `target` defaults to the first configured target.
    """
    grid = sorted(float(v) for v in grid)
    if not grid:
        raise ConfigurationError("lr-search: empty grid")
    if any(v <= 0 for v in grid):
        raise ConfigurationError("lr-search: grid values must be > 0")
    if target is None:
        target = cfg.targets[0]

    shards, info = build_shards(cfg)
    rounds_by_lr: dict[float, int | None] = {}
    for lr in grid:
        trial = replace(cfg, trainer=replace(cfg.trainer, learning_rate=lr))
        result = execute(trial, shards=shards, info=info)
        rounds = rounds_to_target(result.records, target, fraction)
        rounds_by_lr[lr] = rounds
        logger.info("lr-search lr=%g rounds=%s", lr, "NR" if rounds is None else rounds)

    reached = {lr: r for lr, r in rounds_by_lr.items() if r is not None}
    chosen = min(reached, key=lambda lr: (reached[lr], lr)) if reached else None
    return LrSearchResult(chosen=chosen, target=target, fraction=fraction, rounds_by_lr=rounds_by_lr)
