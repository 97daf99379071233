"""Experiment and sweep configuration: a single JSON document per run.

Defaults follow the reference protocol: 5 local epochs, 10% client fraction,
full-batch SGD. Every validation failure raises ConfigurationError with the
offending field path.

Example:

    {
      "seed": 42,
      "dataset": {
        "kind": "synthetic_multiclass",
        "num_classes": 10, "dim": 16, "samples_per_class": 600,
        "separation": 3.0, "noise": 1.0,
        "partition": {"scheme": "noniid_shards", "num_clients": 100,
                      "shards_per_client": 2, "holdout_ratio": 0.2}
      },
      "model": {"hidden_units": 0},
      "trainer": {"learning_rate": 0.5, "local_epochs": 5, "batch_size": null,
                  "client_fraction": 0.1, "max_rounds": 150},
      "criteria": ["DS"],
      "score_fn": "prioritized",
      "targets": [0.7, 0.8],
      "device_fractions": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    }

A sweep document wraps a base config with the criteria battery to compare:

    {"base": {...}, "criteria_set": ["DS", "LD", "MW"],
     "baseline": ["DS"], "include_singles": true}
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

from .criteria import CRITERIA
from .data import SCHEMES, BinaryUserSpec, GaussianCloudSpec, PartitionSpec
from .errors import ConfigurationError
from .federation import AGGREGATION_MODES
from .scoring import SCORE_FUNCTIONS

DATASET_KINDS = ("synthetic_multiclass", "synthetic_binary_users", "idx", "jsonl")

DEFAULT_LOCAL_EPOCHS = 5
DEFAULT_CLIENT_FRACTION = 0.1
DEFAULT_MAX_ROUNDS = 100
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_TARGETS = (0.7, 0.8, 0.9, 0.95)
DEFAULT_DEVICE_FRACTIONS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


@dataclass(frozen=True)
class DatasetConfig:
    kind: str
    partition: PartitionSpec
    synth_multiclass: GaussianCloudSpec | None = None
    synth_binary: BinaryUserSpec | None = None
    images_path: str | None = None
    labels_path: str | None = None
    jsonl_path: str | None = None


@dataclass(frozen=True)
class TrainerSettings:
    learning_rate: float = DEFAULT_LEARNING_RATE
    local_epochs: int = DEFAULT_LOCAL_EPOCHS
    batch_size: int | None = None
    client_fraction: float = DEFAULT_CLIENT_FRACTION
    max_rounds: int = DEFAULT_MAX_ROUNDS
    aggregation: str = "model_avg"
    early_stop: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    dataset: DatasetConfig
    hidden_units: int
    trainer: TrainerSettings
    criteria: tuple[str, ...]
    score_fn: str
    targets: tuple[float, ...]
    device_fractions: tuple[float, ...]
    out_dir: str | None = None
    raw: dict = field(default_factory=dict, compare=False)  # parsed document, for echoing


@dataclass(frozen=True)
class SweepSpec:
    base: ExperimentConfig
    baseline: tuple[str, ...]
    orderings: tuple[tuple[str, ...], ...]  # every run except the baseline, in order
    warnings: tuple[str, ...] = ()


def experiment_id(ordering) -> str:
    """Stable run identifier: criteria joined by priority, e.g. DS>LD>MW."""
    return ">".join(ordering)


def _fail(path: str, message: str):
    raise ConfigurationError(f"{path}: {message}")


def _get(d: dict, key: str, path: str, required: bool = True, default=None):
    if key not in d:
        if required:
            _fail(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _as_int(value, path: str, minimum=None) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        _fail(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        _fail(path, f"must be >= {minimum}")
    return value


def _as_number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        _fail(path, f"expected a number, got {value!r}")
    return float(value)


def _check_unknown(d: dict, known, path: str) -> None:
    unknown = sorted(set(d) - set(known))
    if unknown:
        _fail(f"{path}.{unknown[0]}" if path else unknown[0], "unknown field")


def _parse_partition(d: dict, path: str, default_scheme: str) -> PartitionSpec:
    _check_unknown(d, {"scheme", "num_clients", "shards_per_client", "holdout_ratio"}, path)
    scheme = _get(d, "scheme", path, required=False, default=default_scheme)
    if scheme not in SCHEMES:
        _fail(f"{path}.scheme", f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    kwargs = {"scheme": scheme}
    if "num_clients" in d:
        kwargs["num_clients"] = _as_int(d["num_clients"], f"{path}.num_clients", minimum=2)
    if "shards_per_client" in d:
        kwargs["shards_per_client"] = _as_int(
            d["shards_per_client"], f"{path}.shards_per_client", minimum=1
        )
    if "holdout_ratio" in d:
        ratio = _as_number(d["holdout_ratio"], f"{path}.holdout_ratio")
        if not 0.0 < ratio < 1.0:
            _fail(f"{path}.holdout_ratio", "must be in (0, 1)")
        kwargs["holdout_ratio"] = ratio
    return PartitionSpec(**kwargs)


def _parse_dataset(d, path: str) -> DatasetConfig:
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    kind = _get(d, "kind", path)
    if kind not in DATASET_KINDS:
        _fail(f"{path}.kind", f"unknown dataset kind {kind!r}; expected one of {DATASET_KINDS}")

    if kind == "synthetic_multiclass":
        known = {"kind", "partition", "num_classes", "dim", "samples_per_class", "separation", "noise"}
        _check_unknown(d, known, path)
        spec = GaussianCloudSpec(
            num_classes=_as_int(_get(d, "num_classes", path, False, 10), f"{path}.num_classes", 2),
            dim=_as_int(_get(d, "dim", path, False, 16), f"{path}.dim", 1),
            samples_per_class=_as_int(
                _get(d, "samples_per_class", path, False, 600), f"{path}.samples_per_class", 1
            ),
            separation=_as_number(_get(d, "separation", path, False, 3.0), f"{path}.separation"),
            noise=_as_number(_get(d, "noise", path, False, 1.0), f"{path}.noise"),
        )
        part = _parse_partition(
            _get(d, "partition", path, False, {}), f"{path}.partition", "iid"
        )
        if part.scheme == "user_keyed":
            _fail(f"{path}.partition.scheme", "multiclass synthetic data carries no user keys")
        return DatasetConfig(kind=kind, partition=part, synth_multiclass=spec)

    if kind == "synthetic_binary_users":
        known = {
            "kind", "partition", "num_users", "dim", "separation", "noise",
            "balanced_fraction", "balanced_samples", "skewed_samples", "skew",
            "skew_positive_fraction", "sharp_prob_low", "sharp_prob_high",
        }
        _check_unknown(d, known, path)
        kwargs = {}
        for name in known - {"kind", "partition"}:
            if name in d:
                if name in ("num_users", "dim", "balanced_samples", "skewed_samples"):
                    kwargs[name] = _as_int(d[name], f"{path}.{name}", 1)
                else:
                    kwargs[name] = _as_number(d[name], f"{path}.{name}")
        spec = BinaryUserSpec(**kwargs)
        part = _parse_partition(
            _get(d, "partition", path, False, {}), f"{path}.partition", "user_keyed"
        )
        if part.scheme != "user_keyed":
            _fail(f"{path}.partition.scheme", "binary user data must be partitioned user_keyed")
        return DatasetConfig(kind=kind, partition=part, synth_binary=spec)

    if kind == "idx":
        _check_unknown(d, {"kind", "partition", "images", "labels"}, path)
        images = _get(d, "images", path)
        labels = _get(d, "labels", path)
        part = _parse_partition(_get(d, "partition", path, False, {}), f"{path}.partition", "iid")
        if part.scheme == "user_keyed":
            _fail(f"{path}.partition.scheme", "IDX data carries no user keys")
        return DatasetConfig(kind=kind, partition=part, images_path=str(images), labels_path=str(labels))

    _check_unknown(d, {"kind", "partition", "path"}, path)
    jsonl_path = _get(d, "path", path)
    part = _parse_partition(_get(d, "partition", path, False, {}), f"{path}.partition", "iid")
    return DatasetConfig(kind=kind, partition=part, jsonl_path=str(jsonl_path))


def _parse_trainer(d, path: str) -> TrainerSettings:
    if not isinstance(d, dict):
        _fail(path, "expected an object")
    known = {
        "learning_rate", "local_epochs", "batch_size", "client_fraction",
        "max_rounds", "aggregation", "early_stop",
    }
    _check_unknown(d, known, path)
    lr = _as_number(_get(d, "learning_rate", path, False, DEFAULT_LEARNING_RATE), f"{path}.learning_rate")
    if not lr > 0:
        _fail(f"{path}.learning_rate", "must be > 0")
    epochs = _as_int(_get(d, "local_epochs", path, False, DEFAULT_LOCAL_EPOCHS), f"{path}.local_epochs", 1)
    batch = _get(d, "batch_size", path, False, None)
    if batch is not None:
        batch = _as_int(batch, f"{path}.batch_size", 1)
    fraction = _as_number(
        _get(d, "client_fraction", path, False, DEFAULT_CLIENT_FRACTION), f"{path}.client_fraction"
    )
    if not 0.0 < fraction <= 1.0:
        _fail(f"{path}.client_fraction", "must be in (0, 1]")
    max_rounds = _as_int(_get(d, "max_rounds", path, False, DEFAULT_MAX_ROUNDS), f"{path}.max_rounds", 0)
    aggregation = _get(d, "aggregation", path, False, "model_avg")
    if aggregation not in AGGREGATION_MODES:
        _fail(f"{path}.aggregation", f"unknown mode {aggregation!r}; expected one of {AGGREGATION_MODES}")
    early_stop = _get(d, "early_stop", path, False, False)
    if not isinstance(early_stop, bool):
        _fail(f"{path}.early_stop", "expected a boolean")
    return TrainerSettings(
        learning_rate=lr,
        local_epochs=epochs,
        batch_size=batch,
        client_fraction=fraction,
        max_rounds=max_rounds,
        aggregation=aggregation,
        early_stop=early_stop,
    )


def _parse_criteria(values, path: str) -> tuple[str, ...]:
    if not isinstance(values, list) or not values:
        _fail(path, "expected a non-empty list of criterion names")
    seen = set()
    for i, name in enumerate(values):
        if name not in CRITERIA:
            _fail(f"{path}[{i}]", f"unknown criterion {name!r}; expected one of {CRITERIA}")
        if name in seen:
            _fail(f"{path}[{i}]", f"duplicate criterion {name!r}")
        seen.add(name)
    return tuple(values)


def _parse_increasing(values, path: str, upper_inclusive: bool) -> tuple[float, ...]:
    if not isinstance(values, list) or not values:
        _fail(path, "expected a non-empty list")
    out = []
    for i, v in enumerate(values):
        v = _as_number(v, f"{path}[{i}]")
        hi_ok = v <= 1.0 if upper_inclusive else v < 1.0
        if not (0.0 < v and hi_ok):
            _fail(f"{path}[{i}]", "must be in (0, 1)" + ("]" if upper_inclusive else ""))
        if out and v <= out[-1]:
            _fail(f"{path}[{i}]", "values must be strictly increasing")
        out.append(v)
    return tuple(out)


def parse_config_dict(d: dict, path: str = "") -> ExperimentConfig:
    if not isinstance(d, dict):
        _fail(path or "config", "expected a JSON object")
    known = {
        "seed", "dataset", "model", "trainer", "criteria", "score_fn",
        "targets", "device_fractions", "out_dir",
    }
    _check_unknown(d, known, path)
    prefix = f"{path}." if path else ""
    seed = _as_int(_get(d, "seed", path), f"{prefix}seed", 0)
    dataset = _parse_dataset(_get(d, "dataset", path), f"{prefix}dataset")
    model = _get(d, "model", path, False, {})
    if not isinstance(model, dict):
        _fail(f"{prefix}model", "expected an object")
    _check_unknown(model, {"hidden_units"}, f"{prefix}model")
    hidden = _as_int(model.get("hidden_units", 0), f"{prefix}model.hidden_units", 0)
    trainer = _parse_trainer(_get(d, "trainer", path, False, {}), f"{prefix}trainer")
    criteria = _parse_criteria(_get(d, "criteria", path, False, ["DS"]), f"{prefix}criteria")
    score_fn = _get(d, "score_fn", path, False, "prioritized")
    if score_fn not in SCORE_FUNCTIONS:
        _fail(f"{prefix}score_fn", f"unknown score function {score_fn!r}; expected one of {SCORE_FUNCTIONS}")
    targets = _parse_increasing(
        _get(d, "targets", path, False, list(DEFAULT_TARGETS)), f"{prefix}targets", False
    )
    fractions = _parse_increasing(
        _get(d, "device_fractions", path, False, list(DEFAULT_DEVICE_FRACTIONS)),
        f"{prefix}device_fractions",
        True,
    )
    out_dir = _get(d, "out_dir", path, False, None)

    # Criteria applicability that is decidable from the config alone; dataset
    # facts discovered at load time are re-checked by the harness.
    if dataset.kind == "synthetic_multiclass" and dataset.synth_multiclass.num_classes != 2:
        if "CB" in criteria:
            _fail(f"{prefix}criteria", "CB requires a binary task")
        if "IS" in criteria:
            _fail(f"{prefix}criteria", "IS requires sharpness-bearing data")
    if dataset.kind == "idx" and ("CB" in criteria or "IS" in criteria):
        _fail(f"{prefix}criteria", "CB/IS are not applicable to IDX image data")

    return ExperimentConfig(
        seed=seed,
        dataset=dataset,
        hidden_units=hidden,
        trainer=trainer,
        criteria=criteria,
        score_fn=score_fn,
        targets=targets,
        device_fractions=fractions,
        out_dir=out_dir,
        raw=d,
    )


def parse_sweep_dict(d: dict) -> SweepSpec:
    if not isinstance(d, dict):
        _fail("sweep", "expected a JSON object")
    _check_unknown(d, {"base", "criteria_set", "baseline", "include_singles", "orderings"}, "")
    base = parse_config_dict(_get(d, "base", ""), "base")
    criteria_set = _parse_criteria(_get(d, "criteria_set", ""), "criteria_set")
    baseline = _parse_criteria(_get(d, "baseline", "", False, ["DS"]), "baseline")
    include_singles = _get(d, "include_singles", "", False, True)
    if not isinstance(include_singles, bool):
        _fail("include_singles", "expected a boolean")

    warnings: list[str] = []
    orderings: list[tuple[str, ...]] = []
    explicit = _get(d, "orderings", "", False, None)
    if explicit is not None:
        if not isinstance(explicit, list):
            _fail("orderings", "expected a list of criterion-name lists")
        for i, entry in enumerate(explicit):
            orderings.append(_parse_criteria(entry, f"orderings[{i}]"))
    else:
        if include_singles:
            orderings.extend((name,) for name in criteria_set if (name,) != baseline)
        orderings.extend(
            perm for perm in itertools.permutations(criteria_set) if perm != baseline
        )

    deduped: list[tuple[str, ...]] = []
    for ordering in orderings:
        if ordering == baseline or ordering in deduped:
            warnings.append(f"dropping duplicate ordering {experiment_id(ordering)}")
            continue
        deduped.append(ordering)

    return SweepSpec(
        base=base, baseline=baseline, orderings=tuple(deduped), warnings=tuple(warnings)
    )


def _load_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc


def parse_config(path) -> ExperimentConfig:
    """Load and validate an experiment config file."""
    return parse_config_dict(_load_json(path))


def parse_sweep(path) -> SweepSpec:
    """Load and validate a sweep config file."""
    return parse_sweep_dict(_load_json(path))
