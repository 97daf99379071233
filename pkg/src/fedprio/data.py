"""Datasets and federated partitioning.

Covers IDX ingestion, JSON-lines import/export, two synthetic generators for
desk-scale runs, and the three partitioning schemes (IID, label-shard Non-IID,
user-keyed). Partitioning is a one-shot setup step; the resulting shards are
immutable and safe to share across concurrent client tasks.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

SCHEMES = ("iid", "noniid_shards", "user_keyed")


@dataclass
class Sample:
    """One labelled example; `sharp` carries image-quality metadata, `user` an owner key."""

    features: np.ndarray
    label: int
    sharp: bool = True
    user: str | None = None


@dataclass
class ClientShard:
    """A client's private train/test split. `train` must be non-empty to federate."""

    client_id: str
    train: list[Sample]
    test: list[Sample]

    @property
    def n_train(self) -> int:
        return len(self.train)

    def label_counts(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for s in self.train:
            counts[s.label] = counts.get(s.label, 0) + 1
        return counts

    def sharp_count(self) -> int:
        return sum(1 for s in self.train if s.sharp)

    def train_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return samples_to_arrays(self.train)

    def test_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return samples_to_arrays(self.test)


@dataclass(frozen=True)
class PartitionSpec:
    scheme: str
    num_clients: int = 100
    shards_per_client: int = 2
    holdout_ratio: float = 0.2

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"partition.scheme: unknown scheme {self.scheme!r}")
        if self.num_clients < 2:
            raise ConfigurationError("partition.num_clients: must be >= 2")
        if self.shards_per_client < 1:
            raise ConfigurationError("partition.shards_per_client: must be >= 1")
        if not 0.0 < self.holdout_ratio < 1.0:
            raise ConfigurationError("partition.holdout_ratio: must be in (0, 1)")


def samples_to_arrays(samples: list[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack samples into (features, labels) float64/int64 arrays."""
    if not samples:
        dim = 0
        return np.zeros((0, dim)), np.zeros(0, dtype=np.int64)
    x = np.stack([s.features for s in samples]).astype(np.float64)
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


# ---------------------------------------------------------------------------
# IDX ingestion
#
# Byte layout (all integers big-endian):
#   images: 0x00000803, count, rows, cols, then count*rows*cols unsigned bytes
#   labels: 0x00000801, count, then count unsigned bytes
# ---------------------------------------------------------------------------


def _read_exact(buf: bytes, offset: int, n: int, path, what: str) -> bytes:
    if offset + n > len(buf):
        raise DataFormatError(f"{path}: truncated file while reading {what}")
    return buf[offset : offset + n]


def load_idx(images_path, labels_path) -> list[Sample]:
    """Parse paired IDX image/label files into samples with features in [0, 1]."""
    img_buf = Path(images_path).read_bytes()
    lbl_buf = Path(labels_path).read_bytes()

    magic, n_images, rows, cols = struct.unpack(
        ">IIII", _read_exact(img_buf, 0, 16, images_path, "image header")
    )
    if magic != IDX_IMAGES_MAGIC:
        raise DataFormatError(f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}")
    magic, n_labels = struct.unpack(
        ">II", _read_exact(lbl_buf, 0, 8, labels_path, "label header")
    )
    if magic != IDX_LABELS_MAGIC:
        raise DataFormatError(f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}")
    if n_images != n_labels:
        raise DataFormatError(f"image count {n_images} != label count {n_labels}")

    pixels = _read_exact(img_buf, 16, n_images * rows * cols, images_path, "pixel data")
    labels = _read_exact(lbl_buf, 8, n_labels, labels_path, "label data")

    features = np.frombuffer(pixels, dtype=np.uint8).reshape(n_images, rows * cols)
    features = features.astype(np.float64) / 255.0
    labels = np.frombuffer(labels, dtype=np.uint8)
    return [Sample(features=features[i], label=int(labels[i])) for i in range(n_images)]


# ---------------------------------------------------------------------------
# JSON-lines import/export: {"features":[...],"label":k,"sharp":true,"user":"id"}
# ---------------------------------------------------------------------------


def write_jsonl(samples: list[Sample], path) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(
                json.dumps(
                    {
                        "features": [float(v) for v in s.features],
                        "label": int(s.label),
                        "sharp": bool(s.sharp),
                        "user": s.user,
                    }
                )
            )
            fh.write("\n")


def read_jsonl(path) -> list[Sample]:
    samples = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                samples.append(
                    Sample(
                        features=np.asarray(rec["features"], dtype=np.float64),
                        label=int(rec["label"]),
                        sharp=bool(rec.get("sharp", True)),
                        user=rec.get("user"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{line_no}: bad record ({exc})") from exc
    return samples


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianCloudSpec:
    """K gaussian clusters in `dim` dimensions; separation scales the centroids."""

    num_classes: int = 10
    dim: int = 16
    samples_per_class: int = 600
    separation: float = 3.0
    noise: float = 1.0

    def __post_init__(self):
        if self.num_classes < 2:
            raise ConfigurationError("synthetic: num_classes must be >= 2")
        if self.dim < 1 or self.samples_per_class < 1:
            raise ConfigurationError("synthetic: dim and samples_per_class must be >= 1")
        if self.noise < 0 or self.separation < 0:
            raise ConfigurationError("synthetic: separation and noise must be >= 0")


@dataclass(frozen=True)
class BinaryUserSpec:
    """Binary task distributed over users with planted class imbalance.

    A `balanced_fraction` of users hold small 50/50 shards; the rest hold
    larger shards where the majority class takes a `skew` share, and a
    `skew_positive_fraction` of those lean positive. Each user also gets a
    sharpness probability drawn from [sharp_prob_low, sharp_prob_high], so the
    class-balance and image-sharpness criteria both carry signal.
    """

    num_users: int = 60
    dim: int = 8
    separation: float = 2.0
    noise: float = 1.0
    balanced_fraction: float = 0.4
    balanced_samples: int = 20
    skewed_samples: int = 80
    skew: float = 0.9
    skew_positive_fraction: float = 0.8
    sharp_prob_low: float = 0.4
    sharp_prob_high: float = 1.0

    def __post_init__(self):
        if self.num_users < 2:
            raise ConfigurationError("synthetic: num_users must be >= 2")
        if not 0.0 <= self.balanced_fraction <= 1.0:
            raise ConfigurationError("synthetic: balanced_fraction must be in [0, 1]")
        if not 0.5 <= self.skew <= 1.0:
            raise ConfigurationError("synthetic: skew must be in [0.5, 1]")
        if min(self.balanced_samples, self.skewed_samples) < 5:
            raise ConfigurationError("synthetic: users need at least 5 samples")
        if not 0.0 <= self.sharp_prob_low <= self.sharp_prob_high <= 1.0:
            raise ConfigurationError("synthetic: bad sharpness probability range")


def synth_generate(kind: str, params, seed) -> list[Sample]:
    """Deterministic synthetic dataset for the given seed."""
    if kind == "multiclass_gaussian":
        return _synth_multiclass(params, seed)
    if kind == "binary_user":
        return _synth_binary_users(params, seed)
    raise ConfigurationError(f"synthetic: unknown kind {kind!r}")


def _synth_multiclass(spec: GaussianCloudSpec, seed) -> list[Sample]:
    rng = np.random.default_rng(seed)
    centroids = rng.normal(size=(spec.num_classes, spec.dim)) * spec.separation
    samples = []
    for k in range(spec.num_classes):
        feats = centroids[k] + rng.normal(size=(spec.samples_per_class, spec.dim)) * spec.noise
        for i in range(spec.samples_per_class):
            samples.append(Sample(features=feats[i], label=k))
    return samples


def _synth_binary_users(spec: BinaryUserSpec, seed) -> list[Sample]:
    rng = np.random.default_rng(seed)
    # Centroids sit at +/- separation/2 along a random direction, so the class
    # distance is exactly `separation` for every seed (controlled difficulty).
    direction = rng.normal(size=spec.dim)
    direction /= np.linalg.norm(direction)
    centroids = np.stack([-direction, direction]) * (spec.separation / 2.0)
    n_balanced = int(round(spec.balanced_fraction * spec.num_users))
    width = max(3, len(str(spec.num_users - 1)))
    samples = []
    for u in range(spec.num_users):
        key = f"u{u:0{width}d}"
        if u < n_balanced:
            n, p_pos = spec.balanced_samples, 0.5
        else:
            n = spec.skewed_samples
            majority_pos = rng.random() < spec.skew_positive_fraction
            p_pos = spec.skew if majority_pos else 1.0 - spec.skew
        sharp_prob = rng.uniform(spec.sharp_prob_low, spec.sharp_prob_high)
        labels = (rng.random(n) < p_pos).astype(np.int64)
        noise = rng.normal(size=(n, spec.dim)) * spec.noise
        sharp = rng.random(n) < sharp_prob
        for i in range(n):
            samples.append(
                Sample(
                    features=centroids[labels[i]] + noise[i],
                    label=int(labels[i]),
                    sharp=bool(sharp[i]),
                    user=key,
                )
            )
    return samples


# ---------------------------------------------------------------------------
# Partitioning
# ---------------------------------------------------------------------------


def _holdout_split(samples: list[Sample], ratio: float, rng) -> tuple[list[Sample], list[Sample]]:
    """Random hold-out: floor(ratio * n) samples go to test, the rest to train."""
    order = rng.permutation(len(samples))
    n_test = int(len(samples) * ratio)
    test = [samples[i] for i in order[:n_test]]
    train = [samples[i] for i in order[n_test:]]
    return train, test


def _client_id(index: int, num_clients: int) -> str:
    width = max(3, len(str(num_clients - 1)))
    return f"c{index:0{width}d}"


def partition_iid(data: list[Sample], spec: PartitionSpec, seed) -> list[ClientShard]:
    """Shuffle and deal into near-equal shards (sizes differ by at most one)."""
    if len(data) < spec.num_clients:
        raise ConfigurationError(
            f"partition: {len(data)} samples cannot cover {spec.num_clients} clients"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(data))
    groups = np.array_split(order, spec.num_clients)
    shards = []
    for i, idx in enumerate(groups):
        train, test = _holdout_split([data[j] for j in idx], spec.holdout_ratio, rng)
        shards.append(ClientShard(_client_id(i, spec.num_clients), train, test))
    return shards


def partition_noniid_shards(data: list[Sample], spec: PartitionSpec, seed) -> list[ClientShard]:
    """Label-sort, slice into equal contiguous shards, deal shards_per_client each.

    The classic pathological Non-IID recipe: with single-label shards and
    shards_per_client=2 every client sees at most two distinct labels.
    Remainder samples after equal slicing are discarded.
    """
    total_shards = spec.num_clients * spec.shards_per_client
    shard_size = len(data) // total_shards
    if shard_size == 0:
        raise ConfigurationError(
            f"partition: {total_shards} shards exceed the {len(data)} available samples"
        )
    rng = np.random.default_rng(seed)
    labels = np.array([s.label for s in data])
    sorted_idx = np.argsort(labels, kind="stable")[: total_shards * shard_size]
    shard_order = rng.permutation(total_shards)
    shards = []
    for i in range(spec.num_clients):
        pool: list[Sample] = []
        for shard_no in shard_order[i * spec.shards_per_client : (i + 1) * spec.shards_per_client]:
            lo = int(shard_no) * shard_size
            pool.extend(data[j] for j in sorted_idx[lo : lo + shard_size])
        train, test = _holdout_split(pool, spec.holdout_ratio, rng)
        shards.append(ClientShard(_client_id(i, spec.num_clients), train, test))
    return shards


MIN_USER_SAMPLES = 5


def partition_user_keyed(data: list[Sample], spec: PartitionSpec, seed) -> list[ClientShard]:
    """One shard per user key; users with fewer than 5 samples are dropped."""
    for s in data:
        if s.user is None:
            raise ConfigurationError("partition: user_keyed scheme needs a user key on every sample")
    by_user: dict[str, list[Sample]] = {}
    for s in data:
        by_user.setdefault(s.user, []).append(s)
    rng = np.random.default_rng(seed)
    shards = []
    for key in sorted(by_user):
        group = by_user[key]
        if len(group) < MIN_USER_SAMPLES:
            continue
        train, test = _holdout_split(group, spec.holdout_ratio, rng)
        shards.append(ClientShard(key, train, test))
    if not shards:
        raise ConfigurationError(
            f"partition: no user holds {MIN_USER_SAMPLES}+ samples, nothing to federate"
        )
    return shards


def partition(data: list[Sample], spec: PartitionSpec, seed) -> list[ClientShard]:
    """Dispatch on spec.scheme."""
    if spec.scheme == "iid":
        return partition_iid(data, spec, seed)
    if spec.scheme == "noniid_shards":
        return partition_noniid_shards(data, spec, seed)
    return partition_user_keyed(data, spec, seed)
