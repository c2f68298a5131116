"""
Datasets, the probabilistic non-IID partitioner and FLTrust root sampling.

Synthetic Gaussian blobs are the default data source; CSV (label column named
"label") and IDX image/label pairs cover real datasets without shipping any
downloader.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd

from fedsim.core.errors import ConfigurationError, DataError, IngestionError
from fedsim.utils.safe_logging import get_logger

logger = get_logger(__name__)

# IDX type code 0x08 = unsigned byte, the only payload type MNIST-style files use
IDX_UBYTE = 0x08
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
PIXEL_MAX = 255.0


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer labels in [0, num_classes)"""
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if features.ndim != 2:
            raise DataError(f"features must be a 2-D matrix, got shape {features.shape}")
        if labels.ndim != 1 or labels.shape[0] != features.shape[0]:
            raise DataError(
                f"label count {labels.shape[0] if labels.ndim == 1 else labels.shape} "
                f"does not match feature rows {features.shape[0]}"
            )
        if self.num_classes < 1:
            raise DataError("num_classes must be positive")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.equal(np.mod(labels, 1), 0)):
                raise DataError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise DataError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, indices) -> "Dataset":
        """View of the given rows (copied; numpy fancy indexing)"""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass(frozen=True)
class PartitionConfig:
    """Degree of non-IID p, group count L, client count k"""
    p: float
    num_groups: int
    num_clients: int
    seed: int = 0
    allow_empty: bool = False

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ConfigurationError(f"degree of non-IID p must lie in (0, 1], got {self.p}")
        if self.num_groups < 1:
            raise ConfigurationError("group count L must be positive")
        if self.num_clients < 1:
            raise ConfigurationError("client count k must be positive")


@dataclass
class Partition:
    """Disjoint client shards (client-id -> sample indices) plus the client grouping"""
    shards: Dict[int, np.ndarray]
    num_clients: int
    groups: List[np.ndarray] = field(default_factory=list)

    def group_of(self, client_id: int) -> int:
        for g, members in enumerate(self.groups):
            if client_id in members:
                return g
        raise KeyError(client_id)

    def sizes(self) -> Dict[int, int]:
        return {cid: int(len(idx)) for cid, idx in self.shards.items()}


@dataclass(frozen=True)
class RootDatasetConfig:
    """FLTrust root dataset: size and single-class bias probability b"""
    size: int = 100
    bias: float = 0.1
    seed: int = 0
    bias_class: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ConfigurationError("root dataset size must be positive")
        if not (0.0 <= self.bias < 1.0):
            raise ConfigurationError(f"root bias probability must lie in [0, 1), got {self.bias}")


def generate_blobs(n: int, num_classes: int, dim: int, spread: float, seed: int) -> Dataset:
    """
    L isotropic Gaussian clusters.

    Centers are drawn once per seed with unit per-coordinate scale; samples
    are center + spread * N(0, I). Labels cycle 0..L-1 before a seeded
    shuffle, so class counts differ by at most one.
    """
    if num_classes < 2 or n < num_classes:
        raise ConfigurationError(f"need n >= L >= 2, got n={n}, L={num_classes}")
    if dim < 2:
        raise ConfigurationError(f"feature dimension must be >= 2, got {dim}")
    if not spread > 0:
        raise ConfigurationError(f"spread must be positive, got {spread}")

    rng = np.random.default_rng(seed)
    centers = rng.standard_normal((num_classes, dim))
    labels = rng.permutation(np.arange(n) % num_classes)
    noise = rng.standard_normal((n, dim))
    features = centers[labels] + spread * noise
    return Dataset(features, labels, num_classes)


def train_test_split(ds: Dataset, test_fraction: float, seed: int) -> tuple:
    """Seeded held-out split; both halves keep num_classes"""
    if not (0.0 < test_fraction < 1.0):
        raise ConfigurationError(f"test fraction must lie in (0, 1), got {test_fraction}")
    n_test = max(1, int(round(len(ds) * test_fraction)))
    if n_test >= len(ds):
        raise ConfigurationError("test split leaves no training samples")
    order = np.random.default_rng(seed).permutation(len(ds))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


def partition_noniid(ds: Dataset, cfg: PartitionConfig) -> Partition:
    """
    Label-skewed partition with degree of non-IID p.

    Clients are split evenly into L groups. A sample with label l goes to
    group l with probability p, otherwise to one of the other L-1 groups
    uniformly. Inside a group samples are dealt round-robin in dataset order.
    p = 1/L is the IID point.
    """
    L = cfg.num_groups
    if L != ds.num_classes:
        raise ConfigurationError(f"group count {L} must equal class count {ds.num_classes}")
    if cfg.num_clients < L:
        raise ConfigurationError(
            f"{cfg.num_clients} clients cannot form {L} nonempty groups"
        )

    groups = [np.asarray(g, dtype=np.int64) for g in np.array_split(np.arange(cfg.num_clients), L)]
    rng = np.random.default_rng(cfg.seed)
    labels = ds.labels
    n = len(labels)

    if L == 1:
        assigned = np.zeros(n, dtype=np.int64)
    else:
        stay = rng.random(n) < cfg.p
        # uniform over the L-1 other groups: draw in [0, L-1) and skip the own label
        other = rng.integers(0, L - 1, size=n)
        other = other + (other >= labels)
        assigned = np.where(stay, labels, other)

    buckets: Dict[int, List[int]] = {cid: [] for cid in range(cfg.num_clients)}
    dealt = np.zeros(L, dtype=np.int64)
    for idx in range(n):
        g = assigned[idx]
        members = groups[g]
        buckets[int(members[dealt[g] % len(members)])].append(idx)
        dealt[g] += 1

    shards = {cid: np.asarray(idx, dtype=np.int64) for cid, idx in buckets.items()}
    empty = [cid for cid, idx in shards.items() if len(idx) == 0]
    if empty and not cfg.allow_empty:
        raise DataError(f"partition left {len(empty)} client(s) without data (first: {empty[0]})")
    logger.debug("partition_built", clients=cfg.num_clients, groups=L, p=cfg.p, samples=n)

    return Partition(shards=shards, num_clients=cfg.num_clients, groups=groups)


def sample_root(ds: Dataset, cfg: RootDatasetConfig) -> Dataset:
    """
    FLTrust root dataset.

    Exactly ceil(b * size) samples are forced from the bias class; with b > 0
    the remainder is drawn uniformly from the other classes so the bias-class
    count stays exact. With b = 0 the whole sample is a plain uniform draw.
    """
    if cfg.size > len(ds):
        raise ConfigurationError(f"root size {cfg.size} exceeds population {len(ds)}")
    rng = np.random.default_rng(cfg.seed)

    if cfg.bias == 0:
        picked = rng.choice(len(ds), size=cfg.size, replace=False)
        return ds.subset(np.sort(picked))

    # tolerance keeps float products like 0.9 * 100 from rounding up
    n_bias = math.ceil(cfg.bias * cfg.size - 1e-9)
    in_class = np.flatnonzero(ds.labels == cfg.bias_class)
    out_class = np.flatnonzero(ds.labels != cfg.bias_class)
    if n_bias > len(in_class):
        raise ConfigurationError(
            f"root bias needs {n_bias} samples of class {cfg.bias_class}, only {len(in_class)} exist"
        )
    if cfg.size - n_bias > len(out_class):
        raise ConfigurationError("not enough samples outside the bias class for the root remainder")

    forced = rng.choice(in_class, size=n_bias, replace=False)
    rest = rng.choice(out_class, size=cfg.size - n_bias, replace=False)
    return ds.subset(np.concatenate([forced, rest]))


def load_csv(path: Union[str, Path], num_classes: Optional[int] = None) -> Dataset:
    """CSV with a header row; the "label" column holds the class, every other column is a feature"""
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise IngestionError(f"{path}: file not found") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestionError(f"{path}: malformed CSV ({exc})") from None

    if "label" not in frame.columns:
        raise IngestionError(f"{path}: missing required column 'label'")
    if len(frame) == 0:
        raise IngestionError(f"{path}: no data rows")
    if frame.isna().any().any():
        row = int(frame.isna().any(axis=1).to_numpy().argmax())
        raise IngestionError(f"{path}: ragged or empty cell at data row {row + 1}")

    feature_frame = frame.drop(columns=["label"])
    if feature_frame.shape[1] == 0:
        raise IngestionError(f"{path}: no feature columns")
    try:
        features = feature_frame.to_numpy(dtype=np.float64)
    except ValueError:
        raise IngestionError(f"{path}: non-numeric feature values") from None

    raw = frame["label"].to_numpy()
    if not np.issubdtype(raw.dtype, np.number) or not np.all(np.mod(raw, 1) == 0):
        raise IngestionError(f"{path}: labels must be integers")
    labels = raw.astype(np.int64)
    classes = num_classes if num_classes is not None else int(labels.max()) + 1
    if labels.min() < 0 or labels.max() >= classes:
        raise IngestionError(f"{path}: labels out of range [0, {classes})")
    return Dataset(features, labels, classes)


def _read_idx(path: Path, expected_magic: int) -> np.ndarray:
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        raise IngestionError(f"{path}: file not found") from None
    if len(blob) < 4:
        raise IngestionError(f"{path}: truncated header")
    magic = int.from_bytes(blob[:4], "big")
    if magic != expected_magic:
        raise IngestionError(f"{path}: bad magic number 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if blob[2] != IDX_UBYTE:
        raise IngestionError(f"{path}: unsupported IDX data type 0x{blob[2]:02x}")

    ndims = blob[3]
    header_end = 4 + 4 * ndims
    if len(blob) < header_end:
        raise IngestionError(f"{path}: truncated dimension header")
    dims = np.frombuffer(blob[4:header_end], dtype=">u4").astype(np.int64)
    payload = np.frombuffer(blob[header_end:], dtype=np.uint8)
    if payload.size != int(np.prod(dims)):
        raise IngestionError(
            f"{path}: payload holds {payload.size} bytes, header declares {int(np.prod(dims))}"
        )
    return payload.reshape(tuple(dims))


def load_idx(image_path: Union[str, Path], label_path: Union[str, Path],
             num_classes: Optional[int] = None) -> Dataset:
    """MNIST-style IDX pair; pixels scaled to [0, 1]"""
    images = _read_idx(Path(image_path), IDX_IMAGES_MAGIC)
    labels = _read_idx(Path(label_path), IDX_LABELS_MAGIC).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise IngestionError(
            f"{image_path}: {images.shape[0]} images but {labels.shape[0]} labels"
        )
    features = images.reshape(images.shape[0], -1).astype(np.float64) / PIXEL_MAX
    classes = num_classes if num_classes is not None else (int(labels.max()) + 1 if labels.size else 1)
    if labels.size and labels.max() >= classes:
        raise IngestionError(f"{label_path}: labels out of range [0, {classes})")
    return Dataset(features, labels, classes)


__all__ = [
    "Dataset",
    "PartitionConfig",
    "Partition",
    "RootDatasetConfig",
    "generate_blobs",
    "train_test_split",
    "partition_noniid",
    "sample_root",
    "load_csv",
    "load_idx",
]
