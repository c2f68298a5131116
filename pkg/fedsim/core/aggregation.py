"""
Server-side aggregation rules: FedAvg, coordinate-wise Median, Trimmed-Mean,
Multi-Krum, Clipped-Clustering and SignGuard.

All rules take full client models phi_i. Inputs are put in canonical
client-id order before any computation, so every rule is invariant to the
order the updates arrive in.
"""

from dataclasses import dataclass, field
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from fedsim.core.clustering import two_means
from fedsim.core.errors import AggregationError, ConfigurationError

AggregatorKind = Literal[
    "fed-avg", "median", "trimmed-mean", "multi-krum", "clipped-clustering", "sign-guard"
]
AGGREGATOR_KINDS = ("fed-avg", "median", "trimmed-mean", "multi-krum", "clipped-clustering", "sign-guard")

# SignGuard keeps updates whose norm lies in [low, high] x median norm
SIGNGUARD_NORM_BOUNDS = (0.1, 3.0)


@dataclass(frozen=True)
class ClientUpdate:
    """A client's submitted model for one round"""
    client_id: int
    model: np.ndarray

    def __post_init__(self):
        model = np.asarray(self.model, dtype=np.float64)
        if model.ndim != 1:
            raise AggregationError(f"client {self.client_id}: model must be a flat vector")
        if not np.all(np.isfinite(model)):
            raise AggregationError(f"client {self.client_id}: model has non-finite entries")
        object.__setattr__(self, "model", model)


@dataclass(frozen=True)
class AggregatorConfig:
    """Server rule plus its knobs (c, f, tau, clustering seed)"""
    kind: AggregatorKind = "fed-avg"
    assumed_compromised: int = 0
    krum_select: Optional[int] = None
    clip_threshold: Union[float, Literal["adaptive"]] = "adaptive"
    sign_guard_norm_filter: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise ConfigurationError(f"unknown aggregator {self.kind!r}")
        if self.assumed_compromised < 0:
            raise ConfigurationError("assumed compromised count c must be >= 0")
        if self.krum_select is not None and self.krum_select < 1:
            raise ConfigurationError("krum select count f must be >= 1")
        if self.clip_threshold != "adaptive" and not float(self.clip_threshold) > 0:
            raise ConfigurationError("clip threshold tau must be positive or 'adaptive'")


@dataclass
class AggregationResult:
    """Aggregated model plus the client-ids whose updates it used"""
    model: np.ndarray
    retained: List[int] = field(default_factory=list)


def stack_updates(updates: Sequence[ClientUpdate]) -> Tuple[np.ndarray, np.ndarray]:
    """(ids, matrix) sorted by client-id; rejects empty sets and ragged dimensions"""
    if not updates:
        raise AggregationError("cannot aggregate an empty update set")
    ordered = sorted(updates, key=lambda u: u.client_id)
    dims = {u.model.shape[0] for u in ordered}
    if len(dims) != 1:
        raise AggregationError(f"dimension mismatch among updates: {sorted(dims)}")
    ids = np.array([u.client_id for u in ordered])
    if len(set(ids.tolist())) != len(ids):
        raise AggregationError("duplicate client-id in update set")
    return ids, np.vstack([u.model for u in ordered])


def fed_avg(updates: Sequence[ClientUpdate]) -> np.ndarray:
    _, matrix = stack_updates(updates)
    return matrix.mean(axis=0)


def coord_median(updates: Sequence[ClientUpdate]) -> np.ndarray:
    # numpy averages the two middle values on even counts
    _, matrix = stack_updates(updates)
    return np.median(matrix, axis=0)


def trimmed_mean(updates: Sequence[ClientUpdate], c: int) -> np.ndarray:
    """Mean of the middle k-2c values per coordinate"""
    _, matrix = stack_updates(updates)
    k = matrix.shape[0]
    if c < 0 or k <= 2 * c:
        raise ConfigurationError(f"trimmed mean needs k > 2c, got k={k}, c={c}")
    ordered = np.sort(matrix, axis=0)
    return ordered[c:k - c].mean(axis=0)


def krum_scores(matrix: np.ndarray, c: int) -> np.ndarray:
    """Sum of squared distances to the k-c-2 nearest other updates"""
    k = matrix.shape[0]
    neighbours = k - c - 2
    sq = cdist(matrix, matrix, metric="sqeuclidean")
    np.fill_diagonal(sq, np.inf)
    nearest = np.sort(sq, axis=1)[:, :neighbours]
    return nearest.sum(axis=1)


def _check_krum(k: int, c: int, f: int) -> None:
    if c < 0 or k < c + 3:
        raise ConfigurationError(f"multi-krum needs k >= c + 3, got k={k}, c={c}")
    if not (1 <= f <= k - c - 2):
        raise ConfigurationError(f"multi-krum needs 1 <= f <= k - c - 2 = {k - c - 2}, got f={f}")


def krum_selection(updates: Sequence[ClientUpdate], c: int, f: Optional[int] = None) -> List[int]:
    """Client-ids of the f lowest-scoring updates (ties -> lower client-id)"""
    ids, matrix = stack_updates(updates)
    k = matrix.shape[0]
    f = k - c - 2 if f is None else f
    _check_krum(k, c, f)
    scores = krum_scores(matrix, c)
    # ids are ascending, so a stable sort on the scores breaks ties by id
    chosen = np.argsort(scores, kind="stable")[:f]
    return sorted(int(ids[i]) for i in chosen)


def multi_krum(updates: Sequence[ClientUpdate], c: int, f: Optional[int] = None) -> np.ndarray:
    selected = set(krum_selection(updates, c, f))
    return np.mean([u.model for u in sorted(updates, key=lambda u: u.client_id)
                    if u.client_id in selected], axis=0)


def clip_by_norm(matrix: np.ndarray, tau: float) -> np.ndarray:
    norms = np.linalg.norm(matrix, axis=1)
    scale = np.ones_like(norms)
    over = norms > tau
    scale[over] = tau / norms[over]
    return matrix * scale[:, None]


def _clipped_clustering(ids: np.ndarray, matrix: np.ndarray,
                        tau: Union[float, str], seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if tau == "adaptive":
        tau = float(np.median(np.linalg.norm(matrix, axis=1)))
    tau = float(tau)
    if tau <= 0:
        # every update is the zero vector
        return np.zeros(matrix.shape[1]), np.ones(len(ids), dtype=bool)
    clipped = clip_by_norm(matrix, tau)
    mask = two_means(clipped, ids, seed=seed)
    return clipped[mask].mean(axis=0), mask


def clipped_clustering(updates: Sequence[ClientUpdate], tau: Union[float, str] = "adaptive",
                       seed: int = 0, reference: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Clip every update to norm tau, 2-means the clipped set, average the
    larger cluster. With `reference` the rule works on deltas phi - reference.
    """
    return _clipped_clustering_result(updates, tau, seed, reference).model


def _clipped_clustering_result(updates, tau, seed, reference) -> AggregationResult:
    ids, matrix = stack_updates(updates)
    base = np.zeros(matrix.shape[1]) if reference is None else np.asarray(reference, dtype=np.float64)
    centre, mask = _clipped_clustering(ids, matrix - base, tau, seed)
    return AggregationResult(base + centre, [int(i) for i in ids[mask]])


def sign_features(matrix: np.ndarray) -> np.ndarray:
    """Per-update fractions of positive, negative and zero coordinates"""
    d = matrix.shape[1]
    return np.column_stack([
        (matrix > 0).sum(axis=1) / d,
        (matrix < 0).sum(axis=1) / d,
        (matrix == 0).sum(axis=1) / d,
    ])


def _sign_guard_result(updates, seed, norm_filter, reference) -> AggregationResult:
    ids, matrix = stack_updates(updates)
    base = np.zeros(matrix.shape[1]) if reference is None else np.asarray(reference, dtype=np.float64)
    deltas = matrix - base

    keep = np.ones(len(ids), dtype=bool)
    if norm_filter:
        norms = np.linalg.norm(deltas, axis=1)
        med = float(np.median(norms))
        low, high = SIGNGUARD_NORM_BOUNDS
        keep = (norms >= low * med) & (norms <= high * med)

    survivors = np.flatnonzero(keep)
    mask = two_means(sign_features(deltas[survivors]), ids[survivors], seed=seed)
    chosen = survivors[mask]
    return AggregationResult(base + deltas[chosen].mean(axis=0), [int(i) for i in ids[chosen]])


def sign_guard(updates: Sequence[ClientUpdate], seed: int = 0, norm_filter: bool = True,
               reference: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Cluster updates on their sign statistics and average the majority.
    The optional norm filter runs first and drops updates far from the
    median norm.
    """
    return _sign_guard_result(updates, seed, norm_filter, reference).model


def aggregate(updates: Sequence[ClientUpdate], cfg: AggregatorConfig,
              reference: Optional[np.ndarray] = None) -> AggregationResult:
    """Dispatch on cfg.kind and report which clients were kept"""
    ids = sorted(u.client_id for u in updates)
    if cfg.kind == "fed-avg":
        return AggregationResult(fed_avg(updates), ids)
    if cfg.kind == "median":
        return AggregationResult(coord_median(updates), ids)
    if cfg.kind == "trimmed-mean":
        return AggregationResult(trimmed_mean(updates, cfg.assumed_compromised), ids)
    if cfg.kind == "multi-krum":
        selected = krum_selection(updates, cfg.assumed_compromised, cfg.krum_select)
        chosen = [u.model for u in sorted(updates, key=lambda u: u.client_id) if u.client_id in selected]
        return AggregationResult(np.mean(chosen, axis=0), selected)
    if cfg.kind == "clipped-clustering":
        return _clipped_clustering_result(updates, cfg.clip_threshold, cfg.seed, reference)
    if cfg.kind == "sign-guard":
        return _sign_guard_result(updates, cfg.seed, cfg.sign_guard_norm_filter, reference)
    raise ConfigurationError(f"unknown aggregator {cfg.kind!r}")


__all__ = [
    "AGGREGATOR_KINDS",
    "ClientUpdate",
    "AggregatorConfig",
    "AggregationResult",
    "stack_updates",
    "fed_avg",
    "coord_median",
    "trimmed_mean",
    "krum_scores",
    "krum_selection",
    "multi_krum",
    "clip_by_norm",
    "clipped_clustering",
    "sign_features",
    "sign_guard",
    "aggregate",
]
