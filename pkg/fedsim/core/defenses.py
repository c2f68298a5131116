"""
Stateful server defenses: FLTrust, FLAME, FoolsGold and FreqFed.

Unlike the plain aggregation rules these need more than the current round's
updates: a trusted root dataset (FLTrust), each client's accumulated update
history (FoolsGold), or the broadcast model to measure deltas against (all
of them). DefenseState carries that context and is mutated by the server
only, once per round.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Literal, Optional, Sequence

import numpy as np
from scipy.fft import dct
from sklearn.metrics.pairwise import cosine_similarity

from fedsim.core.aggregation import AggregationResult, ClientUpdate, stack_updates, coord_median
from fedsim.core.attacks.robust import OutlierTestConfig, mad_outlier_test
from fedsim.core.clustering import two_means
from fedsim.core.data import Dataset
from fedsim.core.errors import ConfigurationError
from fedsim.core.model import ModelSpec, TrainingConfig, local_update
from fedsim.utils.safe_logging import get_logger

logger = get_logger(__name__)

DefenseKind = Literal["fltrust", "flame", "foolsgold", "freqfed"]
DEFENSE_KINDS = ("fltrust", "flame", "foolsgold", "freqfed")

# FoolsGold: the rescaled top weight is nudged below 1 so the logit stays finite
FOOLSGOLD_CONFIDENCE = 0.99
FOOLSGOLD_LOGIT_SHIFT = 0.5

FREQFED_CUTOFF = 0.25


@dataclass
class DefenseState:
    """Per-experiment defense context; single writer (the server)"""
    kind: DefenseKind
    root: Optional[Dataset] = None
    root_training: Optional[TrainingConfig] = None
    spec: Optional[ModelSpec] = None
    root_rng: Optional[np.random.Generator] = None
    outlier: OutlierTestConfig = field(default_factory=OutlierTestConfig)
    freq_cutoff: float = FREQFED_CUTOFF
    seed: int = 0
    histories: Dict[int, np.ndarray] = field(default_factory=dict)
    rounds_seen: Dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in DEFENSE_KINDS:
            raise ConfigurationError(f"unknown defense {self.kind!r}")
        if self.kind == "fltrust":
            if self.root is None or len(self.root) == 0:
                raise ConfigurationError("FLTrust needs a nonempty root dataset")
            if self.root_training is None or self.spec is None:
                raise ConfigurationError("FLTrust needs the model spec and a training config")
            if self.root_rng is None:
                self.root_rng = np.random.default_rng(self.seed)
        if not (0.0 < self.freq_cutoff <= 1.0):
            raise ConfigurationError(f"frequency cutoff must lie in (0, 1], got {self.freq_cutoff}")

    def accumulate(self, client_id: int, delta: np.ndarray) -> np.ndarray:
        """Add a delta to the client's history sum"""
        if client_id in self.histories:
            self.histories[client_id] = self.histories[client_id] + delta
        else:
            self.histories[client_id] = np.array(delta, dtype=np.float64, copy=True)
        self.rounds_seen[client_id] = self.rounds_seen.get(client_id, 0) + 1
        return self.histories[client_id]


# -- FLTrust ----------------------------------------------------------------

def trust_scores(deltas: np.ndarray, g0: np.ndarray) -> np.ndarray:
    """ReLU-clipped cosine similarity of every delta with the root update"""
    norms = np.linalg.norm(deltas, axis=1)
    g0_norm = float(np.linalg.norm(g0))
    scores = np.zeros(deltas.shape[0])
    live = norms > 0
    if g0_norm > 0:
        scores[live] = (deltas[live] @ g0) / (norms[live] * g0_norm)
    return np.clip(scores, 0.0, 1.0)


def fltrust_combine(theta: np.ndarray, g0: np.ndarray,
                    updates: Sequence[ClientUpdate]) -> AggregationResult:
    """
    theta + sum(TS_i * g_i rescaled to ||g0||) / sum(TS_i).

    Returns theta unchanged when g0 is zero or every trust score is zero.
    """
    ids, matrix = stack_updates(updates)
    theta = np.asarray(theta, dtype=np.float64)
    g0_norm = float(np.linalg.norm(g0))
    if g0_norm == 0.0:
        logger.debug("fltrust_zero_root_update")
        return AggregationResult(theta.copy(), [])

    deltas = matrix - theta
    scores = trust_scores(deltas, g0)
    total = float(scores.sum())
    if total == 0.0:
        return AggregationResult(theta.copy(), [])

    norms = np.linalg.norm(deltas, axis=1)
    live = scores > 0
    rescaled = deltas[live] * (g0_norm / norms[live])[:, None]
    step = (scores[live][:, None] * rescaled).sum(axis=0) / total
    return AggregationResult(theta + step, [int(i) for i in ids[live]])


def fltrust_aggregate(state: DefenseState, theta: np.ndarray,
                      updates: Sequence[ClientUpdate]) -> AggregationResult:
    """One server-side local_update on the root data gives g0, then fltrust_combine"""
    root_model = local_update(theta, state.root, state.root_training, state.spec, state.root_rng)
    return fltrust_combine(theta, root_model - theta, updates)


# -- FLAME ------------------------------------------------------------------

def flame_aggregate(state: DefenseState, theta: np.ndarray,
                    updates: Sequence[ClientUpdate]) -> AggregationResult:
    """
    Drop updates whose distance to theta is a MAD outlier; average the rest.
    If everyone is flagged the coordinate median is returned instead.
    """
    ids, matrix = stack_updates(updates)
    distances = np.linalg.norm(matrix - np.asarray(theta), axis=1)
    flagged = np.array([mad_outlier_test(float(x), distances, state.outlier) for x in distances])
    if flagged.all():
        return AggregationResult(coord_median(updates), [int(i) for i in ids])
    keep = ~flagged
    if flagged.any():
        logger.debug("flame_eliminated", clients=[int(i) for i in ids[flagged]])
    return AggregationResult(matrix[keep].mean(axis=0), [int(i) for i in ids[keep]])


# -- FoolsGold --------------------------------------------------------------

def _foolsgold_from_histories(histories: np.ndarray) -> np.ndarray:
    n = histories.shape[0]
    if n == 1:
        return np.ones(1)

    cs = cosine_similarity(histories) - np.eye(n)
    max_cs = cs.max(axis=1)

    # pardoning: shrink similarity to a more suspicious client
    for i in range(n):
        for j in range(n):
            if i != j and max_cs[i] < max_cs[j] and max_cs[j] > 0:
                cs[i, j] *= max_cs[i] / max_cs[j]

    weights = np.clip(1.0 - cs.max(axis=1), 0.0, 1.0)
    top = float(weights.max())
    if top == 0.0:
        return weights
    weights = weights / top
    weights[weights == 1.0] = FOOLSGOLD_CONFIDENCE
    with np.errstate(divide="ignore"):
        weights = np.log(weights / (1.0 - weights)) + FOOLSGOLD_LOGIT_SHIFT
    weights[np.isneginf(weights)] = 0.0
    return np.clip(weights, 0.0, 1.0)


def foolsgold_weights(state: DefenseState, ids: Sequence[int], deltas: np.ndarray) -> np.ndarray:
    """
    Accumulate this round's deltas into each client's history and return
    the per-client weights in [0, 1], in the order of `ids`.

    Clients whose history sums to zero get weight 1.
    """
    histories = np.vstack([state.accumulate(int(cid), delta) for cid, delta in zip(ids, deltas)])
    weights = _foolsgold_from_histories(histories)
    weights[np.linalg.norm(histories, axis=1) == 0] = 1.0
    return weights


def foolsgold_aggregate(state: DefenseState, theta: np.ndarray,
                        updates: Sequence[ClientUpdate]) -> AggregationResult:
    ids, matrix = stack_updates(updates)
    theta = np.asarray(theta, dtype=np.float64)
    deltas = matrix - theta
    weights = foolsgold_weights(state, ids, deltas)
    total = float(weights.sum())
    if total == 0.0:
        return AggregationResult(theta.copy(), [])
    step = (weights[:, None] * deltas).sum(axis=0) / total
    return AggregationResult(theta + step, [int(i) for i in ids[weights > 0]])


# -- FreqFed ----------------------------------------------------------------

def low_frequency_features(deltas: np.ndarray, cutoff: float = FREQFED_CUTOFF) -> np.ndarray:
    """Lowest ceil(cutoff * d) orthonormal DCT-II coefficients of every delta"""
    keep = max(1, math.ceil(cutoff * deltas.shape[1]))
    return dct(deltas, type=2, norm="ortho", axis=1)[:, :keep]


def freqfed_aggregate(state: DefenseState, theta: np.ndarray,
                      updates: Sequence[ClientUpdate]) -> AggregationResult:
    ids, matrix = stack_updates(updates)
    features = low_frequency_features(matrix - np.asarray(theta), state.freq_cutoff)
    mask = two_means(features, ids, seed=state.seed)
    return AggregationResult(matrix[mask].mean(axis=0), [int(i) for i in ids[mask]])


DEFENSES = {
    "fltrust": fltrust_aggregate,
    "flame": flame_aggregate,
    "foolsgold": foolsgold_aggregate,
    "freqfed": freqfed_aggregate,
}


def defend(state: DefenseState, theta: np.ndarray, updates: Sequence[ClientUpdate]) -> AggregationResult:
    return DEFENSES[state.kind](state, theta, updates)


__all__ = [
    "DEFENSE_KINDS",
    "DefenseState",
    "trust_scores",
    "fltrust_combine",
    "fltrust_aggregate",
    "flame_aggregate",
    "foolsgold_weights",
    "foolsgold_aggregate",
    "low_frequency_features",
    "freqfed_aggregate",
    "defend",
]
