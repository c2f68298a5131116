"""
Robust statistics shared by the attack crafters.

- DeltaHistory: the attacker's FIFO window of observed global deltas
- robust_scale: coordinate-wise median + lambda * MAD and its L2 norm mu
- mad_outlier_test: the |x - med| / (const * mad) > D outlier rule
- lambda_upper_limit / lambda_range: how far lambda can go before the
  scaled deviation itself becomes an outlier
- CoordStats: per-coordinate mean and population standard deviation
"""

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, Iterable, List, Literal, Sequence, Tuple

import numpy as np
from scipy.stats import median_abs_deviation

from fedsim.core.errors import AttackError, ConfigurationError

CraftStatus = Literal["ok", "no-op", "degenerate", "search-failed"]

# sigma / MAD ratio for common distributions
DISTRIBUTION_CONSTANTS: Dict[str, float] = {
    "normal": 1.4826,
    "uniform": 1.1547,
    "laplace": 2.0405,
    "exponential": 2.0781,
    "logistic": 1.6205,
}

# recommended outlier thresholds D range from "very conservative" to "poorly conservative"
OUTLIER_THRESHOLD_RANGE = (2.0, 4.5)

DEFAULT_WINDOW = 8


@dataclass
class CraftResult:
    """A crafted vector plus the scale used and how the crafter got there"""
    model: np.ndarray
    mu: float = 0.0
    status: CraftStatus = "ok"


class DeltaHistory:
    """
    Last `window` global deltas, newest last.

    Each attacker owns one; nothing in here is shared between clients.
    """

    def __init__(self, window: int = DEFAULT_WINDOW):
        if window < 1:
            raise ConfigurationError(f"history window must be >= 1, got {window}")
        self.window = window
        self._entries: Deque[np.ndarray] = deque(maxlen=window)

    def push(self, delta: np.ndarray) -> None:
        delta = np.asarray(delta, dtype=np.float64)
        if self._entries and delta.shape != self._entries[0].shape:
            raise AttackError(f"delta shape {delta.shape} does not match history {self._entries[0].shape}")
        self._entries.append(delta.copy())

    def entries(self) -> List[np.ndarray]:
        return list(self._entries)

    def latest(self) -> np.ndarray:
        if not self._entries:
            raise AttackError("history is empty")
        return self._entries[-1]

    def as_matrix(self) -> np.ndarray:
        return np.vstack(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


def push_global_delta(hist: DeltaHistory, theta_prev: np.ndarray, theta_curr: np.ndarray) -> DeltaHistory:
    """Append theta_curr - theta_prev, evicting the oldest entry when full"""
    theta_prev = np.asarray(theta_prev, dtype=np.float64)
    theta_curr = np.asarray(theta_curr, dtype=np.float64)
    if theta_prev.shape != theta_curr.shape:
        raise AttackError(f"global model shapes differ: {theta_prev.shape} vs {theta_curr.shape}")
    hist.push(theta_curr - theta_prev)
    return hist


@dataclass
class RobustScaleResult:
    med: np.ndarray
    mad: np.ndarray
    s: np.ndarray
    mu: float
    status: CraftStatus = "ok"


def robust_scale(hist: DeltaHistory, lam: float) -> RobustScaleResult:
    """
    s = median + lam * MAD over the history (coordinate-wise), mu = ||s||_2.

    Even-length windows take the mean of the two middle values for both the
    median and the MAD. An empty history yields mu = 0 with status "no-op".
    """
    if len(hist) == 0:
        empty = np.zeros(0)
        return RobustScaleResult(med=empty, mad=empty.copy(), s=empty.copy(), mu=0.0, status="no-op")
    entries = hist.as_matrix()
    med = np.median(entries, axis=0)
    mad = median_abs_deviation(entries, axis=0, scale=1.0)
    s = med + lam * mad
    return RobustScaleResult(med=med, mad=mad, s=s, mu=float(np.linalg.norm(s)))


def distribution_constant(name: str) -> float:
    try:
        return DISTRIBUTION_CONSTANTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown distribution {name!r}; known: {sorted(DISTRIBUTION_CONSTANTS)}"
        ) from None


@dataclass(frozen=True)
class OutlierTestConfig:
    """Threshold D and the sigma/MAD consistency constant"""
    threshold: float = 3.5
    constant: float = DISTRIBUTION_CONSTANTS["normal"]

    def __post_init__(self):
        if not self.threshold > 0:
            raise ConfigurationError(f"outlier threshold D must be positive, got {self.threshold}")
        if not self.constant > 0:
            raise ConfigurationError(f"consistency constant must be positive, got {self.constant}")

    @classmethod
    def for_distribution(cls, name: str, threshold: float = 3.5) -> "OutlierTestConfig":
        return cls(threshold=threshold, constant=distribution_constant(name))


def outlier_ratio(x: float, samples: Sequence[float], cfg: OutlierTestConfig = OutlierTestConfig()) -> float:
    values = np.asarray(samples, dtype=np.float64)
    if values.size == 0:
        raise ConfigurationError("outlier test needs at least one sample")
    med = float(np.median(values))
    mad = float(median_abs_deviation(values, scale=1.0))
    if mad == 0.0:
        return 0.0
    return abs(x - med) / (cfg.constant * mad)


def mad_outlier_test(x: float, samples: Sequence[float], cfg: OutlierTestConfig = OutlierTestConfig()) -> bool:
    """True iff |x - med| / (const * mad) > D; a zero MAD never flags anything"""
    return outlier_ratio(x, samples, cfg) > cfg.threshold


def lambda_upper_limit(cfg: OutlierTestConfig = OutlierTestConfig()) -> float:
    """Largest lambda with med + lambda * mad still inside the bound (5.189 at D=3.5, normal)"""
    return cfg.constant * cfg.threshold


def lambda_range() -> Tuple[float, float]:
    """
    Practical lambda range over the recommended thresholds and the common
    distribution constants, widened to whole numbers: (2.0, 10.0).
    """
    low = OUTLIER_THRESHOLD_RANGE[0] * min(DISTRIBUTION_CONSTANTS.values())
    high = OUTLIER_THRESHOLD_RANGE[1] * max(DISTRIBUTION_CONSTANTS.values())
    return float(math.floor(low)), float(math.ceil(high))


@dataclass
class CoordStats:
    """Per-coordinate mean and population standard deviation"""
    mean: np.ndarray
    std: np.ndarray
    count: int = field(default=0)

    @classmethod
    def from_updates(cls, updates: Iterable[np.ndarray]) -> "CoordStats":
        matrix = np.vstack([np.asarray(u, dtype=np.float64) for u in updates])
        return cls(mean=matrix.mean(axis=0), std=matrix.std(axis=0, ddof=0), count=matrix.shape[0])


__all__ = [
    "CraftStatus",
    "CraftResult",
    "DISTRIBUTION_CONSTANTS",
    "DeltaHistory",
    "push_global_delta",
    "RobustScaleResult",
    "robust_scale",
    "distribution_constant",
    "OutlierTestConfig",
    "outlier_ratio",
    "mad_outlier_test",
    "lambda_upper_limit",
    "lambda_range",
    "CoordStats",
]
