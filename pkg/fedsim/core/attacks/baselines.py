"""
Baseline model poisoning attacks.

Collusive crafters (LIE, Fang-Krum, Fang-TrimmedMean, Min-Max, Min-Sum) pool
the benign updates of every compromised client and are computed once per
round. Fake-client crafters (MPAF, PoisonedFL) never train; they build their
submission straight from the broadcast model.

All crafters work on update vectors. The simulator hands them deltas
(phi - theta) and adds theta back before submission.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Literal, Optional, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from fedsim.core.aggregation import ClientUpdate, krum_selection
from fedsim.core.attacks.robust import CoordStats, CraftResult, CraftStatus, DeltaHistory
from fedsim.core.attacks.xfed import PERTURBATIONS, PerturbationKind
from fedsim.core.errors import AttackError, ConfigurationError
from fedsim.utils.safe_logging import get_logger

logger = get_logger(__name__)

DEFAULT_MPAF_LAMBDA = 1e6
# crafted MPAF steps are cut to this norm; the pull toward w' then stays bounded
DEFAULT_MPAF_MAX_NORM = 100.0


@dataclass(frozen=True)
class BaselineAttackConfig:
    z_max: float = 1.0
    fang_lambda_start: float = 10.0
    fang_lambda_min: float = 1e-5
    fang_noise: float = 1e-4
    perturbation: PerturbationKind = "inverse-unit-vector"
    search_tolerance: float = 1e-3
    gamma_max: float = 50.0
    mpaf_lambda: float = DEFAULT_MPAF_LAMBDA
    mpaf_max_norm: Optional[float] = DEFAULT_MPAF_MAX_NORM
    poisonedfl_fallback: float = 1e-2

    def __post_init__(self):
        if not (0.0 <= self.z_max <= 1.0):
            raise ConfigurationError(f"z_max must lie in [0, 1], got {self.z_max}")
        if not (0 < self.fang_lambda_min <= self.fang_lambda_start):
            raise ConfigurationError("fang search needs 0 < lambda_min <= lambda_start")
        if not self.search_tolerance > 0:
            raise ConfigurationError("search tolerance must be positive")
        if not self.gamma_max > 0:
            raise ConfigurationError("gamma upper bound must be positive")
        if not self.mpaf_lambda > 0:
            raise ConfigurationError("MPAF amplification must be positive")
        if self.mpaf_max_norm is not None and not self.mpaf_max_norm > 0:
            raise ConfigurationError("MPAF norm bound must be positive")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigurationError(f"unknown perturbation {self.perturbation!r}")


@dataclass
class CraftBatch:
    """One crafted vector per attacker, the scale found and the crafter's status"""
    models: List[np.ndarray] = field(default_factory=list)
    scale: float = 0.0
    status: CraftStatus = "ok"


def _matrix(updates: Sequence[np.ndarray]) -> np.ndarray:
    if len(updates) == 0:
        raise AttackError("no compromised updates to craft from")
    return np.vstack([np.asarray(u, dtype=np.float64) for u in updates])


# -- LIE --------------------------------------------------------------------

def lie_craft(compromised: Sequence[np.ndarray], z_max: float = 1.0) -> CraftResult:
    """mu_j - z_max * sigma_j, shared by every attacker"""
    matrix = _matrix(compromised)
    if matrix.shape[0] < 2:
        return CraftResult(model=matrix[0].copy(), status="degenerate")
    stats = CoordStats.from_updates(matrix)
    return CraftResult(model=stats.mean - z_max * stats.std, mu=float(z_max))


# -- Fang -------------------------------------------------------------------

KrumSelector = Callable[[Sequence[np.ndarray]], List[int]]


class KrumOracle:
    """
    Krum as the attacker models it: indices of the `select` best-scored
    vectors under an assumed compromised count, clamped to what the set
    size allows.
    """

    def __init__(self, assumed_compromised: int, select: int = 1):
        self.assumed_compromised = assumed_compromised
        self.select = select

    def __call__(self, vectors: Sequence[np.ndarray]) -> List[int]:
        k = len(vectors)
        c = min(self.assumed_compromised, k - 3)
        if c < 0:
            raise ConfigurationError(f"krum oracle needs at least 3 vectors, got {k}")
        f = min(self.select, k - c - 2)
        updates = [ClientUpdate(i, v) for i, v in enumerate(vectors)]
        return krum_selection(updates, c, f)


def fang_directions(mean: np.ndarray) -> np.ndarray:
    """Sign of the mean update per coordinate; zero counts as -1"""
    directions = np.sign(mean)
    directions[directions == 0] = -1.0
    return directions


def fang_krum_craft(compromised: Sequence[np.ndarray], oracle: KrumSelector,
                    cfg: BaselineAttackConfig, rng: np.random.Generator) -> CraftBatch:
    """
    Halving search on lambda for phi_real - lambda * s until Krum picks a
    crafted vector. The first attacker submits the crafted vector, the rest
    submit it plus tiny uniform noise.
    """
    if len(compromised) == 0:
        return CraftBatch(models=[], status="no-op")
    benign = _matrix(compromised)
    c, d = benign.shape
    phi_real = benign.mean(axis=0)
    s = np.sign(phi_real)
    noise = rng.uniform(-cfg.fang_noise, cfg.fang_noise, size=(c - 1, d))

    def build(lam: float) -> List[np.ndarray]:
        head = phi_real - lam * s
        return [head] + [head + n for n in noise]

    lam = cfg.fang_lambda_start
    while lam >= cfg.fang_lambda_min:
        crafted = build(lam)
        try:
            chosen = oracle(list(benign) + crafted)
        except ConfigurationError:
            break
        if any(i >= c for i in chosen):
            return CraftBatch(models=crafted, scale=lam, status="ok")
        lam /= 2.0

    logger.debug("fang_krum_search_failed", attackers=c, lam_min=cfg.fang_lambda_min)
    return CraftBatch(models=build(cfg.fang_lambda_min), scale=cfg.fang_lambda_min, status="search-failed")


def fang_trmean_craft(compromised: Sequence[np.ndarray], rng: np.random.Generator,
                      directions: Optional[np.ndarray] = None) -> CraftBatch:
    """
    Each attacker samples every coordinate from [mu+3sigma, mu+4sigma] where
    the benign updates move down (direction -1) and from [mu-4sigma, mu-3sigma]
    where they move up. Directions default to the sign of the mean update, so
    crafted values land on the side of mu opposite to the benign movement.
    """
    benign = _matrix(compromised)
    c = benign.shape[0]
    stats = CoordStats.from_updates(benign)
    if directions is None:
        directions = fang_directions(stats.mean)
    elif np.shape(directions) != stats.mean.shape:
        raise AttackError(f"direction vector has shape {np.shape(directions)}, updates have {stats.mean.shape}")
    # direction -1 -> +[3, 4] sigma; direction +1 -> -[4, 3] sigma
    low = np.where(directions < 0, stats.mean + 3 * stats.std, stats.mean - 4 * stats.std)
    high = np.where(directions < 0, stats.mean + 4 * stats.std, stats.mean - 3 * stats.std)
    samples = rng.uniform(low, high, size=(c, low.shape[0]))
    status: CraftStatus = "ok" if c >= 2 else "degenerate"
    return CraftBatch(models=list(samples), scale=3.0, status=status)


# -- Min-Max / Min-Sum ------------------------------------------------------

DistanceConstraint = Literal["min-max", "min-sum"]


def _constraint(benign: np.ndarray, kind: DistanceConstraint) -> Callable[[np.ndarray], bool]:
    if kind == "min-max":
        bound = float(cdist(benign, benign).max())
        return lambda x: float(cdist(x[None, :], benign).max()) <= bound
    bound = float(cdist(benign, benign, metric="sqeuclidean").sum(axis=1).max())
    return lambda x: float(cdist(x[None, :], benign, metric="sqeuclidean").sum()) <= bound


def _distance_bounded_craft(compromised: Sequence[np.ndarray], cfg: BaselineAttackConfig,
                            kind: DistanceConstraint) -> CraftResult:
    benign = _matrix(compromised)
    phi_b = benign.mean(axis=0)
    try:
        psi = PERTURBATIONS[cfg.perturbation](phi_b)
    except AttackError:
        return CraftResult(model=phi_b, status="degenerate")
    accept = _constraint(benign, kind)

    if not accept(phi_b):
        return CraftResult(model=phi_b, status="no-op")
    if accept(phi_b + cfg.gamma_max * psi):
        return CraftResult(model=phi_b + cfg.gamma_max * psi, mu=cfg.gamma_max)

    lo, hi = 0.0, cfg.gamma_max
    while hi - lo > cfg.search_tolerance:
        mid = (lo + hi) / 2.0
        if accept(phi_b + mid * psi):
            lo = mid
        else:
            hi = mid
    return CraftResult(model=phi_b + lo * psi, mu=lo)


def minmax_craft(compromised: Sequence[np.ndarray], cfg: BaselineAttackConfig = BaselineAttackConfig()) -> CraftResult:
    """Largest gamma keeping the max distance to the benign set within the benign diameter"""
    return _distance_bounded_craft(compromised, cfg, "min-max")


def minsum_craft(compromised: Sequence[np.ndarray], cfg: BaselineAttackConfig = BaselineAttackConfig()) -> CraftResult:
    """Largest gamma keeping the summed squared distance within the worst benign row sum"""
    return _distance_bounded_craft(compromised, cfg, "min-sum")


# -- fake clients -----------------------------------------------------------

def mpaf_craft(theta: np.ndarray, base_model: np.ndarray, lam: float = DEFAULT_MPAF_LAMBDA,
               max_norm: Optional[float] = DEFAULT_MPAF_MAX_NORM) -> CraftResult:
    """
    theta + lam * (w' - theta): drags the global model toward the base model.

    The step is shortened to `max_norm` when longer (None disables the
    bound); `mu` reports the amplification actually applied.
    """
    if lam < 0:
        raise ConfigurationError(f"MPAF amplification must be >= 0, got {lam}")
    if max_norm is not None and not max_norm > 0:
        raise ConfigurationError(f"MPAF norm bound must be positive, got {max_norm}")
    theta = np.asarray(theta, dtype=np.float64)
    gap = np.asarray(base_model, dtype=np.float64) - theta
    gap_norm = float(np.linalg.norm(gap))
    applied = float(lam)
    if max_norm is not None and lam * gap_norm > max_norm:
        applied = max_norm / gap_norm
    status: CraftStatus = "ok" if applied > 0 else "no-op"
    return CraftResult(model=theta + applied * gap, mu=applied, status=status)


def poisonedfl_direction(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random +-1 vector, drawn once per experiment"""
    return rng.choice(np.array([-1.0, 1.0]), size=d)


def poisonedfl_craft(theta: np.ndarray, hist: DeltaHistory, direction: np.ndarray,
                     cfg: BaselineAttackConfig = BaselineAttackConfig()) -> CraftResult:
    """
    theta + m_t * k_hat with a fixed direction k. m_t is the norm of the
    latest global delta, or a small fraction of ||theta|| before any delta
    has been seen.
    """
    theta = np.asarray(theta, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm_k = float(np.linalg.norm(direction))
    if norm_k == 0.0:
        raise AttackError("PoisonedFL direction vector is zero")
    if len(hist) > 0:
        magnitude = float(np.linalg.norm(hist.latest()))
    else:
        magnitude = cfg.poisonedfl_fallback * float(np.linalg.norm(theta))
    status: CraftStatus = "ok" if magnitude > 0 else "degenerate"
    return CraftResult(model=theta + magnitude * direction / norm_k, mu=magnitude, status=status)


__all__ = [
    "BaselineAttackConfig",
    "CraftBatch",
    "lie_craft",
    "KrumOracle",
    "fang_directions",
    "fang_krum_craft",
    "fang_trmean_craft",
    "minmax_craft",
    "minsum_craft",
    "mpaf_craft",
    "poisonedfl_direction",
    "poisonedfl_craft",
]
