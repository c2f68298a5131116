"""
XFED: the non-collusive, aggregation-agnostic model poisoning attack.

Each compromised client perturbs its own benign local model phi_b (the full
parameter vector it would otherwise submit) along a fixed malicious
direction psi (inverse unit vector or inverse sign), scaled by
mu = ||median + lambda * MAD|| over the global deltas it has observed:

    phi_m = phi_b + mu * psi (+ optional truncated-Gaussian jitter)

The crafter sees only its own benign model, its own history and its own
random stream. Nothing is exchanged between attackers.
"""

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy.stats import truncnorm

from fedsim.core.attacks.robust import (
    DEFAULT_WINDOW,
    CraftResult,
    DeltaHistory,
    lambda_range,
    push_global_delta,
    robust_scale,
)
from fedsim.core.errors import AttackError, ConfigurationError
from fedsim.utils.safe_logging import get_logger

logger = get_logger(__name__)

PerturbationKind = Literal["inverse-unit-vector", "inverse-sign"]

# jitter is cut at +-2 scales
JITTER_TRUNCATION = 2.0


def perturbation_uv(phi_b: np.ndarray) -> np.ndarray:
    """-phi_b / ||phi_b||"""
    phi_b = np.asarray(phi_b, dtype=np.float64)
    norm = float(np.linalg.norm(phi_b))
    if norm == 0.0:
        raise AttackError("inverse unit vector is undefined for a zero benign model")
    return -phi_b / norm


def perturbation_sgn(phi_b: np.ndarray) -> np.ndarray:
    """-sign(phi_b) / ||sign(phi_b)||; zero coordinates stay zero"""
    signs = np.sign(np.asarray(phi_b, dtype=np.float64))
    norm = float(np.linalg.norm(signs))
    if norm == 0.0:
        raise AttackError("inverse sign vector is undefined for a zero benign model")
    return -signs / norm


PERTURBATIONS = {
    "inverse-unit-vector": perturbation_uv,
    "inverse-sign": perturbation_sgn,
}


@dataclass(frozen=True)
class XfedConfig:
    """lambda, perturbation kind, jitter scale eps_sigma and history window"""
    lam: float = 4.0
    kind: PerturbationKind = "inverse-unit-vector"
    jitter: float = 0.0
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        if not self.lam >= 0:
            raise ConfigurationError(f"lambda must be >= 0, got {self.lam}")
        if self.kind not in PERTURBATIONS:
            raise ConfigurationError(f"unknown perturbation {self.kind!r}")
        if not self.jitter >= 0:
            raise ConfigurationError(f"jitter scale must be >= 0, got {self.jitter}")
        if self.window < 1:
            raise ConfigurationError(f"history window must be >= 1, got {self.window}")
        low, high = lambda_range()
        if not (low <= self.lam <= high):
            logger.warning("lambda_outside_range", lam=self.lam, low=low, high=high)


def _jitter(d: int, mu: float, scale_factor: float, rng: np.random.Generator) -> np.ndarray:
    scale = scale_factor * mu / np.sqrt(d)
    if scale == 0.0:
        return np.zeros(d)
    return truncnorm.rvs(-JITTER_TRUNCATION, JITTER_TRUNCATION, loc=0.0, scale=scale,
                         size=d, random_state=rng)


def craft_with_scale(phi_b: np.ndarray, mu: float, cfg: XfedConfig,
                     rng: np.random.Generator) -> np.ndarray:
    """phi_b + mu * psi + eps for an already known mu"""
    phi_b = np.asarray(phi_b, dtype=np.float64)
    psi = PERTURBATIONS[cfg.kind](phi_b)
    crafted = phi_b + mu * psi
    if cfg.jitter > 0:
        crafted = crafted + _jitter(phi_b.shape[0], mu, cfg.jitter, rng)
    return crafted


def xfed_craft(phi_b: np.ndarray, hist: DeltaHistory, cfg: XfedConfig,
               rng: np.random.Generator) -> CraftResult:
    """
    Craft one malicious local model.

    With an empty history (the first round) the benign model is returned
    unchanged with status "no-op".
    """
    phi_b = np.asarray(phi_b, dtype=np.float64)
    scale = robust_scale(hist, cfg.lam)
    if scale.status == "no-op":
        return CraftResult(model=phi_b.copy(), mu=0.0, status="no-op")
    return CraftResult(model=craft_with_scale(phi_b, scale.mu, cfg, rng), mu=scale.mu, status="ok")


class XfedAttacker:
    """
    One compromised client: its history, its config, its random stream.
    """

    def __init__(self, client_id: int, cfg: XfedConfig, rng: np.random.Generator):
        self.client_id = client_id
        self.cfg = cfg
        self.rng = rng
        self.history = DeltaHistory(cfg.window)

    def observe(self, theta_prev: np.ndarray, theta_curr: np.ndarray) -> None:
        push_global_delta(self.history, theta_prev, theta_curr)

    def craft(self, phi_b: np.ndarray, rng: Optional[np.random.Generator] = None) -> CraftResult:
        """`rng` replaces the attacker's own stream for this call (per-round streams)"""
        return xfed_craft(phi_b, self.history, self.cfg, rng if rng is not None else self.rng)


__all__ = [
    "PerturbationKind",
    "perturbation_uv",
    "perturbation_sgn",
    "XfedConfig",
    "craft_with_scale",
    "xfed_craft",
    "XfedAttacker",
]
