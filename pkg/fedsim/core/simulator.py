"""
Federated Training Orchestrator

Drives one experiment end to end:
- builds the dataset, the held-out test split and the non-IID partition
- fixes the malicious set (first floor(m*k) ids of a seeded shuffle)
- runs T rounds: sample -> local training -> attack -> aggregate/defend
- evaluates every round and reports A, the mean accuracy of the final 10%

Determinism:
- every random draw comes from numpy.random.default_rng([seed, purpose, *keys])
- benign streams (data, partition, init, sample, train) never depend on the
  attack configuration, so an attacked run and its no-attack twin share the
  same benign trajectory up to the first crafted update
- client training may run on FEDSIM_THREADS worker threads; results are keyed
  by client-id and the server phase runs sequentially in id order
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import structlog

from fedsim.core.aggregation import AggregationResult, AggregatorConfig, ClientUpdate, aggregate
from fedsim.core.attacks import COLLUSIVE_ATTACKS, FAKE_CLIENT_ATTACKS
from fedsim.core.attacks.baselines import (
    BaselineAttackConfig,
    KrumOracle,
    fang_krum_craft,
    fang_trmean_craft,
    lie_craft,
    minmax_craft,
    minsum_craft,
    mpaf_craft,
    poisonedfl_craft,
    poisonedfl_direction,
)
from fedsim.core.attacks.robust import DeltaHistory, OutlierTestConfig, push_global_delta
from fedsim.core.attacks.xfed import XfedAttacker, XfedConfig
from fedsim.core.data import (
    Dataset,
    PartitionConfig,
    RootDatasetConfig,
    generate_blobs,
    load_csv,
    load_idx,
    partition_noniid,
    sample_root,
    train_test_split,
)
from fedsim.core.defenses import DEFENSE_KINDS, DefenseState, defend
from fedsim.core.errors import AttackError, ComparisonError, ConfigurationError, ExperimentError, FedSimError
from fedsim.core.metrics import SimulationMetrics
from fedsim.core.model import ModelSpec, TrainingConfig, evaluate, init_model, local_update
from fedsim.models.validation import ExperimentConfig
from fedsim.utils.safe_logging import get_logger

logger = get_logger(__name__)

# Random stream purposes; codes are part of the seed and must never change
STREAM_PURPOSES = {
    "data": 1,
    "split": 2,
    "partition": 3,
    "init": 4,
    "malicious": 5,
    "sample": 6,
    "train": 7,
    "attack": 8,
    "root": 9,
    "defense": 10,
    "fake": 11,
}

FINAL_WINDOW_SHARE = 0.1


def worker_count() -> int:
    """FEDSIM_THREADS, at least 1"""
    try:
        return max(1, int(os.getenv("FEDSIM_THREADS", "1")))
    except ValueError:
        return 1


def _seed_material(master_seed: int, purpose: str, keys: Sequence[int]) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, STREAM_PURPOSES[purpose], *[int(k) for k in keys]])


def rng_stream(master_seed: int, purpose: str, *keys: int) -> np.random.Generator:
    return np.random.default_rng(_seed_material(master_seed, purpose, keys))


def derive_seed(master_seed: int, purpose: str, *keys: int) -> int:
    """Integer seed for APIs that take one (data generation, partitioning)"""
    return int(_seed_material(master_seed, purpose, keys).generate_state(1, dtype=np.uint32)[0])


def final_window(rounds: int) -> int:
    return math.ceil(FINAL_WINDOW_SHARE * rounds)


def final_window_accuracy(accuracies: Sequence[float]) -> float:
    """Mean accuracy over the final ceil(0.1 * T) rounds"""
    if not accuracies:
        raise ConfigurationError("no rounds to average")
    window = final_window(len(accuracies))
    return float(np.mean(accuracies[-window:]))


@dataclass
class RoundRecord:
    round: int
    accuracy: float
    participants: List[int]
    retained: int
    mean_mu: float = 0.0
    statuses: Dict[str, int] = field(default_factory=dict)


@dataclass
class ExperimentResult:
    records: List[RoundRecord]
    accuracy: float
    digest: str
    baseline_digest: str
    attack: str = "none"
    aggregator: str = "fed-avg"
    seconds: float = 0.0
    metrics: Dict[str, object] = field(default_factory=dict)

    def recompute_accuracy(self) -> float:
        return final_window_accuracy([r.accuracy for r in self.records])


def compute_attack_impact(no_attack: ExperimentResult, attacked: ExperimentResult) -> float:
    """I = A(no attack) - A(attacked); negative values are legal"""
    if no_attack.baseline_digest != attacked.baseline_digest:
        raise ComparisonError(
            f"runs are not paired: baseline digests {no_attack.baseline_digest[:12]} "
            f"and {attacked.baseline_digest[:12]} differ"
        )
    return no_attack.accuracy - attacked.accuracy


def load_dataset(cfg: ExperimentConfig) -> Dataset:
    section = cfg.dataset
    if section.source == "blobs":
        return generate_blobs(section.samples, section.num_classes, section.dim, section.spread,
                              derive_seed(cfg.seed, "data"))
    if section.source == "csv":
        return load_csv(section.path, num_classes=section.num_classes)
    return load_idx(section.path, section.labels_path, num_classes=section.num_classes)


def build_model_spec(cfg: ExperimentConfig, num_features: int, num_classes: int) -> ModelSpec:
    if cfg.model.kind == "logistic-regression":
        return ModelSpec.logistic(num_features, num_classes)
    return ModelSpec.mlp(num_features, cfg.model.hidden, num_classes)


def sample_clients(cfg: ExperimentConfig, round_index: int, population: int) -> List[int]:
    """
    Cross-silo: every client. Cross-device: ceil(q * population) ids drawn
    without replacement, fixed per (seed, round).
    """
    if cfg.setting == "cross-silo":
        return list(range(population))
    count = min(population, math.ceil(cfg.participation * population))
    picked = rng_stream(cfg.seed, "sample", round_index).choice(population, size=count, replace=False)
    return sorted(int(i) for i in picked)


def malicious_clients(cfg: ExperimentConfig) -> List[int]:
    count = math.floor(cfg.malicious_fraction * cfg.clients)
    order = rng_stream(cfg.seed, "malicious").permutation(cfg.clients)
    return sorted(int(i) for i in order[:count])


def fake_client_count(cfg: ExperimentConfig) -> int:
    if cfg.attack.kind not in FAKE_CLIENT_ATTACKS:
        return 0
    if cfg.attack.num_fake is not None:
        return cfg.attack.num_fake
    return math.floor(cfg.malicious_fraction * cfg.clients)


def server_assumed_compromised(cfg: ExperimentConfig, participants_per_round: int) -> int:
    """
    floor(m * n_r), clamped to what trimmed-mean / multi-krum accept.
    An explicit override is returned as is.
    """
    if cfg.aggregator.assumed_compromised is not None:
        return cfg.aggregator.assumed_compromised
    c = math.floor(cfg.malicious_fraction * participants_per_round)
    limit = None
    if cfg.aggregator.kind == "trimmed-mean":
        limit = (participants_per_round - 1) // 2
    elif cfg.aggregator.kind == "multi-krum":
        limit = participants_per_round - 3
    if limit is not None and c > limit:
        logger.warning("assumed_compromised_clamped", requested=c, used=max(limit, 0),
                       aggregator=cfg.aggregator.kind)
        c = max(limit, 0)
    return c


class FederatedSimulation:
    """
    One experiment's mutable state: global model, attacker histories,
    defense state. run_round advances it by one round.
    """

    def __init__(self, cfg: ExperimentConfig, threads: Optional[int] = None):
        self.cfg = cfg
        self.threads = threads if threads is not None else worker_count()
        self.metrics = SimulationMetrics()

        full = load_dataset(cfg)
        self.train, self.test = train_test_split(full, cfg.dataset.test_fraction, derive_seed(cfg.seed, "split"))
        self.spec = build_model_spec(cfg, self.train.dim, self.train.num_classes)
        self.training = TrainingConfig(
            learning_rate=cfg.training.learning_rate,
            batch_size=cfg.training.batch_size,
            local_iterations=cfg.training.local_iterations,
        )
        self.partition = partition_noniid(
            self.train,
            PartitionConfig(
                p=cfg.partition.p,
                num_groups=self.train.num_classes,
                num_clients=cfg.clients,
                seed=derive_seed(cfg.seed, "partition"),
                allow_empty=cfg.partition.allow_empty,
            ),
        )
        self.shards = {cid: self.train.subset(idx) for cid, idx in self.partition.shards.items()}
        self.theta = init_model(self.spec, derive_seed(cfg.seed, "init"))

        self.malicious = malicious_clients(cfg)
        self.fakes = list(range(cfg.clients, cfg.clients + fake_client_count(cfg)))
        self.population = cfg.clients + len(self.fakes)
        per_round = self.population if cfg.setting == "cross-silo" else min(
            self.population, math.ceil(cfg.participation * self.population)
        )
        self.participants_per_round = per_round

        self._setup_attack()
        self._setup_server(per_round)

    # -- setup ---------------------------------------------------------------

    def _setup_attack(self) -> None:
        cfg = self.cfg
        kind = cfg.attack.kind
        self.baseline_cfg = BaselineAttackConfig(
            z_max=cfg.attack.z_max,
            perturbation=cfg.attack.perturbation,
            search_tolerance=cfg.attack.search_tolerance,
            mpaf_lambda=cfg.attack.mpaf_lambda,
            mpaf_max_norm=cfg.attack.mpaf_max_norm,
        )
        self.attackers: Dict[int, XfedAttacker] = {}
        if kind in ("xfed-uv", "xfed-sgn"):
            xcfg = XfedConfig(
                lam=cfg.attack.lam,
                kind="inverse-unit-vector" if kind == "xfed-uv" else "inverse-sign",
                jitter=cfg.attack.jitter,
                window=cfg.attack.window,
            )
            self.attackers = {
                cid: XfedAttacker(cid, xcfg, rng_stream(cfg.seed, "attack", cid)) for cid in self.malicious
            }
        self.fake_history = DeltaHistory(cfg.attack.window)
        self.mpaf_base = None
        self.poisonedfl_k = None
        if kind == "mpaf":
            self.mpaf_base = init_model(self.spec, derive_seed(cfg.seed, "fake"))
        elif kind == "poisonedfl":
            self.poisonedfl_k = poisonedfl_direction(self.spec.dimension, rng_stream(cfg.seed, "fake"))

    def _setup_server(self, per_round: int) -> None:
        cfg = self.cfg
        self.defense: Optional[DefenseState] = None
        self.assumed_compromised = server_assumed_compromised(cfg, per_round)
        if cfg.aggregator.kind in DEFENSE_KINDS:
            root = None
            if cfg.aggregator.kind == "fltrust":
                root = sample_root(
                    self.train,
                    RootDatasetConfig(size=cfg.aggregator.root_size, bias=cfg.aggregator.root_bias,
                                      seed=derive_seed(cfg.seed, "root")),
                )
            self.defense = DefenseState(
                kind=cfg.aggregator.kind,
                root=root,
                root_training=self.training,
                spec=self.spec,
                root_rng=rng_stream(cfg.seed, "defense"),
                outlier=OutlierTestConfig(threshold=cfg.aggregator.outlier_threshold),
                freq_cutoff=cfg.aggregator.freq_cutoff,
                seed=cfg.seed,
            )
            self.aggregator = None
        else:
            self.aggregator = AggregatorConfig(
                kind=cfg.aggregator.kind,
                assumed_compromised=self.assumed_compromised,
                krum_select=cfg.aggregator.krum_select,
                clip_threshold=cfg.aggregator.clip_threshold,
                sign_guard_norm_filter=cfg.aggregator.sign_guard_norm_filter,
                seed=cfg.seed,
            )

    # -- round phases --------------------------------------------------------

    def _train_one(self, cid: int, theta: np.ndarray, round_index: int) -> np.ndarray:
        shard = self.shards[cid]
        if len(shard) == 0:
            return theta.copy()
        return local_update(theta, shard, self.training, self.spec, rng_stream(self.cfg.seed, "train", cid, round_index))

    def _train_clients(self, clients: List[int], theta: np.ndarray, round_index: int) -> Dict[int, np.ndarray]:
        if self.threads <= 1 or len(clients) <= 1:
            return {cid: self._train_one(cid, theta, round_index) for cid in clients}
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            futures = {cid: pool.submit(self._train_one, cid, theta, round_index) for cid in clients}
            return {cid: futures[cid].result() for cid in clients}

    def _craft(self, models: Dict[int, np.ndarray], participants: List[int], theta: np.ndarray,
               round_index: int) -> tuple:
        """Replaces malicious entries of `models` in place; returns (mu values, statuses)"""
        kind = self.cfg.attack.kind
        mus: List[float] = []
        statuses: Dict[str, int] = {}

        def note(status: str, mu: float, count: int = 1) -> None:
            statuses[status] = statuses.get(status, 0) + count
            mus.extend([mu] * count)
            self.metrics.record_craft(status, count)

        if kind in ("xfed-uv", "xfed-sgn"):
            # phi_b is the attacker's full local model, the object the server aggregates
            for cid in (c for c in participants if c in self.attackers):
                rng = rng_stream(self.cfg.seed, "attack", cid, round_index)
                try:
                    result = self.attackers[cid].craft(models[cid], rng)
                except AttackError:
                    note("degenerate", 0.0)
                    continue
                models[cid] = result.model
                note(result.status, result.mu)

        elif kind in COLLUSIVE_ATTACKS:
            malicious = set(self.malicious)
            attackers = [c for c in participants if c in malicious]
            if not attackers:
                return mus, statuses
            deltas = [models[c] - theta for c in attackers]
            rng = rng_stream(self.cfg.seed, "attack", round_index)
            if kind in ("fang-krum", "fang-trmean"):
                if kind == "fang-krum":
                    batch = fang_krum_craft(deltas, KrumOracle(len(attackers)), self.baseline_cfg, rng)
                else:
                    batch = fang_trmean_craft(deltas, rng)
                for cid, crafted in zip(attackers, batch.models):
                    models[cid] = theta + crafted
                note(batch.status, batch.scale, len(attackers))
            else:
                if kind == "lie":
                    result = lie_craft(deltas, self.baseline_cfg.z_max)
                elif kind == "min-max":
                    result = minmax_craft(deltas, self.baseline_cfg)
                else:
                    result = minsum_craft(deltas, self.baseline_cfg)
                for cid in attackers:
                    models[cid] = theta + result.model
                note(result.status, result.mu, len(attackers))

        elif kind in FAKE_CLIENT_ATTACKS:
            fakes = [c for c in participants if c >= self.cfg.clients]
            if not fakes:
                return mus, statuses
            if kind == "mpaf":
                result = mpaf_craft(theta, self.mpaf_base, self.baseline_cfg.mpaf_lambda,
                                    self.baseline_cfg.mpaf_max_norm)
            else:
                result = poisonedfl_craft(theta, self.fake_history, self.poisonedfl_k, self.baseline_cfg)
            for cid in fakes:
                models[cid] = result.model.copy()
            note(result.status, result.mu, len(fakes))

        return mus, statuses

    def _server_step(self, updates: List[ClientUpdate], theta: np.ndarray) -> AggregationResult:
        if self.defense is not None:
            return defend(self.defense, theta, updates)
        return aggregate(updates, self.aggregator, reference=theta)

    def run_round(self, round_index: int) -> RoundRecord:
        """Advance the global model by one round and evaluate it"""
        started = self.metrics.record_round_start()
        theta = self.theta
        participants = sample_clients(self.cfg, round_index, self.population)
        genuine = [c for c in participants if c < self.cfg.clients]

        try:
            models = self._train_clients(genuine, theta, round_index)
            mus, statuses = self._craft(models, participants, theta, round_index)
            updates = [ClientUpdate(cid, models[cid]) for cid in sorted(models)]
            result = self._server_step(updates, theta)
        except FedSimError as exc:
            self.metrics.record_error(type(exc).__name__)
            logger.error("round_failed", round=round_index, error=str(exc))
            raise ExperimentError(str(exc), round_index) from exc

        new_theta = np.asarray(result.model, dtype=np.float64)
        if not np.all(np.isfinite(new_theta)):
            self.metrics.record_error("NumericalError")
            raise ExperimentError("aggregated global model is not finite", round_index)

        for attacker in self.attackers.values():
            attacker.observe(theta, new_theta)
        if self.cfg.attack.kind == "poisonedfl":
            push_global_delta(self.fake_history, theta, new_theta)
        self.theta = new_theta

        accuracy = evaluate(new_theta, self.test, self.spec)
        record = RoundRecord(
            round=round_index,
            accuracy=accuracy,
            participants=participants,
            retained=len(result.retained),
            mean_mu=float(np.mean(mus)) if mus else 0.0,
            statuses=statuses,
        )
        self.metrics.record_round_end(started, len(updates), record.retained)
        logger.debug("round_complete", round=round_index, accuracy=accuracy,
                     retained=record.retained, mean_mu=record.mean_mu)
        return record

    def run(self) -> ExperimentResult:
        cfg = self.cfg
        with structlog.contextvars.bound_contextvars(experiment=cfg.name):
            logger.info("experiment_start", digest=cfg.digest()[:12], clients=cfg.clients,
                        malicious=len(self.malicious), fakes=len(self.fakes), rounds=cfg.rounds,
                        aggregator=cfg.aggregator.kind, attack=cfg.attack.kind, dimension=self.spec.dimension)
            records = [self.run_round(t) for t in range(1, cfg.rounds + 1)]
            self.metrics.finish()
            accuracy = final_window_accuracy([r.accuracy for r in records])
            summary = self.metrics.get_metrics_summary()
            logger.info("experiment_complete", accuracy=accuracy, metrics=summary)

        return ExperimentResult(
            records=records,
            accuracy=accuracy,
            digest=cfg.digest(),
            baseline_digest=cfg.baseline_digest(),
            attack=cfg.attack.kind,
            aggregator=cfg.aggregator.kind,
            seconds=self.metrics.get_elapsed_seconds(),
            metrics=summary,
        )


def run_experiment(cfg: ExperimentConfig, threads: Optional[int] = None) -> ExperimentResult:
    return FederatedSimulation(cfg, threads=threads).run()


__all__ = [
    "STREAM_PURPOSES",
    "rng_stream",
    "derive_seed",
    "worker_count",
    "final_window",
    "final_window_accuracy",
    "RoundRecord",
    "ExperimentResult",
    "compute_attack_impact",
    "load_dataset",
    "build_model_spec",
    "sample_clients",
    "malicious_clients",
    "fake_client_count",
    "server_assumed_compromised",
    "FederatedSimulation",
    "run_experiment",
]
