"""
Experiment Profiles for fedsim
Named presets for common experiment scales, selectable via environment variable
"""

import os
from dataclasses import dataclass, field
from typing import Any, Dict

from fedsim.models.validation import ExperimentConfig


@dataclass
class ExperimentProfile:
    """A named base experiment; `settings` is a (partial) experiment file"""
    name: str
    description: str
    settings: Dict[str, Any] = field(default_factory=dict)

    def to_config(self) -> ExperimentConfig:
        return ExperimentConfig.model_validate({"name": self.name, **self.settings})


# Available profiles - selected via FEDSIM_PROFILE
EXPERIMENT_PROFILES = {
    "desk": ExperimentProfile(
        name="desk",
        description="Desk-scale reproduction: blobs n=2000, L=10, dim=20; 20 clients; MLP; 100 rounds; 20% malicious",
        settings={
            "seed": 7,
            "clients": 20,
            "malicious_fraction": 0.2,
            "rounds": 100,
            "setting": "cross-silo",
            "model": {"kind": "mlp", "hidden": [32]},
            "dataset": {"source": "blobs", "samples": 2000, "num_classes": 10, "dim": 20, "spread": 1.0},
            "partition": {"p": 0.5},
            "training": {"learning_rate": 0.2, "batch_size": 32, "local_iterations": 5},
            "aggregator": {"kind": "fed-avg"},
            "attack": {"kind": "xfed-uv", "lam": 4.0, "window": 8},
        },
    ),
    "cross-device": ExperimentProfile(
        name="cross-device",
        description="Cross-device: 100 clients, 10% sampled per round, fake-client attack",
        settings={
            "seed": 11,
            "clients": 100,
            "malicious_fraction": 0.1,
            "rounds": 60,
            "setting": "cross-device",
            "participation": 0.1,
            "model": {"kind": "mlp", "hidden": [32]},
            "dataset": {"source": "blobs", "samples": 4000, "num_classes": 10, "dim": 20, "spread": 1.0},
            "partition": {"p": 0.5},
            "training": {"learning_rate": 0.2, "batch_size": 16, "local_iterations": 5},
            "aggregator": {"kind": "median"},
            "attack": {"kind": "poisonedfl"},
        },
    ),
    "smoke": ExperimentProfile(
        name="smoke",
        description="Seconds-long sanity run: logistic regression on 4 classes, 8 clients, 10 rounds",
        settings={
            "seed": 1,
            "clients": 8,
            "malicious_fraction": 0.25,
            "rounds": 10,
            "model": {"kind": "logistic-regression", "hidden": []},
            "dataset": {"source": "blobs", "samples": 240, "num_classes": 4, "dim": 5, "spread": 0.5},
            "partition": {"p": 0.5},
            "training": {"learning_rate": 0.5, "batch_size": 16, "local_iterations": 2},
            "aggregator": {"kind": "fed-avg"},
            "attack": {"kind": "xfed-uv"},
        },
    ),
}


def get_active_profile() -> ExperimentProfile:
    """Get the active profile based on FEDSIM_PROFILE"""
    active_profile = os.getenv("FEDSIM_PROFILE", "desk")
    if active_profile not in EXPERIMENT_PROFILES:
        raise ValueError(f"Unknown experiment profile: {active_profile}. Available: {list(EXPERIMENT_PROFILES.keys())}")
    return EXPERIMENT_PROFILES[active_profile]


def get_profile_by_name(name: str) -> ExperimentProfile:
    """Get a specific profile by name"""
    if name not in EXPERIMENT_PROFILES:
        raise ValueError(f"Unknown experiment profile: {name}. Available: {list(EXPERIMENT_PROFILES.keys())}")
    return EXPERIMENT_PROFILES[name]
