#!/usr/bin/env python3
"""
Desk-scale qualitative reproduction.
Runs the desk profile under FedAvg, Clipped-Clustering and FLTrust, with and
without the XFED (inverse unit vector) and LIE attacks, and checks the
expected orderings of attack impact.
"""

import os
import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from dotenv import load_dotenv

from config.experiment_profiles import get_profile_by_name
from fedsim.core.reporting import write_run
from fedsim.core.simulator import compute_attack_impact, run_experiment, worker_count
from fedsim.models.validation import ExperimentConfig
from fedsim.utils.safe_logging import configure_logging

# Load environment variables
load_dotenv()

BASELINE_FLOOR = 0.85
FEDAVG_IMPACT_FLOOR = 0.30
FLTRUST_IMPACT_CEILING = 0.10


def desk_variant(aggregator: str, attack: str) -> ExperimentConfig:
    """The desk profile with another aggregator and attack"""
    data = get_profile_by_name("desk").to_config().canonical()
    data["name"] = f"desk-{aggregator}-{attack}"
    data["aggregator"] = {"kind": aggregator}
    data["attack"] = {"kind": attack}
    return ExperimentConfig.model_validate(data)


def run_pair(aggregator: str, attack: str, out_dir: Path, cache: dict) -> float:
    """Impact of `attack` under `aggregator`; no-attack runs are shared through `cache`"""
    attacked_cfg = desk_variant(aggregator, attack)
    clean_cfg = attacked_cfg.without_attack()
    key = clean_cfg.digest()
    if key not in cache:
        print(f"  running {aggregator} / none ...")
        cache[key] = run_experiment(clean_cfg, threads=worker_count())
        write_run(out_dir / f"{aggregator}-none", clean_cfg, cache[key])
    print(f"  running {aggregator} / {attack} ...")
    attacked = run_experiment(attacked_cfg, threads=worker_count())
    write_run(out_dir / f"{aggregator}-{attack}", attacked_cfg, attacked)
    impact = compute_attack_impact(cache[key], attacked)
    print(f"  A={cache[key].accuracy:.4f}  A*={attacked.accuracy:.4f}  I={impact * 100:.2f} points")
    return impact


def check(label: str, passed: bool, detail: str) -> bool:
    print(f"[{'SUCCESS' if passed else 'ERROR'}] {label}: {detail}")
    return passed


def main() -> int:
    configure_logging(os.getenv("FEDSIM_LOG_LEVEL", "WARNING"))
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("runs/desk")
    print("=" * 60)
    print("fedsim - Desk-Scale Reproduction")
    print("=" * 60)

    cache: dict = {}
    results = []
    try:
        print("\nFedAvg")
        fedavg_xfed = run_pair("fed-avg", "xfed-uv", out_dir, cache)
        baseline = next(iter(cache.values())).accuracy
        print("\nClipped-Clustering")
        cc_xfed = run_pair("clipped-clustering", "xfed-uv", out_dir, cache)
        cc_lie = run_pair("clipped-clustering", "lie", out_dir, cache)
        print("\nFLTrust")
        fltrust_xfed = run_pair("fltrust", "xfed-uv", out_dir, cache)
    except Exception as e:
        print(f"\n[ERROR] Simulation failed: {e}")
        return 1

    print("\n" + "=" * 60)
    results.append(check("no-attack FedAvg accuracy", baseline >= BASELINE_FLOOR,
                         f"A={baseline:.4f} (floor {BASELINE_FLOOR})"))
    results.append(check("XFED impact on FedAvg", fedavg_xfed >= FEDAVG_IMPACT_FLOOR,
                         f"I={fedavg_xfed * 100:.2f} points (floor {FEDAVG_IMPACT_FLOOR * 100:.0f})"))
    results.append(check("XFED vs LIE on Clipped-Clustering", cc_xfed >= 2 * cc_lie,
                         f"I_xfed={cc_xfed * 100:.2f}, I_lie={cc_lie * 100:.2f}"))
    results.append(check("FLTrust mitigates XFED", fltrust_xfed <= FLTRUST_IMPACT_CEILING,
                         f"I={fltrust_xfed * 100:.2f} points (ceiling {FLTRUST_IMPACT_CEILING * 100:.0f})"))
    print("=" * 60)

    if all(results):
        print("\n[SUCCESS] All desk-scale checks passed")
        return 0
    print(f"\n[ERROR] {results.count(False)} check(s) failed; runs are in {out_dir}")
    return 1


if __name__ == "__main__":
    sys.exit(main())
