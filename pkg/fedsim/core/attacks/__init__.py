"""Attack crafters: XFED plus the collusive and fake-client baselines"""

from fedsim.core.attacks.baselines import (
    BaselineAttackConfig,
    CraftBatch,
    KrumOracle,
    fang_krum_craft,
    fang_trmean_craft,
    lie_craft,
    minmax_craft,
    minsum_craft,
    mpaf_craft,
    poisonedfl_craft,
)
from fedsim.core.attacks.robust import (
    CraftResult,
    DeltaHistory,
    OutlierTestConfig,
    mad_outlier_test,
    push_global_delta,
    robust_scale,
)
from fedsim.core.attacks.xfed import XfedAttacker, XfedConfig, xfed_craft

ATTACK_KINDS = (
    "none",
    "xfed-uv",
    "xfed-sgn",
    "lie",
    "fang-krum",
    "fang-trmean",
    "min-max",
    "min-sum",
    "mpaf",
    "poisonedfl",
)
FAKE_CLIENT_ATTACKS = ("mpaf", "poisonedfl")
COLLUSIVE_ATTACKS = ("lie", "fang-krum", "fang-trmean", "min-max", "min-sum")

__all__ = [
    "ATTACK_KINDS",
    "FAKE_CLIENT_ATTACKS",
    "COLLUSIVE_ATTACKS",
    "BaselineAttackConfig",
    "CraftBatch",
    "CraftResult",
    "DeltaHistory",
    "KrumOracle",
    "OutlierTestConfig",
    "XfedAttacker",
    "XfedConfig",
    "fang_krum_craft",
    "fang_trmean_craft",
    "lie_craft",
    "mad_outlier_test",
    "minmax_craft",
    "minsum_craft",
    "mpaf_craft",
    "poisonedfl_craft",
    "push_global_delta",
    "robust_scale",
    "xfed_craft",
]
