"""
Unit tests for the baseline poisoning attacks
"""

import pytest
import numpy as np

# Import components to test
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from fedsim.core.attacks.baselines import (
    BaselineAttackConfig,
    KrumOracle,
    fang_directions,
    fang_krum_craft,
    fang_trmean_craft,
    lie_craft,
    minmax_craft,
    minsum_craft,
    mpaf_craft,
    poisonedfl_craft,
    poisonedfl_direction,
)
from fedsim.core.attacks.robust import DeltaHistory
from fedsim.core.errors import AttackError, ConfigurationError


def pair():
    return [np.array([0.0]), np.array([2.0])]


class TestLie:
    """Test mean - z_max * sigma"""

    def test_example(self):
        """Test {(0),(2)}, z_max=1 -> (0)"""
        assert lie_craft(pair(), 1.0).model.tolist() == [0.0]

    def test_zero_z_is_mean(self):
        """Test z_max=0 submits the mean"""
        assert lie_craft(pair(), 0.0).model.tolist() == [1.0]

    def test_single_update_is_degenerate(self):
        """Test one compromised update has no spread"""
        result = lie_craft([np.array([3.0, 1.0])])
        assert result.status == "degenerate"
        assert result.model.tolist() == [3.0, 1.0]

    def test_no_updates(self):
        """Test an empty pool is an attack error"""
        with pytest.raises(AttackError):
            lie_craft([])


class TestFangKrum:
    """Test the halving search against a Krum oracle"""

    def test_no_attackers(self):
        """Test c=0 crafts nothing"""
        batch = fang_krum_craft([], KrumOracle(0), BaselineAttackConfig(), np.random.default_rng(0))
        assert batch.models == [] and batch.status == "no-op"

    def test_selected_at_first_scale(self):
        """Test a tight crafted cluster wins Krum immediately"""
        rng = np.random.default_rng(12)
        benign = list(rng.normal(size=(4, 5)))
        batch = fang_krum_craft(benign, KrumOracle(4), BaselineAttackConfig(), rng)
        assert batch.status == "ok"
        assert batch.scale == 10.0
        assert len(batch.models) == 4
        expected = np.mean(benign, axis=0) - 10.0 * np.sign(np.mean(benign, axis=0))
        assert np.allclose(batch.models[0], expected)
        assert all(np.max(np.abs(m - batch.models[0])) <= 1e-4 for m in batch.models[1:])

    def test_identical_benign_updates_terminate(self):
        """Test the search stops at lambda_min when benign updates always win"""
        benign = [np.ones(2)] * 3
        cfg = BaselineAttackConfig()
        batch = fang_krum_craft(benign, KrumOracle(3), cfg, np.random.default_rng(0))
        assert batch.status in ("ok", "search-failed")
        assert batch.scale >= cfg.fang_lambda_min
        assert len(batch.models) == 3

    def test_directions_zero_counts_down(self):
        """Test sign(0) is treated as -1"""
        assert fang_directions(np.array([2.0, 0.0, -1.0])).tolist() == [1.0, -1.0, -1.0]


class TestFangTrimmedMean:
    """Test the [3, 4] sigma sampling intervals"""

    def test_direction_down_interval(self):
        """Test mu=1, sigma=0.1, direction -1 samples from [1.3, 1.4]"""
        compromised = [np.array([0.9]), np.array([1.1])]
        batch = fang_trmean_craft(compromised, np.random.default_rng(0), directions=np.array([-1.0]))
        for model in batch.models:
            assert 1.3 - 1e-12 <= model[0] <= 1.4 + 1e-12

    def test_zero_sigma_collapses_to_mean(self):
        """Test identical updates give mu exactly"""
        batch = fang_trmean_craft([np.array([2.0, -1.0])] * 3, np.random.default_rng(0))
        assert all(m.tolist() == [2.0, -1.0] for m in batch.models)

    def test_interval_property(self):
        """Test every sampled coordinate lies in its interval over 1000 instances"""
        rng = np.random.default_rng(21)
        for _ in range(1000):
            c, d = int(rng.integers(2, 6)), int(rng.integers(1, 8))
            compromised = list(rng.normal(size=(c, d)))
            mean = np.mean(compromised, axis=0)
            std = np.std(compromised, axis=0)
            up = fang_directions(mean) > 0
            lo = np.where(up, mean - 4 * std, mean + 3 * std)
            hi = np.where(up, mean - 3 * std, mean + 4 * std)
            for model in fang_trmean_craft(compromised, rng).models:
                assert np.all(model >= lo - 1e-9) and np.all(model <= hi + 1e-9)

    def test_direction_shape_mismatch(self):
        """Test a wrong-length direction vector is an attack error"""
        with pytest.raises(AttackError):
            fang_trmean_craft(pair(), np.random.default_rng(0), directions=np.array([1.0, -1.0]))

    def test_default_directions_oppose_mean_update(self):
        """Test a positive mean update is pushed below mu and a negative one above it"""
        compromised = [np.array([0.9, -0.9]), np.array([1.1, -1.1])]
        batch = fang_trmean_craft(compromised, np.random.default_rng(3))
        for model in batch.models:
            assert 0.6 - 1e-12 <= model[0] <= 0.7 + 1e-12
            assert -0.7 - 1e-12 <= model[1] <= -0.6 + 1e-12


class TestDistanceBounded:
    """Test Min-Max and Min-Sum gamma searches"""

    def test_minmax_example(self):
        """Test {(0),(2)} -> gamma ~ 1, crafted ~ 0"""
        result = minmax_craft(pair())
        assert result.mu == pytest.approx(1.0, abs=1e-3)
        assert result.model[0] == pytest.approx(0.0, abs=1e-3)

    def test_minsum_example(self):
        """Test {(0),(2)} -> gamma ~ 1, crafted ~ 0"""
        result = minsum_craft(pair())
        assert result.mu == pytest.approx(1.0, abs=1e-3)
        assert result.model[0] == pytest.approx(0.0, abs=1e-3)

    def test_minsum_closed_form(self):
        """Test the search matches sqrt((bound - S0) / n) on 200 random sets"""
        rng = np.random.default_rng(31)
        for _ in range(200):
            n, d = int(rng.integers(2, 8)), int(rng.integers(1, 6))
            benign = rng.normal(size=(n, d))
            phi_b = benign.mean(axis=0)
            sq = ((benign[:, None, :] - benign[None, :, :]) ** 2).sum(axis=2)
            bound = sq.sum(axis=1).max()
            s0 = ((benign - phi_b) ** 2).sum()
            gamma = np.sqrt((bound - s0) / n)
            result = minsum_craft(list(benign))
            assert gamma - 1e-3 - 1e-9 <= result.mu <= gamma + 1e-9

    def test_search_never_violates_constraint(self):
        """Test the returned Min-Max vector stays inside the benign diameter"""
        rng = np.random.default_rng(41)
        for _ in range(200):
            benign = rng.normal(size=(int(rng.integers(2, 7)), 4))
            crafted = minmax_craft(list(benign)).model
            diameter = max(np.linalg.norm(a - b) for a in benign for b in benign)
            assert max(np.linalg.norm(crafted - b) for b in benign) <= diameter + 1e-9

    def test_zero_mean_is_degenerate(self):
        """Test a zero mean update has no direction"""
        result = minmax_craft([np.array([1.0]), np.array([-1.0])])
        assert result.status == "degenerate"


class TestFakeClients:
    """Test MPAF and PoisonedFL"""

    def test_mpaf_unit_lambda(self):
        """Test lambda=1 submits the base model"""
        result = mpaf_craft(np.array([1.0, 2.0]), np.array([0.5, -1.0]), lam=1.0)
        assert result.model.tolist() == [0.5, -1.0]

    def test_mpaf_zero_lambda(self):
        """Test lambda=0 submits theta and reports no-op"""
        result = mpaf_craft(np.array([1.0, 2.0]), np.array([0.5, -1.0]), lam=0.0)
        assert result.model.tolist() == [1.0, 2.0]
        assert result.status == "no-op"

    def test_mpaf_negative_lambda(self):
        """Test a negative amplification is rejected"""
        with pytest.raises(ConfigurationError):
            mpaf_craft(np.zeros(2), np.ones(2), lam=-1.0)

    def test_mpaf_default_step_is_bounded(self):
        """Test the default lambda=1e6 step is cut to norm 100"""
        theta = np.array([1.0, 2.0])
        base = np.array([4.0, -2.0])
        result = mpaf_craft(theta, base)
        assert np.linalg.norm(result.model - theta) == pytest.approx(100.0)
        assert result.mu == pytest.approx(20.0)
        cosine = (result.model - theta) @ (base - theta) / (100.0 * 5.0)
        assert cosine == pytest.approx(1.0)

    def test_mpaf_bound_disabled(self):
        """Test max_norm=None applies the raw amplification"""
        result = mpaf_craft(np.zeros(2), np.array([3.0, 4.0]), lam=1e6, max_norm=None)
        assert result.model.tolist() == [3e6, 4e6]
        assert result.mu == 1e6

    def test_mpaf_short_step_untouched(self):
        """Test steps already within the bound keep lambda"""
        result = mpaf_craft(np.zeros(2), np.array([3.0, 4.0]), lam=2.0, max_norm=100.0)
        assert result.model.tolist() == [6.0, 8.0]
        assert result.mu == 2.0

    def test_mpaf_invalid_bound(self):
        """Test a non-positive norm bound is rejected"""
        with pytest.raises(ConfigurationError):
            mpaf_craft(np.zeros(2), np.ones(2), max_norm=0.0)
        with pytest.raises(ConfigurationError):
            BaselineAttackConfig(mpaf_max_norm=-1.0)

    def test_poisonedfl_fallback_magnitude(self):
        """Test ||theta||=10 with no history gives an offset of norm 0.1"""
        theta = np.array([6.0, 8.0])
        direction = poisonedfl_direction(2, np.random.default_rng(0))
        result = poisonedfl_craft(theta, DeltaHistory(4), direction)
        assert np.linalg.norm(result.model - theta) == pytest.approx(0.1)

    def test_poisonedfl_direction_is_fixed(self):
        """Test the offset is parallel to k and sized by the latest global delta"""
        rng = np.random.default_rng(5)
        direction = poisonedfl_direction(6, rng)
        assert set(direction.tolist()) <= {-1.0, 1.0}
        hist = DeltaHistory(3)
        hist.push(np.full(6, 0.5))
        theta = rng.normal(size=6)
        offset = poisonedfl_craft(theta, hist, direction).model - theta
        cosine = offset @ direction / (np.linalg.norm(offset) * np.linalg.norm(direction))
        assert cosine == pytest.approx(1.0)
        assert np.linalg.norm(offset) == pytest.approx(np.linalg.norm(np.full(6, 0.5)))

    def test_poisonedfl_zero_direction(self):
        """Test a zero direction vector is an attack error"""
        with pytest.raises(AttackError):
            poisonedfl_craft(np.ones(2), DeltaHistory(2), np.zeros(2))


class TestBaselineAttackConfig:
    """Test parameter validation"""

    def test_invalid_values(self):
        """Test out-of-range parameters raise configuration errors"""
        with pytest.raises(ConfigurationError):
            BaselineAttackConfig(z_max=1.5)
        with pytest.raises(ConfigurationError):
            BaselineAttackConfig(fang_lambda_min=20.0)
        with pytest.raises(ConfigurationError):
            BaselineAttackConfig(perturbation="inverse-gradient")
