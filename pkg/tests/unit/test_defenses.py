"""
Unit tests for server-side defenses
FLTrust, FLAME, FoolsGold and FreqFed
"""

import pytest
import numpy as np

# Import components to test
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from fedsim.core.aggregation import ClientUpdate, fed_avg
from fedsim.core.defenses import (
    DefenseState,
    defend,
    flame_aggregate,
    fltrust_combine,
    foolsgold_aggregate,
    foolsgold_weights,
    freqfed_aggregate,
    low_frequency_features,
    trust_scores,
)
from fedsim.core.errors import ConfigurationError


def updates_of(rows):
    return [ClientUpdate(i, np.asarray(r, dtype=float)) for i, r in enumerate(rows)]


class TestFLTrust:
    """Test trust-weighted, norm-rescaled aggregation"""

    def setup_method(self):
        self.theta = np.zeros(2)
        self.g0 = np.array([1.0, 0.0])

    def test_aligned_update_is_rescaled(self):
        """Test g = 2 * g0 yields theta + g0"""
        result = fltrust_combine(self.theta, self.g0, updates_of([[2.0, 0.0]]))
        assert np.allclose(result.model, [1.0, 0.0])
        assert result.retained == [0]

    def test_opposed_and_orthogonal_are_excluded(self):
        """Test -g0 and an orthogonal update get trust 0"""
        result = fltrust_combine(self.theta, self.g0, updates_of([[2.0, 0.0], [-1.0, 0.0], [0.0, 3.0]]))
        assert np.allclose(result.model, [1.0, 0.0])
        assert result.retained == [0]

    def test_zero_root_update_keeps_theta(self):
        """Test g0 = 0 returns theta with nobody retained"""
        result = fltrust_combine(np.ones(2), np.zeros(2), updates_of([[2.0, 0.0]]))
        assert result.model.tolist() == [1.0, 1.0]
        assert result.retained == []

    def test_all_untrusted_keeps_theta(self):
        """Test every trust score at zero leaves theta unchanged"""
        result = fltrust_combine(self.theta, self.g0, updates_of([[-1.0, 0.0], [0.0, -2.0]]))
        assert result.model.tolist() == [0.0, 0.0]
        assert result.retained == []

    def test_zero_delta_has_zero_trust(self):
        """Test an update equal to theta scores 0"""
        scores = trust_scores(np.array([[0.0, 0.0], [1.0, 1.0]]), self.g0)
        assert scores[0] == 0.0
        assert scores[1] == pytest.approx(1 / np.sqrt(2))

    def test_positive_rescaling_changes_nothing(self):
        """Test scaling one update by 7 leaves its trust and the aggregate unchanged"""
        rng = np.random.default_rng(8)
        theta = rng.normal(size=5)
        g0 = rng.normal(size=5)
        deltas = rng.normal(size=(4, 5))
        deltas[0] = g0 + 0.1 * deltas[0]
        scaled = deltas.copy()
        scaled[0] *= 7.0

        assert np.allclose(trust_scores(deltas, g0), trust_scores(scaled, g0))
        plain = fltrust_combine(theta, g0, updates_of(theta + deltas))
        stretched = fltrust_combine(theta, g0, updates_of(theta + scaled))
        assert np.allclose(plain.model, stretched.model)
        assert plain.retained == stretched.retained
        assert 0 in plain.retained

    def test_requires_root_dataset(self):
        """Test FLTrust state without root data is a configuration error"""
        with pytest.raises(ConfigurationError):
            DefenseState(kind="fltrust")


class TestFlame:
    """Test MAD-based distance filtering"""

    def test_far_update_is_dropped(self):
        """Test distances {1, 1.1, 0.9, 1.05, 50} drop the 50"""
        updates = updates_of([[1.0], [1.1], [0.9], [1.05], [50.0]])
        result = flame_aggregate(DefenseState(kind="flame"), np.zeros(1), updates)
        assert result.retained == [0, 1, 2, 3]
        assert result.model[0] == pytest.approx(1.0125)

    def test_equal_distances_keep_everyone(self):
        """Test a zero MAD flags nobody"""
        updates = updates_of([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])
        result = flame_aggregate(DefenseState(kind="flame"), np.zeros(2), updates)
        assert result.retained == [0, 1, 2]
        assert np.allclose(result.model, fed_avg(updates))


class TestFoolsGold:
    """Test similarity-based down-weighting"""

    def test_identical_attackers_get_zero_weight(self):
        """Test two identical histories are zeroed and the honest client keeps weight 1"""
        state = DefenseState(kind="foolsgold")
        deltas = np.array([[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        weights = foolsgold_weights(state, [0, 1, 2], deltas)
        assert weights.tolist() == [0.0, 0.0, 1.0]

    def test_orthogonal_histories_match_fedavg(self):
        """Test unrelated clients all keep weight 1"""
        updates = updates_of([[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 3.0]])
        result = foolsgold_aggregate(DefenseState(kind="foolsgold"), np.zeros(3), updates)
        assert np.allclose(result.model, fed_avg(updates))
        assert result.retained == [0, 1, 2]

    def test_histories_accumulate_across_rounds(self):
        """Test the state sums each client's deltas"""
        state = DefenseState(kind="foolsgold")
        foolsgold_weights(state, [4], np.array([[1.0, 2.0]]))
        foolsgold_weights(state, [4], np.array([[1.0, 0.0]]))
        assert state.histories[4].tolist() == [2.0, 2.0]
        assert state.rounds_seen[4] == 2

    def test_colluding_pair_outweighed_over_rounds(self):
        """Test 8 honest clients and 2 identical attackers over 10 rounds"""
        rng = np.random.default_rng(13)
        state = DefenseState(kind="foolsgold")
        ids = list(range(10))
        for _ in range(10):
            honest = rng.normal(size=(8, 20))
            attack = rng.normal(size=20)
            weights = foolsgold_weights(state, ids, np.vstack([honest, attack, attack]))
        assert weights[:8].mean() > 0
        assert weights[8:].max() < 0.05 * weights[:8].mean()


class TestFreqFed:
    """Test low-frequency clustering"""

    def test_constant_delta_energy(self):
        """Test a constant delta v puts v * sqrt(d) in the first coefficient"""
        d, v = 16, 0.5
        features = low_frequency_features(np.full((1, d), v), cutoff=0.25)
        assert features.shape == (1, 4)
        assert features[0, 0] == pytest.approx(v * np.sqrt(d))
        assert np.allclose(features[0, 1:], 0.0)

    def test_flipped_minority_is_removed(self):
        """Test 8 benign deltas win against 2 flipped ones"""
        rng = np.random.default_rng(9)
        base = np.linspace(1.0, 0.2, 32)
        rows = [base + rng.normal(scale=0.05, size=32) for _ in range(8)] + [-base, -base]
        result = freqfed_aggregate(DefenseState(kind="freqfed"), np.zeros(32), updates_of(rows))
        assert result.retained == list(range(8))

    def test_invalid_cutoff(self):
        """Test a cutoff outside (0, 1] is rejected"""
        with pytest.raises(ConfigurationError):
            DefenseState(kind="freqfed", freq_cutoff=0.0)


class TestDefendDispatch:
    """Test the dispatcher"""

    def test_dispatch_matches_direct_call(self):
        """Test defend() routes to the configured defense"""
        updates = updates_of([[1.0], [1.1], [0.9], [1.05], [50.0]])
        direct = flame_aggregate(DefenseState(kind="flame"), np.zeros(1), updates)
        routed = defend(DefenseState(kind="flame"), np.zeros(1), updates)
        assert np.array_equal(direct.model, routed.model)
        assert direct.retained == routed.retained

    def test_unknown_defense(self):
        """Test an unknown kind is a configuration error"""
        with pytest.raises(ConfigurationError):
            DefenseState(kind="krum-plus")
