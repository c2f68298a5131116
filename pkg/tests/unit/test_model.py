"""
Unit tests for flat-parameter models
Tests dimensions, gradients against finite differences, local SGD and evaluation
"""

import pytest
import numpy as np

# Import components to test
import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__)))))

from fedsim.core.data import Dataset
from fedsim.core.errors import ConfigurationError, DataError, NumericalError
from fedsim.core.model import (
    ModelSpec,
    TrainingConfig,
    evaluate,
    flatten,
    init_model,
    local_update,
    loss_and_gradient,
    predict,
    unflatten,
)

FD_STEP = 1e-6
# pre-activations closer than this to zero make central differences straddle the ReLU kink
KINK_MARGIN = 1e-3


def finite_difference(theta, features, labels, spec):
    grad = np.zeros_like(theta)
    for i in range(theta.shape[0]):
        bump = np.zeros_like(theta)
        bump[i] = FD_STEP
        up, _ = loss_and_gradient(theta + bump, features, labels, spec)
        down, _ = loss_and_gradient(theta - bump, features, labels, spec)
        grad[i] = (up - down) / (2 * FD_STEP)
    return grad


def near_kink(theta, features, spec):
    h = features
    for w, b in unflatten(theta, spec)[:-1]:
        z = h @ w + b
        if np.min(np.abs(z)) < KINK_MARGIN:
            return True
        h = np.maximum(z, 0.0)
    return False


class TestModelSpec:
    """Test layer bookkeeping"""

    def test_logistic_dimension(self):
        """Test 2 features x 2 classes gives 4 weights + 2 biases"""
        spec = ModelSpec.logistic(2, 2)
        assert spec.dimension == 6
        assert init_model(spec, seed=3).shape == (6,)

    def test_mlp_dimension(self):
        """Test mlp {4, 8, 3} has 4*8+8 + 8*3+3 parameters"""
        spec = ModelSpec.mlp(4, [8], 3)
        assert spec.dimension == 67
        assert init_model(spec, seed=0).shape == (67,)

    def test_invalid_layer_sizes(self):
        """Test zero-width layers are rejected"""
        with pytest.raises(ConfigurationError):
            ModelSpec.mlp(4, [0], 3)
        with pytest.raises(ConfigurationError):
            ModelSpec("logistic-regression", (4, 8, 3))
        with pytest.raises(ConfigurationError):
            ModelSpec("mlp", (4, 3))

    def test_init_is_deterministic(self):
        """Test the same seed gives the same vector"""
        spec = ModelSpec.mlp(5, [7], 3)
        assert np.array_equal(init_model(spec, 11), init_model(spec, 11))
        assert not np.array_equal(init_model(spec, 11), init_model(spec, 12))

    def test_flatten_unflatten_layout(self):
        """Test weights then bias per layer"""
        spec = ModelSpec.mlp(2, [3], 2)
        theta = np.arange(spec.dimension, dtype=float)
        layers = unflatten(theta, spec)
        assert layers[0][0].shape == (2, 3)
        assert layers[0][1].tolist() == [6.0, 7.0, 8.0]
        assert np.array_equal(flatten(layers), theta)

    def test_unflatten_rejects_wrong_length(self):
        """Test a vector of the wrong length is a data error"""
        with pytest.raises(DataError):
            unflatten(np.zeros(5), ModelSpec.logistic(2, 2))


class TestLossAndGradient:
    """Test cross-entropy loss and backprop"""

    def test_hand_computed_logistic_gradient(self):
        """Test the class-1 weight gradient is softmax(0) - 1 = -0.5"""
        spec = ModelSpec.logistic(1, 2)
        loss, grad = loss_and_gradient(np.zeros(4), np.array([[1.0]]), np.array([1]), spec)
        assert loss == pytest.approx(np.log(2))
        # layout: W[0,0], W[0,1], b[0], b[1]
        assert grad[1] == pytest.approx(-0.5)
        assert grad[0] == pytest.approx(0.5)
        assert grad[3] == pytest.approx(-0.5)

    def test_gradient_matches_finite_differences(self):
        """Test analytic gradients on 200 random (spec, theta, batch) triples"""
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 200:
            features_in = int(rng.integers(1, 5))
            classes = int(rng.integers(2, 5))
            if rng.random() < 0.5:
                spec = ModelSpec.logistic(features_in, classes)
            else:
                spec = ModelSpec.mlp(features_in, [int(rng.integers(1, 5))], classes)
            theta = rng.normal(size=spec.dimension)
            batch = int(rng.integers(1, 6))
            features = rng.normal(size=(batch, features_in))
            labels = rng.integers(0, classes, size=batch)
            if spec.kind == "mlp" and near_kink(theta, features, spec):
                continue

            _, grad = loss_and_gradient(theta, features, labels, spec)
            numeric = finite_difference(theta, features, labels, spec)
            scale = max(1.0, float(np.max(np.abs(numeric))))
            assert np.max(np.abs(grad - numeric)) <= 1e-4 * scale
            checked += 1

    def test_label_out_of_range(self):
        """Test labels outside [0, L) are rejected"""
        spec = ModelSpec.logistic(2, 2)
        with pytest.raises(DataError):
            loss_and_gradient(np.zeros(6), np.ones((1, 2)), np.array([2]), spec)

    def test_empty_batch(self):
        """Test an empty feature batch is rejected"""
        spec = ModelSpec.logistic(2, 2)
        with pytest.raises(DataError):
            loss_and_gradient(np.zeros(6), np.zeros((0, 2)), np.zeros(0, dtype=int), spec)


class TestLocalUpdate:
    """Test local SGD"""

    def setup_method(self):
        """Single-sample shard from the hand-computed gradient case"""
        self.spec = ModelSpec.logistic(1, 2)
        self.shard = Dataset(np.array([[1.0]]), np.array([1]), 2)

    def test_single_step_by_hand(self):
        """Test E=1, eta=1 moves the class-1 weight from 0 to +0.5"""
        cfg = TrainingConfig(learning_rate=1.0, batch_size=1, local_iterations=1)
        phi = local_update(np.zeros(4), self.shard, cfg, self.spec, np.random.default_rng(0))
        assert phi[1] == pytest.approx(0.5)
        assert phi[0] == pytest.approx(-0.5)

    def test_zero_learning_rate_is_identity(self):
        """Test eta=0 returns theta exactly"""
        rng = np.random.default_rng(1)
        spec = ModelSpec.mlp(3, [4], 2)
        theta = init_model(spec, 5)
        shard = Dataset(rng.normal(size=(10, 3)), rng.integers(0, 2, size=10), 2)
        cfg = TrainingConfig(learning_rate=0.0, batch_size=4, local_iterations=3)
        phi = local_update(theta, shard, cfg, spec, np.random.default_rng(0))
        assert np.array_equal(phi, theta)

    def test_identical_streams_give_identical_models(self):
        """Test determinism under equal rng state"""
        rng = np.random.default_rng(2)
        spec = ModelSpec.mlp(3, [4], 2)
        theta = init_model(spec, 5)
        shard = Dataset(rng.normal(size=(30, 3)), rng.integers(0, 2, size=30), 2)
        cfg = TrainingConfig(learning_rate=0.1, batch_size=4, local_iterations=20)
        a = local_update(theta, shard, cfg, spec, np.random.default_rng(9))
        b = local_update(theta, shard, cfg, spec, np.random.default_rng(9))
        assert np.array_equal(a, b)

    def test_input_not_modified(self):
        """Test theta is copied, not updated in place"""
        theta = np.zeros(4)
        cfg = TrainingConfig(learning_rate=1.0, batch_size=1, local_iterations=1)
        local_update(theta, self.shard, cfg, self.spec, np.random.default_rng(0))
        assert np.all(theta == 0)

    def test_empty_shard(self):
        """Test an empty shard is a data error"""
        empty = Dataset(np.zeros((0, 1)), np.zeros(0, dtype=int), 2)
        cfg = TrainingConfig(learning_rate=1.0)
        with pytest.raises(DataError):
            local_update(np.zeros(4), empty, cfg, self.spec, np.random.default_rng(0))

    def test_non_finite_broadcast(self):
        """Test a non-finite broadcast model is a numerical error"""
        cfg = TrainingConfig(learning_rate=1.0)
        with pytest.raises(NumericalError):
            local_update(np.array([np.nan, 0, 0, 0]), self.shard, cfg, self.spec, np.random.default_rng(0))

    def test_config_validation(self):
        """Test negative learning rate and zero batch are rejected"""
        with pytest.raises(ConfigurationError):
            TrainingConfig(learning_rate=-0.1)
        with pytest.raises(ConfigurationError):
            TrainingConfig(learning_rate=0.1, batch_size=0)
        with pytest.raises(ConfigurationError):
            TrainingConfig(learning_rate=0.1, local_iterations=0)


class TestEvaluate:
    """Test accuracy and tie-breaking"""

    def test_zero_logits_predict_class_zero(self):
        """Test all-zero logits give accuracy equal to the class-0 frequency"""
        spec = ModelSpec.logistic(2, 4)
        labels = np.array([0, 0, 0, 1, 2, 3, 3, 1])
        test = Dataset(np.ones((8, 2)), labels, 4)
        assert np.all(predict(np.zeros(spec.dimension), test.features, spec) == 0)
        assert evaluate(np.zeros(spec.dimension), test, spec) == pytest.approx(3 / 8)

    def test_separable_problem_reaches_full_accuracy(self):
        """Test training to convergence on 20 linearly separable points"""
        rng = np.random.default_rng(4)
        features = np.vstack([rng.normal(loc=-3, size=(10, 2)), rng.normal(loc=3, size=(10, 2))])
        labels = np.array([0] * 10 + [1] * 10)
        data = Dataset(features, labels, 2)
        spec = ModelSpec.logistic(2, 2)
        cfg = TrainingConfig(learning_rate=0.5, batch_size=20, local_iterations=200)
        theta = local_update(np.zeros(spec.dimension), data, cfg, spec, np.random.default_rng(0))
        assert evaluate(theta, data, spec) == 1.0

    def test_empty_test_set(self):
        """Test evaluation on nothing is rejected"""
        spec = ModelSpec.logistic(2, 2)
        empty = Dataset(np.zeros((0, 2)), np.zeros(0, dtype=int), 2)
        with pytest.raises(DataError):
            evaluate(np.zeros(6), empty, spec)
