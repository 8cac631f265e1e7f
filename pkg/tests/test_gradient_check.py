"""
Tests for backprop against central finite differences.
"""
import numpy as np
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import GRAD_CHECK_TOLERANCE
from app.errors import GradientCheckError
from app.services import tensor_core as tc
from app.services.architecture import parse_architecture
from app.services.gabor import make_gabor_bank
from app.services.network import Network, numerical_gradient_check, relative_error
from app.services.policy import build_config, init_layer_states, masks_for_epoch

TINY_ARCHITECTURES = [
    "64 (3x3)2c 2s 3o",
    "36 (3x3)2c 2s 2o",
    "64 (3x3)1c 2s 3o",
    "49 (3x3)2c 5s 2o",
    "64 (3x3)2c 2s 4fc 3o",
]


def _sample(layers, seed):
    rng = np.random.default_rng(seed)
    image = rng.uniform(0.0, 1.0, size=layers[0].in_shape)
    label = int(rng.integers(layers[-1].size))
    return image, label


class TestRelativeError:
    """Tests for relative_error."""

    def test_relative_for_large_values(self):
        """Should divide by the larger magnitude."""
        assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)

    def test_absolute_below_floor(self):
        """Should compare tiny gradients against the floor."""
        assert relative_error(0.0, 1e-8) == pytest.approx(1e-5)


class TestNumericalGradientCheck:
    """Tests for numerical_gradient_check."""

    @pytest.mark.parametrize("trial", range(10))
    def test_random_tiny_networks_pass(self, trial):
        """Should agree with finite differences on ten random tiny networks."""
        layers = parse_architecture(TINY_ARCHITECTURES[trial % len(TINY_ARCHITECTURES)])
        network = Network.build(layers, seed=100 + trial, dtype=np.float64)
        report = numerical_gradient_check(network, _sample(layers, trial))
        assert report.passed, report.to_dict()
        assert report.max_relative_error < GRAD_CHECK_TOLERANCE
        assert report.parameters_checked > 0

    def test_parameter_count_covers_every_weight(self):
        """Should check every kernel, weight and bias when no mask is given."""
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        network = Network.build(layers, seed=1, dtype=np.float64)
        report = numerical_gradient_check(network, _sample(layers, 1))
        # conv 2*9 + 2, fc 3*18 + 3
        assert report.parameters_checked == 20 + 57

    def test_float32_network_is_checked_in_float64(self):
        """Should check a float32 network through a float64 copy."""
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        network = Network.build(layers, seed=2)
        before = network.checksum()
        report = numerical_gradient_check(network, _sample(layers, 2))
        assert report.passed
        assert network.checksum() == before

    def test_accepts_target_vector_and_2d_image(self):
        """Should accept an [H, W] image and an explicit target vector."""
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        network = Network.build(layers, seed=3, dtype=np.float64)
        image, _ = _sample(layers, 3)
        report = numerical_gradient_check(network, (image[0], np.array([0.0, 1.0, 0.0])))
        assert report.passed

    def test_fixed_slots_are_skipped(self):
        """Should only check slots the mask marks trainable."""
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        config = build_config("gabor1", 2, make_gabor_bank(2, size=3), layers)
        masks, _ = masks_for_epoch(config, 0.0)
        network = Network(layers, init_layer_states(config, 4, np.float64))
        report = numerical_gradient_check(network, _sample(layers, 4), masks=masks)
        assert report.passed
        # only the dense layer trains
        assert report.parameters_checked == 57
        assert report.worst_parameter.startswith("layer2.")

    def test_detects_a_wrong_gradient(self, monkeypatch):
        """Should fail when backprop returns a wrong weight gradient."""
        original = tc.fc_backward

        def doubled(*args, **kwargs):
            grads = original(*args, **kwargs)
            grads.weight_grad = grads.weight_grad * 2
            return grads

        monkeypatch.setattr(tc, "fc_backward", doubled)
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        network = Network.build(layers, seed=5, dtype=np.float64)
        report = numerical_gradient_check(network, _sample(layers, 5))
        assert not report.passed
        assert report.worst_parameter.startswith("layer2.weights")

    def test_non_finite_raises(self):
        """Should raise GradientCheckError when the forward pass is not finite."""
        layers = parse_architecture("64 (3x3)2c 2s 3o")
        network = Network.build(layers, seed=6, dtype=np.float64)
        network.states[2].weights[0, 0] = np.nan
        with pytest.raises(GradientCheckError):
            numerical_gradient_check(network, _sample(layers, 6))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
