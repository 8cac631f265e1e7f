"""
Tests for kernel policies, presets, masks and policy-aware updates.
"""
import numpy as np
import pytest
import sys
from pathlib import Path

# Add project root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.config import DEFAULT_ARCHITECTURE
from app.errors import ConfigurationError, PolicyError, SynthesisError
from app.services.architecture import parse_architecture
from app.services.gabor import make_gabor_bank
from app.services.network import Network, sgd_step
from app.services.policy import (
    TRAINABLE,
    FixedGabor,
    NetworkConfig,
    PartialGabor,
    apply_updates,
    bias_mask,
    build_config,
    gradient_mask,
    init_layer_states,
    masks_for_epoch,
    sweep_configs,
    with_partial_training,
)
from app.services import tensor_core as tc


@pytest.fixture(scope="module")
def lenet():
    return parse_architecture(DEFAULT_ARCHITECTURE)


@pytest.fixture(scope="module")
def bank12():
    return make_gabor_bank(12)


@pytest.fixture
def small_layers():
    return parse_architecture("400 (5x5)2c 2s (5x5)4c 2s 2o")


def _train_batch(network, config, fraction, seed=0, n=4):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(n,) + tuple(network.input_shape)).astype(network.dtype)
    targets = tc.one_hot(rng.integers(network.output_size, size=n), network.output_size, dtype=network.dtype)
    masks, biases = masks_for_epoch(config, fraction)
    return network.loss_and_gradients(x, targets, masks, biases)


class TestPresets:
    """Tests for build_config presets on the MNIST architecture."""

    def test_baseline_is_all_trainable(self, lenet, bank12):
        """Should mark every slot trainable and reference no bank entry."""
        config = build_config("baseline", 6, bank12, lenet)
        assert config.name == "baseline"
        assert all(status == TRAINABLE for _, status in config.slots())
        assert config.referenced_entries() == []

    def test_gabor1(self, lenet, bank12):
        """Should fix every first-layer map to the 6-orientation bank."""
        config = build_config("gabor1", 6, bank12, lenet)
        assert config.fixed_map_count(0) == 6
        assert config.fixed_map_count(2) == 0
        assert len(config.referenced_entries()) == 6
        expected = bank12.orientation_subset(6).keys
        assert [config.status(0, j, 0).entry for j in range(6)] == expected

    def test_gabor_all(self, lenet, bank12):
        """Should fix both conv layers and use 2k distinct entries."""
        config = build_config("gabor-all", 6, bank12, lenet)
        assert config.fixed_map_count(0) == 6
        assert config.fixed_map_count(2) == 12
        assert len(config.referenced_entries()) == 12

    def test_half_half(self, lenet, bank12):
        """Should fix the first half of the second layer with the k-bank."""
        config = build_config("half-half", 6, bank12, lenet)
        assert config.name == "half-half"
        assert config.fixed_map_count(2) == 6
        for j in range(6):
            row = config.policy[2][j]
            assert all(s == FixedGabor(config.status(0, j, 0).entry) for s in row)
        for j in range(6, 12):
            assert all(s == TRAINABLE for s in config.policy[2][j])
        assert len(config.referenced_entries()) == 6

    def test_half_half_distinct(self, lenet, bank12):
        """Should use orientations outside the k-bank when asked."""
        config = build_config("half-half", 6, bank12, lenet, distinct_layer2_bank=True)
        assert config.name == "half-half-distinct"
        first = {config.status(0, j, 0).entry for j in range(6)}
        second = {config.status(2, j, 0).entry for j in range(6)}
        assert not first & second
        assert len(config.referenced_entries()) == 12

    def test_aliases(self, lenet, bank12):
        """Should accept preset aliases."""
        assert build_config("HH", 6, bank12, lenet).name == "half-half"

    def test_unknown_preset(self, lenet, bank12):
        """Should raise ConfigurationError on an unknown preset."""
        with pytest.raises(ConfigurationError):
            build_config("gabor-most", 6, bank12, lenet)

    def test_width_mismatch(self, lenet, bank12):
        """Should reject a base width different from the first layer."""
        with pytest.raises(ConfigurationError):
            build_config("gabor1", 4, bank12, lenet)

    def test_bank_too_small(self, lenet):
        """Should reject a bank that lacks the needed orientations."""
        with pytest.raises((ConfigurationError, SynthesisError)):
            build_config("gabor-all", 6, make_gabor_bank(6), lenet)


class TestSweep:
    """Tests for sweep_configs."""

    def test_endpoints_match_presets(self, lenet, bank12):
        """Should reproduce gabor1, half-half and gabor-all at i = 0, k, 2k."""
        for i, preset in ((0, "gabor1"), (6, "half-half"), (12, "gabor-all")):
            assert sweep_configs(6, i, bank12, lenet).same_policy(build_config(preset, 6, bank12, lenet))

    def test_fixed_counts(self, lenet, bank12):
        """Should fix exactly i maps in the second layer."""
        for i in (0, 3, 6, 9, 12):
            config = sweep_configs(6, i, bank12, lenet)
            assert config.name == f"sweep-{i}"
            assert config.fixed_map_count(0) == 6
            assert config.fixed_map_count(2) == i

    def test_out_of_range(self, lenet, bank12):
        """Should reject i outside [0, maps]."""
        with pytest.raises(ConfigurationError):
            sweep_configs(6, 13, bank12, lenet)

    def test_stored_bank_entries(self, lenet, bank12):
        """Should store the union of the first-layer and second-layer entries."""
        # i=9 takes the first nine 15-degree entries; 150 degrees comes from the first layer
        stored = {i: len(sweep_configs(6, i, bank12, lenet).bank) for i in (0, 3, 6, 9, 12)}
        assert stored == {0: 6, 3: 6, 6: 6, 9: 10, 12: 12}


class TestNetworkConfigValidation:
    """Tests for NetworkConfig invariants."""

    def test_unknown_entry(self, small_layers):
        """Should reject a slot that references a missing entry."""
        grid = ((FixedGabor("gabor/missing"),), (TRAINABLE,))
        policy = {0: grid, 2: tuple((TRAINABLE,) * 2 for _ in range(4))}
        with pytest.raises(PolicyError):
            NetworkConfig("bad", small_layers, policy)

    def test_missing_layer(self, small_layers):
        """Should reject a policy that does not cover every conv layer."""
        with pytest.raises(PolicyError):
            NetworkConfig("bad", small_layers, {0: ((TRAINABLE,), (TRAINABLE,))})

    def test_shared_entry_needs_one_schedule(self, small_layers):
        """Should reject slots sharing an entry under different schedules."""
        bank = make_gabor_bank(2)
        key = bank.keys[0]
        policy = {
            0: ((FixedGabor(key),), (TRAINABLE,)),
            2: ((PartialGabor(key, 0.5),) * 2,) + tuple((TRAINABLE,) * 2 for _ in range(3)),
        }
        with pytest.raises(PolicyError):
            NetworkConfig("bad", small_layers, policy, bank)

    def test_freeze_fraction_range(self):
        """Should reject freeze points outside (0, 1)."""
        with pytest.raises(PolicyError):
            PartialGabor("gabor/x", 1.0)


class TestMasks:
    """Tests for gradient and bias masks."""

    def test_fixed_and_trainable(self, lenet, bank12):
        """Should mask fixed slots out and keep trainable ones."""
        config = build_config("half-half", 6, bank12, lenet)
        mask = gradient_mask(config, 2, 0.0)
        assert mask.shape == (12, 6)
        assert not mask[:6].any()
        assert mask[6:].all()
        assert not gradient_mask(config, 0, 0.0).any()

    def test_bias_follows_row(self, lenet, bank12):
        """Should train a bias iff any slot of its map trains."""
        config = build_config("half-half", 6, bank12, lenet)
        np.testing.assert_array_equal(bias_mask(config, 2, 0.0), [False] * 6 + [True] * 6)

    def test_partial_schedule(self, lenet, bank12):
        """Should train partial slots strictly before the freeze point."""
        config = build_config("gabor-all", 6, bank12, lenet, partial_fraction=0.2)
        assert config.name == "gabor-all-partial0.2"
        assert gradient_mask(config, 2, 0.0).all()
        assert gradient_mask(config, 2, 0.1).all()
        assert not gradient_mask(config, 2, 0.2).any()
        assert not gradient_mask(config, 2, 0.9).any()

    def test_partial_from_layer_pins_shared_entries(self, lenet, bank12):
        """Should keep entries shared with a pinned layer fixed."""
        config = build_config("half-half", 6, bank12, lenet, partial_fraction=0.5, partial_from_layer=1)
        # the half-half entries all come from the pinned first layer
        assert not gradient_mask(config, 2, 0.0)[:6].any()
        assert config.name == "half-half"

    @pytest.mark.parametrize("preset,from_layer", [
        ("gabor-all", 0),
        ("half-half", 0),
        ("half-half", 1),
    ])
    def test_masks_never_grow(self, lenet, bank12, preset, from_layer):
        """Should only remove trainable slots as the epoch fraction increases."""
        config = build_config(preset, 6, bank12, lenet, partial_fraction=0.3, partial_from_layer=from_layer)
        previous = None
        for fraction in np.linspace(0.0, 1.0, 21):
            slots, biases = masks_for_epoch(config, float(fraction))
            if previous is not None:
                for layer, mask in slots.items():
                    assert not (mask & ~previous[0][layer]).any()
                    assert not (biases[layer] & ~previous[1][layer]).any()
            previous = (slots, biases)

    def test_non_conv_layer(self, lenet, bank12):
        """Should raise PolicyError for a layer without a policy."""
        config = build_config("gabor1", 6, bank12, lenet)
        with pytest.raises(PolicyError):
            gradient_mask(config, 1, 0.0)

    def test_with_partial_training_rejects_bad_fraction(self, lenet, bank12):
        """Should reject a freeze point outside (0, 1)."""
        config = build_config("gabor1", 6, bank12, lenet)
        with pytest.raises(PolicyError):
            with_partial_training(config.policy, 0.0)


class TestInitLayerStates:
    """Tests for init_layer_states."""

    def test_fixed_slots_hold_bank_kernels(self, lenet, bank12):
        """Should place the bank kernel in every fixed slot."""
        config = build_config("gabor-all", 6, bank12, lenet)
        states = init_layer_states(config, seed=0)
        for (layer, o, i), status in config.slots():
            expected = config.bank.entry(status.entry).kernel.astype(np.float32)
            assert np.array_equal(states[layer].kernels[o, i], expected)
            assert states[layer].origin[o][i] == status.entry

    def test_trainable_slots_match_baseline(self, lenet, bank12):
        """Should draw the same initial values as the baseline in trainable slots."""
        base = init_layer_states(build_config("baseline", 6, bank12, lenet), seed=3)
        half = init_layer_states(build_config("half-half", 6, bank12, lenet), seed=3)
        assert np.array_equal(base[2].kernels[6:], half[2].kernels[6:])
        assert np.array_equal(base[4].weights, half[4].weights)

    def test_biases_start_at_zero(self, lenet, bank12):
        """Should start every bias at 0."""
        states = init_layer_states(build_config("gabor1", 6, bank12, lenet), seed=0)
        assert not states[0].biases.any()
        assert not states[2].biases.any()


class TestApplyUpdates:
    """Tests for apply_updates."""

    @pytest.fixture
    def small_bank(self):
        return make_gabor_bank(4)

    def test_baseline_equals_plain_sgd(self, small_layers, small_bank):
        """Should update a baseline network exactly like plain SGD."""
        config = build_config("baseline", 2, small_bank, small_layers)
        a = Network(small_layers, init_layer_states(config, seed=1))
        b = a.copy()
        _, grads = _train_batch(a, config, 0.0)
        apply_updates(config, a.states, grads, 0.5)
        sgd_step(b, grads, 0.5)
        assert a.checksum() == b.checksum()

    def test_fixed_slots_do_not_change(self, small_layers, small_bank):
        """Should leave fixed kernels and their biases untouched."""
        config = build_config("half-half", 2, small_bank, small_layers)
        network = Network(small_layers, init_layer_states(config, seed=2))
        before = [s.copy() if s is not None else None for s in network.states]
        for step in range(3):
            _, grads = _train_batch(network, config, 0.0, seed=step)
            apply_updates(config, network.states, grads, 1.0)
        assert np.array_equal(network.states[0].kernels, before[0].kernels)
        assert np.array_equal(network.states[0].biases, before[0].biases)
        assert np.array_equal(network.states[2].kernels[:2], before[2].kernels[:2])
        assert not network.states[2].biases[:2].any()
        assert not np.array_equal(network.states[2].kernels[2:], before[2].kernels[2:])

    def test_shared_partial_entries_stay_identical(self, small_layers, small_bank):
        """Should give slots sharing a partial entry one shared update."""
        config = build_config("half-half", 2, small_bank, small_layers, partial_fraction=0.5)
        network = Network(small_layers, init_layer_states(config, seed=3))
        start = network.states[0].kernels[0, 0].copy()
        _, grads = _train_batch(network, config, 0.0)
        total = grads[0].kernel_grad[0, 0] + grads[2].kernel_grad[0].sum(axis=0)
        apply_updates(config, network.states, grads, 0.25, 0.0)

        expected = start - np.float32(0.25) * total
        np.testing.assert_allclose(network.states[0].kernels[0, 0], expected, rtol=1e-5, atol=1e-7)
        for layer, o, i in config.entry_slots()[config.status(0, 0, 0).entry]:
            assert np.array_equal(network.states[layer].kernels[o, i], network.states[0].kernels[0, 0])

    def test_partial_slots_freeze_after_point(self, small_layers, small_bank):
        """Should stop updating partial slots once the freeze point is reached."""
        config = build_config("gabor-all", 2, small_bank, small_layers, partial_fraction=0.5)
        network = Network(small_layers, init_layer_states(config, seed=4))
        frozen = network.states[0].kernels.copy()
        _, grads = _train_batch(network, config, 0.5)
        apply_updates(config, network.states, grads, 1.0, 0.5)
        assert np.array_equal(network.states[0].kernels, frozen)

    def test_mask_mismatch(self, small_layers, small_bank):
        """Should raise PolicyError when gradients came from a different mask."""
        config = build_config("gabor1", 2, small_bank, small_layers)
        network = Network(small_layers, init_layer_states(config, seed=5))
        _, grads = network.loss_and_gradients(
            np.zeros((1, 1, 20, 20), dtype=np.float32), np.zeros((1, 2), dtype=np.float32)
        )
        with pytest.raises(PolicyError):
            apply_updates(config, network.states, grads, 1.0)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
