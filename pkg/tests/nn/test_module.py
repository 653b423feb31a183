"""Tests for Module plumbing and the basic layers."""

from __future__ import annotations

import math

import numpy as np
import pytest

from diffbev.core.errors import ConfigError
from diffbev.core.tensor import Tape, Tensor, reduce_sum
from diffbev.nn.layers import Conv2d, ConvBlock, Linear, Norm2d
from diffbev.nn.module import KAIMING_GAIN, Module, Parameter, uniform_init


class TwoLayer(Module):
    def __init__(self, rng: np.random.Generator) -> None:
        super().__init__()
        self.first = Linear(3, 4, rng)
        self.blocks = [ConvBlock(2, 2, rng), ConvBlock(2, 2, rng)]


class TestModule:
    """Tests for parameter discovery and state dicts."""

    def test_named_parameters_follow_assignment_order(self) -> None:
        """Names should be dotted paths with list positions."""
        names = [name for name, _ in TwoLayer(np.random.default_rng(0)).named_parameters()]
        assert names[:2] == ["first.weight", "first.bias"]
        assert "blocks.1.conv.weight" in names
        assert "blocks.0.norm.scale" in names

    def test_named_buffers(self) -> None:
        """Norm running statistics should be exposed as buffers."""
        names = [name for name, _ in TwoLayer(np.random.default_rng(0)).named_buffers()]
        assert names == [
            "blocks.0.norm.running_mean",
            "blocks.0.norm.running_var",
            "blocks.1.norm.running_mean",
            "blocks.1.norm.running_var",
        ]

    def test_num_parameters(self) -> None:
        """Should count every parameter entry."""
        model = TwoLayer(np.random.default_rng(0))
        conv_block = 2 * 2 * 9 + 2 + 2 + 2
        assert model.num_parameters() == 3 * 4 + 4 + 2 * conv_block

    def test_state_dict_round_trip(self) -> None:
        """Loading one model's state into another should make them identical."""
        a = TwoLayer(np.random.default_rng(0))
        b = TwoLayer(np.random.default_rng(1))
        b.load_state_dict(a.state_dict())
        for (name, pa), (_, pb) in zip(a.named_parameters(), b.named_parameters(), strict=True):
            np.testing.assert_array_equal(pa.data, pb.data, err_msg=name)

    def test_state_dict_is_a_copy(self) -> None:
        """Mutating a state dict should not touch the model."""
        model = TwoLayer(np.random.default_rng(0))
        state = model.state_dict()
        state["first.bias"][:] = 5.0
        assert (model.first.bias.data == 0).all()  # type: ignore[union-attr]

    def test_load_missing_key_strict(self) -> None:
        """Strict loading should reject missing keys."""
        model = TwoLayer(np.random.default_rng(0))
        state = model.state_dict()
        del state["first.weight"]
        with pytest.raises(ConfigError, match="missing"):
            model.load_state_dict(state)

    def test_load_shape_mismatch(self) -> None:
        """Loading a wrongly shaped value should raise ConfigError."""
        model = TwoLayer(np.random.default_rng(0))
        state = model.state_dict()
        state["first.bias"] = np.zeros(5)
        with pytest.raises(ConfigError, match="shape"):
            model.load_state_dict(state)

    def test_train_eval_propagates(self) -> None:
        """eval() should reach nested modules."""
        model = TwoLayer(np.random.default_rng(0))
        model.eval()
        assert not model.blocks[1].norm.training
        model.train()
        assert model.blocks[1].norm.training

    def test_seeded_initialization_is_deterministic(self) -> None:
        """Equal seeds should give equal weights."""
        a = TwoLayer(np.random.default_rng(3)).state_dict()
        b = TwoLayer(np.random.default_rng(3)).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestInit:
    """Tests for uniform_init."""

    def test_bound(self) -> None:
        """Draws should stay within sqrt(6)/sqrt(fan_in)."""
        w = uniform_init(np.random.default_rng(0), (64, 16), 16)
        assert isinstance(w, Parameter)
        assert np.abs(w.data).max() <= KAIMING_GAIN / math.sqrt(16)
        assert w.requires_grad


class TestLayers:
    """Tests for Conv2d, Linear and Norm2d."""

    def test_conv_same_padding(self) -> None:
        """A 3×3 conv should keep the spatial size."""
        conv = Conv2d(2, 5, 3, np.random.default_rng(0))
        assert conv(Tensor(np.ones((2, 6, 7)))).shape == (5, 6, 7)

    def test_linear(self) -> None:
        """Linear should compute x·W + b."""
        layer = Linear(2, 1, np.random.default_rng(0))
        layer.weight.data[:] = [[1.0], [2.0]]
        assert layer.bias is not None
        layer.bias.data[:] = 0.5
        np.testing.assert_allclose(layer(Tensor([[1.0, 1.0]])).data, [[3.5]])

    def test_norm_buffers_update_only_in_training(self) -> None:
        """Running statistics should stay fixed in eval mode."""
        norm = Norm2d(1)
        x = Tensor(np.full((1, 2, 2), 4.0))
        norm.eval()
        norm(x)
        np.testing.assert_array_equal(dict(norm.named_buffers())["running_mean"].data, [0.0])
        norm.train()
        norm(x)
        np.testing.assert_allclose(dict(norm.named_buffers())["running_mean"].data, [0.4])

    def test_norm_without_running_statistics(self) -> None:
        """An untracked norm should keep no buffers and give the same output in both modes."""
        norm = Norm2d(2, track_running_stats=False)
        x = Tensor(np.arange(8.0).reshape(2, 2, 2))
        train_out = norm(x).data
        norm.eval()
        assert list(norm.named_buffers()) == []
        np.testing.assert_array_equal(norm(x).data, train_out)

    def test_conv_block_forwards_tracking_flag(self) -> None:
        """ConvBlock should pass track_running_stats to its norm."""
        block = ConvBlock(2, 2, np.random.default_rng(0), track_running_stats=False)
        assert not block.norm.track_running_stats
        assert list(block.named_buffers()) == []

    def test_zero_grad(self) -> None:
        """zero_grad should clear every parameter gradient."""
        layer = Linear(2, 2, np.random.default_rng(0))
        with Tape() as tape:
            tape.backward(reduce_sum(layer(Tensor(np.ones((1, 2))))))
        assert layer.weight.grad is not None
        layer.zero_grad()
        assert all(p.grad is None for p in layer.parameters())
