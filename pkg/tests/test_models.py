"""Full models: budget parity, forward contracts, prediction paths."""

import numpy as np
import pytest

from chexchain.errors import ConfigurationError
from chexchain.models import ModelConfig, build_model
from chexchain.presets import (
    CHEST_ENCODER_A,
    CHEST_ENCODER_B,
    SYNTH_ENCODER_A,
    SYNTH_ENCODER_B,
    chest_model,
    synth_model,
)
from chexchain.rng import substream


class TestParameterParity:
    """The two decoders get different encoder growth rates so that total
    learnable counts match within 5%."""

    def test_chest_scale_counts(self):
        a = build_model(chest_model("a"), seed=0)
        b = build_model(chest_model("b1"), seed=0)
        assert a.param_count() == 512_537
        assert b.param_count() == 517_255
        rel = abs(a.param_count() - b.param_count()) / a.param_count()
        assert rel <= 0.05

    def test_desk_scale_counts(self):
        a = build_model(synth_model("a"), seed=0)
        b = build_model(synth_model("b2"), seed=0)
        assert a.param_count() == 19_309
        assert b.param_count() == 19_465
        rel = abs(a.param_count() - b.param_count()) / a.param_count()
        assert rel <= 0.05

    def test_chain_variants_share_architecture(self):
        b1 = build_model(chest_model("b1"), seed=0)
        b2 = build_model(chest_model("b2"), seed=0)
        assert b1.param_count() == b2.param_count()

    def test_preset_encoder_dims(self):
        assert CHEST_ENCODER_A.growth_rate == 38
        assert CHEST_ENCODER_B.growth_rate == 19
        assert SYNTH_ENCODER_A.growth_rate == 10
        assert SYNTH_ENCODER_B.growth_rate == 5


class TestConfigValidation:
    def test_unknown_kind(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(kind="c", encoder=SYNTH_ENCODER_A, num_labels=5).validate()

    def test_chain_needs_hidden(self):
        with pytest.raises(ConfigurationError):
            ModelConfig(kind="b1", encoder=SYNTH_ENCODER_B, num_labels=5).validate()

    def test_is_chain_flag(self):
        assert not synth_model("a").is_chain
        assert synth_model("b1").is_chain and synth_model("b2").is_chain


class TestForward:
    def test_model_a_prob_shape(self, tiny_model_a):
        r = tiny_model_a.config.encoder.input_resolution
        x = substream(0, "test-models").random((3, 1, r, r))
        m = tiny_model_a.forward_probs(x, mode="train")
        assert m.shape == (3, tiny_model_a.config.num_labels)
        assert np.all((m.data > 0) & (m.data < 1))

    def test_model_b_requires_labels(self, tiny_model_b):
        r = tiny_model_b.config.encoder.input_resolution
        x = substream(1, "test-models").random((2, 1, r, r))
        with pytest.raises(ConfigurationError):
            tiny_model_b.forward_probs(x, mode="train")

    def test_model_b_teacher_forced_shape(self, tiny_model_b):
        cfg = tiny_model_b.config
        r = cfg.encoder.input_resolution
        rng = substream(2, "test-models")
        x = rng.random((2, 1, r, r))
        y = rng.integers(0, 2, size=(2, cfg.num_labels)).astype(np.float64)
        m = tiny_model_b.forward_probs(x, labels=y, mode="train")
        assert m.shape == (2, cfg.num_labels)

    def test_model_a_ignores_labels(self, tiny_model_a):
        r = tiny_model_a.config.encoder.input_resolution
        rng = substream(3, "test-models")
        x = rng.random((2, 1, r, r))
        y = np.ones((2, tiny_model_a.config.num_labels))
        with_labels = tiny_model_a.forward_probs(x, labels=y, mode="eval").data
        without = tiny_model_a.forward_probs(x, mode="eval").data
        assert np.array_equal(with_labels, without)


class TestPredict:
    def test_bits_threshold_probs(self, tiny_model_a):
        r = tiny_model_a.config.encoder.input_resolution
        x = substream(4, "test-models").random((4, 1, r, r))
        bits, probs = tiny_model_a.predict(x)
        assert bits.shape == probs.shape
        assert np.array_equal(bits, (probs > 0.5).astype(bits.dtype))

    def test_zeroed_model_predicts_half(self, tiny_encoder_config):
        cfg = ModelConfig(kind="b2", encoder=tiny_encoder_config,
                          num_labels=4, lstm_hidden=6)
        model = build_model(cfg, seed=0)
        model.zero_parameters()
        r = tiny_encoder_config.input_resolution
        x = substream(5, "test-models").random((2, 1, r, r))
        bits, probs = model.predict(x)
        assert np.allclose(probs, 0.5, atol=0)
        assert np.array_equal(bits, np.zeros_like(bits))

    def test_predict_is_deterministic(self, tiny_model_b):
        r = tiny_model_b.config.encoder.input_resolution
        x = substream(6, "test-models").random((3, 1, r, r))
        b1, p1 = tiny_model_b.predict(x)
        b2, p2 = tiny_model_b.predict(x)
        assert np.array_equal(b1, b2) and np.array_equal(p1, p2)


class TestZeroGrads:
    def test_clears_all(self, tiny_model_a):
        r = tiny_model_a.config.encoder.input_resolution
        from chexchain.autodiff import Graph
        from chexchain import ops
        from chexchain.metrics import weighted_bce

        rng = substream(7, "test-models")
        x = rng.random((2, 1, r, r))
        y = rng.integers(0, 2, size=(2, tiny_model_a.config.num_labels)).astype(float)
        with Graph() as g:
            m = tiny_model_a.forward_probs(x, mode="train")
            g.backward(weighted_bce(m, y))
        assert any(t.grad is not None for _, t in tiny_model_a.parameters())
        tiny_model_a.zero_grads()
        assert all(t.grad is None for _, t in tiny_model_a.parameters())
