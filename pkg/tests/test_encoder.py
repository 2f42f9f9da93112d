"""Encoder: parameter-count arithmetic, spatial validation, determinism."""

import numpy as np
import pytest

from chexchain.autodiff import const
from chexchain.encoder import (
    EncoderConfig,
    build_encoder,
    derived_encoded_dim,
    encode,
)
from chexchain.errors import ConfigurationError
from chexchain.rng import substream


def formula_param_count(cfg: EncoderConfig):
    """Independent count: stem conv + per-convblock BN+conv + transitions."""
    import math

    total = cfg.initial_channels * 1 * 7 * 7 + cfg.initial_channels  # stem
    d = cfg.initial_channels
    for b in range(cfg.num_dense_blocks):
        for _ in range(cfg.convblocks_per_dense_block):
            total += 2 * d  # bn gamma/beta
            total += cfg.growth_rate * d * 3 * 3 + cfg.growth_rate
            d += cfg.growth_rate
        if b < cfg.num_dense_blocks - 1:
            dout = math.floor(cfg.transition_compression * d)
            total += 2 * d
            total += dout * d * 1 * 1 + dout
            d = dout
    return total


class TestChannelArithmetic:
    def test_encoded_dim_no_compression(self):
        cfg = EncoderConfig(64, growth_rate=5, num_dense_blocks=3,
                            convblocks_per_dense_block=2, initial_channels=4)
        # 4 -> +10 -> 14 -> +10 -> 24 -> +10 -> 34
        assert derived_encoded_dim(cfg) == 34

    def test_encoded_dim_with_compression(self):
        cfg = EncoderConfig(512, growth_rate=38, num_dense_blocks=4,
                            convblocks_per_dense_block=3, initial_channels=16,
                            transition_compression=0.53)
        # 16+114=130 ->68; 68+114=182 ->96; 96+114=210 ->111; 111+114=225
        assert derived_encoded_dim(cfg) == 225

    def test_explicit_encoded_dim_checked(self):
        cfg = EncoderConfig(64, 5, 3, 2, initial_channels=4, encoded_dim=99)
        with pytest.raises(ConfigurationError):
            build_encoder(cfg, seed=0)


class TestParamCount:
    @pytest.mark.parametrize(
        "cfg",
        [
            EncoderConfig(32, 4, 2, 2, initial_channels=4),
            EncoderConfig(64, 5, 3, 2, initial_channels=4),
            EncoderConfig(64, 10, 3, 2, initial_channels=4),
            EncoderConfig(512, 38, 4, 3, initial_channels=16,
                          transition_compression=0.53),
        ],
    )
    def test_matches_formula(self, cfg):
        params = build_encoder(cfg, seed=0)
        assert params.param_count() == formula_param_count(cfg)


class TestValidation:
    def test_odd_spatial_rejected(self):
        # 48 -> stem 24 -> pool 12 -> block pools 6, 3: 3 is odd with a
        # transition still pending at 4 blocks
        cfg = EncoderConfig(48, 4, 4, 1, initial_channels=4)
        with pytest.raises(ConfigurationError):
            build_encoder(cfg, seed=0)

    def test_bad_compression_rejected(self):
        with pytest.raises(ConfigurationError):
            EncoderConfig(64, 4, 2, 2, initial_channels=4,
                          transition_compression=0.0).validate()

    def test_wrong_input_resolution_rejected(self, tiny_encoder_config):
        params = build_encoder(tiny_encoder_config, seed=0)
        bad = const(np.zeros((1, 1, 64, 64)))
        with pytest.raises(ConfigurationError):
            encode(params, bad, "train")

    def test_wrong_channel_count_rejected(self, tiny_encoder_config):
        params = build_encoder(tiny_encoder_config, seed=0)
        r = tiny_encoder_config.input_resolution
        with pytest.raises(ConfigurationError):
            encode(params, const(np.zeros((1, 3, r, r))), "train")


class TestForward:
    def test_output_shape(self, tiny_encoder_config):
        params = build_encoder(tiny_encoder_config, seed=0)
        r = tiny_encoder_config.input_resolution
        x = const(substream(0, "test-encoder").random((3, 1, r, r)))
        out = encode(params, x, "train")
        assert out.shape == (3, params.encoded_dim)

    def test_deterministic_build_and_forward(self, tiny_encoder_config):
        r = tiny_encoder_config.input_resolution
        x = const(substream(1, "test-encoder").random((2, 1, r, r)))
        outs = []
        for _ in range(2):
            params = build_encoder(tiny_encoder_config, seed=5)
            outs.append(encode(params, x, "train").data)
        assert np.array_equal(outs[0], outs[1])

    def test_seed_changes_init(self, tiny_encoder_config):
        a = build_encoder(tiny_encoder_config, seed=0)
        b = build_encoder(tiny_encoder_config, seed=1)
        assert not np.array_equal(a.tensors["stem.w"].data, b.tensors["stem.w"].data)

    def test_fresh_model_evaluates_with_default_bn_stats(self, tiny_encoder_config):
        # build_* pre-allocates running stats (mean 0, var 1) so an untrained
        # model can be evaluated; only a raw BNState() refuses eval mode.
        params = build_encoder(tiny_encoder_config, seed=0)
        r = tiny_encoder_config.input_resolution
        x = const(substream(3, "test-encoder").random((2, 1, r, r)))
        out = encode(params, x, "eval")
        assert np.all(np.isfinite(out.data))
        st = next(iter(params.bn_states.values()))
        assert np.all(st.running_mean == 0.0) and np.all(st.running_var == 1.0)

    def test_eval_is_batch_independent(self, tiny_encoder_config):
        # after a training pass fixes BN stats, each example's encoding
        # must not depend on its batch companions
        params = build_encoder(tiny_encoder_config, seed=2)
        r = tiny_encoder_config.input_resolution
        rng = substream(2, "test-encoder")
        batch = const(rng.random((4, 1, r, r)))
        encode(params, batch, "train")
        full = encode(params, batch, "eval").data
        solo = encode(params, const(batch.data[1:2]), "eval").data
        assert np.allclose(full[1:2], solo, atol=1e-12)
