"""Shared fixtures: a tiny synthetic dataset on disk and small model configs."""

import os

import numpy as np
import pytest

from chexchain import data, synth
from chexchain.encoder import EncoderConfig
from chexchain.models import ModelConfig, build_model


@pytest.fixture(scope="session")
def small_spec():
    return synth.default_spec(resolution=32, seed=7)


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory, small_spec):
    """40-example synthetic dataset at 32x32, written once per session."""
    out = tmp_path_factory.mktemp("synthdata")
    synth.write_dataset(small_spec, 40, str(out), seed=11)
    return str(out)


@pytest.fixture(scope="session")
def small_dataset(synth_dir, small_spec):
    return data.load_dataset(
        os.path.join(synth_dir, "images"),
        os.path.join(synth_dir, "labels.csv"),
        32,
        range(5),
        label_names=small_spec.label_names,
    )


@pytest.fixture(scope="session")
def tiny_encoder_config():
    return EncoderConfig(
        input_resolution=32,
        growth_rate=4,
        num_dense_blocks=2,
        convblocks_per_dense_block=2,
        initial_channels=4,
    )


@pytest.fixture(scope="session")
def tiny_config_a(tiny_encoder_config):
    return ModelConfig(kind="a", encoder=tiny_encoder_config, num_labels=5)


@pytest.fixture(scope="session")
def tiny_config_b(tiny_encoder_config):
    return ModelConfig(
        kind="b2", encoder=tiny_encoder_config, num_labels=5, lstm_hidden=8
    )


@pytest.fixture()
def tiny_model_a(tiny_config_a):
    # fresh per test: forward passes mutate batch-norm running state
    return build_model(tiny_config_a, seed=0)


@pytest.fixture()
def tiny_model_b(tiny_config_b):
    return build_model(tiny_config_b, seed=0)


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(1234))
