"""Full models: encoder plus decoder, with a uniform parameter interface.

kind "a"  = independent sigmoid heads over x_enc.
kind "b1" = LSTM chain decoder, labels in frequency-ascending order.
kind "b2" = LSTM chain decoder, labels in alphabetical order.
The two b kinds share architecture; they differ only in the label ordering
applied by the data pipeline.
"""

from dataclasses import dataclass, field

import numpy as np

from . import decoders, encoder as enc
from .autodiff import Tensor, const
from .errors import ConfigurationError

MODEL_KINDS = ("a", "b1", "b2")


@dataclass(frozen=True)
class ModelConfig:
    kind: str
    encoder: enc.EncoderConfig
    num_labels: int
    lstm_hidden: int = 0

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigurationError(f"model kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.num_labels < 1:
            raise ConfigurationError("num_labels must be positive")
        if self.kind != "a" and self.lstm_hidden < 1:
            raise ConfigurationError("model_b requires lstm_hidden >= 1")
        self.encoder.validate()

    @property
    def is_chain(self) -> bool:
        return self.kind != "a"


class Model:
    def __init__(self, config: ModelConfig, encoder_params, head):
        self.config = config
        self.encoder_params = encoder_params
        self.head = head

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def is_chain(self) -> bool:
        return self.config.is_chain

    def parameters(self):
        return [
            (f"encoder.{n}", t) for n, t in self.encoder_params.parameters()
        ] + [(f"decoder.{n}", t) for n, t in self.head.parameters()]

    def param_count(self) -> int:
        return sum(int(t.data.size) for _, t in self.parameters())

    def zero_grads(self) -> None:
        for _, t in self.parameters():
            t.grad = None

    def zero_parameters(self) -> None:
        """Set every learnable to zero (uniform-prediction baseline)."""
        for _, t in self.parameters():
            t.data[...] = 0.0

    # ----- forward paths -------------------------------------------------

    def forward_probs(self, images, labels=None, mode: str = "eval") -> Tensor:
        """Bernoulli means (N,T) as a graph Tensor.

        model_a ignores labels; model_b teacher-forces them (required).
        """
        x = images if isinstance(images, Tensor) else const(images)
        x_enc = enc.encode(self.encoder_params, x, mode)
        if not self.is_chain:
            return decoders.decode_independent(x_enc, self.head)
        if labels is None:
            raise ConfigurationError("model_b forward_probs requires teacher-forcing labels")
        return decoders.decode_teacher_forced(x_enc, labels, self.head)

    def predict(self, images):
        """Inference bits and probabilities (numpy, no graph).

        model_a thresholds marginals at 0.5; model_b decodes greedily.
        Returns (bits (N,T) int, probs (N,T) float).
        """
        x = images if isinstance(images, Tensor) else const(images)
        x_enc = enc.encode(self.encoder_params, x, "eval")
        if self.is_chain:
            return decoders.decode_greedy(x_enc, self.head)
        m = decoders.decode_independent(x_enc, self.head).data
        return (m > 0.5).astype(np.int64), m


def build_model(config: ModelConfig, seed: int) -> Model:
    config.validate()
    encoder_params = enc.build_encoder(config.encoder, seed)
    d = encoder_params.encoded_dim
    if config.is_chain:
        head = decoders.build_lstm_decoder(d, config.lstm_hidden, config.num_labels, seed + 1)
    else:
        head = decoders.build_independent_head(d, config.num_labels, seed + 1)
    return Model(config, encoder_params, head)
