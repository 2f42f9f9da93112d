"""Label decoders: independent sigmoid heads and the sigmoid-LSTM chain.

The independent head predicts every label's Bernoulli mean from x_enc alone.
The LSTM decoder predicts labels sequentially: gates condition on x_enc, the
recurrent state, and the previous label bit; training feeds ground-truth
previous bits (teacher forcing), inference feeds the thresholded prediction
(greedy decoding). The decoder always runs exactly T steps.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import ops
from .autodiff import Tensor, const
from .errors import ConfigurationError, NumericDomainError, UsageError
from .rng import substream

GATES = ("i", "o", "f", "g")


class IndependentHeadParams:
    def __init__(self, encoded_dim: int, num_labels: int):
        self.encoded_dim = encoded_dim
        self.num_labels = num_labels
        self.tensors = {}

    def parameters(self):
        return list(self.tensors.items())


def build_independent_head(encoded_dim: int, num_labels: int, seed: int) -> IndependentHeadParams:
    p = IndependentHeadParams(encoded_dim, num_labels)
    rng = substream(seed, "init")
    w = rng.normal(0.0, math.sqrt(2.0 / encoded_dim), size=(encoded_dim, num_labels))
    p.tensors["head.w"] = Tensor(w, requires_grad=True, name="head.w")
    p.tensors["head.b"] = Tensor(np.zeros(num_labels), requires_grad=True, name="head.b")
    return p


def decode_independent(x_enc: Tensor, params: IndependentHeadParams) -> Tensor:
    if x_enc.data.ndim != 2 or x_enc.data.shape[1] != params.encoded_dim:
        raise ConfigurationError(
            f"decode_independent: x_enc shape {x_enc.data.shape} != (N, {params.encoded_dim})"
        )
    return ops.sigmoid(ops.affine(x_enc, params.tensors["head.w"], params.tensors["head.b"]))


class LstmDecoderParams:
    """Gate matrices W (DxH), U (HxH), V (1xH), biases b (H), output head
    q (H) and b_l (scalar), plus unshared one-hidden-layer tanh init nets
    f_h0 and f_c0 (D -> H -> H)."""

    def __init__(self, encoded_dim: int, hidden: int, num_labels: int):
        self.encoded_dim = encoded_dim
        self.hidden = hidden
        self.num_labels = num_labels
        self.tensors = {}

    def parameters(self):
        return list(self.tensors.items())


def build_lstm_decoder(encoded_dim: int, hidden: int, num_labels: int, seed: int) -> LstmDecoderParams:
    p = LstmDecoderParams(encoded_dim, hidden, num_labels)
    rng = substream(seed, "init")
    bound = 1.0 / math.sqrt(hidden)

    def mat(name, *shape):
        p.tensors[name] = Tensor(
            rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name
        )

    def vec_zero(name, n):
        p.tensors[name] = Tensor(np.zeros(n), requires_grad=True, name=name)

    for g in GATES:
        mat(f"lstm.W_{g}", encoded_dim, hidden)
        mat(f"lstm.U_{g}", hidden, hidden)
        mat(f"lstm.V_{g}", 1, hidden)
        vec_zero(f"lstm.b_{g}", hidden)
    # standard LSTM trainability: forget gate starts open
    p.tensors["lstm.b_f"].data[:] = 1.0
    mat("lstm.q", hidden, 1)
    vec_zero("lstm.b_l", 1)
    for net in ("h0", "c0"):
        mat(f"init_{net}.w1", encoded_dim, hidden)
        vec_zero(f"init_{net}.b1", hidden)
        mat(f"init_{net}.w2", hidden, hidden)
        vec_zero(f"init_{net}.b2", hidden)
    return p


@dataclass
class StepState:
    h: Tensor
    c: Tensor
    t: int


def lstm_init(x_enc: Tensor, params: LstmDecoderParams) -> StepState:
    """h0 = f_h0(x_enc), c0 = f_c0(x_enc); returns the t=0 state."""
    if x_enc.data.ndim != 2 or x_enc.data.shape[1] != params.encoded_dim:
        raise ConfigurationError(
            f"lstm_init: x_enc shape {x_enc.data.shape} != (N, {params.encoded_dim})"
        )
    t = params.tensors
    outs = []
    for net in ("h0", "c0"):
        hidden = ops.tanh(ops.affine(x_enc, t[f"init_{net}.w1"], t[f"init_{net}.b1"]))
        outs.append(ops.affine(hidden, t[f"init_{net}.w2"], t[f"init_{net}.b2"]))
    return StepState(h=outs[0], c=outs[1], t=0)


def _gate_preacts(x_enc: Tensor, params: LstmDecoderParams):
    """x_enc W_g for all gates; constant across steps, computed once."""
    t = params.tensors
    return {g: ops.matmul(x_enc, t[f"lstm.W_{g}"]) for g in GATES}


def lstm_step(
    x_enc: Tensor,
    y_prev: Tensor,
    state: StepState,
    params: LstmDecoderParams,
    _xw=None,
):
    """One decoder step: returns (m_t: Tensor[N,1], new StepState).

    Gates i, o, f are sigmoids of (x_enc W + h U + y V + b); the candidate
    g_g is the bare pre-activation, whose tanh enters the cell update:
    c_t = g_f * c_prev + g_i * tanh(g_g); h_t = g_o * tanh(c_t);
    m_t = sigmoid(h_t q + b_l).
    """
    if state.t >= params.num_labels:
        raise UsageError(f"lstm_step: step {state.t} >= T={params.num_labels}")
    yv = y_prev.data
    if yv.ndim != 2 or yv.shape[1] != 1:
        raise ConfigurationError(f"lstm_step: y_prev must be (N,1), got {yv.shape}")
    if np.any(yv < 0.0) or np.any(yv > 1.0):
        raise NumericDomainError("lstm_step: y_prev outside [0,1]")
    t = params.tensors
    xw = _xw if _xw is not None else _gate_preacts(x_enc, params)

    pre = {}
    for g in GATES:
        acc = ops.add(xw[g], ops.matmul(state.h, t[f"lstm.U_{g}"]))
        acc = ops.add(acc, ops.matmul(y_prev, t[f"lstm.V_{g}"]))
        pre[g] = _bias_add(acc, t[f"lstm.b_{g}"])
    g_i = ops.sigmoid(pre["i"])
    g_o = ops.sigmoid(pre["o"])
    g_f = ops.sigmoid(pre["f"])
    c_t = ops.add(ops.mul(g_f, state.c), ops.mul(g_i, ops.tanh(pre["g"])))
    h_t = ops.mul(g_o, ops.tanh(c_t))
    m_t = ops.sigmoid(ops.add(ops.matmul(h_t, t["lstm.q"]), t["lstm.b_l"]))
    return m_t, StepState(h=h_t, c=c_t, t=state.t + 1)


def _bias_add(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast bias add for (N,H) + (H,)."""
    from .autodiff import record

    if b.data.shape != (x.data.shape[1],):
        raise ConfigurationError(f"bias add: {b.data.shape} vs {x.data.shape}")
    out = x.data + b.data[None, :]

    def bw(dy):
        gx = dy if x.requires_grad else None
        gb = dy.sum(axis=0) if b.requires_grad else None
        return gx, gb

    return record("bias_add", (x, b), out, bw)


def decode_teacher_forced(x_enc: Tensor, y_true: np.ndarray, params: LstmDecoderParams) -> Tensor:
    """m[:, t] from ground-truth previous bits; start token 0 at t=0."""
    y_true = np.asarray(y_true, dtype=np.float64)
    n = x_enc.data.shape[0]
    if y_true.shape != (n, params.num_labels):
        raise ConfigurationError(
            f"decode_teacher_forced: labels shape {y_true.shape} != ({n}, {params.num_labels})"
        )
    state = lstm_init(x_enc, params)
    xw = _gate_preacts(x_enc, params)
    y_prev = const(np.zeros((n, 1)))
    cols = []
    for step in range(params.num_labels):
        m_t, state = lstm_step(x_enc, y_prev, state, params, _xw=xw)
        cols.append(m_t)
        y_prev = const(y_true[:, step : step + 1])
    return ops.concat_channels(*cols)


def decode_greedy(x_enc: Tensor, params: LstmDecoderParams):
    """Greedy inference: y_hat[t] = 1 iff m_t > 0.5 (tie predicts 0), and the
    thresholded bit is fed to the next step. Consumes no ground truth.

    Returns (y_hat: int array (N,T), m: float array (N,T)).
    """
    n = x_enc.data.shape[0]
    state = lstm_init(x_enc, params)
    xw = _gate_preacts(x_enc, params)
    y_prev = const(np.zeros((n, 1)))
    bits = np.zeros((n, params.num_labels), dtype=np.int64)
    probs = np.zeros((n, params.num_labels), dtype=np.float64)
    for step in range(params.num_labels):
        m_t, state = lstm_step(x_enc, y_prev, state, params, _xw=xw)
        m = m_t.data[:, 0]
        b = (m > 0.5).astype(np.int64)
        probs[:, step] = m
        bits[:, step] = b
        y_prev = const(b[:, None].astype(np.float64))
    return bits, probs
