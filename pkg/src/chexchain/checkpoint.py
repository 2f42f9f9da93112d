"""Checkpoint container: a single binary file holding everything needed to
resume or evaluate a model.

Layout (all integers little-endian):

    magic   8 bytes  b"CXCHAIN\\x01"
    version uint32
    mlen    uint64   length of the JSON metadata block
    meta    mlen bytes of UTF-8 JSON (canonical: sorted keys)
    data    concatenated float64 little-endian C-order arrays, one per
            section, in the order listed in meta["sections"]
    digest  32 bytes SHA-256 over everything above

The metadata names every section (model parameters, batch-norm running
stats, optimizer moments) with its shape, and carries the model/train
configuration, label ordering, update counter, and validation history.
save → load → save is byte-identical.
"""

import dataclasses
import hashlib
import json
import struct

import numpy as np

from .encoder import EncoderConfig
from .errors import ConfigurationError, StateError
from .models import Model, ModelConfig, build_model

MAGIC = b"CXCHAIN\x01"
VERSION = 1


@dataclasses.dataclass
class Checkpoint:
    model_config: ModelConfig
    params: dict  # name -> float64 ndarray
    bn_stats: dict  # name -> (running_mean, running_var)
    ordering: tuple
    ordering_mode: str
    label_names: tuple
    update: int
    history: list  # [{"update", "lr", "metrics": {...}}, ...]
    train_config: dict = None  # plain dict; the trainer owns the dataclass
    adam: dict = None  # {"step", "alpha", "beta1", "beta2", "eps", "lr",
    #                    "m": {name: arr}, "v": {name: arr}}


def model_config_to_dict(config: ModelConfig) -> dict:
    return {
        "kind": config.kind,
        "num_labels": config.num_labels,
        "lstm_hidden": config.lstm_hidden,
        "encoder": dataclasses.asdict(config.encoder),
    }


def model_config_from_dict(d: dict) -> ModelConfig:
    config = ModelConfig(
        kind=d["kind"],
        encoder=EncoderConfig(**d["encoder"]),
        num_labels=int(d["num_labels"]),
        lstm_hidden=int(d["lstm_hidden"]),
    )
    config.validate()
    return config


def snapshot(
    model: Model,
    ordering,
    ordering_mode: str,
    label_names,
    update: int = 0,
    history=(),
    train_config: dict = None,
    adam: dict = None,
) -> Checkpoint:
    """Deep-copy the model's current state into a Checkpoint."""
    params = {name: t.data.copy() for name, t in model.parameters()}
    bn_stats = {}
    for name, st in model.encoder_params.bn_states.items():
        if not st.initialized:
            raise StateError(f"batch-norm state {name!r} is uninitialized")
        bn_stats[name] = (st.running_mean.copy(), st.running_var.copy())
    return Checkpoint(
        model_config=model.config,
        params=params,
        bn_stats=bn_stats,
        ordering=tuple(int(j) for j in ordering),
        ordering_mode=str(ordering_mode),
        label_names=tuple(label_names),
        update=int(update),
        history=list(history),
        train_config=train_config,
        adam=adam,
    )


def restore_model(ckpt: Checkpoint) -> Model:
    """Rebuild the model and load parameters + running stats."""
    model = build_model(ckpt.model_config, seed=0)
    named = dict(model.parameters())
    if set(named) != set(ckpt.params):
        raise StateError("checkpoint parameter names do not match the architecture")
    for name, arr in ckpt.params.items():
        t = named[name]
        if t.data.shape != arr.shape:
            raise StateError(
                f"checkpoint section {name!r}: shape {arr.shape} != {t.data.shape}"
            )
        t.data[...] = arr
    bn = model.encoder_params.bn_states
    if set(bn) != set(ckpt.bn_stats):
        raise StateError("checkpoint batch-norm names do not match the architecture")
    for name, (mean, var) in ckpt.bn_stats.items():
        st = bn[name]
        st.running_mean = mean.copy()
        st.running_var = var.copy()
        st.initialized = True
    return model


# ----- binary serialization ---------------------------------------------


def _sections(ckpt: Checkpoint):
    """Deterministic (name, array) order: params, bn stats, adam moments."""
    out = []
    for name in sorted(ckpt.params):
        out.append((f"param.{name}", ckpt.params[name]))
    for name in sorted(ckpt.bn_stats):
        mean, var = ckpt.bn_stats[name]
        out.append((f"bn_mean.{name}", mean))
        out.append((f"bn_var.{name}", var))
    if ckpt.adam is not None:
        for name in sorted(ckpt.adam["m"]):
            out.append((f"adam_m.{name}", ckpt.adam["m"][name]))
        for name in sorted(ckpt.adam["v"]):
            out.append((f"adam_v.{name}", ckpt.adam["v"][name]))
    return out


def to_bytes(ckpt: Checkpoint) -> bytes:
    sections = _sections(ckpt)
    adam_meta = None
    if ckpt.adam is not None:
        adam_meta = {
            k: ckpt.adam[k] for k in ("step", "alpha", "beta1", "beta2", "eps", "lr")
        }
    meta = {
        "model": model_config_to_dict(ckpt.model_config),
        "train_config": ckpt.train_config,
        "adam": adam_meta,
        "ordering": list(ckpt.ordering),
        "ordering_mode": ckpt.ordering_mode,
        "label_names": list(ckpt.label_names),
        "update": ckpt.update,
        "history": ckpt.history,
        "sections": [
            {"name": name, "shape": list(arr.shape)} for name, arr in sections
        ],
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<Q", len(meta_bytes)), meta_bytes]
    for _, arr in sections:
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def from_bytes(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) + 4 + 8 + 32:
        raise StateError("checkpoint truncated")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise StateError("checkpoint integrity digest mismatch")
    if body[: len(MAGIC)] != MAGIC:
        raise StateError("not a checkpoint file (bad magic)")
    off = len(MAGIC)
    (version,) = struct.unpack_from("<I", body, off)
    off += 4
    if version != VERSION:
        raise StateError(f"unsupported checkpoint version {version}")
    (mlen,) = struct.unpack_from("<Q", body, off)
    off += 8
    try:
        meta = json.loads(body[off : off + mlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise StateError(f"checkpoint metadata unreadable: {exc}") from exc
    off += mlen

    arrays = {}
    for sec in meta["sections"]:
        shape = tuple(int(s) for s in sec["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        nbytes = count * 8
        if off + nbytes > len(body):
            raise StateError(f"checkpoint section {sec['name']!r} truncated")
        arr = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape)
        arrays[sec["name"]] = arr.astype(np.float64)  # own, writable copy
        off += nbytes
    if off != len(body):
        raise StateError("checkpoint has trailing bytes")

    params = {}
    bn_mean = {}
    bn_var = {}
    adam_m = {}
    adam_v = {}
    for name, arr in arrays.items():
        prefix, _, rest = name.partition(".")
        {
            "param": params,
            "bn_mean": bn_mean,
            "bn_var": bn_var,
            "adam_m": adam_m,
            "adam_v": adam_v,
        }.get(prefix, {})[rest] = arr
    if set(bn_mean) != set(bn_var):
        raise StateError("checkpoint batch-norm sections incomplete")

    adam = None
    if meta["adam"] is not None:
        adam = dict(meta["adam"])
        adam["m"] = adam_m
        adam["v"] = adam_v

    return Checkpoint(
        model_config=model_config_from_dict(meta["model"]),
        params=params,
        bn_stats={n: (bn_mean[n], bn_var[n]) for n in bn_mean},
        ordering=tuple(meta["ordering"]),
        ordering_mode=meta["ordering_mode"],
        label_names=tuple(meta["label_names"]),
        update=int(meta["update"]),
        history=meta["history"],
        train_config=meta["train_config"],
        adam=adam,
    )


def save(ckpt: Checkpoint, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def load(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from exc
    return from_bytes(blob)
