"""Synthetic correlated-label benchmark with exact information oracles.

Labels y are sampled from a small DAG of conditional probability tables.
The image renders a corrupted copy z of y: each label's visual primitive
(an axis-aligned rectangle with its own position and intensity) is flipped
with probability rho_t, so the image does not fully determine the labels.
Residual dependence of y given the image is exactly what a chain decoder
can exploit and an independent decoder cannot.

Rendering is injective in z (disjoint rectangles, distinct intensities), so
conditioning on the image equals conditioning on z and both entropy bounds
are exact enumerations over (y, z) pairs.
"""

import csv
import itertools
import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigurationError
from .rng import substream

MAX_EXACT_LABELS = 12


@dataclass(frozen=True)
class RenderRule:
    """One label's visual primitive: top-left corner, size, intensity."""

    row: int
    col: int
    size: int
    intensity: int  # uint8 value; images are stored 8-bit and scaled by /255


@dataclass(frozen=True)
class SynthSpec:
    label_names: tuple
    parents: dict  # label index -> tuple of parent indices (at most one here)
    cpts: dict  # label index -> {parent bits tuple: P(label=1 | parents)}
    rho: tuple  # per-label render-noise probability
    resolution: int
    render_rules: tuple  # RenderRule per label
    seed: int = 0

    @property
    def num_labels(self) -> int:
        return len(self.label_names)

    def validate(self) -> None:
        t = self.num_labels
        if t != len(self.rho) or t != len(self.render_rules):
            raise ConfigurationError("synth: per-label field lengths disagree")
        for r in self.rho:
            if not (0.0 <= r < 0.5):
                raise ConfigurationError(f"synth: rho {r} outside [0, 0.5)")
        for i in range(t):
            pars = self.parents.get(i, ())
            if any(p >= i for p in pars):
                raise ConfigurationError(
                    "synth: parents must precede children in index order (DAG check)"
                )
            table = self.cpts[i]
            for bits, p in table.items():
                if len(bits) != len(pars) or not (0.0 <= p <= 1.0):
                    raise ConfigurationError(f"synth: bad CPT entry for label {i}")
            if len(table) != 2 ** len(pars):
                raise ConfigurationError(f"synth: CPT for label {i} misses parent states")
        rects = []
        for rule in self.render_rules:
            if rule.row < 0 or rule.col < 0 or rule.size < 1:
                raise ConfigurationError("synth: bad render rule geometry")
            if rule.row + rule.size > self.resolution or rule.col + rule.size > self.resolution:
                raise ConfigurationError("synth: render rule exceeds the image")
            if not (1 <= rule.intensity <= 255):
                raise ConfigurationError("synth: intensity must be in [1, 255]")
            rects.append((rule.row, rule.col, rule.size))
        for a, b in itertools.combinations(range(t), 2):
            ra, rb = self.render_rules[a], self.render_rules[b]
            if not (
                ra.row + ra.size <= rb.row
                or rb.row + rb.size <= ra.row
                or ra.col + ra.size <= rb.col
                or rb.col + rb.size <= ra.col
            ):
                raise ConfigurationError(
                    f"synth: rectangles for labels {a} and {b} overlap (rendering must be injective)"
                )


def default_spec(resolution: int = 64, seed: int = 0) -> SynthSpec:
    """Chain-plus-fork DAG: a -> b, b -> c, b -> d, e independent; rho 0.2."""
    names = ("block_a", "block_b", "block_c", "block_d", "block_e")
    parents = {0: (), 1: (0,), 2: (1,), 3: (1,), 4: ()}
    cpts = {
        0: {(): 0.70},
        1: {(0,): 0.02, (1,): 0.95},
        2: {(0,): 0.02, (1,): 0.95},
        3: {(0,): 0.02, (1,): 0.95},
        4: {(): 0.25},
    }
    s = resolution // 16  # rectangle unit: 12 px at 64
    rules = (
        RenderRule(1 * s, 1 * s, 3 * s, 230),
        RenderRule(1 * s, 9 * s, 3 * s, 200),
        RenderRule(6 * s, 5 * s, 3 * s, 170),
        RenderRule(12 * s, 1 * s, 3 * s, 140),
        RenderRule(12 * s, 9 * s, 3 * s, 110),
    )
    spec = SynthSpec(
        label_names=names,
        parents=parents,
        cpts=cpts,
        rho=(0.2, 0.2, 0.2, 0.2, 0.2),
        resolution=resolution,
        render_rules=rules,
        seed=seed,
    )
    spec.validate()
    return spec


def joint_table(spec: SynthSpec) -> np.ndarray:
    """Exact P(y) over all 2^T label states, indexed by the binary number
    with label 0 as the most significant bit."""
    t = spec.num_labels
    if t > MAX_EXACT_LABELS:
        raise ConfigurationError(
            f"synth: exact joint refused for T_s={t} > {MAX_EXACT_LABELS}"
        )
    table = np.zeros(2**t)
    for state in range(2**t):
        bits = [(state >> (t - 1 - i)) & 1 for i in range(t)]
        p = 1.0
        for i in range(t):
            pars = spec.parents.get(i, ())
            key = tuple(bits[j] for j in pars)
            p1 = spec.cpts[i][key]
            p *= p1 if bits[i] == 1 else (1.0 - p1)
        table[state] = p
    return table


def _state_bits(state: int, t: int) -> np.ndarray:
    return np.array([(state >> (t - 1 - i)) & 1 for i in range(t)], dtype=np.int64)


def render(z_bits: np.ndarray, spec: SynthSpec) -> np.ndarray:
    """Deterministic uint8 image of the corrupted bits z."""
    img = np.zeros((spec.resolution, spec.resolution), dtype=np.uint8)
    for i, rule in enumerate(spec.render_rules):
        if z_bits[i]:
            img[rule.row : rule.row + rule.size, rule.col : rule.col + rule.size] = rule.intensity
    return img


def sample(spec: SynthSpec, n: int, seed: int = None):
    """Sample n examples: returns (labels (n,T) int, z (n,T) int, images
    (n,R,R) uint8). Labels are the uncorrupted ground truth y."""
    spec.validate()
    t = spec.num_labels
    rng = substream(spec.seed if seed is None else seed, "synth")
    y = np.zeros((n, t), dtype=np.int64)
    for i in range(t):
        pars = spec.parents.get(i, ())
        table = spec.cpts[i]
        if not pars:
            p1 = np.full(n, table[()])
        else:
            p1 = np.array([table[tuple(row)] for row in y[:, list(pars)]])
        y[:, i] = (rng.random(n) < p1).astype(np.int64)
    flips = rng.random((n, t)) < np.asarray(spec.rho)[None, :]
    z = np.bitwise_xor(y, flips.astype(np.int64))
    images = np.stack([render(z[k], spec) for k in range(n)])
    return y, z, images


def conditional_entropy_bounds(spec: SynthSpec):
    """(joint_bound, marginal_bound) in nats per example, by exact
    enumeration over (y, z).

    joint_bound = H(y|z): the NLL floor for any model of the full joint
    given the image. marginal_bound = sum_t H(y_t|z): the floor for any
    independent-marginal model. marginal_bound >= joint_bound, with a
    strict gap whenever corruption leaves residual dependence.
    """
    spec.validate()
    t = spec.num_labels
    if t > MAX_EXACT_LABELS:
        raise ConfigurationError(
            f"synth: exact bounds refused for T_s={t} > {MAX_EXACT_LABELS}"
        )
    py = joint_table(spec)
    states = np.array([_state_bits(s, t) for s in range(2**t)])  # (S, T)
    rho = np.asarray(spec.rho)

    # P(z|y) from independent per-label flips: product over labels.
    # hamming[i, j] over each label: states differ -> rho, agree -> 1-rho
    diff = states[:, None, :] != states[None, :, :]  # (Sy, Sz, T)
    pz_given_y = np.prod(np.where(diff, rho[None, None, :], 1.0 - rho[None, None, :]), axis=2)
    pyz = py[:, None] * pz_given_y  # (Sy, Sz)
    pz = pyz.sum(axis=0)

    def xlogx(v):
        out = np.zeros_like(v)
        mask = v > 0
        out[mask] = v[mask] * np.log(v[mask])
        return out

    # H(y|z) = -sum_{y,z} P(y,z) log P(y|z)
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(pz[None, :] > 0, pyz / np.where(pz[None, :] > 0, pz[None, :], 1.0), 0.0)
    joint_bound = float(-np.sum(pyz * np.where(post > 0, np.log(np.where(post > 0, post, 1.0)), 0.0)))

    # sum_t H(y_t|z)
    marginal_bound = 0.0
    for i in range(t):
        mask1 = states[:, i] == 1
        p1_given_z = pyz[mask1, :].sum(axis=0)  # P(y_i=1, z)
        p0_given_z = pz - p1_given_z
        marginal_bound += float(-(xlogx(p1_given_z) + xlogx(p0_given_z) - xlogx(pz)).sum())
    return joint_bound, marginal_bound


def spec_to_dict(spec: SynthSpec) -> dict:
    return {
        "label_names": list(spec.label_names),
        "parents": {str(k): list(v) for k, v in spec.parents.items()},
        "cpts": {
            str(k): [[list(bits), p] for bits, p in sorted(v.items())]
            for k, v in spec.cpts.items()
        },
        "rho": list(spec.rho),
        "resolution": spec.resolution,
        "render_rules": [
            [r.row, r.col, r.size, r.intensity] for r in spec.render_rules
        ],
        "seed": spec.seed,
    }


def spec_from_dict(d: dict) -> SynthSpec:
    spec = SynthSpec(
        label_names=tuple(d["label_names"]),
        parents={int(k): tuple(v) for k, v in d["parents"].items()},
        cpts={
            int(k): {tuple(bits): float(p) for bits, p in v}
            for k, v in d["cpts"].items()
        },
        rho=tuple(float(r) for r in d["rho"]),
        resolution=int(d["resolution"]),
        render_rules=tuple(RenderRule(*map(int, r)) for r in d["render_rules"]),
        seed=int(d["seed"]),
    )
    spec.validate()
    return spec

def marginals(spec: SynthSpec) -> np.ndarray:
    """Exact P(y_t = 1) per label from the joint table."""
    py = joint_table(spec)
    t = spec.num_labels
    states = np.array([_state_bits(s, t) for s in range(2**t)])
    return (py[:, None] * states).sum(axis=0)


def write_dataset(spec: SynthSpec, n: int, out_dir: str, seed: int = None) -> dict:
    """Emit a loadable dataset directory: images/*.png, labels.csv, synth.json.

    The CSV carries the uncorrupted labels y; the images render the
    corrupted bits z, so the image alone does not determine the labels.
    Returns the sidecar dict (spec, joint table, entropy bounds).
    """
    y, _, images = sample(spec, n, seed=seed)
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)
    width = max(5, len(str(max(n - 1, 0))))
    with open(os.path.join(out_dir, "labels.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["Image Index", "Finding Labels"])
        for k in range(n):
            name = f"{k:0{width}d}.png"
            PILImage.fromarray(images[k], mode="L").save(os.path.join(image_dir, name))
            present = [spec.label_names[i] for i in range(spec.num_labels) if y[k, i]]
            writer.writerow([name, "|".join(present) if present else "No Finding"])
    joint_bound, marginal_bound = conditional_entropy_bounds(spec)
    sidecar = {
        "spec": spec_to_dict(spec),
        "n": int(n),
        "sample_seed": int(spec.seed if seed is None else seed),
        "joint_table": [float(p) for p in joint_table(spec)],
        "joint_bound": joint_bound,
        "marginal_bound": marginal_bound,
        "marginals": [float(p) for p in marginals(spec)],
    }
    with open(os.path.join(out_dir, "synth.json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2)
    return sidecar
