"""Affine data augmentation: translate ∘ rotate ∘ scale about the center.

Output pixels are inverse-mapped into the source image and bilinearly
resampled; out-of-bounds reads take `fill_value`.  With all ranges at
identity the resampling is exact, as is translation by whole pixels.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

REFERENCE_RESOLUTION = 512
REFERENCE_TRANSLATE_PX = 25


@dataclass(frozen=True)
class AugmentParams:
    max_translate_px: int
    rotate_range_deg: tuple = (-15.0, 15.0)
    scale_range: tuple = (0.8, 1.2)
    fill_value: float = 0.0

    def validate(self) -> None:
        if self.max_translate_px < 0:
            raise ConfigurationError("max_translate_px must be >= 0")
        if self.rotate_range_deg[0] > self.rotate_range_deg[1]:
            raise ConfigurationError("rotate_range_deg must be ordered")
        if not (0.0 < self.scale_range[0] <= self.scale_range[1]):
            raise ConfigurationError("scale_range must be ordered and positive")


def default_augment_params(resolution: int) -> AugmentParams:
    # 25 px at 512×512, scaled proportionally.
    translate = int(round(REFERENCE_TRANSLATE_PX * resolution / REFERENCE_RESOLUTION))
    return AugmentParams(max_translate_px=translate)


def identity_augment_params() -> AugmentParams:
    return AugmentParams(
        max_translate_px=0, rotate_range_deg=(0.0, 0.0), scale_range=(1.0, 1.0)
    )


def sample_transform(params: AugmentParams, rng) -> tuple:
    """Draw (t_row, t_col, angle_deg, scale); fixed draw order for determinism."""
    m = float(params.max_translate_px)
    t_row = rng.uniform(-m, m) if m > 0 else 0.0
    t_col = rng.uniform(-m, m) if m > 0 else 0.0
    lo, hi = params.rotate_range_deg
    angle = rng.uniform(lo, hi) if hi > lo else float(lo)
    lo, hi = params.scale_range
    scale = rng.uniform(lo, hi) if hi > lo else float(lo)
    return t_row, t_col, angle, scale


def apply_affine(
    image: np.ndarray,
    t_row: float,
    t_col: float,
    angle_deg: float,
    scale: float,
    fill_value: float = 0.0,
) -> np.ndarray:
    """Forward map q = R_θ·s·(p − c) + c + t, resampled by inverse lookup."""
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise ConfigurationError(f"expected a square image, got {image.shape}")
    n = image.shape[0]
    c = (n - 1) / 2.0
    rows, cols = np.meshgrid(
        np.arange(n, dtype=np.float64), np.arange(n, dtype=np.float64), indexing="ij"
    )
    dr = rows - c - t_row
    dc = cols - c - t_col
    theta = math.radians(angle_deg)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # Inverse rotation then inverse scale.
    src_r = (cos_t * dr + sin_t * dc) / scale + c
    src_c = (-sin_t * dr + cos_t * dc) / scale + c

    r0 = np.floor(src_r).astype(np.int64)
    c0 = np.floor(src_c).astype(np.int64)
    fr = src_r - r0
    fc = src_c - c0

    out = np.zeros_like(image, dtype=np.float64)
    for dr_i, dc_i, w in (
        (0, 0, (1 - fr) * (1 - fc)),
        (0, 1, (1 - fr) * fc),
        (1, 0, fr * (1 - fc)),
        (1, 1, fr * fc),
    ):
        rr = r0 + dr_i
        cc = c0 + dc_i
        valid = (rr >= 0) & (rr < n) & (cc >= 0) & (cc < n)
        vals = np.full_like(out, fill_value)
        vals[valid] = image[rr[valid], cc[valid]]
        out += w * vals
    return np.clip(out, 0.0, 1.0)


def augment(image: np.ndarray, params: AugmentParams, rng) -> np.ndarray:
    """One sampled affine transform; deterministic given the rng state."""
    params.validate()
    t_row, t_col, angle, scale = sample_transform(params, rng)
    if t_row == 0.0 and t_col == 0.0 and angle == 0.0 and scale == 1.0:
        return image.astype(np.float64, copy=True)
    return apply_affine(image, t_row, t_col, angle, scale, params.fill_value)
