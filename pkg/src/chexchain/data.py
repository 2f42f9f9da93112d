"""Dataset ingestion and deterministic splitting.

Datasets live on disk as a directory of PNG images plus a labels CSV with
columns ``Image Index`` (filename) and ``Finding Labels`` (pipe-delimited
names).  ``No Finding`` contributes no bits.  Images are decoded to
grayscale, mapped to [0,1], and area-resampled to the working resolution.
"""

import csv
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigurationError, IngestionError
from .orderings import CHEST_LABEL_NAMES, NO_FINDING
from .rng import STREAM_SPLIT, substream

CSV_IMAGE_COLUMN = "Image Index"
CSV_LABEL_COLUMN = "Finding Labels"

SPLIT_FRACTIONS = (0.70, 0.10, 0.20)


@dataclass
class Example:
    image: np.ndarray  # (R, R) float64 in [0, 1]
    labels: np.ndarray  # (T,) int64 in the active ordering
    id: str

    def validate(self, resolution: int, num_labels: int) -> None:
        if self.image.shape != (resolution, resolution):
            raise ConfigurationError(
                f"example {self.id}: image shape {self.image.shape} != "
                f"({resolution}, {resolution})"
            )
        if self.labels.shape != (num_labels,):
            raise ConfigurationError(
                f"example {self.id}: labels shape {self.labels.shape}"
            )


@dataclass
class Dataset:
    examples: list
    label_names: tuple  # active (permuted) order
    ordering: tuple  # ordering[j] = base-schema index of chain position j
    resolution: int

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def num_labels(self) -> int:
        return len(self.label_names)

    def images(self) -> np.ndarray:
        """Stack into (N, 1, R, R) float64."""
        if not self.examples:
            return np.zeros((0, 1, self.resolution, self.resolution))
        return np.stack([ex.image for ex in self.examples])[:, None, :, :]

    def labels(self) -> np.ndarray:
        """Stack into (N, T) float64."""
        if not self.examples:
            return np.zeros((0, self.num_labels))
        return np.stack([ex.labels for ex in self.examples]).astype(np.float64)

    def label_counts(self) -> np.ndarray:
        """Positive counts per label position (int64)."""
        if not self.examples:
            return np.zeros(self.num_labels, dtype=np.int64)
        return np.stack([ex.labels for ex in self.examples]).sum(axis=0)

    def subset(self, indices) -> "Dataset":
        return Dataset(
            examples=[self.examples[i] for i in indices],
            label_names=self.label_names,
            ordering=self.ordering,
            resolution=self.resolution,
        )

    def reorder(self, ordering) -> "Dataset":
        """Re-permute labels into a new ordering over the same base schema."""
        ordering = tuple(int(j) for j in ordering)
        if sorted(ordering) != list(range(self.num_labels)):
            raise ConfigurationError(f"invalid ordering {ordering}")
        # Recover base-schema bits, then apply the new permutation.
        base_names = [None] * self.num_labels
        for pos, j in enumerate(self.ordering):
            base_names[j] = self.label_names[pos]
        inv = {j: pos for pos, j in enumerate(self.ordering)}
        take = [inv[j] for j in ordering]
        examples = [
            Example(image=ex.image, labels=ex.labels[take], id=ex.id)
            for ex in self.examples
        ]
        return Dataset(
            examples=examples,
            label_names=tuple(base_names[j] for j in ordering),
            ordering=ordering,
            resolution=self.resolution,
        )


@dataclass
class SplitAssignment:
    seed: int
    fractions: tuple
    train_ids: tuple
    val_ids: tuple
    test_ids: tuple

    def validate(self, all_ids) -> None:
        combined = list(self.train_ids) + list(self.val_ids) + list(self.test_ids)
        if sorted(combined) != sorted(all_ids):
            raise ConfigurationError("split is not a partition of the dataset")


def decode_image(path: str, resolution: int) -> np.ndarray:
    """PNG → grayscale float64 (R, R) in [0, 1], area-resampled."""
    with PILImage.open(path) as img:
        gray = img.convert("L").convert("F")
        if gray.size != (resolution, resolution):
            gray = gray.resize((resolution, resolution), PILImage.Resampling.BOX)
        arr = np.asarray(gray, dtype=np.float64) / 255.0
    return np.clip(arr, 0.0, 1.0)


def _parse_label_field(field: str, name_to_base: dict, row_desc: str) -> np.ndarray:
    bits = np.zeros(len(name_to_base), dtype=np.int64)
    for token in field.split("|"):
        token = token.strip()
        if not token or token == NO_FINDING:
            continue
        if token not in name_to_base:
            raise IngestionError(f"{row_desc}: unknown label name {token!r}")
        bits[name_to_base[token]] = 1
    return bits


def load_dataset(
    image_dir: str,
    labels_csv: str,
    resolution: int,
    ordering,
    label_names=CHEST_LABEL_NAMES,
) -> Dataset:
    """Ingest a PNG directory + labels CSV into the given label ordering.

    `ordering` is a permutation of 0..T-1 over `label_names`; labels come
    back already permuted.  An empty CSV yields an empty dataset.
    """
    label_names = tuple(label_names)
    ordering = tuple(int(j) for j in ordering)
    if sorted(ordering) != list(range(len(label_names))):
        raise ConfigurationError(f"invalid ordering {ordering}")
    if resolution < 1:
        raise ConfigurationError(f"resolution must be positive, got {resolution}")
    name_to_base = {name: i for i, name in enumerate(label_names)}
    take = list(ordering)

    try:
        handle = open(labels_csv, newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestionError(f"cannot open labels CSV {labels_csv}: {exc}") from exc

    examples = []
    with handle:
        reader = csv.DictReader(handle)
        for row_num, row in enumerate(reader, start=2):  # row 1 is the header
            row_desc = f"{labels_csv} row {row_num}"
            filename = row.get(CSV_IMAGE_COLUMN)
            finding = row.get(CSV_LABEL_COLUMN)
            if filename is None or finding is None or None in row.values():
                raise IngestionError(
                    f"{row_desc}: expected columns "
                    f"{CSV_IMAGE_COLUMN!r} and {CSV_LABEL_COLUMN!r}"
                )
            base_bits = _parse_label_field(finding, name_to_base, row_desc)
            path = os.path.join(image_dir, filename)
            if not os.path.isfile(path):
                raise IngestionError(f"{row_desc}: missing image file {path}")
            try:
                image = decode_image(path, resolution)
            except (OSError, ValueError) as exc:
                raise IngestionError(
                    f"{row_desc}: cannot decode {path}: {exc}"
                ) from exc
            examples.append(
                Example(image=image, labels=base_bits[take], id=filename)
            )

    return Dataset(
        examples=examples,
        label_names=tuple(label_names[j] for j in ordering),
        ordering=ordering,
        resolution=resolution,
    )


def split_sizes(n: int) -> tuple:
    """70/10/20 with floor on train and val; test takes the remainder."""
    n_train = int(np.floor(SPLIT_FRACTIONS[0] * n))
    n_val = int(np.floor(SPLIT_FRACTIONS[1] * n))
    return n_train, n_val, n - n_train - n_val


def split(dataset: Dataset, seed: int):
    """Deterministic 70/10/20 partition → (train, val, test)."""
    n = len(dataset)
    if n == 0:
        raise ConfigurationError("cannot split an empty dataset")
    rng = substream(seed, STREAM_SPLIT)
    perm = rng.permutation(n)
    n_train, n_val, _ = split_sizes(n)
    train = dataset.subset(perm[:n_train])
    val = dataset.subset(perm[n_train : n_train + n_val])
    test = dataset.subset(perm[n_train + n_val :])
    return train, val, test


def split_assignment(dataset: Dataset, seed: int) -> SplitAssignment:
    train, val, test = split(dataset, seed)
    return SplitAssignment(
        seed=seed,
        fractions=SPLIT_FRACTIONS,
        train_ids=tuple(ex.id for ex in train.examples),
        val_ids=tuple(ex.id for ex in val.examples),
        test_ids=tuple(ex.id for ex in test.examples),
    )
