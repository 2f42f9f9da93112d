"""Label schemas and ordering policies.

The chain decoder's factorization depends on a label permutation: either
frequency-ascending (computed from training-split counts, ties broken
alphabetically) or alphabetical.
"""

from .errors import ConfigurationError

# The 14-finding chest x-ray schema, alphabetical.
CHEST_LABEL_NAMES = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural_Thickening",
    "Pneumonia",
    "Pneumothorax",
)

NO_FINDING = "No Finding"

ORDERING_MODES = ("frequency_ascending", "alphabetical")


def order_labels(names, train_counts, mode: str):
    """Permutation of 0..T-1 over the base (alphabetical) label positions.

    frequency_ascending sorts by training-split counts, rarest first, ties
    broken alphabetically; alphabetical sorts by name.
    """
    names = list(names)
    if mode not in ORDERING_MODES:
        raise ConfigurationError(f"unknown ordering mode {mode!r}")
    if mode == "alphabetical":
        return sorted(range(len(names)), key=lambda i: names[i])
    counts = list(train_counts)
    if len(counts) != len(names):
        raise ConfigurationError("order_labels: counts length != names length")
    return sorted(range(len(names)), key=lambda i: (counts[i], names[i]))


def invert_permutation(perm):
    inv = [0] * len(perm)
    for pos, src in enumerate(perm):
        inv[src] = pos
    return inv


def ordering_for_kind(kind: str) -> str:
    """Model kinds pin their ordering: b1 frequency-ascending, b2 and a
    alphabetical (ordering is irrelevant for a but kept for reporting)."""
    return "frequency_ascending" if kind == "b1" else "alphabetical"
