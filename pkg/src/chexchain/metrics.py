"""Training loss and the five evaluation metrics: NLL, AUC, DICE, PESS, PCSS.

The loss is differentiable (built from autodiff ops); the metrics are pure
numpy functions of predicted probabilities/bits and ground-truth bits.
Probabilities are clamped to [1e-12, 1-1e-12] inside loss and NLL code only.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ops
from .autodiff import Tensor, const
from .errors import ConfigurationError, UndefinedMetricError

logger = logging.getLogger(__name__)

CLAMP_LO = 1e-12
CLAMP_HI = 1.0 - 1e-12


def bce_weights(y: np.ndarray):
    """beta_P = (|P|+|N|)/|P| and beta_N = (|P|+|N|)/|N| pooled over the
    batch across all classes; both fall back to 1 when a side is empty."""
    y = np.asarray(y)
    p = int(y.sum())
    n = int(y.size - p)
    if p == 0 or n == 0:
        logger.warning("weighted_bce: batch has |P|=%d |N|=%d; weights fall back to 1", p, n)
        return 1.0, 1.0
    total = float(p + n)
    return total / p, total / n


def weighted_bce(m: Tensor, y: np.ndarray) -> Tensor:
    """-(1/N) sum_i sum_t [bP*y*log m + bN*(1-y)*log(1-m)], differentiable."""
    y = np.asarray(y, dtype=np.float64)
    if m.data.shape != y.shape:
        raise ConfigurationError(f"weighted_bce: shapes {m.data.shape} vs {y.shape}")
    beta_p, beta_n = bce_weights(y)
    n_examples = y.shape[0]
    mc = ops.clip(m, CLAMP_LO, CLAMP_HI)
    pos = ops.mul(const(beta_p * y), ops.log(mc))
    negt = ops.mul(const(beta_n * (1.0 - y)), ops.log(ops.sub(const(1.0), mc)))
    total = ops.sum_all(ops.add(pos, negt))
    return ops.mul(total, const(-1.0 / n_examples))


def nll(probs: np.ndarray, y: np.ndarray) -> float:
    """Mean over examples of -sum_t log Bernoulli(y_t; m_t), in nats.

    For model_a, probs are the T marginals; for model_b, the teacher-forced
    conditionals, so the sum is -log of the chain product.
    """
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if probs.shape != y.shape:
        raise ConfigurationError(f"nll: shapes {probs.shape} vs {y.shape}")
    p = np.clip(probs, CLAMP_LO, CLAMP_HI)
    ll = y * np.log(p) + (1.0 - y) * np.log(1.0 - p)
    return float(-ll.sum(axis=1).mean())


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney AUC with 0.5 credit per tied pair (rank formulation)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ConfigurationError("auc: scores and labels must be equal-length vectors")
    pos = int(labels.sum())
    neg = labels.size - pos
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("auc undefined: only one class present")
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    rank_sum_pos = ranks[np.asarray(labels, dtype=bool)].sum()
    u = rank_sum_pos - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def dice(y_alpha: np.ndarray, y_beta: np.ndarray) -> float:
    """Per-example quadratic DICE 2<a,b>/(|a|^2+|b|^2), averaged over examples.

    y_alpha may be probabilities; with binary inputs this equals
    2TP/(2TP+FP+FN). An all-zero/all-zero example scores 1.0.
    """
    a = np.asarray(y_alpha, dtype=np.float64)
    b = np.asarray(y_beta, dtype=np.float64)
    if a.shape != b.shape:
        raise ConfigurationError(f"dice: shapes {a.shape} vs {b.shape}")
    num = 2.0 * (a * b).sum(axis=1)
    den = (a * a).sum(axis=1) + (b * b).sum(axis=1)
    vals = np.where(den == 0.0, 1.0, num / np.where(den == 0.0, 1.0, den))
    return float(vals.mean())


def _sens_spec(tp, fn, tn, fp):
    sens = 1.0 if (tp + fn) == 0 else tp / (tp + fn)
    spec = 1.0 if (tn + fp) == 0 else tn / (tn + fp)
    return sens, spec


def pess(m: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    """Mean over examples of (sensitivity+specificity)/2 across each
    example's labels; 0/0 contributes 1.0."""
    m = np.asarray(m, dtype=np.float64)
    y = np.asarray(y)
    if m.shape != y.shape:
        raise ConfigurationError(f"pess: shapes {m.shape} vs {y.shape}")
    bits = m > threshold
    yb = y.astype(bool)
    vals = []
    for i in range(m.shape[0]):
        tp = int(np.sum(bits[i] & yb[i]))
        fn = int(np.sum(~bits[i] & yb[i]))
        tn = int(np.sum(~bits[i] & ~yb[i]))
        fp = int(np.sum(bits[i] & ~yb[i]))
        sens, spec = _sens_spec(tp, fn, tn, fp)
        vals.append(0.5 * (sens + spec))
    return float(np.mean(vals))


def pcss(m: np.ndarray, y: np.ndarray, threshold: float = 0.5) -> float:
    """Mean over classes of (sensitivity+specificity)/2 pooled over all
    examples; 0/0 contributes 1.0."""
    m = np.asarray(m, dtype=np.float64)
    y = np.asarray(y)
    if m.shape != y.shape:
        raise ConfigurationError(f"pcss: shapes {m.shape} vs {y.shape}")
    bits = m > threshold
    yb = y.astype(bool)
    vals = []
    for t in range(m.shape[1]):
        tp = int(np.sum(bits[:, t] & yb[:, t]))
        fn = int(np.sum(~bits[:, t] & yb[:, t]))
        tn = int(np.sum(~bits[:, t] & ~yb[:, t]))
        fp = int(np.sum(bits[:, t] & ~yb[:, t]))
        sens, spec = _sens_spec(tp, fn, tn, fp)
        vals.append(0.5 * (sens + spec))
    return float(np.mean(vals))


@dataclass
class MetricsReport:
    nll: float
    dice: float
    pess: float
    pcss: float
    threshold: float
    n_examples: int
    auc_per_class: Optional[list] = None  # None for model_b (intractable marginals)
    auc_mean: Optional[float] = None
    label_names: Optional[list] = None

    FIELDS = ("nll", "auc_mean", "dice", "pess", "pcss", "threshold", "n")

    def to_kv_text(self) -> str:
        lines = [f"nll {self.nll!r}"]
        if self.auc_mean is not None:
            lines.append(f"auc_mean {self.auc_mean!r}")
            names = self.label_names or [str(i) for i in range(len(self.auc_per_class))]
            for name, v in zip(names, self.auc_per_class):
                lines.append(f"auc_{name} {'absent' if v is None else repr(v)}")
        lines += [
            f"dice {self.dice!r}",
            f"pess {self.pess!r}",
            f"pcss {self.pcss!r}",
            f"threshold {self.threshold!r}",
            f"n {self.n_examples}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv_text(cls, text: str) -> "MetricsReport":
        kv = {}
        order = []
        for line in text.strip().splitlines():
            key, val = line.split(" ", 1)
            kv[key] = val
            order.append(key)
        auc_names = [k[len("auc_"):] for k in order if k.startswith("auc_") and k != "auc_mean"]
        aucs = None
        if auc_names:
            aucs = [
                None if kv[f"auc_{n}"] == "absent" else float(kv[f"auc_{n}"]) for n in auc_names
            ]
        return cls(
            nll=float(kv["nll"]),
            dice=float(kv["dice"]),
            pess=float(kv["pess"]),
            pcss=float(kv["pcss"]),
            threshold=float(kv["threshold"]),
            n_examples=int(kv["n"]),
            auc_per_class=aucs,
            auc_mean=float(kv["auc_mean"]) if "auc_mean" in kv else None,
            label_names=auc_names or None,
        )

    def to_csv(self) -> str:
        """Header + one row; per-class AUC columns only when present."""
        cols = ["nll", "dice", "pess", "pcss", "threshold", "n"]
        vals = [repr(self.nll), repr(self.dice), repr(self.pess), repr(self.pcss),
                repr(self.threshold), str(self.n_examples)]
        if self.auc_mean is not None:
            cols.insert(1, "auc_mean")
            vals.insert(1, repr(self.auc_mean))
            names = self.label_names or [str(i) for i in range(len(self.auc_per_class))]
            for name, v in zip(names, self.auc_per_class):
                cols.append(f"auc_{name}")
                vals.append("absent" if v is None else repr(v))
        return ",".join(cols) + "\n" + ",".join(vals) + "\n"


def compute_report(
    decision_probs: np.ndarray,
    y: np.ndarray,
    with_auc: bool,
    nll_probs: np.ndarray = None,
    threshold: float = 0.5,
    label_names=None,
) -> MetricsReport:
    """Assemble a MetricsReport.

    decision_probs drive DICE (quadratic form on probabilities), PESS, PCSS,
    and AUC: the marginals for model_a, the greedy-path probabilities for
    model_b. nll_probs (default decision_probs) drive NLL: for model_b these
    are the teacher-forced chain conditionals. with_auc=False leaves the AUC
    fields absent; a single-class column yields an absent per-class entry,
    excluded from the mean.
    """
    probs = np.asarray(decision_probs, dtype=np.float64)
    y = np.asarray(y)
    nprobs = probs if nll_probs is None else np.asarray(nll_probs, dtype=np.float64)
    aucs = None
    auc_mean = None
    if with_auc:
        aucs = []
        for t in range(y.shape[1]):
            try:
                aucs.append(auc(probs[:, t], y[:, t]))
            except UndefinedMetricError:
                aucs.append(None)
        defined = [a for a in aucs if a is not None]
        auc_mean = float(np.mean(defined)) if defined else None
    return MetricsReport(
        nll=nll(nprobs, y),
        dice=dice(probs, (y > 0.5).astype(np.float64)),
        pess=pess(probs, y, threshold),
        pcss=pcss(probs, y, threshold),
        threshold=threshold,
        n_examples=int(y.shape[0]),
        auc_per_class=aucs,
        auc_mean=auc_mean,
        label_names=list(label_names) if label_names is not None else None,
    )
