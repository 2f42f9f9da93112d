"""Training loop: weighted BCE + ADAM, plateau LR decay, early stopping,
checkpointing, and metric-driven model selection.

Improvement is strict (zero delta) on the validation selection metric.
Each failed evaluation decays the learning rate by `lr_decay_factor` once
`plateau_patience_evals` consecutive failures accumulate; training halts
after `early_stop_updates` updates without improvement, or at `max_updates`.
"""

import dataclasses
import logging

import numpy as np

from . import checkpoint as ckpt_mod
from .augment import AugmentParams, augment
from .autodiff import Graph
from .data import Dataset
from .errors import ConfigurationError, NumericDomainError, UsageError
from .metrics import MetricsReport, compute_report, weighted_bce
from .models import MODEL_KINDS, Model, ModelConfig, build_model
from .orderings import ordering_for_kind
from .rng import STREAM_AUGMENT, STREAM_BATCHING, substream

logger = logging.getLogger(__name__)

SELECTABLE_METRICS = ("nll", "auc_mean", "dice", "pess", "pcss")
LOWER_IS_BETTER = frozenset({"nll"})

EVAL_BATCH = 128


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    model_kind: str
    max_updates: int
    seed: int = 0
    batch_size: int = 32
    lr_decay_factor: float = 0.9
    plateau_patience_evals: int = 1
    early_stop_updates: int = 10000
    eval_every_updates: int = 500
    selection_metric: str = "nll"

    def validate(self) -> None:
        if self.model_kind not in MODEL_KINDS:
            raise ConfigurationError(f"model_kind must be one of {MODEL_KINDS}")
        if self.max_updates < 0:
            raise ConfigurationError("max_updates must be >= 0")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if not (0.0 < self.lr_decay_factor < 1.0):
            raise ConfigurationError("lr_decay_factor must be in (0, 1)")
        if self.plateau_patience_evals < 1:
            raise ConfigurationError("plateau_patience_evals must be >= 1")
        if self.eval_every_updates < 1:
            raise ConfigurationError("eval_every_updates must be >= 1")
        if self.early_stop_updates < self.eval_every_updates:
            raise ConfigurationError(
                "early_stop_updates must be >= eval_every_updates"
            )
        if self.selection_metric not in SELECTABLE_METRICS:
            raise ConfigurationError(
                f"selection_metric must be one of {SELECTABLE_METRICS}"
            )


# ----- ADAM ---------------------------------------------------------------


class AdamState:
    """Bias-corrected ADAM moment buffers keyed by parameter path."""

    def __init__(
        self,
        named_params,
        alpha: float = 0.001,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.alpha = float(alpha)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.lr = float(alpha)  # current value under the plateau schedule
        self.step_count = 0
        self.m = {name: np.zeros_like(t.data) for name, t in named_params}
        self.v = {name: np.zeros_like(t.data) for name, t in named_params}

    def to_dict(self) -> dict:
        return {
            "step": self.step_count,
            "alpha": self.alpha,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "lr": self.lr,
            "m": {name: arr.copy() for name, arr in self.m.items()},
            "v": {name: arr.copy() for name, arr in self.v.items()},
        }


def adam_step(named_params, state: AdamState) -> None:
    """One in-place update from each tensor's accumulated .grad.

    The whole step aborts (no parameter touched) on a non-finite gradient,
    reporting the offending parameter path.
    """
    grads = {}
    for name, t in named_params:
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if g.shape != t.data.shape:
            raise ConfigurationError(
                f"adam_step: gradient shape {g.shape} != {t.data.shape} at {name!r}"
            )
        if not np.all(np.isfinite(g)):
            raise NumericDomainError(f"non-finite gradient at {name!r}")
        grads[name] = g
    state.step_count += 1
    t_step = state.step_count
    correct1 = 1.0 - state.beta1**t_step
    correct2 = 1.0 - state.beta2**t_step
    for name, tensor in named_params:
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        tensor.data -= state.lr * (m / correct1) / (np.sqrt(v / correct2) + state.eps)


# ----- evaluation ----------------------------------------------------------


def evaluate_model(model: Model, dataset: Dataset, threshold: float = 0.5) -> MetricsReport:
    """Eval-mode metrics on a dataset.

    model_a: marginals drive every metric, AUC included.  model_b: NLL comes
    from the teacher-forced conditionals, DICE/PESS/PCSS from the greedy
    decode's probabilities; AUC is absent (marginals are intractable).
    """
    if len(dataset) == 0:
        raise ConfigurationError("cannot evaluate on an empty dataset")
    images = dataset.images()
    y = dataset.labels()
    decision_chunks = []
    nll_chunks = []
    for lo in range(0, len(dataset), EVAL_BATCH):
        imgs = images[lo : lo + EVAL_BATCH]
        yy = y[lo : lo + EVAL_BATCH]
        if model.is_chain:
            nll_chunks.append(model.forward_probs(imgs, labels=yy, mode="eval").data)
            _, greedy_probs = model.predict(imgs)
            decision_chunks.append(greedy_probs)
        else:
            decision_chunks.append(model.forward_probs(imgs, mode="eval").data)
    decision = np.concatenate(decision_chunks, axis=0)
    nll_probs = np.concatenate(nll_chunks, axis=0) if nll_chunks else None
    return compute_report(
        decision,
        y,
        with_auc=not model.is_chain,
        nll_probs=nll_probs,
        threshold=threshold,
        label_names=dataset.label_names,
    )


def evaluate(ckpt: ckpt_mod.Checkpoint, dataset: Dataset) -> MetricsReport:
    """Rebuild the checkpointed model and evaluate it on the dataset."""
    if tuple(ckpt.ordering) != tuple(dataset.ordering) or tuple(
        ckpt.label_names
    ) != tuple(dataset.label_names):
        raise UsageError(
            f"label ordering mismatch: checkpoint {ckpt.label_names} "
            f"vs dataset {dataset.label_names}"
        )
    model = ckpt_mod.restore_model(ckpt)
    return evaluate_model(model, dataset)


def metric_value(report, name: str) -> float:
    """Pull one selection metric from a MetricsReport or its dict form."""
    if name not in SELECTABLE_METRICS:
        raise UsageError(f"unknown selection metric {name!r}")
    if isinstance(report, MetricsReport):
        value = getattr(report, name)
    else:
        value = report.get(name)
    if value is None:
        raise UsageError(f"metric {name!r} is absent from this report")
    return float(value)


def is_improvement(value: float, best: float, metric: str) -> bool:
    """Strict improvement, zero delta."""
    return value < best if metric in LOWER_IS_BETTER else value > best


def select_model(history, metric: str) -> int:
    """Index of the evaluation optimizing the metric; ties go earliest."""
    if not history:
        raise UsageError("select_model: empty history")
    best_i = None
    best_v = None
    for i, entry in enumerate(history):
        v = metric_value(entry["metrics"], metric)
        if best_v is None or is_improvement(v, best_v, metric):
            best_i, best_v = i, v
    return best_i


def history_to_csv(history, model_kind: str, ordering_mode: str) -> str:
    """History CSV: one row per evaluation, prefixed by a header comment
    naming the model kind and the label ordering in force."""
    lines = [
        f"# model={model_kind} ordering={ordering_mode}",
        "update,lr,nll,auc_mean,dice,pess,pcss",
    ]
    for entry in history:
        m = entry["metrics"]
        auc_mean = m.get("auc_mean")
        lines.append(
            ",".join(
                [
                    str(entry["update"]),
                    repr(entry["lr"]),
                    repr(m["nll"]),
                    "absent" if auc_mean is None else repr(auc_mean),
                    repr(m["dice"]),
                    repr(m["pess"]),
                    repr(m["pcss"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


# ----- training loop --------------------------------------------------------


@dataclasses.dataclass
class TrainResult:
    checkpoint: ckpt_mod.Checkpoint  # best-on-validation (selection metric)
    history: list
    loss_trace: list
    stop_reason: str  # "max_updates" | "early_stop" | "diverged"
    final_update: int
    best_by_metric: dict = dataclasses.field(default_factory=dict)


class _BestState:
    """Deep-copied best-so-far snapshot (params, bn stats, adam, update)."""

    def __init__(self, model: Model, adam: AdamState, update: int):
        self.params = {name: t.data.copy() for name, t in model.parameters()}
        self.bn = {
            name: (st.running_mean.copy(), st.running_var.copy())
            for name, st in model.encoder_params.bn_states.items()
        }
        self.adam = adam.to_dict()
        self.update = update


def train(
    model_config: ModelConfig,
    train_set: Dataset,
    val_set: Dataset,
    config: TrainConfig,
    augment_params: AugmentParams = None,
    evaluator=None,
    alpha: float = 0.001,
    also_select=(),
) -> TrainResult:
    """Full recipe: sample batch → augment → forward (teacher-forced for the
    chain) → weighted BCE → backward → ADAM, with periodic validation,
    plateau decay, early stopping, and best-checkpoint tracking.

    `evaluator(model) -> MetricsReport` defaults to validation-set
    evaluation; injectable for schedule-conformance tests.  Divergence
    aborts, retaining the last good checkpoint.

    Reported metrics are conventionally taken from a checkpoint selected by
    that same metric on validation; `also_select` names extra metrics whose
    best checkpoints should be tracked alongside the selection metric, at
    the cost of one snapshot each.  They come back in `best_by_metric`.
    """
    config.validate()
    model_config.validate()
    if model_config.kind != config.model_kind:
        raise ConfigurationError(
            f"model_config.kind {model_config.kind!r} != "
            f"config.model_kind {config.model_kind!r}"
        )
    if train_set.num_labels != model_config.num_labels:
        raise ConfigurationError(
            f"dataset has {train_set.num_labels} labels, model expects "
            f"{model_config.num_labels}"
        )
    if augment_params is not None:
        augment_params.validate()
    if evaluator is None:
        evaluator = lambda m: evaluate_model(m, val_set)  # noqa: E731

    model = build_model(model_config, config.seed)
    named = model.parameters()
    adam = AdamState(named, alpha=alpha)
    batch_rng = substream(config.seed, STREAM_BATCHING)
    aug_rng = substream(config.seed, STREAM_AUGMENT)
    ordering_mode = ordering_for_kind(config.model_kind)

    images_all = train_set.images()
    labels_all = train_set.labels()
    n = len(train_set)
    if n == 0:
        raise ConfigurationError("training set is empty")

    for name in also_select:
        if name not in SELECTABLE_METRICS:
            raise UsageError(f"unknown selection metric {name!r}")

    history = []
    loss_trace = []
    best_value = None
    best = _BestState(model, adam, update=0)
    extra_best = {name: (None, best) for name in also_select}
    last_improvement_update = 0
    failed_streak = 0
    decay_count = 0
    stop_reason = "max_updates"
    update = 0

    for update in range(1, config.max_updates + 1):
        idx = batch_rng.integers(0, n, size=config.batch_size)
        imgs = images_all[idx]  # fancy indexing copies; safe to mutate
        if augment_params is not None:
            for i in range(imgs.shape[0]):
                imgs[i, 0] = augment(imgs[i, 0], augment_params, aug_rng)
        yy = labels_all[idx]

        try:
            with Graph() as graph:
                m = model.forward_probs(
                    imgs, labels=yy if model.is_chain else None, mode="train"
                )
                loss = weighted_bce(m, yy)
                loss_value = float(loss.data)
                if not np.isfinite(loss_value):
                    raise NumericDomainError("training loss is non-finite")
                graph.backward(loss)
            adam_step(named, adam)
        except NumericDomainError as exc:
            logger.error("update %d: %s; aborting with last good checkpoint", update, exc)
            stop_reason = "diverged"
            update -= 1
            break
        finally:
            model.zero_grads()
        loss_trace.append(loss_value)

        if update % config.eval_every_updates == 0:
            report = evaluator(model)
            value = metric_value(report, config.selection_metric)
            for name in also_select:
                v = metric_value(report, name)
                prev, _ = extra_best[name]
                if prev is None or is_improvement(v, prev, name):
                    extra_best[name] = (v, _BestState(model, adam, update))
            if best_value is None or is_improvement(
                value, best_value, config.selection_metric
            ):
                best_value = value
                best = _BestState(model, adam, update)
                last_improvement_update = update
                failed_streak = 0
            else:
                failed_streak += 1
                if failed_streak >= config.plateau_patience_evals:
                    decay_count += 1
                    adam.lr = adam.alpha * config.lr_decay_factor**decay_count
                    failed_streak = 0
            history.append(
                {
                    "update": update,
                    "lr": adam.lr,
                    "metrics": dataclasses.asdict(report),
                }
            )
            logger.info(
                "update %d lr %.6g %s %.6g%s",
                update,
                adam.lr,
                config.selection_metric,
                value,
                " *" if last_improvement_update == update else "",
            )
            if update - last_improvement_update >= config.early_stop_updates:
                stop_reason = "early_stop"
                break

    def to_checkpoint(state: _BestState) -> ckpt_mod.Checkpoint:
        return ckpt_mod.Checkpoint(
            model_config=model_config,
            params=state.params,
            bn_stats=state.bn,
            ordering=train_set.ordering,
            ordering_mode=ordering_mode,
            label_names=train_set.label_names,
            update=state.update,
            history=history,
            train_config=dataclasses.asdict(config),
            adam=state.adam,
        )

    return TrainResult(
        checkpoint=to_checkpoint(best),
        history=history,
        loss_trace=loss_trace,
        stop_reason=stop_reason,
        final_update=update,
        best_by_metric={
            name: to_checkpoint(state) for name, (_, state) in extra_best.items()
        },
    )
