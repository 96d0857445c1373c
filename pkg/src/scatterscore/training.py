"""Multi-task objective and the train/validate/select loop."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetTooSmall, EmptyPrediction, InvalidConfig, NonFiniteError, NonFiniteLoss
from .features import FeatureSample
from .nn import Adam, InQSSModel, ModelConfig, OutputGrads, Predictions

log = logging.getLogger(__name__)

OBJECTIVES = {"i": (1.0, 0.0), "q": (0.0, 1.0), "i+q": (1.0, 1.0)}
VAL_FRACTION = 0.1


@dataclass(frozen=True)
class ScoredUtterance:
    features: FeatureSample
    target_i: float  # 0-5 scale
    target_q: float  # 1-5

    def __post_init__(self):
        if not 0.0 <= self.target_i <= 5.0:
            raise ValueError(f"target_i {self.target_i} outside [0, 5]")
        if not 1.0 <= self.target_q <= 5.0:
            raise ValueError(f"target_q {self.target_q} outside [1, 5]")

    @property
    def utterance_id(self):
        return self.features.utterance_id


@dataclass(frozen=True)
class LossTerms:
    L: float
    L_i: float
    L_q: float


def _task_loss(frames, utt, target):
    T = frames.size
    diff = frames - target
    loss = (utt - target) ** 2 + float(np.dot(diff, diff)) / T
    return loss, 2.0 * diff / T, 2.0 * (utt - target)


def multitask_loss(pred: Predictions, target_i, target_q, weights=(1.0, 1.0)):
    """Utterance-plus-frame squared error for both tasks.

    For each task: ``(y - Y)**2 + mean_t (y - y_t)**2`` where ``y`` is the
    target, ``Y`` the utterance prediction and ``y_t`` the frame
    predictions. ``weights`` scale the two task terms (zero drops a task).

    Returns ``(LossTerms, OutputGrads)``; the reported terms are already
    weighted, so ``L == L_i + L_q``.
    """
    if pred.frames < 1:
        raise EmptyPrediction("prediction has no frames")
    w_i, w_q = weights
    li, gfi, gi = _task_loss(pred.frame_i, pred.I, target_i)
    lq, gfq, gq = _task_loss(pred.frame_q, pred.Q, target_q)
    li, lq = w_i * li, w_q * lq
    terms = LossTerms(li + lq, li, lq)
    return terms, OutputGrads(w_i * gfi, w_i * gi, w_q * gfq, w_q * gq)


def split_train_val(dataset, seed):
    """Shuffle with ``seed`` and hold out 10% (at least one item)."""
    n = len(dataset)
    if n < 10:
        raise DatasetTooSmall(f"need at least 10 items for a validation split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(math.floor(n * VAL_FRACTION)))
    val = [dataset[i] for i in order[:n_val]]
    train = [dataset[i] for i in order[n_val:]]
    return train, val


@dataclass
class TrainConfig:
    max_epochs: int = 100
    patience: int = 10
    lr: float = 1e-4
    objective: str = "i+q"
    seed: int = 0
    max_steps: int | None = None

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InvalidConfig(f"objective must be one of {sorted(OBJECTIVES)}, got {self.objective!r}")
        if self.max_epochs < 1 or self.patience < 0:
            raise InvalidConfig("max_epochs must be >= 1 and patience >= 0")


@dataclass
class TrainState:
    epoch: int = 0
    best_val_loss: float = math.inf
    best_epoch: int = -1
    patience_counter: int = 0
    steps: int = 0
    optimizer: Adam = field(default=None, repr=False)


@dataclass
class TrainResult:
    model: InQSSModel
    log: list
    state: TrainState


def evaluate_loss(model, dataset, weights):
    """Mean loss terms over ``dataset`` at fixed parameters."""
    if not dataset:
        return LossTerms(math.nan, math.nan, math.nan)
    acc = np.zeros(3)
    for item in dataset:
        terms, _ = multitask_loss(model.predict(item.features), item.target_i, item.target_q, weights)
        acc += (terms.L, terms.L_i, terms.L_q)
    acc /= len(dataset)
    return LossTerms(*acc)


def _snapshot(model):
    return {k: v.copy() for k, v in model.parameters().items()}


def _restore(model, snap):
    for k, v in model.parameters().items():
        v[...] = snap[k]


def build_model(model_config: ModelConfig, dataset):
    first = dataset[0].features
    return InQSSModel(model_config, first.spec.shape[1], first.scat.shape[1])


def train(train_set, val_set, model_config: ModelConfig, train_config: TrainConfig, log_path=None,
          log_header=None):
    """Per-utterance Adam steps with validation-based model selection.

    ``val_set=None`` selects on the training set itself (for tiny corpora
    that cannot spare a validation split). Stops after ``patience``
    consecutive epochs without a validation improvement, after
    ``max_epochs``, or once ``max_steps`` optimizer steps have been taken.
    The returned model carries the best-validation parameters.

    Epoch records are streamed to ``log_path`` as JSON lines, preceded by
    ``log_header`` (a dict) when given.
    """
    if not train_set:
        raise DatasetTooSmall("training set is empty")
    weights = OBJECTIVES[train_config.objective]
    model = build_model(model_config, train_set)
    params = model.parameters()
    opt = Adam(lr=train_config.lr)
    state = TrainState(optimizer=opt)
    rng = np.random.default_rng(train_config.seed)
    selection = val_set if val_set else train_set
    best = _snapshot(model)
    records = []
    fh = open(log_path, "w", encoding="utf-8") if log_path else None
    if fh and log_header is not None:
        fh.write(json.dumps(log_header, sort_keys=True) + "\n")
    try:
        for epoch in range(train_config.max_epochs):
            acc = np.zeros(3)
            n_steps = 0
            for idx in rng.permutation(len(train_set)):
                if train_config.max_steps is not None and state.steps >= train_config.max_steps:
                    break
                item = train_set[idx]
                try:
                    pred = model.forward(item.features)
                except NonFiniteError:
                    raise NonFiniteLoss(item.utterance_id, math.nan) from None
                terms, grads = multitask_loss(pred, item.target_i, item.target_q, weights)
                if not math.isfinite(terms.L):
                    raise NonFiniteLoss(item.utterance_id, terms.L)
                opt.step(params, model.backward(grads))
                acc += (terms.L, terms.L_i, terms.L_q)
                n_steps += 1
                state.steps += 1
            if n_steps == 0:
                break
            acc /= n_steps
            val = evaluate_loss(model, selection, weights)
            improved = val.L < state.best_val_loss
            if improved:
                state.best_val_loss = val.L
                state.best_epoch = epoch
                state.patience_counter = 0
                best = _snapshot(model)
            else:
                state.patience_counter += 1
            state.epoch = epoch + 1
            rec = {
                "epoch": epoch,
                "train_L": float(acc[0]), "train_Li": float(acc[1]), "train_Lq": float(acc[2]),
                "val_L": float(val.L), "val_Li": float(val.L_i), "val_Lq": float(val.L_q),
                "selected": bool(improved),
            }
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            log.info("epoch %d train_L=%.5f val_L=%.5f%s", epoch, acc[0], val.L, " *" if improved else "")
            if not improved and state.patience_counter >= train_config.patience:
                break
    finally:
        if fh:
            fh.close()
    _restore(model, best)
    return TrainResult(model, records, state)
