"""Losses, warmup SGD, the training loop and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .graph import HeteroGraph
from .metrics import Metrics, evaluate_scores
from .model import BatchInputs, HgcnModel, check_compatible, forward_arrays, stack_graphs

log = logging.getLogger(__name__)

LossMode = Literal["multilabel-bce", "multiclass-ce"]


class NumericError(RuntimeError):
    """Training produced a non-finite loss."""


@dataclass(frozen=True)
class TrainConfig:
    lr_base: float = 0.005
    warmup_iters: int = 1000
    epochs: int = 20
    batch_size: int = 8
    seed: int = 0
    loss_mode: LossMode = "multilabel-bce"
    momentum: float = 0.0
    weight_decay: float = 0.0

    def __post_init__(self):
        # lr_base == 0 is allowed as a null-update mode
        if not self.lr_base >= 0:
            raise ValueError(f"lr_base must be >= 0, got {self.lr_base}")
        if self.warmup_iters < 0:
            raise ValueError("warmup_iters must be >= 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.loss_mode not in ("multilabel-bce", "multiclass-ce"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")


def loss(logits: Tensor, label, mode: LossMode = "multilabel-bce") -> Tensor:
    """Scalar loss for ``(B x) C`` logits, averaged over the batch.

    ``multilabel-bce`` averages per-class binary cross-entropy on sigmoid
    outputs; ``multiclass-ce`` is the negative log-softmax of the single
    positive class.
    """
    label = np.asarray(label, dtype=np.float64)
    if mode == "multilabel-bce":
        return ad.bce_with_logits(logits, label)
    if mode == "multiclass-ce":
        positives = (label > 0.5).sum(axis=-1)
        if np.any(positives != 1):
            raise ValueError("multiclass-ce needs exactly one positive class per sample")
        return ad.softmax_cross_entropy(logits, label)
    raise ValueError(f"unknown loss mode {mode!r}")


def learning_rate(iteration: int, cfg: TrainConfig) -> float:
    if cfg.warmup_iters == 0:
        return cfg.lr_base
    return cfg.lr_base * min(1.0, (iteration + 1) / cfg.warmup_iters)


def sgd_step(model: HgcnModel, gradients: dict[Tensor, np.ndarray], iteration: int,
             cfg: TrainConfig, state: dict | None = None) -> HgcnModel:
    """In-place ``theta -= lr(t) * grad`` over the model's trainable tensors.

    ``state`` holds momentum buffers between calls when momentum is enabled.
    """
    lr = learning_rate(iteration, cfg)
    for p in model.trainable():
        g = gradients.get(p)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.data
        if cfg.momentum:
            if state is None:
                raise ValueError("momentum needs a state dict")
            buf = state.get(id(p))
            buf = g if buf is None else cfg.momentum * buf + g
            state[id(p)] = buf
            g = buf
        p.data = p.data - lr * g
    return model


@dataclass
class StackedDataset:
    """Equally-shaped graphs stacked once so batches are cheap slices."""

    inputs: BatchInputs

    @classmethod
    def from_graphs(cls, graphs: Sequence[HeteroGraph], model: HgcnModel | None = None):
        if model is not None:
            for g in graphs:
                check_compatible(model, g)
        return cls(stack_graphs(graphs))

    def __len__(self) -> int:
        return len(self.inputs.ids)

    def batch(self, idx: np.ndarray):
        b = self.inputs
        return b.audio[idx], b.video[idx], b.adj_a[idx], b.adj_v[idx], b.labels[idx]


def scores_from_logits(logits: np.ndarray, mode: LossMode) -> np.ndarray:
    if mode == "multiclass-ce":
        z = logits - logits.max(axis=-1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=-1, keepdims=True)
    return ad.sigmoid(Tensor(logits)).data


def predict(model: HgcnModel, graphs, mode: LossMode = "multilabel-bce",
            batch_size: int = 64):
    """Return ``(scores, logits, masks)`` for a graph list or stacked dataset."""
    data = graphs if isinstance(graphs, StackedDataset) else StackedDataset.from_graphs(graphs, model)
    logits, masks = [], []
    for start in range(0, len(data), batch_size):
        idx = np.arange(start, min(start + batch_size, len(data)))
        audio, video, adj_a, adj_v, _ = data.batch(idx)
        out, mask = forward_arrays(model, audio, video, adj_a, adj_v)
        logits.append(out.data)
        masks.append(mask)
    logits = np.concatenate(logits) if logits else np.zeros((0, model.config.n_classes))
    masks = None if not masks or masks[0] is None else np.concatenate(masks)
    return scores_from_logits(logits, mode), logits, masks


def evaluate(model: HgcnModel, graphs, mode: LossMode = "multilabel-bce",
             batch_size: int = 64) -> tuple[Metrics, float]:
    data = graphs if isinstance(graphs, StackedDataset) else StackedDataset.from_graphs(graphs, model)
    scores, logits, _ = predict(model, data, mode, batch_size)
    labels = data.inputs.labels
    mean_loss = loss(Tensor(logits), labels, mode).item() if len(data) else float("nan")
    return evaluate_scores(scores, labels), mean_loss


def train_step(model: HgcnModel, batch, iteration: int, cfg: TrainConfig,
               state: dict | None = None) -> tuple[float, np.ndarray]:
    audio, video, adj_a, adj_v, labels = batch
    with ad.Tape() as tape:
        logits, _ = forward_arrays(model, audio, video, adj_a, adj_v)
        value = loss(logits, labels, cfg.loss_mode)
    if not np.isfinite(value.item()):
        raise NumericError(f"non-finite loss at iteration {iteration}")
    grads = ad.backward(tape, value, model.trainable())
    sgd_step(model, grads, iteration, cfg, state)
    return value.item(), logits.data


def train(model: HgcnModel, dataset: Sequence[HeteroGraph], cfg: TrainConfig,
          val: Sequence[HeteroGraph] | None = None,
          on_epoch: Callable[[dict], None] | None = None):
    """Mini-batch SGD with linear warmup; returns ``(model, history)``.

    ``history`` has one row per epoch and split with keys ``epoch, split,
    loss, map, roc_auc, accuracy``.  Training-split metrics use the scores
    seen during the epoch (before each batch's update).
    """
    for n, g in enumerate(dataset):
        try:
            check_compatible(model, g)
        except ShapeError as exc:
            raise ShapeError(f"training sample {n}: {exc}") from None
    train_data = StackedDataset.from_graphs(dataset, model)
    val_data = StackedDataset.from_graphs(val, model) if val else None
    rng = np.random.default_rng(cfg.seed)
    state: dict = {}
    history: list[dict] = []
    iteration = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_data))
        losses, weights = [], []
        seen_scores = np.zeros((len(train_data), model.config.n_classes))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            value, logits = train_step(model, train_data.batch(idx), iteration, cfg, state)
            seen_scores[idx] = scores_from_logits(logits, cfg.loss_mode)
            losses.append(value)
            weights.append(len(idx))
            iteration += 1
        train_metrics = evaluate_scores(seen_scores, train_data.inputs.labels)
        rows = [_row(epoch, "train", float(np.average(losses, weights=weights)), train_metrics)]
        if val_data is not None:
            val_metrics, val_loss = evaluate(model, val_data, cfg.loss_mode)
            rows.append(_row(epoch, "val", val_loss, val_metrics))
        for row in rows:
            log.info("epoch %d %s loss=%.4f map=%.4f auc=%.4f acc=%.4f", row["epoch"],
                     row["split"], row["loss"], row["map"], row["roc_auc"], row["accuracy"])
            history.append(row)
            if on_epoch is not None:
                on_epoch(row)
    return model, history


def _row(epoch: int, split_name: str, value: float, m: Metrics) -> dict:
    return {"epoch": epoch, "split": split_name, "loss": value, "map": m.map,
            "roc_auc": m.roc_auc, "accuracy": m.accuracy}


def overfit_single(model: HgcnModel, graph: HeteroGraph, cfg: TrainConfig,
                   iterations: int = 500) -> list[float]:
    """Repeated steps on one graph; returns the loss before each step."""
    data = StackedDataset.from_graphs([graph], model)
    batch = data.batch(np.array([0]))
    return [train_step(model, batch, t, cfg)[0] for t in range(iterations)]
