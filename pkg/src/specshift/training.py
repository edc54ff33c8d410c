"""Training loop with upsampling, early stopping on validation loss, and F1."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import nn
from .datasets import Dataset
from .models import (
    GraphInput,
    ModelConfig,
    as_tensors,
    augcyc_prepare,
    graph_loss,
    init_params,
    predict_logits,
    prepare,
)
from .splits import SPLIT_NAMES, SplitBundle, UpsampleRule, upsample

log = logging.getLogger(__name__)


class TrainingDiverged(ArithmeticError):
    pass


def f1_scores(y_true: Sequence[int], y_pred: Sequence[int]) -> tuple[float, float]:
    """(F1 with class 1 positive, macro F1 over classes 0 and 1)."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)

    def f1(pos: int) -> float:
        tp = int(np.sum((y_pred == pos) & (y_true == pos)))
        fp = int(np.sum((y_pred == pos) & (y_true != pos)))
        fn = int(np.sum((y_pred != pos) & (y_true == pos)))
        if tp == 0:
            return 0.0
        p, r = tp / (tp + fp), tp / (tp + fn)
        return 2 * p * r / (p + r)

    f1_pos = f1(1)
    return f1_pos, (f1(0) + f1_pos) / 2


@dataclass
class Model:
    config: ModelConfig
    params: dict[str, np.ndarray]

    def predict(self, inputs: Sequence[GraphInput]) -> np.ndarray:
        return np.array(
            [int(np.argmax(predict_logits(self.config, inp, self.params))) for inp in inputs],
            dtype=np.int64,
        )

    def mean_loss(self, inputs: Sequence[GraphInput]) -> float:
        if not inputs:
            return float("nan")
        plain = ModelConfig(**{**asdict(self.config), "ssl_lambda": 0.0})
        tensors = as_tensors(self.params)
        return float(np.mean([graph_loss(plain, inp, tensors).item() for inp in inputs]))


def evaluate_f1(model: Model, inputs: Sequence[GraphInput]) -> tuple[float, float]:
    if not inputs:
        return 0.0, 0.0
    y = [inp.label for inp in inputs]
    return f1_scores(y, model.predict(inputs))


@dataclass
class TrainReport:
    seed: int
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    best_epoch: int = -1
    early_stop_epoch: Optional[int] = None
    epochs_run: int = 0
    f1: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _upsample_spec(spec) -> dict[int, UpsampleRule]:
    return dict(spec or {})


def train(
    config: ModelConfig,
    dataset: Dataset,
    splits: SplitBundle,
    upsample_spec: Optional[Mapping[int, UpsampleRule]] = None,
    seed: int = 0,
    inputs: Optional[Sequence[GraphInput]] = None,
) -> tuple[Model, TrainReport]:
    """Train from scratch and return the best-validation model with its report.

    ``inputs`` may carry precomputed :class:`GraphInput` objects for every
    graph of ``dataset`` (they are reused for val/test and, without AugCyc,
    for train too).
    """
    inputs = list(inputs) if inputs is not None else [prepare(g) for g in dataset.graphs]
    if config.augcyc is not None:
        n, r = config.augcyc
        train_inputs = [prepare(g) for g in augcyc_prepare(splits.train, dataset, n, r, seed)]
    else:
        train_inputs = [inputs[i] for i in splits.train]

    # positions into train_inputs, with class upsampling
    labels_by_pos = np.array([inp.label for inp in train_inputs])
    positions = upsample(range(len(train_inputs)), labels_by_pos, _upsample_spec(upsample_spec), seed)
    val_inputs = [inputs[i] for i in splits.val]

    rng = np.random.default_rng(seed)
    in_dim = inputs[0].x.shape[1] if inputs else 1
    params = init_params(config, in_dim, max(dataset.class_count, 2), rng)
    model = Model(config, params)
    report = TrainReport(seed=seed)
    best = {k: v.copy() for k, v in params.items()}
    best_val = np.inf
    state = nn.AdamState(lr=config.lr)

    for epoch in range(config.max_epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(positions))
        batch_losses = []
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            batch = [train_inputs[positions[j]] for j in order[start: start + config.batch_size]]
            tensors = as_tensors(params, requires_grad=True)
            try:
                with nn.Tape() as tape:
                    losses = [graph_loss(config, inp, tensors) for inp in batch]
                    loss = nn.scale(nn.sum_scalars(losses), 1.0 / len(batch))
                tape.backward(loss)
            except nn.NumericError as exc:
                raise TrainingDiverged(f"training diverged at epoch {epoch}, batch {b}") from exc
            if not np.isfinite(loss.item()):
                raise TrainingDiverged(f"training diverged at epoch {epoch}, batch {b}")
            grads = {
                k: (t.grad if t.grad is not None else np.zeros_like(t.data))
                for k, t in tensors.items()
            }
            nn.adam_step(params, grads, state)
            batch_losses.append(loss.item())
        report.train_losses.append(float(np.mean(batch_losses)) if batch_losses else float("nan"))
        val_loss = model.mean_loss(val_inputs)
        report.val_losses.append(val_loss)
        report.epochs_run = epoch + 1
        if val_loss < best_val or report.best_epoch < 0:
            best_val = val_loss
            report.best_epoch = epoch
            best = {k: v.copy() for k, v in params.items()}
        elif epoch - report.best_epoch >= config.patience:
            report.early_stop_epoch = epoch
            log.info("early stop at epoch %d (best %d)", epoch, report.best_epoch)
            break

    model = Model(config, best)
    for name in SPLIT_NAMES:
        f_pos, f_macro = evaluate_f1(model, [inputs[i] for i in splits[name]])
        report.f1[name] = {"class1": f_pos, "macro": f_macro}
    return model, report
