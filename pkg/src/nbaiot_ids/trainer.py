"""Adam training loop with categorical cross-entropy, validation and timing."""

from __future__ import annotations

import contextlib
import logging
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from nbaiot_ids.errors import NumericError
from nbaiot_ids.ingest import philox_rng
from nbaiot_ids.nn.layers import cross_entropy
from nbaiot_ids.nn.model import Model, backward, forward

logger = logging.getLogger(__name__)

_STREAM_SHUFFLE = 3
_STREAM_DROPOUT = 4


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 128
    epochs: int = 10
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop_patience: int | None = None
    seed: int = 0
    shuffle_each_epoch: bool = True
    deterministic: bool = True
    eval_batch_size: int = 1024

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.early_stop_patience is not None and self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be at least 1 when set")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, model: Model) -> AdamState:
        return cls(
            {k: np.zeros_like(p) for k, p in model.params.items()},
            {k: np.zeros_like(p) for k, p in model.params.items()},
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float | None
    val_acc: float | None
    seconds: float
    ms_per_step: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EvalResult:
    loss: float
    predictions: np.ndarray
    probabilities: np.ndarray
    seconds: float
    ms_per_step: float
    steps: int
    labels: np.ndarray | None = None

    @property
    def accuracy(self) -> float:
        if self.labels is None:
            return float("nan")
        return float(np.mean(self.labels == self.predictions))


def one_hot(labels: int | np.ndarray, n_classes: int, dtype=np.float64) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"label out of range for {n_classes} classes")
    return np.eye(n_classes, dtype=dtype)[labels]


def adam_step(
    model: Model,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[Model, AdamState]:
    """One bias-corrected Adam update, applied in place to ``model.params`` and ``state``."""
    if grads.keys() != model.params.keys():
        raise ValueError("gradient set does not match the model parameters")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, p in model.params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return model, state


def _blas_context(deterministic: bool):
    # Fixed single-threaded BLAS keeps float reduction order reproducible.
    return threadpool_limits(limits=1, user_api="blas") if deterministic else contextlib.nullcontext()


def evaluate(
    model: Model, x: np.ndarray, y: np.ndarray | None = None, batch_size: int = 1024, deterministic: bool = True
) -> EvalResult:
    """Inference pass in fixed-size batches: loss, argmax predictions, probabilities, timing."""
    x = np.asarray(x)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot evaluate an empty dataset")
    probs = np.empty((n, model.config.num_classes), dtype=model.dtype)
    steps = 0
    start = time.perf_counter()
    with _blas_context(deterministic):
        for lo in range(0, n, batch_size):
            probs[lo : lo + batch_size] = forward(model, x[lo : lo + batch_size])[0]
            steps += 1
    seconds = time.perf_counter() - start
    preds = np.argmax(probs, axis=1)
    loss = float("nan")
    if y is not None:
        loss = cross_entropy(probs, one_hot(y, model.config.num_classes))
    labels = None if y is None else np.asarray(y, dtype=np.int64)
    return EvalResult(loss, preds, probs, seconds, 1000.0 * seconds / steps, steps, labels)


def fit(
    model: Model,
    train_x: np.ndarray,
    train_y: np.ndarray,
    val_x: np.ndarray | None = None,
    val_y: np.ndarray | None = None,
    config: TrainConfig = TrainConfig(),
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Model, list[EpochRecord]]:
    """Train ``model`` in place with minibatch Adam; returns it with the epoch history.

    Each epoch shuffles with ``philox_rng(seed, 3, epoch)`` and draws dropout masks
    from a single ``philox_rng(seed, 4)`` stream, so validation data never influences
    the parameter trajectory. The last partial batch is kept. With early stopping the
    parameters from the best validation-loss epoch are restored at the end.
    """
    train_x = np.asarray(train_x, dtype=model.dtype)
    train_y = np.asarray(train_y, dtype=np.int64)
    n = train_x.shape[0]
    if n == 0:
        raise ValueError("training set is empty")
    has_val = val_x is not None and val_y is not None and len(val_y) > 0
    if config.early_stop_patience is not None and not has_val:
        raise ValueError("early stopping needs a validation set")

    n_classes = model.config.num_classes
    state = AdamState.zeros_like(model)
    dropout_rng = philox_rng(config.seed, _STREAM_DROPOUT)
    history: list[EpochRecord] = []
    best_loss = np.inf
    best_params: dict[str, np.ndarray] | None = None
    stale = 0

    with _blas_context(config.deterministic):
        for epoch in range(1, config.epochs + 1):
            start = time.perf_counter()
            order = np.arange(n)
            if config.shuffle_each_epoch:
                order = philox_rng(config.seed, _STREAM_SHUFFLE, epoch).permutation(n)
            loss_sum = 0.0
            correct = 0
            steps = 0
            for lo in range(0, n, config.batch_size):
                idx = order[lo : lo + config.batch_size]
                yb = train_y[idx]
                probs, cache = forward(model, train_x[idx], training=True, rng=dropout_rng)
                grads, loss = backward(model, cache, one_hot(yb, n_classes))
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite training loss at epoch {epoch}, step {steps + 1}")
                adam_step(
                    model, grads, state, config.learning_rate,
                    config.adam_beta1, config.adam_beta2, config.adam_eps,
                )
                loss_sum += loss * len(idx)
                correct += int(np.sum(np.argmax(probs, axis=1) == yb))
                steps += 1
            seconds = time.perf_counter() - start

            val_loss = val_acc = None
            if has_val:
                res = evaluate(model, val_x, val_y, config.eval_batch_size, deterministic=False)
                val_loss, val_acc = res.loss, res.accuracy
            record = EpochRecord(
                epoch, loss_sum / n, correct / n, val_loss, val_acc, seconds, 1000.0 * seconds / steps
            )
            history.append(record)
            logger.info(
                "epoch %d: loss %.4f acc %.4f val_loss %s val_acc %s (%.1fs)",
                epoch, record.train_loss, record.train_acc, val_loss, val_acc, seconds,
            )
            if on_epoch is not None:
                on_epoch(record)

            if config.early_stop_patience is not None:
                if val_loss < best_loss:
                    best_loss = val_loss
                    best_params = {k: v.copy() for k, v in model.params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale >= config.early_stop_patience:
                        logger.info("early stop after epoch %d", epoch)
                        break

    if best_params is not None:
        for k, v in best_params.items():
            model.params[k][...] = v
    return model, history
