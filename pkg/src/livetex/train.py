"""RMSprop and the training loop: seeded shuffling, mini-batches, per-epoch
validation, best-model checkpointing, and line-delimited history records.

Everything downstream of the seed is deterministic: initialization, epoch
shuffles, and dropout masks all come from generators derived from
``TrainConfig.seed``, so a rerun with identical inputs reproduces the
history bit for bit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .dataset import DatasetConfig
from .features import FeatureCache, NormStats, fit_norm_stats, normalize
from .nn import CLASS_ORDER, Model, ModelConfig, load_checkpoint, save_checkpoint

logger = logging.getLogger("livetex.train")


class LeakageError(RuntimeError):
    """Normalization would be fitted on validation/testing users."""


@dataclass
class TrainConfig:
    variant: str = "dual"
    hidden: int | None = None
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    decay: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0
    protocol: str = "all"

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")


@dataclass
class RmspropState:
    """Per-parameter running average of squared gradients."""

    avg_sq: dict[str, np.ndarray]
    learning_rate: float
    decay: float
    epsilon: float


def rmsprop_init(
    params: dict[str, np.ndarray],
    learning_rate: float = 1e-3,
    decay: float = 0.9,
    epsilon: float = 1e-8,
) -> RmspropState:
    return RmspropState(
        avg_sq={k: np.zeros_like(v) for k, v in params.items()},
        learning_rate=learning_rate,
        decay=decay,
        epsilon=epsilon,
    )


def rmsprop_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: RmspropState,
) -> tuple[dict[str, np.ndarray], RmspropState]:
    """s <- decay*s + (1-decay)*g^2; p <- p - lr*g/(sqrt(s)+eps), in place."""
    for name, g in grads.items():
        if name.startswith("_"):
            continue
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        s = state.avg_sq[name]
        s *= state.decay
        s += (1.0 - state.decay) * g * g
        params[name] -= state.learning_rate * g / (np.sqrt(s) + state.epsilon)
    return params, state


@dataclass
class TrainResult:
    model: Model
    norm: NormStats
    history: list[dict] = field(default_factory=list)
    checkpoint_path: Path | None = None
    best_epoch: int | None = None
    diverged: bool = False


def _labels_to_indices(labels: list[str]) -> np.ndarray:
    return np.array([CLASS_ORDER.index(lbl) for lbl in labels], dtype=np.int64)


def _assert_no_leakage(samples, config: DatasetConfig) -> None:
    held_out = set()
    for split in ("validation", "testing"):
        held_out |= set(config.splits.get(split, []))
    bad = [s for s in samples if s.user_id in held_out]
    if bad:
        raise LeakageError(
            f"normalization would be fitted on held-out user data, e.g. video "
            f"{bad[0].video_id!r} of user {bad[0].user_id!r}"
        )


def batched_scores(model: Model, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Inference-mode bonafide probabilities over (N, n, d) input."""
    parts = [
        model.scores(x[i : i + batch_size]) for i in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(parts) if parts else np.zeros(0)


def _split_metrics(model: Model, x: np.ndarray, labels: list[str]):
    scores = batched_scores(model, x)
    outcomes = [
        metrics.outcome_from_score(float(s), lbl) for s, lbl in zip(scores, labels)
    ]
    return metrics.balanced_accuracy(outcomes), metrics.acer(outcomes)


def train(config: TrainConfig, cache: FeatureCache, out_dir) -> TrainResult:
    """Fit a classifier on the cache's training split.

    Normalization stats come from the training split only (fitting on
    held-out users is a hard error). The best-validation model is
    checkpointed and reloaded at the end, so the returned model is exactly
    the artifact on disk.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    train_samples = cache.select("training", config.protocol)
    if not train_samples:
        raise ValueError("training split is empty")
    val_samples = cache.select("validation", config.protocol)
    _assert_no_leakage(train_samples, cache.dataset)

    dim = cache.spec.feature_dim
    x_train_raw = cache.load_matrix(train_samples)
    norm = fit_norm_stats(
        x_train_raw.reshape(-1, dim), fitted_on=f"{cache.dataset.name}/training"
    )
    x_train = normalize(x_train_raw, norm)
    y_train = _labels_to_indices([s.label for s in train_samples])

    if val_samples:
        x_val = normalize(cache.load_matrix(val_samples), norm)
        val_labels = [s.label for s in val_samples]
    else:
        logger.warning("validation split is empty; selecting on training metrics")
        x_val, val_labels = x_train, [s.label for s in train_samples]

    model = Model(
        ModelConfig(
            variant=config.variant,
            input_dim=dim,
            hidden=config.hidden,
            seed=config.seed,
        )
    )
    state = rmsprop_init(model.params, config.learning_rate, config.decay, config.epsilon)
    rng = np.random.default_rng(config.seed)

    ckpt_path = out / "model.ckpt"
    history_path = out / "history.jsonl"
    result = TrainResult(model=model, norm=norm)
    best_key: tuple[float, float] | None = None
    n_train = x_train.shape[0]

    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n_train)
        total_loss = 0.0
        diverged = False
        for lo in range(0, n_train, config.batch_size):
            idx = perm[lo : lo + config.batch_size]
            out_batch, fwd = model.forward(x_train[idx], train=True, rng=rng)
            loss = model.loss(out_batch, y_train[idx])
            if not np.isfinite(loss):
                logger.error("loss diverged at epoch %d; stopping", epoch)
                diverged = True
                break
            grads = model.backward(fwd, y_train[idx])
            try:
                rmsprop_step(model.params, grads, state)
            except FloatingPointError as exc:
                logger.error("%s at epoch %d; stopping", exc, epoch)
                diverged = True
                break
            total_loss += loss * idx.size
        if diverged:
            result.diverged = True
            break

        train_loss = total_loss / n_train
        val_bal, val_acer = _split_metrics(model, x_val, val_labels)
        record = {
            "epoch": epoch,
            "train_loss": train_loss,
            "val_balanced_accuracy": val_bal,
            "val_acer": val_acer,
        }
        result.history.append(record)
        logger.info(
            "epoch %d: loss=%.4f val_bal_acc=%.4f val_acer=%.4f",
            epoch, train_loss, val_bal, val_acer,
        )

        # best model by validation balanced accuracy, ties to lower ACER
        key = (val_bal, -(val_acer if val_acer is not None else 1.0))
        if best_key is None or key > best_key:
            best_key = key
            result.best_epoch = epoch
            save_checkpoint(
                ckpt_path,
                model,
                norm,
                cache.spec,
                cache.frames_per_sample,
                extra={
                    "epoch": epoch,
                    "val_balanced_accuracy": val_bal,
                    "val_acer": val_acer,
                    "dataset": cache.dataset.name,
                },
            )
            result.checkpoint_path = ckpt_path

    with open(history_path, "w", encoding="utf-8") as fh:
        for record in result.history:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    if result.checkpoint_path is not None:
        best_model, best_norm, _, _, _ = load_checkpoint(result.checkpoint_path)
        result.model = best_model
        result.norm = best_norm
    return result
