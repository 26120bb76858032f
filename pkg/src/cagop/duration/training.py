"""Training loop, schedule, and gradient checking for the duration net."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..model import DataError, NumericError
from .net import (
    DurationNetConfig,
    DurationNetParams,
    DurationSample,
    _forward_batch,
    backward,
    clone_params,
    init_params,
    iter_tensors,
    masked_l1_and_grads,
    zeros_like_params,
)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.98
ADAM_EPS = 1e-9


def noam_lr(step: int, cfg: DurationNetConfig) -> float:
    """Inverse-sqrt schedule with linear warmup; step counts from 1."""
    if step < 1:
        raise DataError(f"step must be >= 1, got {step}")
    return (
        cfg.lr_scale
        * cfg.embed_dim ** -0.5
        * min(step ** -0.5, step * cfg.warmup_steps ** -1.5)
    )


@dataclass(frozen=True)
class TrainLogEntry:
    epoch: int
    train_loss: float
    val_mae: float


class _AdamState:
    def __init__(self, params: DurationNetParams):
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.step = 0

    def update(
        self, params: DurationNetParams, grads: DurationNetParams, lr: float
    ) -> None:
        self.step += 1
        # Bias-corrected moments, applied tensor by tensor in place.
        correct1 = 1.0 - ADAM_BETA1 ** self.step
        correct2 = 1.0 - ADAM_BETA2 ** self.step
        for (_, p), (_, g), (_, m), (_, v) in zip(
            iter_tensors(params), iter_tensors(grads),
            iter_tensors(self.m), iter_tensors(self.v),
        ):
            m *= ADAM_BETA1
            m += (1.0 - ADAM_BETA1) * g
            v *= ADAM_BETA2
            v += (1.0 - ADAM_BETA2) * (g * g)
            p -= lr * (m / correct1) / (np.sqrt(v / correct2) + ADAM_EPS)


def _pad_batch(samples: Sequence[DurationSample]):
    length = max(len(s) for s in samples)
    batch = len(samples)
    phone_ids = np.zeros((batch, length), dtype=np.int64)
    targets = np.zeros((batch, length), dtype=np.float64)
    mask = np.zeros((batch, length), dtype=bool)
    speeds = np.zeros(batch, dtype=np.float64)
    for i, s in enumerate(samples):
        n = len(s)
        phone_ids[i, :n] = s.phones
        targets[i, :n] = s.durations
        mask[i, :n] = True
        speeds[i] = s.speed
    return phone_ids, speeds, targets, mask


def evaluate_mae(
    params: DurationNetParams,
    cfg: DurationNetConfig,
    samples: Sequence[DurationSample],
) -> float:
    """Eval-mode mean absolute error in frames over all real tokens."""
    if not samples:
        raise DataError("no samples to evaluate")
    total = 0.0
    count = 0
    for start in range(0, len(samples), cfg.batch_size):
        chunk = samples[start : start + cfg.batch_size]
        phone_ids, speeds, targets, mask = _pad_batch(chunk)
        preds, _ = _forward_batch(
            params, cfg, phone_ids, speeds, mask, train=False, rng=None
        )
        total += float(np.abs((preds - targets) * mask).sum())
        count += int(mask.sum())
    return total / count


def phone_mean_baseline_mae(
    train_samples: Sequence[DurationSample],
    eval_samples: Sequence[DurationSample],
) -> float:
    """MAE of predicting each phone's global mean training duration.

    The reference point for duration-model quality: no context, no speed,
    one constant per phone (overall mean for phones unseen in training).
    """
    if not train_samples or not eval_samples:
        raise DataError("baseline needs non-empty train and eval sets")
    sums: dict[int, float] = {}
    counts: dict[int, int] = {}
    total = 0.0
    n = 0
    for s in train_samples:
        for phone, dur in zip(s.phones, s.durations):
            sums[phone] = sums.get(phone, 0.0) + dur
            counts[phone] = counts.get(phone, 0) + 1
            total += dur
            n += 1
    overall = total / n
    means = {p: sums[p] / counts[p] for p in sums}
    err = 0.0
    m = 0
    for s in eval_samples:
        for phone, dur in zip(s.phones, s.durations):
            err += abs(means.get(phone, overall) - dur)
            m += 1
    return err / m


def _infer_num_phones(*sample_sets: Sequence[DurationSample]) -> int:
    highest = -1
    for samples in sample_sets:
        for s in samples:
            highest = max(highest, max(s.phones))
    return highest + 1


def train(
    dataset: Sequence[DurationSample],
    cfg: DurationNetConfig,
    validation: Sequence[DurationSample],
    num_phones: Optional[int] = None,
    epochs: int = 100,
    callback: Optional[Callable[[TrainLogEntry], None]] = None,
) -> tuple[DurationNetParams, list[TrainLogEntry]]:
    """Fit the duration net; returns the best-validation snapshot and a log.

    Deterministic for a fixed config seed: one generator drives init,
    shuffling, and dropout in a fixed order. The returned parameters are
    the epoch snapshot with the lowest validation MAE, never a worse later
    state. A non-finite loss raises NumericError with the failing step.
    """
    dataset = list(dataset)
    validation = list(validation)
    if not dataset:
        raise DataError("training set is empty")
    if not validation:
        raise DataError("validation set is empty")
    if epochs < 1:
        raise DataError(f"epochs must be >= 1, got {epochs}")
    for s in dataset + validation:
        if len(s) > cfg.max_seq_len:
            raise DataError(
                f"sample length {len(s)} exceeds max_seq_len {cfg.max_seq_len}"
            )
    if num_phones is None:
        num_phones = _infer_num_phones(dataset, validation)
    rng = np.random.default_rng(cfg.seed)
    params = init_params(cfg, num_phones, rng)
    adam = _AdamState(params)
    best = clone_params(params)
    best_mae = np.inf
    log: list[TrainLogEntry] = []

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(dataset))
        abs_err = 0.0
        tokens = 0
        for start in range(0, len(dataset), cfg.batch_size):
            chunk = [dataset[i] for i in order[start : start + cfg.batch_size]]
            phone_ids, speeds, targets, mask = _pad_batch(chunk)
            loss, grads = masked_l1_and_grads(
                params, cfg, phone_ids, speeds, targets, mask,
                train=True, rng=rng,
            )
            if not np.isfinite(loss):
                raise NumericError(
                    f"training diverged: non-finite loss at step {adam.step + 1}"
                )
            n = int(mask.sum())
            abs_err += loss * n
            tokens += n
            adam.update(params, grads, noam_lr(adam.step + 1, cfg))
        val_mae = evaluate_mae(params, cfg, validation)
        entry = TrainLogEntry(epoch, abs_err / tokens, val_mae)
        log.append(entry)
        if callback is not None:
            callback(entry)
        if val_mae < best_mae:
            best_mae = val_mae
            best = clone_params(params)
    return best, log


def overfit_single(
    sample: DurationSample,
    cfg: DurationNetConfig,
    num_phones: Optional[int] = None,
    max_steps: int = 2000,
    target_loss: float = 0.01,
) -> tuple[DurationNetParams, list[float]]:
    """Drive the loss on one sample below target_loss; returns the loss trace.

    Dropout is disabled: memorizing a single point is a capacity check, not
    a regularization exercise.
    """
    if num_phones is None:
        num_phones = max(sample.phones) + 1
    eval_cfg = DurationNetConfig(
        embed_dim=cfg.embed_dim,
        num_blocks=cfg.num_blocks,
        num_heads=cfg.num_heads,
        ffn_dim=cfg.ffn_dim,
        dropout_rate=0.0,
        max_seq_len=cfg.max_seq_len,
        lr_scale=cfg.lr_scale,
        warmup_steps=cfg.warmup_steps,
        batch_size=1,
        seed=cfg.seed,
    )
    rng = np.random.default_rng(eval_cfg.seed)
    params = init_params(eval_cfg, num_phones, rng)
    adam = _AdamState(params)
    trace: list[float] = []
    for _ in range(max_steps):
        loss, grads = backward(params, eval_cfg, sample)
        if not np.isfinite(loss):
            raise NumericError(
                f"overfit diverged: non-finite loss at step {adam.step + 1}"
            )
        trace.append(loss)
        if loss < target_loss:
            break
        adam.update(params, grads, noam_lr(adam.step + 1, eval_cfg))
    return params, trace


def gradient_check(
    params: DurationNetParams,
    cfg: DurationNetConfig,
    sample: DurationSample,
    step: float = 1e-5,
    max_entries_per_tensor: int = 4,
    seed: int = 0,
) -> float:
    """Worst relative error between analytic and central-difference grads.

    Checks a seeded random subset of entries in every tensor. Relative
    error is |fd - an| / max(|fd|, |an|, 1e-8). Dropout must be off, since
    finite differences need a deterministic loss.
    """
    if cfg.dropout_rate != 0.0:
        raise DataError("gradient_check requires dropout_rate == 0")
    _, analytic = backward(params, cfg, sample)
    picker = np.random.default_rng(seed)
    worst = 0.0
    tensors = dict(iter_tensors(params))
    for name, grad in iter_tensors(analytic):
        tensor = tensors[name]
        flat = tensor.reshape(-1)
        total = flat.size
        chosen = (
            np.arange(total)
            if total <= max_entries_per_tensor
            else picker.choice(total, size=max_entries_per_tensor, replace=False)
        )
        for idx in chosen:
            original = flat[idx]
            flat[idx] = original + step
            up, _ = backward(params, cfg, sample)
            flat[idx] = original - step
            down, _ = backward(params, cfg, sample)
            flat[idx] = original
            fd = (up - down) / (2.0 * step)
            an = grad.reshape(-1)[idx]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-8)
            worst = max(worst, rel)
    return worst
