"""Loss terms, Adam with decoupled weight decay, exponential LR schedule,
and the training loop with metrics logging and best-checkpoint retention."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Parameters, Tensor, backward
from .ingest import Sample
from .model.network import (
    ModelConfig,
    forward_variant,
    init_params,
    save_checkpoint,
)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-4
    gamma: float = 0.99
    epochs: int = 100
    batch_size: int = 16
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 5.0
    max_steps: int | None = None

    def __post_init__(self):
        if min(self.lr, self.gamma, self.batch_size, self.eps) <= 0:
            raise ValueError("lr, gamma, batch_size, eps must be positive")
        if self.epochs < 0 or self.weight_decay < 0:
            raise ValueError("epochs and weight_decay must be >= 0")


def loss_total(
    pred: Tensor, recon: Tensor, gt_future: np.ndarray, gt_past: np.ndarray
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    """L_total = L_trans + L_rec + L_des.

    L_trans: mean L1 over the 10 predicted steps x 2 coords.
    L_rec: mean L1 between reconstructed and observed inputs.
    L_des: mean L1 of the final predicted step.
    """
    gt_future = np.asarray(gt_future, dtype=np.float64)
    gt_past = np.asarray(gt_past, dtype=np.float64)
    if not (np.all(np.isfinite(gt_future)) and np.all(np.isfinite(gt_past))):
        raise ValueError("non-finite ground truth passed to loss")
    if not (
        np.all(np.isfinite(pred.data)) and np.all(np.isfinite(recon.data))
    ):
        raise FloatingPointError("non-finite model output in loss")
    if pred.data.shape != gt_future.shape or recon.data.shape != gt_past.shape:
        raise ValueError(
            f"loss shape mismatch: pred {pred.data.shape} vs {gt_future.shape}, "
            f"recon {recon.data.shape} vs {gt_past.shape}"
        )
    l_trans = ad.tmean(ad.absolute(pred - Tensor(gt_future)))
    l_rec = ad.tmean(ad.absolute(recon - Tensor(gt_past)))
    l_des = ad.tmean(ad.absolute(pred[-1:] - Tensor(gt_future[-1:])))
    return l_trans + l_rec + l_des, l_trans, l_rec, l_des


def effective_lr(config: TrainConfig, epoch: int) -> float:
    return config.lr * config.gamma**epoch


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Parameters,
    grads: dict[str, np.ndarray],
    state: AdamState,
    config: TrainConfig,
    epoch: int,
) -> None:
    """One Adam update with decoupled weight decay at the scheduled LR."""
    state.t += 1
    lr = effective_lr(config, epoch)
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, tensor in params.items():
        g = grads[name]
        if g.shape != tensor.data.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m.setdefault(name, np.zeros_like(tensor.data))
        v = state.v.setdefault(name, np.zeros_like(tensor.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        tensor.data -= lr * (update + config.weight_decay * tensor.data)


def global_grad_norm(grads: dict[str, np.ndarray]) -> float:
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    return math.sqrt(total)


def clip_gradients(
    grads: dict[str, np.ndarray], max_norm: float
) -> tuple[dict[str, np.ndarray], bool]:
    norm = global_grad_norm(grads)
    if norm <= max_norm or norm == 0.0:
        return grads, False
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}, True


@dataclass
class TrainResult:
    params: Parameters  # best-validation weights
    best_epoch: int
    history: list[dict]
    diverged: bool = False
    steps: int = 0


def _sample_loss(
    params: Parameters, cfg: ModelConfig, variant: str, sample: Sample
) -> tuple[Tensor, Tensor, Tensor, Tensor]:
    pred, recon = forward_variant(
        params, cfg, variant, sample.past, cloud=sample.cloud, frames=sample.frames
    )
    if recon is None:
        recon = Tensor(sample.past)  # baseline without a reconstruction head
    return loss_total(pred, recon, sample.future, sample.past)


def evaluate_loss(
    params: Parameters, cfg: ModelConfig, variant: str, samples: list[Sample]
) -> dict[str, float]:
    sums = np.zeros(4)
    with ad.no_grad():
        for s in samples:
            parts = _sample_loss(params, cfg, variant, s)
            sums += [p.item() for p in parts]
    sums /= max(len(samples), 1)
    return {
        "L_total": sums[0], "L_trans": sums[1], "L_rec": sums[2], "L_des": sums[3],
    }


def train(
    variant: str,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    train_samples: list[Sample],
    val_samples: list[Sample] | None = None,
    log_path=None,
    checkpoint_path=None,
) -> TrainResult:
    """Train a variant; retains the best-validation parameter snapshot.

    Reproducible given (config, seed): the same run yields the same metrics
    log byte for byte.  Non-finite losses abort, keeping the last good
    snapshot.
    """
    if not train_samples:
        raise ValueError("empty training set")
    val_samples = val_samples or []
    params = init_params(variant, model_cfg, seed=train_cfg.seed)
    state = AdamState()
    rng = np.random.default_rng(train_cfg.seed)
    history: list[dict] = []
    best_state = params.state()
    best_metric = math.inf
    best_epoch = -1
    diverged = False
    step = 0
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None

    def log(record: dict) -> None:
        history.append(record)
        if log_fh:
            log_fh.write(json.dumps(record, sort_keys=True) + "\n")

    try:
        for epoch in range(train_cfg.epochs):
            order = rng.permutation(len(train_samples))
            sums = np.zeros(4)
            n_seen = 0
            stop = False
            for lo in range(0, len(order), train_cfg.batch_size):
                batch = order[lo : lo + train_cfg.batch_size]
                params.zero_grad()
                try:
                    for idx in batch:
                        parts = _sample_loss(
                            params, model_cfg, variant, train_samples[int(idx)]
                        )
                        backward(parts[0])
                        sums += [pp.item() for pp in parts]
                        n_seen += 1
                except FloatingPointError:
                    diverged = True
                    stop = True
                    break
                grads = {
                    name: (
                        t.grad / len(batch)
                        if t.grad is not None
                        else np.zeros_like(t.data)
                    )
                    for name, t in params.items()
                }
                if not all(np.all(np.isfinite(g)) for g in grads.values()):
                    diverged = True
                    stop = True
                    break
                grads, clipped = clip_gradients(grads, train_cfg.clip_norm)
                if clipped:
                    log({"epoch": epoch, "split": "train", "event": "grad_clip",
                         "step": step})
                adam_step(params, grads, state, train_cfg, epoch)
                step += 1
                if train_cfg.max_steps is not None and step >= train_cfg.max_steps:
                    stop = True
                    break
            if n_seen:
                means = sums / n_seen
                log({
                    "epoch": epoch, "split": "train",
                    "L_total": means[0], "L_trans": means[1],
                    "L_rec": means[2], "L_des": means[3],
                    "lr": effective_lr(train_cfg, epoch),
                })
            if diverged:
                break
            if val_samples:
                val = evaluate_loss(params, model_cfg, variant, val_samples)
                log({"epoch": epoch, "split": "val", **val,
                     "lr": effective_lr(train_cfg, epoch)})
                metric = val["L_total"]
            else:
                metric = means[0] if n_seen else math.inf
            if metric < best_metric:
                best_metric = metric
                best_state = params.state()
                best_epoch = epoch
            if stop:
                break
    finally:
        if log_fh:
            log_fh.close()

    best = init_params(variant, model_cfg, seed=train_cfg.seed)
    best.load_state(best_state)
    if checkpoint_path is not None:
        Path(checkpoint_path).parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(checkpoint_path, best, model_cfg, variant)
    return TrainResult(
        params=best, best_epoch=best_epoch, history=history,
        diverged=diverged, steps=step,
    )
