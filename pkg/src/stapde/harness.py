"""Training loop, evaluation metrics, rollout engine, field-magnitude maps.

Training minimizes the masked-blade MSE (the physical field components) with
Adam, validates once per epoch, and keeps the parameters of the best
validation epoch. Metrics follow the experiment protocol: per-frame MSE
(sum over components, mean over grid), the unnormalized correlation index
(mean over grid of the componentwise dot product), and SSIM with a 7x7
uniform window, K1=0.01, K2=0.03, and per-component data range taken from
the ground-truth frame.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from .algebra import Signature, build_table
from .dataset import batches, collate, embed, extract, loss_mask
from .errors import BlowupError, UsageError
from .models import Model
from .mvtensor import AdamState, MvTensor, Tape, adam_step, mse_loss

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
EXPORT_CLIP = 0.02


# ---------------------------------------------------------------------------
# Frame metrics
# ---------------------------------------------------------------------------

def metric_mse(pred: np.ndarray, gt: np.ndarray) -> float:
    """Sum over components, mean over grid, of squared differences."""
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    diff = pred.astype(np.float64) - gt.astype(np.float64)
    return float((diff * diff).sum() / np.prod(pred.shape[1:]))


def metric_correlation(pred: np.ndarray, gt: np.ndarray) -> float:
    """Unnormalized correlation index: grid mean of the component dot product."""
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    prod = pred.astype(np.float64) * gt.astype(np.float64)
    return float(prod.sum() / np.prod(pred.shape[1:]))


def _window_means(x: np.ndarray, win: int) -> np.ndarray:
    """Mean over every valid win^d window (integral-image cumsum)."""
    s = x.astype(np.float64)
    for ax in range(x.ndim):
        s = np.cumsum(s, axis=ax)
        pad = np.zeros_like(np.take(s, [0], axis=ax))
        s = np.concatenate([pad, s], axis=ax)
    out = np.zeros(tuple(d - win + 1 for d in x.shape))
    for corner in itertools.product((0, 1), repeat=x.ndim):
        sign = (-1) ** (x.ndim - sum(corner))
        idx = tuple(
            slice(win, d - win + 1 + win) if c else slice(0, d - win + 1)
            for c, d in zip(corner, x.shape))
        out += sign * s[idx]
    return out / float(win ** x.ndim)


def _ssim_single(x: np.ndarray, y: np.ndarray, data_range: float) -> float:
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _window_means(x, SSIM_WINDOW)
    my = _window_means(y, SSIM_WINDOW)
    vx = _window_means(x * x, SSIM_WINDOW) - mx * mx
    vy = _window_means(y * y, SSIM_WINDOW) - my * my
    cxy = _window_means(x * y, SSIM_WINDOW) - mx * my
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def metric_ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    """SSIM per component (GT data range), averaged over components."""
    if pred.shape != gt.shape:
        raise UsageError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    if any(d < SSIM_WINDOW for d in pred.shape[1:]):
        raise UsageError(f"frame smaller than the {SSIM_WINDOW}-cell SSIM window")
    vals = []
    for c in range(pred.shape[0]):
        x = gt[c].astype(np.float64)
        y = pred[c].astype(np.float64)
        rng_ = float(x.max() - x.min())
        if rng_ == 0.0:
            if np.array_equal(x, y):
                vals.append(1.0)
                continue
            rng_ = 1.0  # stabilizing constant for degenerate GT
        vals.append(_ssim_single(y, x, rng_))
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Faraday magnitude maps
# ---------------------------------------------------------------------------

def faraday_map(frame: np.ndarray, sig: Signature):
    """Per-cell scalar part of the squared field multivector (+pseudoscalar in 3D).

    The square runs through the Cayley table of the frame's algebra, so the
    result matches gp(embed(frame), embed(frame)) cellwise.
    """
    grid = embed(frame.astype(np.float64), sig)
    table = build_table(sig)
    nb = sig.n_blades
    diag = table.sign[np.arange(nb), np.arange(nb)].astype(np.float64)
    scalar = np.einsum("...a,a->...", grid * grid, diag)
    if len(frame.shape[1:]) == 2:
        return (scalar,)
    partner = np.arange(nb) ^ (nb - 1)
    psign = table.sign[np.arange(nb), partner].astype(np.float64)
    pseudo = np.einsum("...a,...a,a->...", grid, grid[..., partner], psign)
    return (scalar, pseudo)


def faraday_diff_map(gt_frame: np.ndarray, pred_frame: np.ndarray, sig: Signature):
    """|F^2 - F_hat^2| clipped to [0, EXPORT_CLIP], per returned part."""
    gt_parts = faraday_map(gt_frame, sig)
    pred_parts = faraday_map(pred_frame, sig)
    return tuple(np.clip(np.abs(g - p), 0.0, EXPORT_CLIP)
                 for g, p in zip(gt_parts, pred_parts))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise UsageError("epochs must be >= 1")
        if self.batch_size < 1:
            raise UsageError("batch_size must be >= 1")


@dataclass
class TrainResult:
    best_params: list
    best_epoch: int
    best_val_mse: float
    curves: list = field(default_factory=list)  # rows: (epoch, train_mse, val_mse)


def evaluate_mse(model: Model, samples: list, batch_size: int = 32) -> float:
    """Masked-blade MSE over a sample list, no gradients."""
    sig = model.signature
    mask = loss_mask(sig)
    total, count = 0.0, 0
    for lo in range(0, len(samples), batch_size):
        chunk = samples[lo:lo + batch_size]
        x, y = collate(chunk, sig)
        pred = model(MvTensor(sig, x))
        total += mse_loss(pred, y, mask).item() * len(chunk)
        count += len(chunk)
    return total / max(count, 1)


def train(model: Model, train_samples: list, val_samples: list,
          cfg: TrainConfig) -> TrainResult:
    """Adam training with per-epoch validation; keeps the min-val checkpoint."""
    sig = model.signature
    mask = loss_mask(sig)
    params = model.parameters()
    opt = AdamState.for_params(params, lr=cfg.lr)
    best = TrainResult(best_params=[p.data.copy() for p in params],
                       best_epoch=-1, best_val_mse=np.inf)
    for epoch in range(cfg.epochs):
        epoch_loss, n_seen = 0.0, 0
        for step_idx, batch in enumerate(
                batches(train_samples, cfg.batch_size, cfg.seed, epoch)):
            x, y = collate(batch, sig)
            model.zero_grad()
            with Tape() as tape:
                pred = model(MvTensor(sig, x))
                loss = mse_loss(pred, y, mask)
                tape.backward(loss)
            value = loss.item()
            if not np.isfinite(value):
                raise BlowupError(
                    f"training loss non-finite at epoch {epoch} step {step_idx}",
                    step=step_idx)
            adam_step(params, [p.grad for p in params], opt)
            epoch_loss += value * len(batch)
            n_seen += len(batch)
        train_mse = epoch_loss / n_seen
        val_mse = evaluate_mse(model, val_samples, cfg.batch_size)
        best.curves.append((epoch, train_mse, val_mse))
        if val_mse < best.best_val_mse:
            best.best_val_mse = val_mse
            best.best_epoch = epoch
            best.best_params = [p.data.copy() for p in params]
    return best


# ---------------------------------------------------------------------------
# Rollout
# ---------------------------------------------------------------------------

@dataclass
class MetricsRecord:
    model: str
    algebra: str
    dt_stride: int
    split: str
    rollout_m: int
    mse: float
    corr: float
    ssim: float


def predict_frame(model: Model, frame_a: np.ndarray, frame_b: np.ndarray) -> np.ndarray:
    """One network step: two input frames -> predicted next frame."""
    sig = model.signature
    x = np.stack([embed(frame_a, sig), embed(frame_b, sig)])[None]
    pred = model(MvTensor(sig, x.astype(np.float32)))
    return extract(pred.data[0, 0].astype(np.float64), sig)


def rollout(model: Model, sequence: np.ndarray, m: int,
            teacher_forcing: bool = False, with_ssim: bool = True,
            tag: dict | None = None):
    """Autoregressive m-step prediction with per-step metrics vs ground truth.

    `sequence` is (2 + m', components, *spatial) ground truth with m' >= m.
    Step 1 uses the two leading ground-truth frames; later steps slide the
    window over the model's own predictions (or ground truth when
    teacher_forcing is set).
    """
    if m < 1 or sequence.shape[0] < 2 + m:
        raise UsageError(f"rollout m={m} needs >= {2 + m} frames, got {sequence.shape[0]}")
    tag = tag or {}
    history = [sequence[0].astype(np.float64), sequence[1].astype(np.float64)]
    preds, records = [], []
    for j in range(1, m + 1):
        pred = predict_frame(model, history[-2], history[-1])
        gt = sequence[1 + j].astype(np.float64)
        records.append(MetricsRecord(
            model=tag.get("model", "model"),
            algebra=tag.get("algebra", model.config.algebra),
            dt_stride=int(tag.get("dt_stride", 0)),
            split=tag.get("split", ""),
            rollout_m=j,
            mse=metric_mse(pred, gt),
            corr=metric_correlation(pred, gt),
            ssim=metric_ssim(pred, gt) if with_ssim else float("nan"),
        ))
        preds.append(pred)
        history.append(gt if teacher_forcing else pred)
    return np.stack(preds), records


def write_metrics_csv(path, records: list[MetricsRecord]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["model", "algebra", "dt_stride", "split",
                         "rollout_m", "mse", "corr", "ssim"])
        for r in records:
            writer.writerow([r.model, r.algebra, r.dt_stride, r.split,
                             r.rollout_m, repr(r.mse), repr(r.corr), repr(r.ssim)])


def write_loss_curves_csv(path, curves) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_mse", "val_mse"])
        for epoch, train_mse, val_mse in curves:
            writer.writerow([epoch, repr(train_mse), repr(val_mse)])
