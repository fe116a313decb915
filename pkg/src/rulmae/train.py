"""Two-phase training: masked-autoencoder pretraining, then RUL fine-tuning."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .checkpoint import Checkpoint
from .config import RunConfig
from .errors import EmptyDataset, MissingLabels, NonFiniteLoss, ShapeMismatch, UnitTooShort
from .features import FeatureReport, NormStats, apply_norm, fit_norm, select_features
from .ingest import DatasetSplit, UnitSeries
from .model import (
    ModelDims,
    ModelParams,
    init_mae_params,
    init_rul_params,
    mae_forward,
    masked_timestamps,
    predict_rul,
    recon_loss,
    rul_loss,
    transfer_encoder,
)
from .numerics import AdamState, Tape, adam_step
from .windowing import Window, make_windows, mask_rng, sample_mask, stack_windows

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    wall_ms: float
    grad_norm: float


@dataclass
class TrainLog:
    config: RunConfig
    epochs: list[EpochRecord] = field(default_factory=list)
    checkpoint_path: Optional[str] = None

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["epoch", "loss", "wall_ms", "grad_norm"])
        for e in self.epochs:
            w.writerow([e.epoch, repr(e.loss), f"{e.wall_ms:.1f}", repr(e.grad_norm)])
        return out.getvalue()


# --- data preparation --------------------------------------------------------

def prepare_features(split: DatasetSplit, gamma: float, lam: float) -> tuple[FeatureReport, NormStats]:
    report = select_features(split.units, gamma, lam)
    if not report.selected:
        raise EmptyDataset(f"no feature passes the selection threshold (lambda={lam})")
    return report, fit_norm(split.units, report.selected)


def normalize_split(split: DatasetSplit, norm: NormStats) -> list[UnitSeries]:
    return [apply_norm(u, norm) for u in split.units]


def build_windows(units: Sequence[UnitSeries], P: int, stride: int = 1) -> list[Window]:
    """Sliding windows over every unit; units shorter than P are skipped with a warning."""
    out: list[Window] = []
    for u in units:
        try:
            out.extend(make_windows(u, P, stride))
        except UnitTooShort as exc:
            log.warning("skipping %s", exc)
    return out


def dims_for(config: RunConfig, J: int) -> ModelDims:
    return ModelDims(J=J, d=config.d, heads=config.heads, layers=config.layers, K=config.K,
                     P=config.P, dropout=config.dropout)


# --- shared step machinery ---------------------------------------------------

def _grads(bound: dict, params: ModelParams) -> dict[str, np.ndarray]:
    return {k: (t.grad if t.grad is not None else np.zeros_like(params.arrays[k]))
            for k, t in bound.items()}


def _global_norm(grads: dict[str, np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def _batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, 2, epoch]).permutation(n)
    for b, start in enumerate(range(0, n, batch_size)):
        yield b, order[start : start + batch_size]


def _check_loss(value: float, epoch: int, batch: int) -> None:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"loss became {value} at epoch {epoch}, batch {batch}")


# --- phase one ---------------------------------------------------------------

def pretrain(config: RunConfig, windows: Sequence[Window] | np.ndarray,
             params: Optional[ModelParams] = None) -> tuple[ModelParams, TrainLog]:
    """Fit the masked autoencoder on unlabeled windows.

    Each epoch reshuffles the windows and draws fresh masks; the mask of a
    window depends only on (seed, epoch, window index).
    """
    X = windows if isinstance(windows, np.ndarray) else (
        stack_windows(windows)[0] if len(windows) else np.empty((0, config.P, 0)))
    if X.shape[0] == 0:
        raise EmptyDataset("pretraining needs at least one window")
    dims = dims_for(config, X.shape[2])
    if params is None:
        params = init_mae_params(dims, config.seed)
    elif params.dims != dims:
        raise ShapeMismatch(f"initial parameters have dims {params.dims}, run needs {dims}")
    state = AdamState.for_params(params.arrays, lr=config.learning_rate)
    tlog = TrainLog(config=config)
    N = dims.N
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        total, seen, norms = 0.0, 0, []
        for b, idx in _batches(len(X), config.batch_size, config.seed, epoch):
            mask = np.stack([sample_mask(N, config.mask_ratio, mask_rng(config.seed, epoch, int(w)))
                             for w in idx])
            drop_rng = np.random.default_rng([config.seed, 3, epoch, b])
            bound = params.bind()
            with Tape() as tape:
                x_hat = mae_forward(X[idx], mask, bound, dims, training=True, rng=drop_rng)
                scope = None
                if config.loss_scope == "masked_only" and mask.any():
                    scope = masked_timestamps(mask, dims.K, dims.P)
                loss = recon_loss(X[idx], x_hat, scope)
                _check_loss(float(loss.data), epoch, b)
                tape.backward(loss)
            grads = _grads(bound, params)
            norms.append(_global_norm(grads))
            adam_step(params.arrays, grads, state)
            total += float(loss.data) * len(idx)
            seen += len(idx)
        tlog.epochs.append(EpochRecord(epoch, total / seen, 1000 * (time.perf_counter() - t0),
                                       float(np.mean(norms))))
        log.info("pretrain epoch %d loss %.6g", epoch, total / seen)
    return params, tlog


# --- phase two ---------------------------------------------------------------

def _targets(Y: np.ndarray, config: RunConfig) -> np.ndarray:
    if config.rul_cap is not None:
        Y = np.minimum(Y, config.rul_cap)
    return Y / config.rul_scale


def finetune(config: RunConfig, windows: Sequence[Window], init: Optional[ModelParams] = None,
             params: Optional[ModelParams] = None) -> tuple[ModelParams, TrainLog]:
    """Fit the RUL regressor on labeled windows, no masking.

    With ``init`` (a pretrained autoencoder) the tokenizer and encoder start
    from its weights; otherwise everything is freshly initialised.  The
    logged loss is the per-timestamp MSE in cycles squared.
    """
    if not len(windows):
        raise EmptyDataset("fine-tuning needs at least one window")
    X, Y, V = stack_windows(windows)
    if Y is None:
        raise MissingLabels("every fine-tuning window needs RUL labels")
    dims = dims_for(config, X.shape[2])
    if params is None:
        params = transfer_encoder(init, config.seed, dims) if init is not None else \
            init_rul_params(dims, config.seed)
    target = _targets(Y, config)
    state = AdamState.for_params(params.arrays, lr=config.learning_rate)
    tlog = TrainLog(config=config)
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        total, seen, norms = 0.0, 0, []
        for b, idx in _batches(len(X), config.batch_size, config.seed, epoch):
            drop_rng = np.random.default_rng([config.seed, 4, epoch, b])
            bound = params.bind()
            with Tape() as tape:
                pred = predict_rul(X[idx], bound, dims, training=True, rng=drop_rng)
                loss = rul_loss(pred, target[idx], V[idx])
                _check_loss(float(loss.data), epoch, b)
                tape.backward(loss)
            grads = _grads(bound, params)
            norms.append(_global_norm(grads))
            adam_step(params.arrays, grads, state)
            total += float(loss.data) * len(idx)
            seen += len(idx)
        mean = total / seen * config.rul_scale ** 2
        tlog.epochs.append(EpochRecord(epoch, mean, 1000 * (time.perf_counter() - t0),
                                       float(np.mean(norms))))
        log.info("finetune epoch %d loss %.6g", epoch, mean)
    return params, tlog


def predict_windows(params: ModelParams, X: np.ndarray, config: RunConfig,
                    batch_size: int = 256) -> np.ndarray:
    """Eval-mode RUL predictions in cycles, [W, P]."""
    out = []
    bound = params.bind(requires_grad=False)
    for start in range(0, len(X), batch_size):
        pred = predict_rul(X[start : start + batch_size], bound, params.dims, training=False)
        out.append(pred.data * config.rul_scale)
    return np.concatenate(out, axis=0) if out else np.empty((0, params.dims.P))


def make_checkpoint(kind: str, params: ModelParams, config: RunConfig,
                    norm: Optional[NormStats]) -> Checkpoint:
    return Checkpoint(kind=kind, params=params, config=config, norm=norm)
