"""Channel-independent supervised training and evaluation.

Every (window, channel) pair is one training sample; all samples share one
set of model parameters. A sample's input window is instance-normalized by
its own mean/std, tokenized, pushed through the network, and scored against
the target window normalized with the same stats. The optimizer is Adam at
a fixed learning rate; early stopping tracks validation MSE and the best
validation checkpoint is returned. Evaluation metrics are computed in the
dataset's own (typically train-standardized) space.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError
from .model import ModelParams, backward, forward, init_params
from .preprocessing import STD_EPSILON, pad_front_indices

EVAL_BATCH = 1024


def mse_loss(pred, target):
    """Mean squared error and its gradient 2*(pred-target)/n."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred - target
    n = diff.size
    return float(np.mean(diff * diff)), 2.0 * diff / n


@dataclass
class AdamState:
    """First/second moment buffers plus the fixed hyperparameters."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_size(cls, n, lr=1e-3):
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr)


def adam_step(state, params_flat, grads_flat):
    """One bias-corrected Adam update, applied to params_flat in place."""
    if params_flat.shape != grads_flat.shape:
        raise ShapeError("params and grads must have equal length")
    state.t += 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads_flat
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grads_flat * grads_flat
    m_hat = state.m / (1.0 - state.beta1**state.t)
    v_hat = state.v / (1.0 - state.beta2**state.t)
    params_flat -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return params_flat


@dataclass
class TrainReport:
    """Per-epoch losses, the early-stopping outcome, and test metrics."""

    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = 0
    test_mse: float = float("nan")
    test_mae: float = float("nan")
    seconds: float = 0.0
    seed: int = 0

    def to_json_dict(self):
        return {
            "epoch": self.best_epoch,
            "train_mse": [float(v) for v in self.train_mse],
            "val_mse": [float(v) for v in self.val_mse],
            "test_mse": float(self.test_mse),
            "test_mae": float(self.test_mae),
            "seed": int(self.seed),
            "seconds": float(self.seconds),
        }


def _revin_rows(rows):
    """Row-wise instance stats; returns (normalized, means, stds)."""
    means = rows.mean(axis=1, keepdims=True)
    stds = np.maximum(rows.std(axis=1, keepdims=True), STD_EPSILON)
    return (rows - means) / stds, means, stds


def _tokenize_rows(rows, l_phase, pad_src):
    """Batched front-padded tokenization of equal-length windows."""
    if pad_src.size:
        rows = np.concatenate([rows[:, pad_src], rows], axis=1)
    b, total = rows.shape
    return rows.reshape(b, total // l_phase, l_phase).transpose(0, 2, 1)


def _split_views(dataset, split_range, l_in, l_out, what):
    """Per-channel sliding windows (views) over one split of the dataset."""
    lo, hi = split_range
    length = hi - lo
    window = l_in + l_out
    if length < window:
        raise DataError(
            f"{what} split has {length} rows, needs at least {window}")
    views = []
    for ch in range(dataset.values.shape[1]):
        series = dataset.values[lo:hi, ch]
        views.append(np.lib.stride_tricks.sliding_window_view(series, window))
    return views


def _predict_rows(params, config, x_rows, horizon):
    """Forecast `horizon` steps after each input row, in the rows' own space.

    The predicted frame continues the input's period grid: its first step is
    the phase successor of the input's last step, so the horizon is the
    frame's leading slice and any overshoot past it is dropped.
    """
    if horizon > config.l_out:
        raise ShapeError(
            f"horizon {horizon} exceeds the model's l_out={config.l_out}")
    g = config.l_phase
    xn, means, stds = _revin_rows(x_rows)
    pad_src = pad_front_indices(config.l_in, g)
    tokens = _tokenize_rows(xn, g, pad_src)
    outputs, _ = forward(params, tokens, config)
    flat = outputs.transpose(0, 2, 1).reshape(x_rows.shape[0], -1)
    return flat[:, :horizon] * stds + means


def predict_windows(params, config, x):
    """Forecast config.l_out steps for one window (l_in,) or a batch (n, l_in)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    rows = x[None, :] if single else x
    if rows.ndim != 2 or rows.shape[1] != config.l_in:
        raise ShapeError(f"windows must have length l_in={config.l_in}")
    preds = _predict_rows(params, config, rows, config.l_out)
    return preds[0] if single else preds


def evaluate(params, dataset, split_range, config, horizon=None):
    """MSE/MAE over every stride-1 (window, channel) pair of one split.

    Metrics are grand means over all predicted points, computed in the
    dataset's own value space.
    """
    horizon = config.l_out if horizon is None else int(horizon)
    views = _split_views(dataset, split_range, config.l_in, config.l_out, "eval")
    sq_sum = 0.0
    abs_sum = 0.0
    count = 0
    for view in views:
        for lo in range(0, view.shape[0], EVAL_BATCH):
            block = view[lo:lo + EVAL_BATCH]
            x_rows = block[:, :config.l_in]
            y_rows = block[:, config.l_in:config.l_in + horizon]
            preds = _predict_rows(params, config, x_rows, horizon)
            diff = preds - y_rows
            sq_sum += float(np.sum(diff * diff))
            abs_sum += float(np.sum(np.abs(diff)))
            count += diff.size
    return sq_sum / count, abs_sum / count


def train(dataset, splits, config, *, epochs=30, batch_size=256, patience=5,
          lr=1e-3, seed=None):
    """Train on the train split with early stopping on validation MSE.

    Returns (best_params, report). Reproducible: a fixed seed fixes the
    init, the per-epoch shuffles, and therefore the whole report.
    """
    seed = config.seed if seed is None else int(seed)
    started = time.perf_counter()
    train_views = _split_views(dataset, splits.train, config.l_in, config.l_out,
                               "train")
    _split_views(dataset, splits.val, config.l_in, config.l_out, "val")
    _split_views(dataset, splits.test, config.l_in, config.l_out, "test")

    g = config.l_phase
    pad_src = pad_front_indices(config.l_in, g)
    frame = config.p_out * g  # output frame; slots past l_out are masked

    samples = [(ch, row) for ch, view in enumerate(train_views)
               for row in range(view.shape[0])]

    params = init_params(config)
    vec = params.to_vector()
    adam = AdamState.for_size(vec.size, lr=lr)

    report = TrainReport(seed=seed)
    best_val = float("inf")
    best_vec = vec.copy()
    stale = 0
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(len(samples))
        epoch_losses = []
        for lo in range(0, len(order), batch_size):
            batch = [samples[i] for i in order[lo:lo + batch_size]]
            rows = np.stack([train_views[ch][row] for ch, row in batch])
            x_rows = rows[:, :config.l_in]
            xn, means, stds = _revin_rows(x_rows)
            tokens = _tokenize_rows(xn, g, pad_src)
            # Target frame: the horizon fills the leading l_out slots of the
            # p_out*l_phase frame (phase-contiguous with the input); any
            # overshoot slots carry no loss. Targets are normalized with the
            # input window's stats.
            target_flat = np.zeros((len(batch), frame))
            target_flat[:, :config.l_out] = (rows[:, config.l_in:] - means) / stds
            target = target_flat.reshape(len(batch), config.p_out, g)
            target = target.transpose(0, 2, 1)

            params = ModelParams.from_vector(config, vec)
            outputs, cache = forward(params, tokens, config)
            if frame == config.l_out:
                loss, d_out = mse_loss(outputs, target)
            else:
                flat_out = outputs.transpose(0, 2, 1).reshape(len(batch), frame)
                diff = flat_out[:, :config.l_out] - target_flat[:, :config.l_out]
                n = diff.size
                loss = float(np.mean(diff * diff))
                d_flat = np.zeros_like(flat_out)
                d_flat[:, :config.l_out] = 2.0 * diff / n
                d_out = d_flat.reshape(len(batch), config.p_out, g)
                d_out = d_out.transpose(0, 2, 1)
            grads = backward(params, cache, d_out, config)
            adam_step(adam, vec, grads.to_vector())
            epoch_losses.append(loss)

        report.train_mse.append(float(np.mean(epoch_losses)))
        params = ModelParams.from_vector(config, vec)
        val_mse, _ = evaluate(params, dataset, splits.val, config)
        report.val_mse.append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            best_vec = vec.copy()
            report.best_epoch = epoch
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break

    best_params = ModelParams.from_vector(config, best_vec)
    report.test_mse, report.test_mae = evaluate(best_params, dataset,
                                                splits.test, config)
    report.seconds = time.perf_counter() - started
    return best_params, report
