"""Per-window instance normalization, period estimation, and the
series <-> phase-period matrix transforms.

A window of length L is padded at the front to the next multiple of the
period length and reshaped column by column, so row l of the result holds
the observations at within-period offset l ("phase l") across consecutive
periods, and the window's final observation always lands in the bottom-right
cell. Padding values are copied from the earliest observation with the same
phase (wrapping circularly for windows shorter than one period), which keeps
an exactly periodic window exactly periodic after padding.
"""

import math
from typing import NamedTuple

import numpy as np

from .errors import ContractError, ShapeError
from .validation import as_series, check_count

STD_EPSILON = 1e-8


class InstanceStats(NamedTuple):
    """Mean/std of one window, retained to invert the normalization."""

    mean: float
    std: float


def revin_normalize(x):
    """Normalize a window by its own mean and std; returns (normalized, stats).

    The std is clamped from below at STD_EPSILON, so a constant window maps
    to zeros instead of dividing by zero.
    """
    x = as_series(x, "x", min_len=2)
    mean = float(x.mean())
    std = max(float(x.std()), STD_EPSILON)
    return (x - mean) / std, InstanceStats(mean, std)


def revin_denormalize(y, stats):
    """Invert revin_normalize: y * std + mean, elementwise."""
    y = np.asarray(y, dtype=np.float64)
    return y * stats.std + stats.mean


def estimate_period(x, max_lag, method="dft"):
    """Estimate the dominant period of a series.

    method="dft" (default) picks the strongest nonzero frequency of the
    mean-removed series and converts it to a period; method="acf" picks the
    lag in 2..max_lag with the largest autocorrelation. Ties break toward
    the smaller period. Only periods between 2 and max_lag are considered.
    """
    x = as_series(x, "x")
    max_lag = check_count(max_lag, "max_lag", minimum=2)
    n = x.size
    if n < 2 * max_lag:
        raise ContractError(f"series of length {n} too short for max_lag={max_lag}")
    xc = x - x.mean()
    if float(np.var(x)) < 1e-12:
        raise ContractError("no periodicity: series is (near-)constant")

    if method == "dft":
        mags = np.abs(np.fft.rfft(xc))
        k_min = max(1, math.ceil(n / max_lag))
        k_max = n // 2
        if k_min > k_max:
            raise ContractError(f"max_lag={max_lag} excludes every DFT bin")
        candidates = range(k_min, k_max + 1)
        # Tuple key: larger bin index wins ties, i.e. the smaller period.
        best_k = max(candidates, key=lambda k: (mags[k], k))
        return max(2, round(n / best_k))
    if method == "acf":
        denom = float(xc @ xc)
        best_lag, best_val = None, -np.inf
        for lag in range(2, max_lag + 1):
            val = float(xc[:-lag] @ xc[lag:]) / denom
            if val > best_val:
                best_lag, best_val = lag, val
        return best_lag
    raise ContractError(f"unknown period estimation method {method!r}")


def pad_front_indices(length, l_phase):
    """Source indices (into the window) for the circular front padding."""
    l_phase = check_count(l_phase, "l_phase")
    length = check_count(length, "length")
    periods = -(-length // l_phase)
    pad = periods * l_phase - length
    if pad == 0:
        return np.empty(0, dtype=np.intp)
    return (np.arange(-pad, 0) % l_phase) % length


def phase_tokenize(x, l_phase):
    """Reshape a window into its l_phase x periods phase-period matrix.

    periods = ceil(len(x) / l_phase); the window is front-padded as
    described in the module docstring, then laid out column by column:
    result[l, p] is the observation at phase l of period p, and the final
    observation of x sits at result[l_phase - 1, periods - 1].
    """
    x = as_series(x, "x")
    l_phase = check_count(l_phase, "l_phase")
    src = pad_front_indices(x.size, l_phase)
    padded = np.concatenate([x[src], x]) if src.size else x
    periods = padded.size // l_phase
    return padded.reshape(periods, l_phase).T.copy()


def phase_detokenize(values, out_len):
    """Invert phase_tokenize: flatten column-major, keep the last out_len values."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ShapeError(f"phase matrix must be 2-D, got ndim={values.ndim}")
    total = values.size
    out_len = check_count(out_len, "out_len")
    if out_len > total:
        raise ShapeError(f"out_len={out_len} exceeds matrix size {total}")
    flat = values.T.reshape(-1)
    return flat[total - out_len:].copy()
