"""Benchmark CSV ingestion, chronological splits, window enumeration, and
the synthetic generators used by the diagnostics.

CSV layout: comma-separated, a header whose first column is "date",
remaining columns numeric channels. Splits are contiguous and ordered
(train, then val, then test); rounding remainders go to the test tail.
"""

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError, SpecError
from .numerics import top_r_svd
from .validation import check_count

ETT_RATIOS = (0.6, 0.2, 0.2)
DEFAULT_RATIOS = (0.7, 0.1, 0.2)

# Fixed stream keys so the generated noise/perturbations are decoupled from
# any other use of the spec seed.
_NOISE_STREAM = 0x5EED
_DRIFT_STREAM = 0xD21F7


@dataclass(frozen=True)
class SplitSpec:
    """Half-open row ranges for the three chronological splits."""

    train: tuple
    val: tuple
    test: tuple

    @classmethod
    def from_ratios(cls, n_rows, ratios):
        r_train, r_val, _ = ratios
        n_train = int(n_rows * r_train)
        n_val = int(n_rows * r_val)
        return cls(train=(0, n_train),
                   val=(n_train, n_train + n_val),
                   test=(n_train + n_val, n_rows))

    @classmethod
    def for_dataset(cls, name, n_rows):
        """6:2:2 for ETT-named datasets, 7:1:2 otherwise."""
        ratios = ETT_RATIOS if str(name).upper().startswith("ETT") else DEFAULT_RATIOS
        return cls.from_ratios(n_rows, ratios)


@dataclass
class RawDataset:
    name: str
    timestamps: list
    values: np.ndarray  # (T, C) float64
    freq: str = "unknown"
    channels: list = field(default_factory=list)


def load_csv(path, name=None, freq="unknown"):
    """Parse an ETT-style CSV into a RawDataset.

    Raises DataError with the row/column location of the first bad cell.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open dataset file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if not header or header[0].strip().lower() != "date":
            raise DataError(f"{path}: first column must be a 'date' header")
        channels = [h.strip() for h in header[1:]]
        if not channels:
            raise DataError(f"{path}: no value columns after 'date'")
        timestamps = []
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
            timestamps.append(row[0])
            parsed = []
            for j, cell in enumerate(row[1:]):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {i}, column {channels[j]!r}: "
                        f"cannot parse {cell!r}") from None
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path}: no data rows")
    values = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise DataError(f"{path}: non-finite values present")
    return RawDataset(name=name or Path(path).stem, timestamps=timestamps,
                      values=values, freq=freq, channels=channels)


def standardize(dataset, split):
    """Scale each channel by its train-split mean/std; returns a new dataset.

    A constant train channel is clamped to std 1e-8 with a warning, which
    maps it to (near) zeros.
    """
    lo, hi = split.train
    train = dataset.values[lo:hi]
    if train.shape[0] < 2:
        raise DataError("train split too short to standardize")
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    flat = std < 1e-8
    if np.any(flat):
        warnings.warn(
            f"channels {np.nonzero(flat)[0].tolist()} are constant on the "
            "train split; clamping std to 1e-8")
        std = np.where(flat, 1e-8, std)
    values = (dataset.values - mean) / std
    return RawDataset(name=dataset.name, timestamps=dataset.timestamps,
                      values=values, freq=dataset.freq,
                      channels=list(dataset.channels))


def windows(dataset, split_range, l_in, l_out):
    """Every stride-1 (input, target, channel) triple inside one split."""
    lo, hi = split_range
    length = hi - lo
    if length < l_in + l_out:
        raise DataError(
            f"split of {length} rows cannot fit l_in+l_out={l_in + l_out}")
    out = []
    for ch in range(dataset.values.shape[1]):
        series = dataset.values[lo:hi, ch]
        for start in range(length - l_in - l_out + 1):
            x = series[start:start + l_in]
            y = series[start + l_in:start + l_in + l_out]
            out.append((x, y, ch))
    return out


# ---------------------------------------------------------------------------
# Synthetic generators


@dataclass
class SyntheticLowRank:
    """Low-rank planted model: signal = a @ g.T, observed with noise, and a
    per-row transformed copy with day-wise perturbations of scale delta_scale."""

    a: np.ndarray
    g: np.ndarray
    s: np.ndarray
    delta_scale: float
    noise_scale: float
    r: int
    seed: int

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.s = np.asarray(self.s, dtype=np.float64)
        r = self.r
        for label, mat in (("a", self.a), ("g", self.g), ("s @ g", self.s @ self.g)):
            if min(mat.shape) < r:
                raise SpecError(f"{label} is {mat.shape}, cannot have rank {r}")
            sigma = top_r_svd(mat, r)[1]
            if sigma[-1] <= 1e-10:
                raise SpecError(f"{label} is rank deficient (sigma_r <= 1e-10)")

    @classmethod
    def generate(cls, n_rows=40, n_cols=28, r=3, delta_scale=1e-3,
                 noise_scale=1e-3, seed=0, s=None):
        """Gaussian factors plus (by default) a uniformly random rotation s."""
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((n_rows, r))
        g = rng.standard_normal((n_cols, r))
        if s is None:
            s, _ = np.linalg.qr(rng.standard_normal((n_cols, n_cols)))
        return cls(a=a, g=g, s=s, delta_scale=float(delta_scale),
                   noise_scale=float(noise_scale), r=r, seed=int(seed))


def gen_low_rank(spec):
    """Realize (x, x_transformed, day_residual) from a SyntheticLowRank spec.

    x = a g^T + noise. Row d of the transformed copy uses s_d = s + delta_d
    with ||delta_d||_2 rescaled to exactly delta_scale, so the residual rows
    are day_residual[d] = x[d] @ delta_d^T and
    x_transformed = x @ s^T + day_residual.
    """
    rng = np.random.default_rng([spec.seed, _NOISE_STREAM])
    n_rows, n_cols = spec.a.shape[0], spec.g.shape[0]
    signal = spec.a @ spec.g.T
    noise = spec.noise_scale * rng.standard_normal((n_rows, n_cols))
    x = signal + noise
    residual = np.zeros_like(x)
    if spec.delta_scale > 0.0:
        for d in range(n_rows):
            delta = rng.standard_normal((n_cols, n_cols))
            delta *= spec.delta_scale / np.linalg.norm(delta, 2)
            residual[d] = x[d] @ delta.T
    x_t = x @ spec.s.T + residual
    return x, x_t, residual


def _smooth_template(rng, l_phase, harmonics=3):
    """Random smooth periodic shape over one period, normalized to unit std."""
    t = np.arange(l_phase) / l_phase
    shape = np.zeros(l_phase)
    for k in range(1, harmonics + 1):
        a, b = rng.normal(size=2) / k
        shape += a * np.sin(2 * np.pi * k * t) + b * np.cos(2 * np.pi * k * t)
    std = shape.std()
    if std < 1e-9:
        shape = np.sin(2 * np.pi * t)
        std = shape.std()
    return shape / std


def gen_drifting_cycles(weeks, l_phase, drift_rate, seed, periods_per_week=7):
    """Periodic series whose cycle shape morphs week over week.

    The shape of week w is the interpolation (1-beta) * base + beta * drifted
    with beta = w*drift_rate / (1 + w*drift_rate), so drift_rate=0 gives an
    exactly periodic series and any positive rate drifts strictly
    monotonically while staying inside the interpolation range. The drifted
    template is a half-period rotation of the base, which keeps the
    distribution of values within a cycle roughly stable while the cycle
    pattern itself moves. Per-phase values change smoothly across weeks.
    """
    weeks = check_count(weeks, "weeks", minimum=2)
    l_phase = check_count(l_phase, "l_phase")
    if drift_rate < 0:
        raise ContractError("drift_rate must be nonnegative")
    rng = np.random.default_rng([seed, _DRIFT_STREAM])
    base = _smooth_template(rng, l_phase)
    drifted = np.roll(base, l_phase // 2)
    blocks = []
    for w in range(weeks):
        beta = w * drift_rate / (1.0 + w * drift_rate) if drift_rate else 0.0
        shape = (1.0 - beta) * base + beta * drifted
        blocks.append(np.tile(shape, periods_per_week))
    return np.concatenate(blocks)
