"""Numerical diagnostics: kernel two-sample drift measurement, PCA effective
dimension, principal-angle subspace distances, and a verifier for the
low-rank stability bounds on phase vs. patch token subspaces.

Phase tokens collect the values at one fixed within-period offset across the
periods of a window; patch tokens are the contiguous one-period segments.
For a planted low-rank data matrix (rows = days, columns = within-day
offsets), phase structure lives in the left singular subspace and patch
structure in the right one.
"""

import math
from dataclasses import dataclass

import numpy as np

from .data import gen_low_rank
from .errors import ContractError, DataError, ShapeError, SpecError
from .numerics import sym_eig, top_r_svd
from .validation import as_matrix

# Upper end of the admissible absolute-constant range in the perturbation
# bounds; using it makes the upper bound the loosest admissible one.
STABILITY_CONSTANT = 2.0 * math.sqrt(2.0)

DEFAULT_PERIODS_PER_WINDOW = 7


def _pairwise_sq_dists(p, q):
    pp = np.sum(p * p, axis=1)[:, None]
    qq = np.sum(q * q, axis=1)[None, :]
    return np.maximum(pp + qq - 2.0 * (p @ q.T), 0.0)


def median_heuristic_gamma(tokens):
    """gamma = 1 / (2 median^2) over pairwise distances of a pooled sample."""
    tokens = as_matrix(tokens, "tokens")
    d2 = _pairwise_sq_dists(tokens, tokens)
    iu = np.triu_indices(tokens.shape[0], k=1)
    if iu[0].size == 0:
        return 1.0
    med = float(np.median(np.sqrt(d2[iu])))
    if med <= 1e-300:
        return 1.0
    return 1.0 / (2.0 * med * med)


def rbf_mmd2(p, q, gamma="median"):
    """Biased (V-statistic) squared maximum mean discrepancy with an RBF kernel.

    k(x, y) = exp(-gamma ||x-y||^2); gamma="median" derives the bandwidth
    from the median pairwise distance of the pooled samples. Always >= 0,
    and exactly 0 when p and q hold identical samples.
    """
    p = as_matrix(p, "p")
    q = as_matrix(q, "q")
    if p.shape[0] == 0 or q.shape[0] == 0:
        raise ShapeError("rbf_mmd2 needs nonempty samples")
    if p.shape[1] != q.shape[1]:
        raise ShapeError(f"dimension mismatch {p.shape[1]} vs {q.shape[1]}")
    if gamma == "median":
        gamma = median_heuristic_gamma(np.vstack([p, q]))
    gamma = float(gamma)
    if gamma <= 0:
        raise ContractError(f"gamma must be positive, got {gamma}")
    k_pp = np.exp(-gamma * _pairwise_sq_dists(p, p))
    k_qq = np.exp(-gamma * _pairwise_sq_dists(q, q))
    k_pq = np.exp(-gamma * _pairwise_sq_dists(p, q))
    return max(0.0, float(k_pp.mean() + k_qq.mean() - 2.0 * k_pq.mean()))


@dataclass
class TokenSet:
    """Token vectors (one per row) with the window ("week") index of each."""

    kind: str  # "phase" or "patch"
    tokens: np.ndarray
    week: np.ndarray

    def for_week(self, w):
        return self.tokens[self.week == w]

    @property
    def n_weeks(self):
        return int(self.week.max()) + 1 if self.week.size else 0


def build_token_sets(series, l_phase, periods_per_window=DEFAULT_PERIODS_PER_WINDOW):
    """Chop a series into consecutive windows and extract both token kinds.

    Each window spans periods_per_window periods. Within a window, patch
    tokens are its non-overlapping length-l_phase segments and the phase-l
    token is the vector of that offset's values across the window's periods.
    Trailing samples that do not fill a window are dropped.
    """
    series = np.asarray(series, dtype=np.float64)
    window = periods_per_window * l_phase
    n_windows = series.size // window
    if n_windows < 2:
        raise DataError(
            f"series of {series.size} samples holds {n_windows} windows of "
            f"{window}; need at least 2")
    phase_tokens, phase_week = [], []
    patch_tokens, patch_week = [], []
    for w in range(n_windows):
        block = series[w * window:(w + 1) * window].reshape(periods_per_window,
                                                            l_phase)
        patch_tokens.append(block)
        patch_week.extend([w] * periods_per_window)
        phase_tokens.append(block.T)
        phase_week.extend([w] * l_phase)
    phase = TokenSet("phase", np.vstack(phase_tokens), np.array(phase_week))
    patch = TokenSet("patch", np.vstack(patch_tokens), np.array(patch_week))
    return phase, patch


@dataclass
class DriftCurves:
    """Per-week MMD^2 of each token kind against the first week."""

    phase_mmd: np.ndarray
    patch_mmd: np.ndarray

    @property
    def phase_mean(self):
        return float(self.phase_mmd.mean())

    @property
    def patch_mean(self):
        return float(self.patch_mmd.mean())

    def to_json_dict(self):
        return {
            "phase_mmd": self.phase_mmd.tolist(),
            "patch_mmd": self.patch_mmd.tolist(),
            "phase_mean": self.phase_mean,
            "patch_mean": self.patch_mean,
        }


def weekly_drift(series, l_phase, periods_per_window=DEFAULT_PERIODS_PER_WINDOW):
    """MMD^2 of week w vs. week 0, for w = 1..weeks-1 and both token kinds.

    Each kind uses one bandwidth from the median heuristic over all of its
    tokens pooled across weeks, so the curve is comparable across weeks.
    """
    phase, patch = build_token_sets(series, l_phase, periods_per_window)
    curves = []
    for ts in (phase, patch):
        gamma = median_heuristic_gamma(ts.tokens)
        base = ts.for_week(0)
        curves.append(np.array([
            rbf_mmd2(ts.for_week(w), base, gamma=gamma)
            for w in range(1, ts.n_weeks)
        ]))
    return DriftCurves(phase_mmd=curves[0], patch_mmd=curves[1])


def explained_variance_ratios(tokens):
    """Descending PCA explained-variance ratios of a token cloud."""
    x = tokens.tokens if isinstance(tokens, TokenSet) else as_matrix(tokens)
    if x.shape[0] < 2:
        raise ContractError("need at least 2 tokens for PCA")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / x.shape[0]
    vals = np.clip(sym_eig(cov).eigenvalues, 0.0, None)
    total = float(vals.sum())
    if total <= 0.0:
        return np.zeros_like(vals)
    return vals / total


def effective_dim(tokens, threshold=0.9):
    """Smallest component count explaining at least `threshold` of variance.

    Zero-variance clouds have effective dimension 0 by definition.
    """
    ratios = explained_variance_ratios(tokens)
    if ratios.sum() <= 0.0:
        return 0
    cumulative = np.cumsum(ratios)
    return int(np.searchsorted(cumulative, threshold - 1e-12) + 1)


def subspace_distance(u, v):
    """sin of the largest principal angle: ||P_u - P_v||_2, in [0, 1].

    u and v must be orthonormal-column bases of equal-dimension subspaces
    of the same ambient space.
    """
    u = as_matrix(u, "u")
    v = as_matrix(v, "v")
    if u.shape != v.shape:
        raise ShapeError(f"basis shapes differ: {u.shape} vs {v.shape}")
    for name, b in (("u", u), ("v", v)):
        gram_err = np.abs(b.T @ b - np.eye(b.shape[1])).max()
        if gram_err > 1e-8:
            raise ContractError(
                f"{name} is not orthonormal (Gram deviation {gram_err:.2e})")
    diff = u @ u.T - v @ v.T
    sigma = top_r_svd(diff, 1)[1][0]
    return float(min(1.0, max(0.0, sigma)))


@dataclass
class StabilityReport:
    """Measured subspace motion of both token kinds next to the theory bounds."""

    d_phase: float
    d_patch: float
    d0: float
    delta: float
    delta_prime: float
    delta_min: float
    noise_norm: float
    noise_out_norm: float
    residual_norm: float
    c_const: float
    phase_bound: float
    patch_lower_bound: float

    @property
    def phase_within_bound(self):
        return self.d_phase <= self.phase_bound

    @property
    def patch_above_bound(self):
        return self.d_patch >= self.patch_lower_bound

    def to_json_dict(self):
        out = {k: float(v) for k, v in self.__dict__.items()}
        out["phase_within_bound"] = bool(self.phase_within_bound)
        out["patch_above_bound"] = bool(self.patch_above_bound)
        return out


def _spectral_norm(mat):
    if not np.any(mat):
        return 0.0
    return float(top_r_svd(mat, 1)[1][0])


def verify_stability(spec):
    """Realize one draw of the planted model and compare both token-subspace
    motions against their perturbation bounds.

    The separations delta/delta' come from the exact singular values of the
    clean signal and its transform; the reference distance d0 uses the exact
    bases known at generation time, never estimates.
    """
    x, x_t, residual = gen_low_rank(spec)
    r = spec.r
    signal = spec.a @ spec.g.T
    signal_t = signal @ spec.s.T

    delta = top_r_svd(signal, r)[1][-1]
    delta_prime = top_r_svd(signal_t, r)[1][-1]
    delta_min = float(min(delta, delta_prime))
    if delta_min < 1e-10:
        raise SpecError(
            "spectral separation below 1e-10; the perturbation bounds are "
            "ill-posed for this spec")

    left_x, _, right_x = top_r_svd(x, r)
    left_t, _, right_t = top_r_svd(x_t, r)
    d_phase = subspace_distance(left_x, left_t)
    d_patch = subspace_distance(right_x, right_t)

    col_g = top_r_svd(spec.g, r)[0]
    col_sg = top_r_svd(spec.s @ spec.g, r)[0]
    d0 = subspace_distance(col_g, col_sg)

    noise = x - signal
    noise_norm = _spectral_norm(noise)
    noise_out_norm = _spectral_norm(noise @ spec.s.T)
    residual_norm = _spectral_norm(residual)
    bound = STABILITY_CONSTANT * (noise_norm + noise_out_norm + residual_norm) / delta_min
    return StabilityReport(
        d_phase=d_phase, d_patch=d_patch, d0=d0,
        delta=float(delta), delta_prime=float(delta_prime), delta_min=delta_min,
        noise_norm=noise_norm, noise_out_norm=noise_out_norm,
        residual_norm=residual_norm, c_const=STABILITY_CONSTANT,
        phase_bound=float(bound), patch_lower_bound=float(d0 - bound),
    )
