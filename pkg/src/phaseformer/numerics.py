"""Dense float64 matrix kernel: products, row softmax, symmetric
eigendecomposition, truncated SVD, and a finite-difference gradient oracle.

Everything here is pure and allocation-per-call; matrices are plain 2-D
numpy arrays of float64. The eigensolver is a cyclic Jacobi iteration,
which is accurate and simple at the small sizes (well under a thousand)
this package ever produces.
"""

from typing import NamedTuple

import numpy as np

from .errors import ContractError, ShapeError
from .validation import as_matrix, check_finite

# Convergence threshold for Jacobi sweeps, relative to ||a||_F.
_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 60


class EigenResult(NamedTuple):
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted descending; eigenvector columns are orthonormal
    and eigenvectors[:, i] pairs with eigenvalues[i].
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


def matmul(a, b):
    """Matrix product a @ b with explicit shape and finiteness checks."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return check_finite(a @ b, "matmul result")


def softmax_rows(a):
    """Row-wise softmax, stabilized by subtracting each row's maximum.

    Every output row is nonnegative and sums to 1; adding a constant to a
    row leaves its softmax unchanged.
    """
    a = as_matrix(a, "a")
    return softmax_last_axis(a)


def softmax_last_axis(a):
    """Stabilized softmax over the last axis of an arbitrary-rank array."""
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _round_robin_rounds(n):
    """Tournament schedule covering every index pair exactly once.

    Returns a list of rounds; each round is a pair of index arrays (P, Q)
    whose pairs are mutually disjoint, so their plane rotations commute and
    can be applied in one batched update.
    """
    players = list(range(n)) + ([n] if n % 2 else [])
    size = len(players)
    rounds = []
    for _ in range(size - 1):
        ps, qs = [], []
        for i in range(size // 2):
            a, b = players[i], players[size - 1 - i]
            if a < n and b < n:  # skip the bye slot for odd n
                ps.append(min(a, b))
                qs.append(max(a, b))
        rounds.append((np.array(ps, dtype=np.intp), np.array(qs, dtype=np.intp)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eig(a):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    One sweep visits every off-diagonal pair once, in a round-robin order
    whose rounds consist of disjoint pairs; the rotations of a round commute,
    so each round is applied as a single vectorized update. Sweeps repeat
    until the off-diagonal Frobenius norm falls below 1e-12 * ||a||_F.

    Parameters
    ----------
    a : array
        Square matrix, symmetric to within 1e-10 (relative to its largest
        entry).

    Returns
    -------
    EigenResult
        Eigenvalues descending, orthonormal eigenvector columns, with
        a ~= V diag(w) V^T.

    Raises
    ------
    ContractError
        If a is not square-symmetric within tolerance.
    """
    a = as_matrix(a, "a")
    n, m = a.shape
    if n != m:
        raise ContractError(f"sym_eig needs a square matrix, got {a.shape}")
    scale = max(1.0, float(np.abs(a).max()) if n else 1.0)
    if n > 0 and float(np.abs(a - a.T).max()) > 1e-10 * scale:
        raise ContractError("sym_eig input is not symmetric within 1e-10")

    w = 0.5 * (a + a.T)  # symmetrize exactly before iterating
    v = np.eye(n)
    norm_a = float(np.linalg.norm(w))
    if n <= 1 or norm_a == 0.0:
        vals = np.diag(w).copy()
        order = np.argsort(vals)[::-1]
        return EigenResult(vals[order], v[:, order])

    tol = _JACOBI_TOL * norm_a
    # Pairs below tol/n cannot collectively push the off-diagonal norm back
    # above tol, so their rotations are skipped (threshold Jacobi).
    skip = tol / n
    rounds = _round_robin_rounds(n)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = float(np.sqrt(max(0.0, np.sum(w**2) - np.sum(np.diag(w) ** 2))))
        if off <= tol:
            break
        for p_all, q_all in rounds:
            live = np.abs(w[p_all, q_all]) > skip
            if not np.any(live):
                continue
            p_idx = p_all[live]
            q_idx = q_all[live]
            apq = w[p_idx, q_idx]
            app = w[p_idx, p_idx]
            aqq = w[q_idx, q_idx]
            theta = (aqq - app) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0.0, 1.0, t)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            # W <- J^T W J and V <- V J for the whole round at once.
            cols_p = w[:, p_idx].copy()
            cols_q = w[:, q_idx].copy()
            w[:, p_idx] = cols_p * c - cols_q * s
            w[:, q_idx] = cols_p * s + cols_q * c
            rows_p = w[p_idx, :].copy()
            rows_q = w[q_idx, :].copy()
            w[p_idx, :] = c[:, None] * rows_p - s[:, None] * rows_q
            w[q_idx, :] = s[:, None] * rows_p + c[:, None] * rows_q
            vec_p = v[:, p_idx].copy()
            vec_q = v[:, q_idx].copy()
            v[:, p_idx] = vec_p * c - vec_q * s
            v[:, q_idx] = vec_p * s + vec_q * c

    vals = np.diag(w).copy()
    order = np.argsort(vals)[::-1]
    return EigenResult(vals[order], v[:, order])


def top_r_svd(a, r):
    """Leading-r singular triplet of a, via sym_eig of the smaller Gram matrix.

    Returns (left, singulars, right) where left has r orthonormal columns
    spanning the top-r left singular subspace, singulars is descending and
    nonnegative, and right has r orthonormal columns of right singular
    vectors.
    """
    a = as_matrix(a, "a")
    rows, cols = a.shape
    r = int(r)
    if r < 1 or r > min(rows, cols):
        raise ShapeError(f"r={r} out of range for shape {a.shape}")

    if cols <= rows:
        gram = a.T @ a
        eig = sym_eig(gram)
        singulars = np.sqrt(np.clip(eig.eigenvalues[:r], 0.0, None))
        right = eig.eigenvectors[:, :r]
        left = _paired_factor(a, right, singulars)
        return left, singulars, right
    gram = a @ a.T
    eig = sym_eig(gram)
    singulars = np.sqrt(np.clip(eig.eigenvalues[:r], 0.0, None))
    left = eig.eigenvectors[:, :r]
    right = _paired_factor(a.T, left, singulars)
    return left, singulars, right


def _paired_factor(a, basis, singulars):
    """Map an orthonormal basis through a, normalizing column by column.

    Columns whose singular value underflows are replaced by an arbitrary
    unit vector orthogonal to the columns already chosen, so the result
    always has orthonormal columns.
    """
    n = a.shape[0]
    k = basis.shape[1]
    out = np.zeros((n, k))
    floor = max(1e-300, 1e-14 * (singulars[0] if singulars.size else 0.0))
    for i in range(k):
        if singulars[i] > floor:
            col = a @ basis[:, i] / singulars[i]
        else:
            col = _orthogonal_completion(out[:, :i], n)
        # One Gram-Schmidt pass against earlier columns tightens orthogonality.
        if i:
            col = col - out[:, :i] @ (out[:, :i].T @ col)
        nrm = np.linalg.norm(col)
        if nrm == 0.0:
            col = _orthogonal_completion(out[:, :i], n)
            nrm = np.linalg.norm(col)
        out[:, i] = col / nrm
    return out


def _orthogonal_completion(existing, n):
    """Any unit vector orthogonal to the given orthonormal columns."""
    for j in range(n):
        cand = np.zeros(n)
        cand[j] = 1.0
        if existing.shape[1]:
            cand = cand - existing @ (existing.T @ cand)
        nrm = np.linalg.norm(cand)
        if nrm > 1e-8:
            return cand / nrm
    raise ContractError("could not complete an orthonormal basis")


def finite_diff_grad(f, x, h):
    """Central-difference gradient of a scalar function at x.

    Component i is (f(x + h e_i) - f(x - h e_i)) / (2 h).
    """
    if h <= 0:
        raise ContractError(f"step h must be positive, got {h}")
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad
