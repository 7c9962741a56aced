"""Majorization of real vectors and Hermitian synthesis from spectrum + diagonal.

Conventions: ``x`` majorizes ``y`` when, after sorting both increasingly,
every proper prefix sum of ``x`` is at most the matching prefix sum of ``y``
and the totals agree.  Comparisons use an absolute tolerance of
``1e-9 * max(1, sum|y|)`` since inputs usually come out of eigen-solvers.
"""

import numpy as np

from .errors import DimensionError, DomainError

MAJORIZATION_TOL = 1e-9


def _as_vector(v, name):
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DimensionError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


def _tolerance(y, tol):
    return tol * max(1.0, float(np.sum(np.abs(y))))


def majorizes(x, y, tol=MAJORIZATION_TOL):
    """Return True when ``x`` majorizes ``y``."""
    x = _as_vector(x, "x")
    y = _as_vector(y, "y")
    if x.shape != y.shape:
        raise DimensionError(f"length mismatch: {x.size} vs {y.size}")
    atol = _tolerance(y, tol)
    xs = np.cumsum(np.sort(x, kind="stable"))
    ys = np.cumsum(np.sort(y, kind="stable"))
    if abs(xs[-1] - ys[-1]) > atol:
        return False
    return bool(np.all(xs[:-1] <= ys[:-1] + atol))


def flat_block_end(ys, m):
    """End index (exclusive) of the averaged block for increasingly sorted ``ys``."""
    prefix = np.cumsum(ys)
    for j in range(m, ys.size):
        # 1-based condition: sum_{i<=j} y_[i] <= (j - m) * y_[j+1]
        head = prefix[j - 1] if j > 0 else 0.0
        if head <= (j - m) * ys[j]:
            return j
    return ys.size


def min_majorizing_vector(y, m):
    """Smallest vector with ``m`` zeros that majorizes the nonnegative ``y``.

    The result is returned in increasing order: ``m`` zeros, then a flat block
    holding the average of the smallest ``k`` entries of ``y`` spread over
    ``k - m`` slots, then the untouched largest entries of ``y``.  ``k`` is the
    first index ``j >= m`` at which the flat block would no longer exceed the
    next entry of ``y``.
    """
    y = _as_vector(y, "y")
    n = y.size
    m = int(m)
    if m < 0 or m > n:
        raise DomainError(f"zero count m={m} outside [0, {n}]")
    if np.any(y < 0):
        raise DomainError("y must be entrywise nonnegative")

    ys = np.sort(y, kind="stable")
    prefix = np.cumsum(ys)
    if m == n:
        if prefix[-1] > _tolerance(y, MAJORIZATION_TOL):
            raise DomainError("an all-zero vector cannot majorize a nonzero y")
        return np.zeros(n)

    k = flat_block_end(ys, m)
    x = np.empty(n)
    x[:m] = 0.0
    if k > m:
        x[m:k] = prefix[k - 1] / (k - m)
    x[k:] = ys[k:]
    return x


def schur_horn(eigs, diag, tol=MAJORIZATION_TOL):
    """Real symmetric matrix with spectrum ``eigs`` and main diagonal ``diag``.

    Requires ``majorizes(eigs, diag)``.  Starting from ``diag(eigs)`` each step
    applies one plane rotation that pins the largest unassigned target onto
    the diagonal, leaving the still-free block diagonal; n - 1 rotations
    suffice.
    """
    eigs = _as_vector(eigs, "eigs")
    diag = _as_vector(diag, "diag")
    if eigs.shape != diag.shape:
        raise DimensionError(f"length mismatch: {eigs.size} vs {diag.size}")
    if not majorizes(eigs, diag, tol=tol):
        raise DomainError("eigs does not majorize diag; no such Hermitian matrix exists")

    n = eigs.size
    A = np.diag(np.sort(eigs)[::-1])
    order = np.argsort(-diag, kind="stable")
    targets = diag[order]

    free = list(range(n))  # positions whose diagonal is still unassigned, values descending
    placed = np.empty(n, dtype=int)
    for step in range(n - 1):
        target = targets[step]
        values = A[free, free]
        # bracket target between consecutive free values: values[j] >= target >= values[j+1]
        j = int(np.searchsorted(-values, -target, side="right")) - 1
        j = min(max(j, 0), len(free) - 2)
        p, q = free[j], free[j + 1]
        a_p, a_q = A[p, p], A[q, q]
        gap = a_p - a_q
        c2 = 1.0 if gap <= 0 else float(np.clip((target - a_q) / gap, 0.0, 1.0))
        c, s = np.sqrt(c2), np.sqrt(1.0 - c2)
        row_p, row_q = A[p].copy(), A[q].copy()
        A[p], A[q] = c * row_p - s * row_q, s * row_p + c * row_q
        col_p, col_q = A[:, p].copy(), A[:, q].copy()
        A[:, p], A[:, q] = c * col_p - s * col_q, s * col_p + c * col_q
        A[p, p] = target
        placed[step] = p
        free.pop(j)
        # keep the free list sorted by current diagonal value (descending)
        free.sort(key=lambda idx: -A[idx, idx])
    placed[n - 1] = free[0]

    out_index = np.empty(n, dtype=int)
    out_index[order] = placed
    out = A[np.ix_(out_index, out_index)]
    return 0.5 * (out + out.T)
