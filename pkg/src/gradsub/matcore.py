"""Dense linear algebra on float64 matrices: SVD, rank, pseudoinverse, range bases.

Matrices are plain 2-D ``numpy.ndarray`` of dtype float64. The SVD is a
one-sided (Hestenes) Jacobi iteration; the sweep kernel is compiled when
available (see :mod:`gradsub._kernels`).
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels

#: relative off-diagonal threshold below which a column pair counts as orthogonal;
#: tightened to sqrt(m) * eps for short columns (see _rotation_tol)
JACOBI_TOL = 1e-12
#: sweep cap before the SVD gives up
MAX_SWEEPS = 64

_EPS = np.finfo(np.float64).eps

# Swappable for tests and benchmarks; see gradsub._kernels.
_sweeps = _kernels.jacobi_sweeps


class NumericalFailure(ArithmeticError):
    """An iterative routine did not reach its convergence criterion."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class EmptySubspaceError(ValueError):
    """A matrix expected to span a subspace has numerical rank zero."""


@dataclass(frozen=True)
class RankTolerance:
    """Singular values at or below ``relative_threshold * s_max`` count as zero."""

    relative_threshold: float = 1e-10

    def __post_init__(self):
        t = self.relative_threshold
        if not (isinstance(t, (int, float)) and 0.0 < t < 1.0):
            raise ValueError(f"relative_threshold must lie in (0, 1), got {t!r}")


DEFAULT_TOL = RankTolerance()


class SvdFactors(NamedTuple):
    """Thin SVD ``a = u @ diag(s) @ v.T`` with ``k = min(m, n)`` columns."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float64 array (no copy when already one)."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _threshold(tol):
    if tol is None:
        return DEFAULT_TOL.relative_threshold
    if isinstance(tol, RankTolerance):
        return tol.relative_threshold
    return RankTolerance(float(tol)).relative_threshold


def _rotation_tol(m):
    # Left vectors are w_i / s_i, so their orthogonality error gets multiplied
    # by the condition number in A A^+; rotate down to roundoff level.
    return min(JACOBI_TOL, float(np.sqrt(m)) * _EPS)


def _orthogonalize(a, want_v):
    """Jacobi on the columns of tall ``a`` (m >= n).

    Returns ``(w, s, vt)`` sorted by decreasing ``s``: rows of ``w`` are the
    orthogonalized columns (``u_i * s_i``) and rows of ``vt`` the matching
    right singular vectors.
    """
    m, n = a.shape
    wt = np.array(a.T, dtype=np.float64, order="C")
    vt = np.eye(n) if want_v else None
    sweeps, converged, residual = _sweeps(wt, vt, _rotation_tol(m), MAX_SWEEPS)
    if not converged:
        raise NumericalFailure(
            f"Jacobi SVD did not converge in {sweeps} sweeps (residual {residual:.3e})",
            residual,
        )
    s = np.sqrt(np.einsum("ij,ij->i", wt, wt))
    order = np.argsort(-s, kind="stable")
    return wt[order], s[order], (vt[order] if want_v else None)


def _complete(rows, good):
    """Replace rows not flagged ``good`` by unit vectors orthogonal to all others."""
    k, m = rows.shape
    basis = [rows[i] for i in range(k) if good[i]]
    for i in range(k):
        if good[i]:
            continue
        # residuals of every standard basis vector; take the largest
        e = np.eye(m)
        if basis:
            q = np.array(basis)
            for _ in range(2):
                e -= (e @ q.T) @ q
        norms = np.linalg.norm(e, axis=1)
        best = int(np.argmax(norms))
        x = e[best]
        if basis:
            x = x - (x @ q.T) @ q
        rows[i] = x / np.linalg.norm(x)
        basis.append(rows[i])
    return rows


def _left_vectors(w, s):
    k, m = w.shape
    smax = s[0] if k else 0.0
    good = s > max(k, m) * _EPS * smax
    rows = np.zeros_like(w)
    rows[good] = w[good] / s[good, None]
    return _complete(rows, good)


def _fix_signs(u, v):
    idx = np.argmax(np.abs(u), axis=0)
    flip = u[idx, np.arange(u.shape[1])] < 0
    u[:, flip] *= -1.0
    if v is not None:
        v[:, flip] *= -1.0


def svd(a):
    """Thin singular value decomposition by one-sided Jacobi.

    Singular values are non-increasing and each pair of singular vectors is
    signed so that the largest-magnitude entry of the ``u`` column is positive.
    Identical input bits give identical output bits.

    Raises
    ------
    NumericalFailure
        If the sweep cap is hit; the exception carries the residual.
    """
    a = as_matrix(a)
    m, n = a.shape
    wide = m < n
    w, s, vt = _orthogonalize(a.T if wide else a, want_v=True)
    left = _left_vectors(w, s).T
    right = vt.T
    u, v = (right, left) if wide else (left, right)
    u = np.ascontiguousarray(u)
    v = np.ascontiguousarray(v)
    _fix_signs(u, v)
    return SvdFactors(u, s, v)


def singular_values(a):
    """Singular values of ``a`` in non-increasing order."""
    a = as_matrix(a)
    _, s, _ = _orthogonalize(a.T if a.shape[0] < a.shape[1] else a, want_v=False)
    return s


def _rank_from(s, thr):
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > thr * s[0]))


def rank(a, tol=None):
    """Number of singular values strictly above ``tol * s_max`` (0 for a zero matrix)."""
    return _rank_from(singular_values(a), _threshold(tol))


def pseudoinverse(a, tol=None):
    """Moore-Penrose pseudoinverse; singular values at or below the cutoff are dropped."""
    a = as_matrix(a)
    u, s, v = svd(a)
    r = _rank_from(s, _threshold(tol))
    if r == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    return (v[:, :r] / s[:r]) @ u[:, :r].T


def orthonormal_range_basis(a, tol=None):
    """Orthonormal basis (m x r) of the column space of ``a``, r = rank(a).

    Raises :class:`EmptySubspaceError` when the rank is zero.
    """
    a = as_matrix(a)
    m, n = a.shape
    thr = _threshold(tol)
    if m < n:
        _, s, vt = _orthogonalize(a.T, want_v=True)
        r = _rank_from(s, thr)
        q = vt[:r].T
    else:
        w, s, _ = _orthogonalize(a, want_v=False)
        r = _rank_from(s, thr)
        q = (w[:r] / s[:r, None]).T
    if r == 0:
        raise EmptySubspaceError("matrix has numerical rank 0; its column space is empty")
    q = np.ascontiguousarray(q)
    _fix_signs(q, None)
    return q
