"""Projection-space similarity between the column spaces of two matrices.

``pss(A, B) = tr(P_A P_B) / min(rank A, rank B)`` where ``P_X = X X^+`` is the
orthogonal projector onto range(X). It equals the mean squared cosine of the
principal angles between the two column spaces.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .matcore import EmptySubspaceError, NumericalFailure

#: roundoff allowance when clamping cosines and PSS values into [0, 1]
CLAMP_SLACK = 1e-12
#: explicit m x m projectors are only formed up to this dimension
MAX_EXPLICIT_DIM = 512


class DimensionMismatch(ValueError):
    """The two gradient matrices do not live in the same row space."""


@dataclass(frozen=True)
class PssResult:
    value: float
    rank_a: int
    rank_b: int
    principal_cosines: tuple = field(default=())

    def to_dict(self):
        return {
            "value": self.value,
            "rank_a": self.rank_a,
            "rank_b": self.rank_b,
            "principal_cosines": list(self.principal_cosines),
        }


def _clamp_unit(x, what):
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < -CLAMP_SLACK or x.max() > 1.0 + CLAMP_SLACK):
        raise NumericalFailure(
            f"{what} outside [0, 1] beyond roundoff: [{x.min():.17g}, {x.max():.17g}]",
            float(max(-x.min(), x.max() - 1.0)),
        )
    return np.clip(x, 0.0, 1.0)


def _pair(g_a, g_b):
    g_a = matcore.as_matrix(g_a, "g_a")
    g_b = matcore.as_matrix(g_b, "g_b")
    if g_a.shape[0] != g_b.shape[0]:
        raise DimensionMismatch(
            f"row dimensions differ: {g_a.shape[0]} vs {g_b.shape[0]}"
        )
    return g_a, g_b


def _bases(g_a, g_b, tol):
    try:
        q_a = matcore.orthonormal_range_basis(g_a, tol)
        q_b = matcore.orthonormal_range_basis(g_b, tol)
    except EmptySubspaceError as exc:
        raise EmptySubspaceError(f"gradient vanished: {exc}") from None
    return q_a, q_b


def _cosines_from_bases(q_a, q_b):
    m = q_a.shape[0]
    k = min(q_a.shape[1], q_b.shape[1])
    if max(q_a.shape[1], q_b.shape[1]) == m:
        # One subspace is the whole space and contains the other.
        return np.ones(k)
    cross = q_a.T @ q_b
    s = matcore.singular_values(cross)[:k]
    return _clamp_unit(s, "principal cosines")


def projector(g, tol=None):
    """Orthogonal projector ``G G^+`` onto the column space of ``g``."""
    g = matcore.as_matrix(g, "g")
    if matcore.rank(g, tol) == 0:
        raise EmptySubspaceError("matrix has numerical rank 0; no projector")
    p = g @ matcore.pseudoinverse(g, tol)
    return p


def principal_cosines(g_a, g_b, tol=None):
    """Cosines of the principal angles between the column spaces, non-increasing."""
    g_a, g_b = _pair(g_a, g_b)
    q_a, q_b = _bases(g_a, g_b, tol)
    return _cosines_from_bases(q_a, q_b)


def pss_trace(g_a, g_b, tol=None):
    """Projection-space similarity via orthonormal range bases.

    Evaluates ``||Q_a^T Q_b||_F^2 / min(r_a, r_b)``, which equals the projector
    trace quotient without forming m x m matrices.

    Raises
    ------
    DimensionMismatch
        Row counts differ.
    EmptySubspaceError
        Either matrix has rank zero (its gradient vanished).
    """
    g_a, g_b = _pair(g_a, g_b)
    q_a, q_b = _bases(g_a, g_b, tol)
    r_a, r_b = q_a.shape[1], q_b.shape[1]
    cross = q_a.T @ q_b
    value = float(np.einsum("ij,ij->", cross, cross)) / min(r_a, r_b)
    value = float(_clamp_unit(value, "PSS"))
    cosines = _cosines_from_bases(q_a, q_b)
    return PssResult(value, r_a, r_b, tuple(float(c) for c in cosines))


def pss_cross_check(g_a, g_b, tol=None, max_dim=MAX_EXPLICIT_DIM):
    """Literal ``tr(P_a P_b) / min(r_a, r_b)`` with explicit projectors.

    Independent of :func:`pss_trace` (pseudoinverse route instead of range
    bases); limited to ``m <= max_dim``.
    """
    g_a, g_b = _pair(g_a, g_b)
    m = g_a.shape[0]
    if m > max_dim:
        raise ValueError(f"explicit projectors limited to m <= {max_dim}, got m = {m}")
    r_a = matcore.rank(g_a, tol)
    r_b = matcore.rank(g_b, tol)
    if r_a == 0 or r_b == 0:
        raise EmptySubspaceError("gradient vanished: matrix has numerical rank 0")
    p_a = g_a @ matcore.pseudoinverse(g_a, tol)
    p_b = g_b @ matcore.pseudoinverse(g_b, tol)
    return float(np.trace(p_a @ p_b)) / min(r_a, r_b)
