"""Pure numpy one-sided Jacobi sweeps (fallback for the compiled core).

Uses the round-robin ("tournament") ordering: every round rotates n/2
disjoint column pairs at once, so each round is a handful of vectorized
numpy calls. Same contract as ``gradsub._jacobi.jacobi_sweeps``.
"""

import numpy as np

_EPS = np.finfo(np.float64).eps


def _rounds(n):
    """Yield index arrays ``(p, q)`` of disjoint pairs; n-1 rounds cover every pair once."""
    size = n + (n % 2)
    ring = list(range(size))
    half = size // 2
    for _ in range(size - 1):
        top = ring[:half]
        bottom = ring[half:][::-1]
        pairs = [(a, b) if a < b else (b, a) for a, b in zip(top, bottom) if a < n and b < n]
        if pairs:
            p, q = np.array(pairs, dtype=np.intp).T
            yield p, q
        ring = [ring[0], ring[-1]] + ring[1:-1]


def jacobi_sweeps(wt, vt, tol, max_sweeps, block=32):
    """Orthogonalize the rows of ``wt`` in place, rotating rows of ``vt`` alongside.

    Rows whose norm is at most ``m * eps`` times the largest are left alone.

    ``block`` is accepted for signature compatibility and ignored.
    """
    n, m = wt.shape
    if n < 2 or m == 0:
        return 0, True, 0.0
    schedule = list(_rounds(n))
    sweep = 0
    rotations = 1
    worst = 0.0
    while sweep < max_sweeps and rotations > 0:
        rotations = 0
        worst = 0.0
        nrm = np.einsum("ij,ij->i", wt, wt)
        floor = (m * _EPS) ** 2 * nrm.max()
        for p, q in schedule:
            alpha = nrm[p]
            beta = nrm[q]
            live = (alpha > floor) & (beta > floor)
            if not live.any():
                continue
            p, q, alpha, beta = p[live], q[live], alpha[live], beta[live]
            wp = wt[p]
            wq = wt[q]
            gamma = np.einsum("ij,ij->i", wp, wq)
            rel = np.abs(gamma) / (np.sqrt(alpha) * np.sqrt(beta))
            worst = max(worst, float(rel.max()))
            hot = rel > tol
            if not hot.any():
                continue
            p, q = p[hot], q[hot]
            alpha, beta, gamma = alpha[hot], beta[hot], gamma[hot]
            zeta = (beta - alpha) / (2.0 * gamma)
            with np.errstate(over="ignore", divide="ignore"):
                root = np.sqrt(1.0 + zeta * zeta)
                t = np.where(
                    np.abs(zeta) > 1e150,
                    0.5 / zeta,
                    np.sign(zeta + (zeta == 0.0)) / (np.abs(zeta) + root),
                )
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            cc = c[:, None]
            ss = s[:, None]
            wp, wq = wp[hot], wq[hot]
            wt[p] = cc * wp - ss * wq
            wt[q] = ss * wp + cc * wq
            if vt is not None:
                vp = vt[p]
                vq = vt[q]
                vt[p] = cc * vp - ss * vq
                vt[q] = ss * vp + cc * vq
            nrm[p] = alpha - t * gamma
            nrm[q] = beta + t * gamma
            for idx in (p, q):
                low = idx[nrm[idx] <= floor]
                if low.size:
                    nrm[low] = np.einsum("ij,ij->i", wt[low], wt[low])
            rotations += len(p)
        sweep += 1
    return sweep, rotations == 0, worst
