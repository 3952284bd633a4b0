"""Fused in-place message update used by ``run_ap`` when numba is present.

Computes the same quantities as ``update_responsibilities``,
``update_availabilities`` and ``damp`` in three passes over the matrices.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - exercised only without numba
    njit = None

HAVE_NUMBA = njit is not None


def _ap_step(S, R, A, gamma, col):
    """One damped sweep in place; returns True if any message changed."""
    n = S.shape[0]
    changed = False
    for i in range(n):
        first = -np.inf
        second = -np.inf
        best = 0
        for k in range(n):
            v = A[i, k] + S[i, k]
            if v > first:
                second = first
                first = v
                best = k
            elif v > second:
                second = v
        for k in range(n):
            if k == best:
                fresh = S[i, k] - second
            else:
                fresh = S[i, k] - first
            old = R[i, k]
            R[i, k] = fresh + gamma * (old - fresh)
            if R[i, k] != old:
                changed = True
    for k in range(n):
        col[k] = 0.0
    # row order accumulation, fixed regardless of threads
    for i in range(n):
        for k in range(n):
            r = R[i, k]
            if i == k or r > 0.0:
                col[k] += r
    for i in range(n):
        for k in range(n):
            r = R[i, k]
            if i == k:
                fresh = col[k] - r
            else:
                fresh = col[k] - (r if r > 0.0 else 0.0)
                if fresh > 0.0:
                    fresh = 0.0
            old = A[i, k]
            A[i, k] = fresh + gamma * (old - fresh)
            if A[i, k] != old:
                changed = True
    return changed


ap_step = njit(cache=True, nogil=True)(_ap_step) if HAVE_NUMBA else _ap_step
