"""Damped affinity propagation on a dense similarity matrix."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from waterclust._kernels import HAVE_NUMBA, ap_step
from waterclust.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

DEFAULT_DAMPING = 0.6
DEFAULT_MAX_ITER = 1000
DEFAULT_STABLE_WINDOW = 15


@dataclass
class ClusterResult:
    """Exemplars and assignments of one affinity propagation run.

    ``labels[i]`` is the index of the exemplar record ``i`` is assigned to.
    ``trace`` holds ``(iteration, n_exemplars, net_similarity)`` rows when
    tracing was requested.
    """

    exemplars: tuple[int, ...]
    labels: np.ndarray
    iterations_run: int
    converged: bool
    net_similarity: float
    trace: list = field(default_factory=list, repr=False)

    @property
    def n_clusters(self) -> int:
        return len(self.exemplars)

    def cluster_ids(self) -> np.ndarray:
        """Compact 0..K-1 ids, numbered by exemplar index."""
        rank = {k: c for c, k in enumerate(self.exemplars)}
        return np.array([rank[int(k)] for k in self.labels], dtype=np.int64)


def _check_square(M, name):
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    return M


def update_responsibilities(S, A):
    """r[i, k] = s[i, k] - max over k' != k of (a[i, k'] + s[i, k'])."""
    S = _check_square(S, "S")
    A = _check_square(A, "A")
    n = S.shape[0]
    if n < 2:
        raise InputError("responsibility update needs N >= 2")
    rows = np.arange(n)
    AS = A + S
    best = np.argmax(AS, axis=1)
    first = AS[rows, best]
    AS[rows, best] = -np.inf
    second = AS.max(axis=1)
    R = S - first[:, None]
    R[rows, best] = S[rows, best] - second
    return R


def update_availabilities(R):
    """Availabilities from responsibilities.

    Off-diagonal: min(0, r[k, k] + sum over i' not in {i, k} of max(0, r[i', k])).
    Diagonal: sum over i' != k of max(0, r[i', k]).
    """
    R = _check_square(R, "R")
    n = R.shape[0]
    if n < 2:
        raise InputError("availability update needs N >= 2")
    diag = np.diag_indices(n)
    Rp = np.maximum(R, 0.0)
    Rp[diag] = R[diag]
    col = Rp.sum(axis=0)
    A = col[None, :] - Rp
    self_avail = A[diag].copy()
    np.minimum(A, 0.0, out=A)
    A[diag] = self_avail
    return A


def check_damping(gamma):
    if not 0.5 <= gamma < 1.0:
        raise ConfigError(f"damping factor must lie in [0.5, 1), got {gamma}")


def damp(prev, fresh, gamma):
    """Convex blend ``gamma * prev + (1 - gamma) * fresh``.

    Evaluated as ``fresh + gamma * (prev - fresh)``: the result then never
    leaves [min(prev, fresh), max(prev, fresh)] and ``prev == fresh`` is an
    exact fixed point.
    """
    check_damping(gamma)
    prev = np.asarray(prev, dtype=np.float64)
    fresh = np.asarray(fresh, dtype=np.float64)
    if prev.shape != fresh.shape:
        raise InputError(f"shape mismatch {prev.shape} vs {fresh.shape}")
    return fresh + gamma * (prev - fresh)


def extract_clusters(R, A, S) -> ClusterResult:
    """Exemplars are the points with a[k, k] + r[k, k] > 0.

    Every other point joins its most similar exemplar (lowest index on ties).
    When no point qualifies, the column of the largest a + r entry becomes
    the single exemplar.
    """
    S = _check_square(S, "S")
    n = S.shape[0]
    if n == 1:
        return ClusterResult((0,), np.zeros(1, dtype=np.int64), 0, True, float(S[0, 0]))
    E = np.asarray(A, dtype=np.float64) + np.asarray(R, dtype=np.float64)
    exemplars = np.flatnonzero(np.diag(E) > 0)
    if exemplars.size == 0:
        exemplars = np.array([int(np.argmax(E)) % n])
    labels = exemplars[np.argmax(S[:, exemplars], axis=1)]
    labels[exemplars] = exemplars
    net = float(S[np.arange(n), labels].sum())
    return ClusterResult(
        tuple(int(k) for k in exemplars), labels.astype(np.int64), 0, False, net
    )


def run_ap(
    S,
    gamma=DEFAULT_DAMPING,
    max_iter=DEFAULT_MAX_ITER,
    stable_window=DEFAULT_STABLE_WINDOW,
    trace=False,
    engine="auto",
) -> ClusterResult:
    """Iterate damped responsibility/availability updates until stable.

    Converged means the exemplar set {k : a[k, k] + r[k, k] > 0} was non-empty
    and identical for ``stable_window`` consecutive iterations, or the
    messages reached an exact fixed point.

    ``engine`` selects the compiled in-place kernel (``"numba"``), the plain
    array implementation (``"numpy"``), or the former when available
    (``"auto"``).
    """
    check_damping(gamma)
    if engine == "auto":
        engine = "numba" if HAVE_NUMBA else "numpy"
    if engine not in ("numba", "numpy") or (engine == "numba" and not HAVE_NUMBA):
        raise ConfigError(f"engine {engine!r} unavailable")
    if max_iter < 1:
        raise ConfigError(f"max_iter must be >= 1, got {max_iter}")
    if stable_window < 1:
        raise ConfigError(f"stable_window must be >= 1, got {stable_window}")
    S = _check_square(S, "S")
    if not np.all(np.isfinite(S)):
        raise InputError("similarity matrix contains non-finite entries")
    n = S.shape[0]
    if n == 0:
        raise InputError("similarity matrix is empty")
    if n == 1:
        result = extract_clusters(np.zeros((1, 1)), np.zeros((1, 1)), S)
        result.converged = True
        return result

    S = np.ascontiguousarray(S)
    R = np.zeros_like(S)
    A = np.zeros_like(S)
    col = np.zeros(n)
    diag = np.diag_indices(n)
    last, stable = None, 0
    converged = False
    rows = []
    it = 0
    for it in range(1, max_iter + 1):
        if engine == "numba":
            changed = ap_step(S, R, A, float(gamma), col)
        else:
            R_new = damp(R, update_responsibilities(S, A), gamma)
            A_new = damp(A, update_availabilities(R_new), gamma)
            changed = not (np.array_equal(R, R_new) and np.array_equal(A, A_new))
            R, A = R_new, A_new
        current = tuple(np.flatnonzero((A[diag] + R[diag]) > 0).tolist())
        if current == last:
            stable += 1
        else:
            last, stable = current, 1
        if trace:
            snap = extract_clusters(R, A, S)
            rows.append((it, snap.n_clusters, snap.net_similarity))
        if stable >= stable_window and (current or not changed):
            converged = True
            break

    result = extract_clusters(R, A, S)
    result.iterations_run = it
    result.converged = converged
    result.trace = rows
    if not converged:
        logger.warning("affinity propagation did not converge in %d iterations", it)
    return result
