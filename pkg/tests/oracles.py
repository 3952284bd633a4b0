"""Independent reference implementations used as test oracles.

Written from the definitions with plain loops; nothing here imports the
package's numerical code.
"""

import itertools
import math


def gower_pair(x, y, kinds, spans):
    """Mean of per-attribute dissimilarities over active attributes.

    ``kinds[k]`` is ``"numeric"`` or ``"categorical"``; ``spans[k]`` is the
    numeric range (0 marks a constant attribute) or, for categoricals, the
    number of distinct observed values (<= 1 marks a constant attribute).
    """
    total, terms = 0.0, 0
    for a, b, kind, span in zip(x, y, kinds, spans):
        if kind == "numeric":
            if span == 0:
                continue
            total += abs(a - b) / span
        else:
            if span <= 1:
                continue
            # one-hot of a single categorical: TP = [a == b], FP + FN = 2 [a != b]
            tp = 1 if a == b else 0
            fpfn = 0 if a == b else 2
            total += fpfn / (2 * tp + fpfn)
        terms += 1
    return total / terms


def dice(u, v):
    tp = sum(1 for a, b in zip(u, v) if a and b)
    fp = sum(1 for a, b in zip(u, v) if not a and b)
    fn = sum(1 for a, b in zip(u, v) if a and not b)
    if 2 * tp + fp + fn == 0:
        return 0.0
    return (fp + fn) / (2 * tp + fp + fn)


def responsibilities(S, A):
    n = len(S)
    R = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for k in range(n):
            best = -math.inf
            for kk in range(n):
                if kk != k:
                    best = max(best, A[i][kk] + S[i][kk])
            R[i][k] = S[i][k] - best
    return R


def availabilities(R):
    n = len(R)
    A = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for k in range(n):
            if i == k:
                A[i][k] = sum(max(0.0, R[ii][k]) for ii in range(n) if ii != k)
            else:
                s = sum(max(0.0, R[ii][k]) for ii in range(n) if ii not in (i, k))
                A[i][k] = min(0.0, R[k][k] + s)
    return A


def facility_location(S):
    """Exhaustive best exemplar set: (best value, sorted list of (value, exemplars))."""
    n = len(S)
    scored = []
    for size in range(1, n + 1):
        for ex in itertools.combinations(range(n), size):
            value = 0.0
            for i in range(n):
                if i in ex:
                    value += S[i][i]
                else:
                    value += max(S[i][k] for k in ex)
            scored.append((value, ex))
    scored.sort(key=lambda t: -t[0])
    return scored


def silhouette_pooled(D, labels):
    n = len(labels)
    within, between = [], []
    for i in range(n):
        for j in range(i + 1, n):
            (within if labels[i] == labels[j] else between).append(D[i][j])
    if not between:
        return 0.0
    d1 = sum(within) / len(within) if within else 0.0
    d2 = sum(between) / len(between)
    top = max(d1, d2)
    return 0.0 if top == 0 else (d2 - d1) / top


def gini(labels):
    n = len(labels)
    return 1.0 - sum((labels.count(c) / n) ** 2 for c in set(labels))


def best_split_exhaustive(X, y, min_samples_leaf=1):
    """Try every threshold at every distinct-value midpoint; returns (gain, column, threshold)."""
    n = len(y)
    parent = gini(list(y))
    best = None
    for j in range(len(X[0])):
        values = sorted({row[j] for row in X})
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2
            left = [y[i] for i in range(n) if X[i][j] <= t]
            right = [y[i] for i in range(n) if X[i][j] > t]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            gain = parent - (len(left) * gini(left) + len(right) * gini(right)) / n
            if best is None or gain > best[0] + 1e-12:
                best = (gain, j, t)
    return best
