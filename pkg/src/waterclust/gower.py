"""Gower dissimilarity over mixed attributes and its similarity form."""

from __future__ import annotations

import logging

import numpy as np

from waterclust.data import Dataset, EncodedMatrix
from waterclust.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

PER_ATTRIBUTE = "per-attribute"
CONCATENATED = "concatenated"


def numeric_dissim(x_i, x_j, span):
    """Range-normalized Manhattan distance; 0 for a constant attribute."""
    if span == 0:
        return 0.0
    return abs(x_i - x_j) / span


def dice_dissim(dummies_i, dummies_j):
    """Dice dissimilarity (FP + FN) / (2 TP + FP + FN) of two binary vectors."""
    a = np.asarray(dummies_i, dtype=bool)
    b = np.asarray(dummies_j, dtype=bool)
    if a.shape != b.shape:
        raise InputError(f"dummy vectors differ in length: {a.shape} vs {b.shape}")
    tp = int(np.sum(a & b))
    mismatch = int(np.sum(a ^ b))
    denom = 2 * tp + mismatch
    if denom == 0:
        logger.debug("dice_dissim: both dummy vectors all-zero, treated as a match")
        return 0.0
    return mismatch / denom


def _dice_block(block: np.ndarray) -> np.ndarray:
    x = block.astype(np.int64)
    tp = x @ x.T
    ones = x.sum(axis=1)
    denom = ones[:, None] + ones[None, :]
    # FP + FN = ones_i + ones_j - 2 TP, and 2 TP + FP + FN = ones_i + ones_j
    mismatch = denom - 2 * tp
    out = np.zeros(tp.shape, dtype=np.float64)
    np.divide(mismatch, denom, out=out, where=denom > 0)
    return out


def active_attributes(d: Dataset) -> list[str]:
    return [a.name for a in d.schema if not a.is_constant]


def gower_matrix(d: Dataset, enc: EncodedMatrix, dice_mode=PER_ATTRIBUTE) -> np.ndarray:
    """Dense N x N Gower dissimilarity matrix.

    Each non-constant attribute contributes equally: numeric attributes via
    range-normalized Manhattan distance, categorical ones via Dice distance
    over their dummy columns. With ``dice_mode="concatenated"`` Dice is taken
    once over all dummy columns and counts as a single attribute.
    """
    if dice_mode not in (PER_ATTRIBUTE, CONCATENATED):
        raise ConfigError(f"unknown dice_mode {dice_mode!r}")
    active = [a for a in d.schema if not a.is_constant]
    if not active:
        raise ConfigError("no active (non-constant) attributes to compare")
    n = len(d)
    total = np.zeros((n, n), dtype=np.float64)
    terms = 0
    cat_cols = []
    for a in active:
        if a.is_numeric:
            x = d.numeric_column(a.name)
            total += np.abs(x[:, None] - x[None, :]) / a.span
            terms += 1
        elif dice_mode == PER_ATTRIBUTE:
            total += _dice_block(enc.group(a.name))
            terms += 1
        else:
            cat_cols.append(enc.group(a.name))
    if cat_cols:
        total += _dice_block(np.hstack(cat_cols))
        terms += 1
    total /= terms
    np.fill_diagonal(total, 0.0)
    return total


def to_similarity(D, theta=-1.0, preference="median") -> np.ndarray:
    """Similarity ``theta * D`` with preferences on the diagonal.

    ``preference`` is ``"median"`` (median of the off-diagonal similarities),
    a scalar, or a length-N array of per-point values.
    """
    if not theta < 0:
        raise ConfigError(f"theta must be negative, got {theta}")
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise InputError(f"dissimilarity matrix must be square, got {D.shape}")
    S = theta * D
    n = S.shape[0]
    if isinstance(preference, str):
        if preference != "median":
            raise ConfigError(f"unknown preference policy {preference!r}")
        off = S[~np.eye(n, dtype=bool)]
        pref = float(np.median(off)) if off.size else 0.0
        np.fill_diagonal(S, pref)
    else:
        pref = np.broadcast_to(np.asarray(preference, dtype=np.float64), (n,))
        np.fill_diagonal(S, pref)
    return S
