"""CART classification tree over cluster labels, with rule extraction.

Numeric attributes split on midpoints between consecutive distinct values;
categorical attributes enter as one-hot dummies split at 0.5, so every split
of a dummy reads as ``attr == value`` / ``attr != value``.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from waterclust.data import RAW, Dataset
from waterclust.errors import InputError

DEFAULT_MAX_DEPTH = 12
_TIE = 1e-12


class Feature(NamedTuple):
    name: str
    attribute: str
    kind: str  # "numeric" | "dummy"
    category: str | None = None


@dataclass
class FeatureMatrix:
    X: np.ndarray
    features: tuple

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.features):
            raise InputError(
                f"feature matrix shape {self.X.shape} does not match {len(self.features)} features"
            )

    def __len__(self):
        return self.X.shape[0]

    def column(self, attribute, category=None):
        for j, f in enumerate(self.features):
            if f.attribute == attribute and f.category == category:
                return self.X[:, j]
        return None


def feature_matrix(d: Dataset) -> FeatureMatrix:
    """Numeric attributes as-is, categorical ones as dummies, in schema order."""
    if d.stage == RAW:
        raise InputError("feature_matrix needs a normalized/filtered dataset")
    cols, features = [], []
    for j, a in enumerate(d.schema):
        values = [r.values[j] for r in d.records]
        if a.is_numeric:
            cols.append(np.asarray(values, dtype=np.float64))
            features.append(Feature(a.name, a.name, "numeric"))
        else:
            for c in a.categories or ():
                cols.append(np.array([v == c for v in values], dtype=np.float64))
                features.append(Feature(f"{a.name}_{c}", a.name, "dummy", c))
    X = np.column_stack(cols) if cols else np.zeros((len(d), 0))
    return FeatureMatrix(X, tuple(features))


def _as_features(X):
    if isinstance(X, FeatureMatrix):
        return X
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    return FeatureMatrix(X, tuple(Feature(f"x{j}", f"x{j}", "numeric") for j in range(X.shape[1])))


def gini(labels) -> float:
    labels = list(labels)
    if not labels:
        raise InputError("gini of an empty label set")
    _, counts = np.unique(np.asarray(labels), return_counts=True)
    p = counts / counts.sum()
    return float(1.0 - np.sum(p * p))


def _gini_counts(counts, n):
    p = counts / n
    return 1.0 - np.sum(p * p, axis=-1)


class Split(NamedTuple):
    feature_index: int
    feature: Feature
    threshold: float
    gain: float


def best_split(X, labels, min_samples_leaf=1, allowed=None):
    """Split maximizing the Gini decrease, or ``None`` if nothing helps.

    Candidates are midpoints between consecutive distinct sorted values of
    each column. Ties go to the earlier column, then the lower threshold.
    ``allowed`` optionally restricts the searched column indices.
    """
    fm = _as_features(X)
    _, codes = np.unique(np.asarray(labels), return_inverse=True)
    return _best_split(fm.X, codes, int(codes.max(initial=0)) + 1, fm.features,
                       min_samples_leaf, allowed)


def _best_split(X, codes, n_classes, features, min_samples_leaf, allowed=None):
    n = len(codes)
    if n < 2:
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), codes] = 1.0
    total = onehot.sum(axis=0)
    parent = _gini_counts(total, n)
    if parent <= _TIE:
        return None
    best = None
    columns = range(X.shape[1]) if allowed is None else allowed
    for j in columns:
        x = X[:, j]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n, dtype=np.float64)
        valid = xs[:-1] < xs[1:]
        valid &= (n_left >= min_samples_leaf) & (n - n_left >= min_samples_leaf)
        if not valid.any():
            continue
        right = total - left
        g_left = _gini_counts(left, n_left[:, None])
        g_right = _gini_counts(right, (n - n_left)[:, None])
        gain = parent - (n_left * g_left + (n - n_left) * g_right) / n
        gain = np.where(valid, gain, -np.inf)
        top = gain.max()
        t = int(np.flatnonzero(gain >= top - _TIE)[0])
        if best is not None and top <= best.gain + _TIE:
            continue
        lo, hi = xs[t], xs[t + 1]
        threshold = (lo + hi) / 2.0
        if not lo <= threshold < hi:
            threshold = lo
        best = Split(j, features[j], float(threshold), float(top))
    if best is None or best.gain <= _TIE:
        return None
    return best


@dataclass
class TreeNode:
    depth: int
    n_samples: int
    histogram: dict
    prediction: object
    impurity: float
    split: Split | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    node_id: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.split is None

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def internal_nodes(self):
        if not self.is_leaf:
            yield self
            yield from self.left.internal_nodes()
            yield from self.right.internal_nodes()


@dataclass
class Tree:
    root: TreeNode
    features: tuple
    classes: tuple
    n_samples: int
    params: dict = field(default_factory=dict)

    def apply(self, X) -> list:
        """Leaf node reached by every row of ``X``."""
        X = _as_features(X).X
        out = []
        for row in X:
            node = self.root
            while not node.is_leaf:
                node = node.left if row[node.split.feature_index] <= node.split.threshold else node.right
            out.append(node)
        return out

    def predict(self, X) -> list:
        return [leaf.prediction for leaf in self.apply(X)]

    def depth(self) -> int:
        return max(leaf.depth for leaf in self.root.leaves())


def build_tree(
    X,
    labels,
    max_depth=DEFAULT_MAX_DEPTH,
    min_samples_leaf=1,
    min_impurity_decrease=0.0,
    root_attribute=None,
) -> Tree:
    """Grow a Gini CART tree predicting ``labels``.

    Growth stops at purity, ``max_depth``, when no admissible split lowers
    impurity, or when the sample-weighted decrease falls below
    ``min_impurity_decrease``. Leaves predict the majority label (smallest
    label on ties). ``root_attribute`` forces the root split onto that
    attribute's columns, which is how the union tree keeps the partition
    attribute at its root.
    """
    fm = _as_features(X)
    labels = np.asarray(labels)
    if labels.shape != (len(fm),):
        raise InputError(f"{len(labels)} labels for {len(fm)} rows")
    if len(fm) == 0:
        raise InputError("cannot fit a tree on zero records")
    if max_depth < 0 or min_samples_leaf < 1 or min_impurity_decrease < 0:
        raise InputError("tree parameters must be non-negative (min_samples_leaf >= 1)")
    classes, codes = np.unique(labels, return_inverse=True)
    n_classes = len(classes)
    n_total = len(codes)
    root_cols = None
    if root_attribute is not None:
        root_cols = [j for j, f in enumerate(fm.features) if f.attribute == root_attribute]
    counter = [0]

    def grow(idx, depth):
        counts = np.bincount(codes[idx], minlength=n_classes)
        node = TreeNode(
            depth=depth,
            n_samples=len(idx),
            histogram=OrderedDict(
                (_plain(classes[c]), int(counts[c])) for c in range(n_classes) if counts[c]
            ),
            prediction=_plain(classes[int(np.argmax(counts))]),
            impurity=float(_gini_counts(counts.astype(np.float64), len(idx))),
            node_id=counter[0],
        )
        counter[0] += 1
        if depth >= max_depth or node.impurity <= _TIE:
            return node
        allowed = root_cols if depth == 0 and root_cols else None
        split = _best_split(fm.X[idx], codes[idx], n_classes, fm.features,
                            min_samples_leaf, allowed)
        if split is None or len(idx) / n_total * split.gain < min_impurity_decrease:
            return node
        go_left = fm.X[idx, split.feature_index] <= split.threshold
        node.split = split
        node.left = grow(idx[go_left], depth + 1)
        node.right = grow(idx[~go_left], depth + 1)
        return node

    root = grow(np.arange(n_total), 0)
    params = dict(
        max_depth=max_depth,
        min_samples_leaf=min_samples_leaf,
        min_impurity_decrease=min_impurity_decrease,
        root_attribute=root_attribute,
    )
    return Tree(root, fm.features, tuple(_plain(c) for c in classes), n_total, params)


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


def training_accuracy(tree: Tree, X, labels) -> float:
    pred = tree.predict(X)
    labels = [_plain(v) for v in np.asarray(labels)]
    return float(np.mean([p == y for p, y in zip(pred, labels)]))


class Condition(NamedTuple):
    attribute: str
    op: str  # "<=", ">", "==", "!="
    value: object

    def __str__(self):
        v = f"{self.value:.6g}" if isinstance(self.value, float) else str(self.value)
        return f"{self.attribute} {self.op} {v}"


@dataclass
class DecisionRule:
    conditions: tuple
    predicted_cluster: object
    support: int
    hits: int
    coverage: float
    leaf_id: int

    def mask(self, fm: FeatureMatrix) -> np.ndarray:
        """Rows of ``fm`` satisfying every condition, evaluated independently of the tree."""
        m = np.ones(len(fm), dtype=bool)
        for c in self.conditions:
            if c.op in ("<=", ">"):
                col = fm.column(c.attribute)
                m &= col <= c.value if c.op == "<=" else col > c.value
            else:
                col = fm.column(c.attribute, c.value)
                hot = np.zeros(len(fm), dtype=bool) if col is None else col > 0.5
                m &= hot if c.op == "==" else ~hot
        return m

    def text(self) -> str:
        body = " AND ".join(str(c) for c in self.conditions) or "(always)"
        return (
            f"{body} -> cluster {self.predicted_cluster} "
            f"(support {self.support}, coverage {100 * self.coverage:.1f}%)"
        )

    def to_dict(self) -> dict:
        return {
            "conditions": [
                {"attribute": c.attribute, "op": c.op, "value": c.value} for c in self.conditions
            ],
            "predicted_cluster": self.predicted_cluster,
            "support": self.support,
            "hits": self.hits,
            "coverage": self.coverage,
        }


def _merge(path):
    """Collapse a root-to-leaf list of (feature, went_left, threshold) steps."""
    order, numeric, equal, unequal = [], {}, {}, {}
    for feat, went_left, thr in path:
        a = feat.attribute
        if a not in order:
            order.append(a)
        if feat.kind == "numeric":
            lo, hi = numeric.get(a, (None, None))
            if went_left:
                hi = thr if hi is None else min(hi, thr)
            else:
                lo = thr if lo is None else max(lo, thr)
            numeric[a] = (lo, hi)
        elif went_left:
            unequal.setdefault(a, []).append(feat.category)
        else:
            equal[a] = feat.category
    out = []
    for a in order:
        if a in numeric:
            lo, hi = numeric[a]
            if lo is not None:
                out.append(Condition(a, ">", lo))
            if hi is not None:
                out.append(Condition(a, "<=", hi))
        elif a in equal:
            out.append(Condition(a, "==", equal[a]))
        else:
            out.extend(Condition(a, "!=", v) for v in sorted(set(unequal[a])))
    return tuple(out)


def extract_rules(tree: Tree, X, labels) -> list:
    """One rule per leaf, sorted by support (descending).

    ``coverage`` is the share of the predicted cluster's training records
    that land in this leaf.
    """
    labels = [_plain(v) for v in np.asarray(labels)]
    sizes = {}
    for y in labels:
        sizes[y] = sizes.get(y, 0) + 1
    rules = []

    def walk(node, path):
        if node.is_leaf:
            hits = node.histogram.get(node.prediction, 0)
            total = sizes.get(node.prediction, 0)
            rules.append(
                DecisionRule(
                    conditions=_merge(path),
                    predicted_cluster=node.prediction,
                    support=node.n_samples,
                    hits=hits,
                    coverage=hits / total if total else 0.0,
                    leaf_id=node.node_id,
                )
            )
            return
        s = node.split
        walk(node.left, path + [(s.feature, True, s.threshold)])
        walk(node.right, path + [(s.feature, False, s.threshold)])

    walk(tree.root, [])
    rules.sort(key=lambda r: -r.support)
    return rules


class RankedAttribute(NamedTuple):
    attribute: str
    importance: float
    best_depth: int


def rank_attributes(tree: Tree) -> list:
    """Attributes by share of the total sample-weighted Gini decrease."""
    score, depth, first_seen = {}, {}, {}
    for node in tree.root.internal_nodes():
        a = node.split.feature.attribute
        dec = (
            node.n_samples * node.impurity
            - node.left.n_samples * node.left.impurity
            - node.right.n_samples * node.right.impurity
        )
        score[a] = score.get(a, 0.0) + max(dec, 0.0)
        depth[a] = min(depth.get(a, node.depth), node.depth)
        first_seen.setdefault(a, node.split.feature_index)
    total = sum(score.values())
    ranked = [
        RankedAttribute(a, score[a] / total if total > 0 else 0.0, depth[a]) for a in score
    ]
    ranked.sort(key=lambda r: (-r.importance, r.best_depth, first_seen[r.attribute]))
    return ranked


def _split_text(split: Split, left: bool) -> str:
    f = split.feature
    if f.kind == "dummy":
        return f"{f.attribute} {'!=' if left else '=='} {f.category}"
    return f"{f.attribute} {'<=' if left else '>'} {split.threshold:.6g}"


def tree_to_text(tree: Tree) -> str:
    lines = []

    def walk(node, indent):
        pad = "|   " * indent
        if node.is_leaf:
            hist = ", ".join(f"{k}: {v}" for k, v in node.histogram.items())
            lines.append(f"{pad}|--- cluster {node.prediction} (n={node.n_samples}; {hist})")
            return
        for child, left in ((node.left, True), (node.right, False)):
            lines.append(f"{pad}|--- {_split_text(node.split, left)}")
            walk(child, indent + 1)

    walk(tree.root, 0)
    return "\n".join(lines) + "\n"
