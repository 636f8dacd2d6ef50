"""Gradient-boosted regression trees mapping distance vectors to DMOS.

Least-squares boosting: start from the target mean, then repeatedly fit a
depth-limited regression tree to the residuals over a seeded random
feature subset and append it with a shrinkage weight. Split finding is an
exact scan over sorted unique feature values with midpoint thresholds; the
training sets here are small (hundreds to a few thousand rows), so no
histogram approximations are needed.

Everything is deterministic given the seed, and the per-round feature
subsets depend on (seed, round) only, so training is invariant to the row
order of the dataset.
"""

from dataclasses import dataclass, field

import numpy as np

from .distances import DISTANCE_ORDER_ID
from .errors import EmptyDataset, FeatureOrderMismatch, ParseError, VersionMismatch

MODEL_FORMAT_VERSION = 1

_LEAF = -1


@dataclass
class RegressionTree:
    """Flat-array binary tree; node 0 is the root.

    ``feature[i] == -1`` marks a leaf whose prediction is ``value[i]``;
    otherwise samples with x[feature] <= threshold go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            feat = self.feature[idx]
            active = feat != _LEAF
            if not active.any():
                return self.value[idx]
            rows = np.nonzero(active)[0]
            go_left = X[rows, feat[rows]] <= self.threshold[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])


@dataclass
class TrainConfig:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.05
    min_samples_leaf: int = 5
    feature_fraction: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if not 0 < self.feature_fraction <= 1:
            raise ValueError("feature_fraction must be in (0, 1]")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass
class BoostedModel:
    """Additive ensemble: base + sum_i shrinkage_i * tree_i(x)."""

    base: float
    trees: list[RegressionTree]
    shrinkage: list[float]
    n_features: int
    feature_order: str = DISTANCE_ORDER_ID
    degenerate: bool = False
    train_loss: list[float] = field(default_factory=list)  # not serialized

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise FeatureOrderMismatch(
                f"model expects {self.n_features} features, got {X.shape[1]}"
            )
        out = np.full(X.shape[0], self.base)
        for gamma, tree in zip(self.shrinkage, self.trees):
            out += gamma * tree.predict(X)
        return out


class _TreeBuilder:
    def __init__(self, X, residuals, features, max_depth, min_leaf):
        self.X = X
        self.r = residuals
        self.features = features
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.nodes: list[list] = []  # [feature, threshold, left, right, value]

    def build(self) -> RegressionTree:
        self._grow(np.arange(self.X.shape[0]), depth=0)
        return RegressionTree(
            feature=np.array([b[0] for b in self.nodes], dtype=np.int64),
            threshold=np.array([b[1] for b in self.nodes]),
            left=np.array([b[2] for b in self.nodes], dtype=np.int64),
            right=np.array([b[3] for b in self.nodes], dtype=np.int64),
            value=np.array([b[4] for b in self.nodes]),
        )

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        node_id = len(self.nodes)
        self.nodes.append([_LEAF, 0.0, 0, 0, float(self.r[idx].mean())])
        if depth >= self.max_depth or idx.size < 2 * self.min_leaf:
            return node_id
        split = self._best_split(idx)
        if split is None:
            return node_id
        feat, thr = split
        go_left = self.X[idx, feat] <= thr
        left_id = self._grow(idx[go_left], depth + 1)
        right_id = self._grow(idx[~go_left], depth + 1)
        self.nodes[node_id][:4] = [feat, thr, left_id, right_id]
        return node_id

    def _best_split(self, idx: np.ndarray):
        r = self.r[idx]
        total_sum = r.sum()
        total_sq = total_sum * total_sum / idx.size
        best_gain = 1e-12  # ignore numerically void splits
        best = None
        for feat in self.features:
            xs = self.X[idx, feat]
            uniq, inverse = np.unique(xs, return_inverse=True)
            if uniq.size < 2:
                continue
            cnt = np.bincount(inverse)
            sums = np.bincount(inverse, weights=r)
            n_left = np.cumsum(cnt)[:-1]
            sum_left = np.cumsum(sums)[:-1]
            n_right = idx.size - n_left
            valid = (n_left >= self.min_leaf) & (n_right >= self.min_leaf)
            if not valid.any():
                continue
            sum_right = total_sum - sum_left
            # maximizing sum^2/n on both sides == minimizing split SSE
            gain = sum_left**2 / n_left + sum_right**2 / n_right - total_sq
            gain[~valid] = -np.inf
            j = int(np.argmax(gain))
            if gain[j] > best_gain:
                best_gain = float(gain[j])
                best = (int(feat), float((uniq[j] + uniq[j + 1]) / 2.0))
        return best


def _feature_subset(n_features: int, fraction: float, seed: int, round_idx: int) -> np.ndarray:
    k = max(1, int(round(fraction * n_features)))
    rng = np.random.default_rng([seed, round_idx])
    return np.sort(rng.permutation(n_features)[:k])


def train(X, y, cfg: TrainConfig | None = None, feature_order: str = DISTANCE_ORDER_ID) -> BoostedModel:
    """Fit the boosted ensemble; deterministic given cfg.seed."""
    cfg = cfg if cfg is not None else TrainConfig()
    cfg.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected 2-d sample matrix, got shape {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y row counts differ")
    if X.shape[0] == 0:
        raise EmptyDataset("no training rows")
    if X.shape[0] < 2 * cfg.min_samples_leaf:
        raise EmptyDataset(
            f"{X.shape[0]} rows cannot honour min_samples_leaf={cfg.min_samples_leaf}"
        )

    base = float(y.mean())
    model = BoostedModel(
        base=base, trees=[], shrinkage=[], n_features=X.shape[1],
        feature_order=feature_order,
    )
    residuals = y - base
    if np.allclose(residuals, 0.0):
        model.degenerate = True
        model.train_loss = [float(np.mean(residuals**2))]
        return model

    model.train_loss.append(float(np.mean(residuals**2)))
    for round_idx in range(cfg.n_trees):
        feats = _feature_subset(X.shape[1], cfg.feature_fraction, cfg.seed, round_idx)
        tree = _TreeBuilder(X, residuals, feats, cfg.max_depth, cfg.min_samples_leaf).build()
        residuals = residuals - cfg.learning_rate * tree.predict(X)
        model.trees.append(tree)
        model.shrinkage.append(cfg.learning_rate)
        model.train_loss.append(float(np.mean(residuals**2)))
    return model


def predict(model: BoostedModel, d) -> float:
    """Score one distance vector with the trained model."""
    order = getattr(d, "order", None)
    values = getattr(d, "values", d)
    if order is not None and order != model.feature_order:
        raise FeatureOrderMismatch(
            f"model trained on {model.feature_order!r}, input is {order!r}"
        )
    return float(model.predict(np.asarray(values, dtype=np.float64))[0])


# --------------------------------------------------------------------------
# Model file format (.cd2b) - see docs/model-format.md
# --------------------------------------------------------------------------


def save_model(model: BoostedModel) -> bytes:
    lines = [
        f"cd2b {MODEL_FORMAT_VERSION}",
        f"feature_order {model.feature_order}",
        f"n_features {model.n_features}",
        f"base {float(model.base)!r}",
        f"degenerate {int(model.degenerate)}",
        f"n_trees {len(model.trees)}",
    ]
    for i, (tree, gamma) in enumerate(zip(model.trees, model.shrinkage)):
        lines.append(f"tree {i} shrinkage {float(gamma)!r} nodes {tree.feature.size}")
        for n in range(tree.feature.size):
            if tree.feature[n] == _LEAF:
                lines.append(f"{n} leaf {float(tree.value[n])!r}")
            else:
                lines.append(
                    f"{n} split {int(tree.feature[n])} {float(tree.threshold[n])!r} "
                    f"{int(tree.left[n])} {int(tree.right[n])}"
                )
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("ascii")


def _parse_fail(lineno: int, why: str):
    raise ParseError(f"line {lineno}: {why}")


def load_model(data: bytes) -> BoostedModel:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(f"model file is not ascii text: {exc}") from exc
    lines = text.splitlines()
    pos = 0

    def next_line() -> tuple[int, list[str]]:
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("unexpected end of model file")
        pos += 1
        return pos, lines[pos - 1].split()

    lineno, head = next_line()
    if len(head) != 2 or head[0] != "cd2b":
        _parse_fail(lineno, "expected 'cd2b <version>' header")
    if head[1] != str(MODEL_FORMAT_VERSION):
        raise VersionMismatch(f"unsupported model version {head[1]}")

    fields: dict[str, str] = {}
    for key in ("feature_order", "n_features", "base", "degenerate", "n_trees"):
        lineno, parts = next_line()
        if len(parts) != 2 or parts[0] != key:
            _parse_fail(lineno, f"expected '{key} <value>'")
        fields[key] = parts[1]

    try:
        n_features = int(fields["n_features"])
        base = float(fields["base"])
        degenerate = bool(int(fields["degenerate"]))
        n_trees = int(fields["n_trees"])
    except ValueError as exc:
        raise ParseError(f"bad header value: {exc}") from exc

    trees: list[RegressionTree] = []
    shrinkage: list[float] = []
    for i in range(n_trees):
        lineno, parts = next_line()
        if (
            len(parts) != 6
            or parts[0] != "tree"
            or parts[1] != str(i)
            or parts[2] != "shrinkage"
            or parts[4] != "nodes"
        ):
            _parse_fail(lineno, f"expected 'tree {i} shrinkage <g> nodes <n>'")
        try:
            gamma = float(parts[3])
            n_nodes = int(parts[5])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from exc
        if n_nodes < 1:
            _parse_fail(lineno, "tree must have at least one node")

        feature = np.empty(n_nodes, dtype=np.int64)
        threshold = np.zeros(n_nodes)
        left = np.zeros(n_nodes, dtype=np.int64)
        right = np.zeros(n_nodes, dtype=np.int64)
        value = np.zeros(n_nodes)
        for n in range(n_nodes):
            lineno, parts = next_line()
            if len(parts) == 3 and parts[0] == str(n) and parts[1] == "leaf":
                feature[n] = _LEAF
                try:
                    value[n] = float(parts[2])
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: {exc}") from exc
            elif len(parts) == 6 and parts[0] == str(n) and parts[1] == "split":
                try:
                    feature[n] = int(parts[2])
                    threshold[n] = float(parts[3])
                    left[n] = int(parts[4])
                    right[n] = int(parts[5])
                except ValueError as exc:
                    raise ParseError(f"line {lineno}: {exc}") from exc
                if not 0 <= feature[n] < n_features:
                    _parse_fail(lineno, f"feature index {feature[n]} out of range")
                # children carry higher ids than their parent (preorder
                # emission); enforcing it keeps prediction cycle-free
                if not (n < left[n] < n_nodes and n < right[n] < n_nodes):
                    _parse_fail(lineno, "child node index out of range")
            else:
                _parse_fail(lineno, f"expected node {n} as a leaf or split record")
        trees.append(RegressionTree(feature, threshold, left, right, value))
        shrinkage.append(gamma)

    lineno, parts = next_line()
    if parts != ["end"]:
        _parse_fail(lineno, "expected 'end' terminator")

    return BoostedModel(
        base=base, trees=trees, shrinkage=shrinkage, n_features=n_features,
        feature_order=fields["feature_order"], degenerate=degenerate,
    )
