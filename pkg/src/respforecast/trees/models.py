from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Union

import numpy as np
import pandas as pd

from . import _kernels as K

SEED_MASK = (1 << 63) - 1


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class ForestParams:
    mtry: int
    min_n: int
    n_trees: int = 1000
    seed: int = 0
    bootstrap: bool = True

    def validate(self, n_features):
        if self.n_trees < 1:
            raise ValueError("n_trees must be at least 1")
        if not 1 <= self.mtry <= n_features:
            raise ValueError(f"mtry={self.mtry} outside [1, {n_features}]")
        if self.min_n < 1:
            raise ValueError("min_n must be at least 1")


@dataclass(frozen=True)
class BoostParams:
    mtry: int
    min_n: int
    tree_depth: int
    learn_rate: float
    loss_reduction: float = 0.0
    sample_size: float = 1.0
    l2_reg: float = 1.0
    n_trees: int = 1000
    seed: int = 0

    def validate(self, n_features):
        if self.n_trees < 0:
            raise ValueError("n_trees must be non-negative")
        if not 1 <= self.mtry <= n_features:
            raise ValueError(f"mtry={self.mtry} outside [1, {n_features}]")
        if self.min_n < 1:
            raise ValueError("min_n must be at least 1")
        if self.tree_depth < 1:
            raise ValueError("tree_depth must be at least 1")
        if not 0 < self.learn_rate <= 1:
            raise ValueError("learn_rate must lie in (0, 1]")
        if self.loss_reduction < 0:
            raise ValueError("loss_reduction must be non-negative")
        if not 0 < self.sample_size <= 1:
            raise ValueError("sample_size must lie in (0, 1]")
        if self.l2_reg < 0:
            raise ValueError("l2_reg must be non-negative")


@dataclass(frozen=True, eq=False)
class FittedTreeModel:
    """A trained forest (mean of trees) or boosted ensemble
    (``base_score + learn_rate * sum of trees``)."""

    kind: str
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray
    base_score: float
    learn_rate: float
    params: Union[ForestParams, BoostParams]
    feature_names: tuple[str, ...]
    train_history: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_trees(self) -> int:
        return len(self.offsets) - 1

    def _matrix(self, rows) -> np.ndarray:
        if isinstance(rows, pd.DataFrame):
            missing = [c for c in self.feature_names if c not in rows.columns]
            if missing:
                raise KeyError(f"missing feature columns: {missing}")
            rows = rows[list(self.feature_names)].to_numpy(float)
        X = np.ascontiguousarray(rows, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} columns, got {X.shape[1]}")
        return X

    def predict(self, rows) -> np.ndarray:
        X = self._matrix(rows)
        if self.n_trees == 0:
            return np.full(len(X), self.base_score)
        total = K.predict_sum(X, self.feature, self.threshold, self.left, self.right, self.value, self.offsets)
        if self.kind == "forest":
            return total / self.n_trees
        return self.base_score + self.learn_rate * total

    def tree_predictions(self, rows) -> np.ndarray:
        """Raw output of every tree, shape ``(rows, n_trees)``."""
        X = self._matrix(rows)
        return K.predict_each(X, self.feature, self.threshold, self.left, self.right, self.value, self.offsets)

    def tree(self, i: int) -> TreeNode:
        off = int(self.offsets[i])

        def build(node):
            f = int(self.feature[off + node])
            if f < 0:
                return Leaf(float(self.value[off + node]))
            return Split(
                f,
                float(self.threshold[off + node]),
                build(int(self.left[off + node])),
                build(int(self.right[off + node])),
            )

        return build(0)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": asdict(self.params),
            "feature_names": list(self.feature_names),
            "base_score": self.base_score,
            "learn_rate": self.learn_rate,
            "offsets": self.offsets.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FittedTreeModel":
        params_cls = ForestParams if data["kind"] == "forest" else BoostParams
        return cls(
            kind=data["kind"],
            feature=np.array(data["feature"], dtype=np.int32),
            threshold=np.array(data["threshold"], dtype=float),
            left=np.array(data["left"], dtype=np.int32),
            right=np.array(data["right"], dtype=np.int32),
            value=np.array(data["value"], dtype=float),
            offsets=np.array(data["offsets"], dtype=np.int64),
            base_score=float(data["base_score"]),
            learn_rate=float(data["learn_rate"]),
            params=params_cls(**data["params"]),
            feature_names=tuple(data["feature_names"]),
        )


def _prepare(X, y, feature_names):
    if isinstance(X, pd.DataFrame):
        feature_names = tuple(X.columns) if feature_names is None else feature_names
        X = X.to_numpy(float)
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("empty training matrix")
    if len(y) != len(X):
        raise ValueError("X and y lengths differ")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in training data")
    if feature_names is None:
        feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
    return X, y, tuple(feature_names)


def best_split(X, y, rows=None, candidate_features=None, min_n=1, l2_reg=1.0, loss_reduction=0.0, boosted=True):
    """Exhaustive split search on a set of rows.

    Returns ``(feature, threshold, gain)`` or ``None``. With
    ``boosted=False`` the gain is the plain variance reduction and
    ``l2_reg`` is ignored.
    """
    X = np.ascontiguousarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.ascontiguousarray(y, dtype=float)
    counts = np.ones(len(y), dtype=np.int64)
    if rows is not None:
        counts = np.bincount(np.asarray(rows, dtype=np.int64), minlength=len(y)).astype(np.int64)
    n_rows = int(counts.sum())
    if candidate_features is None:
        features = np.arange(X.shape[1])
    else:
        features = np.sort(np.asarray(candidate_features, dtype=np.int64))
    if n_rows < 2 * min_n:
        return None
    sorted_rows = K.expand_sorted(K.presort(X), counts, n_rows)
    f, thr, gain = K.find_split(
        X, y, sorted_rows, 0, n_rows, features, min_n, l2_reg if boosted else 0.0, loss_reduction, boosted
    )
    if f < 0:
        return None
    return int(f), float(thr), float(gain)


def fit_random_forest(X, y, params: ForestParams, feature_names=None) -> FittedTreeModel:
    """Bootstrap-aggregated regression trees.

    Each tree sees ``n`` rows drawn with replacement (unless
    ``params.bootstrap`` is false), samples ``mtry`` candidate columns at
    every split, and grows until nodes hold fewer than ``2 * min_n`` rows.
    """
    X, y, names = _prepare(X, y, feature_names)
    params.validate(X.shape[1])
    seed = params.seed & SEED_MASK
    f, t, l, r, v, off = K.fit_forest(X, y, params.n_trees, params.mtry, params.min_n, seed, params.bootstrap)
    return FittedTreeModel("forest", f, t, l, r, v, off, float(np.mean(y)), 1.0, params, names)


def fit_gbt(X, y, params: BoostParams, feature_names=None) -> FittedTreeModel:
    """Second-order gradient boosting on squared error.

    Starts from the target mean. Each round fits a depth-limited tree to the
    current residuals on a row subsample drawn without replacement, with
    leaf values ``sum(residual) / (count + l2_reg)``, and adds
    ``learn_rate`` times its output.
    """
    X, y, names = _prepare(X, y, feature_names)
    params.validate(X.shape[1])
    seed = params.seed & SEED_MASK
    f, t, l, r, v, off, base, history = K.fit_boosted(
        X,
        y,
        params.n_trees,
        params.mtry,
        params.min_n,
        params.tree_depth,
        params.learn_rate,
        params.loss_reduction,
        params.sample_size,
        params.l2_reg,
        seed,
    )
    return FittedTreeModel("boosted", f, t, l, r, v, off, float(base), params.learn_rate, params, names, history)


def predict(model: FittedTreeModel, rows) -> np.ndarray:
    return model.predict(rows)
