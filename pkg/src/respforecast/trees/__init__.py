"""From-scratch random forest and gradient-boosted regression trees."""

from .models import (
    BoostParams,
    FittedTreeModel,
    ForestParams,
    Leaf,
    Split,
    TreeNode,
    best_split,
    fit_gbt,
    fit_random_forest,
    predict,
)

__all__ = [
    "BoostParams",
    "FittedTreeModel",
    "ForestParams",
    "Leaf",
    "Split",
    "TreeNode",
    "best_split",
    "fit_gbt",
    "fit_random_forest",
    "predict",
]
