"""Bagged forests and least-squares gradient boosting over the tree module.

Per-tree and per-stage seeds are derived up front from the master seed, so
scheduling cannot change a fitted model. Forest prediction reduces tree
outputs in index order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import rng as _rng
from .data import IncompleteMatrix
from .tree import TreeHyper, TreeModel, fit_tree, predict


@dataclass
class ForestModel:
    trees: list[TreeModel]
    b: int
    mtry: int
    bootstrap: bool
    strategy: str
    d: int


@dataclass
class BoostModel:
    init_value: float
    stages: list[tuple[TreeModel, float]]
    rounds: int
    strategy: str
    d: int


def default_mtry(d: int) -> int:
    return max(1, int(np.ceil(d / 3.0)))


def fit_forest(
    x: IncompleteMatrix,
    y: np.ndarray,
    strategy: str,
    hyper: Optional[TreeHyper] = None,
    b: int = 100,
    mtry: Optional[int] = None,
    bootstrap: bool = True,
    seed: int = 0,
) -> ForestModel:
    """b trees on bootstrap resamples with per-split feature subsampling."""
    if b < 1:
        raise ValueError("b must be >= 1")
    y = np.asarray(y, dtype=float)
    if mtry is None:
        mtry = default_mtry(x.d)
    if not 1 <= mtry <= x.d:
        raise ValueError("mtry must lie in [1, d]")
    if hyper is None:
        hyper = TreeHyper(max_depth=30, min_split=10, min_leaf=5)
    trees = []
    for t in range(b):
        tree_seed = _rng.derive_seed(seed, t, 101)
        if bootstrap:
            gen = _rng.generator(seed, t, 102)
            idx = gen.integers(0, x.n, size=x.n)
            xt = IncompleteMatrix(x.values[idx], x.mask[idx])
            yt = y[idx]
        else:
            xt, yt = x, y
        trees.append(
            fit_tree(
                xt, yt, strategy=strategy, hyper=hyper, seed=tree_seed,
                mtry=mtry if mtry < x.d else None,
            )
        )
    return ForestModel(trees=trees, b=b, mtry=mtry, bootstrap=bootstrap,
                       strategy=strategy, d=x.d)


def fit_boosting(
    x: IncompleteMatrix,
    y: np.ndarray,
    strategy: str,
    hyper: Optional[TreeHyper] = None,
    rounds: int = 200,
    learning_rate: float = 0.1,
    seed: int = 0,
) -> BoostModel:
    """Stagewise squared-loss boosting: each stage fits a tree to the residuals."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if not 0.0 < learning_rate <= 1.0:
        raise ValueError("learning_rate must lie in (0, 1]")
    y = np.asarray(y, dtype=float)
    if hyper is None:
        hyper = TreeHyper(max_depth=6, min_split=10, min_leaf=5)
    init = float(y.mean())
    current = np.full(x.n, init)
    stages = []
    for m in range(rounds):
        residual = y - current
        tree = fit_tree(
            x, residual, strategy=strategy, hyper=hyper,
            seed=_rng.derive_seed(seed, m, 103),
            collect_train_pred=True,
        )
        # The stage update reuses the leaf assignments from fitting, so
        # stochastic routing cannot move a training row between stages.
        current = current + learning_rate * tree.train_pred
        tree.train_pred = None
        stages.append((tree, learning_rate))
    return BoostModel(init_value=init, stages=stages, rounds=rounds,
                      strategy=strategy, d=x.d)


def predict_ensemble(model, x: IncompleteMatrix, seed: int = 0) -> np.ndarray:
    """Forest: mean of tree predictions; boosting: init plus scaled stage sums."""
    if isinstance(model, ForestModel):
        if x.d != model.d:
            raise ValueError("row width does not match the fitted dimension")
        acc = np.zeros(x.n)
        for t, tree in enumerate(model.trees):
            acc += predict(tree, x, seed=_rng.derive_seed(seed, t, 104))
        return acc / model.b
    if isinstance(model, BoostModel):
        if x.d != model.d:
            raise ValueError("row width does not match the fitted dimension")
        acc = np.full(x.n, model.init_value)
        for m, (tree, lr) in enumerate(model.stages):
            acc += lr * predict(tree, x, seed=_rng.derive_seed(seed, m, 105))
        return acc
    raise TypeError(f"not an ensemble model: {type(model)!r}")
