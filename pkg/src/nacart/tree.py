"""Least-squares regression trees over incomplete matrices.

Four ways to handle missing values:

* "surrogate", "prob", "block" — the split is chosen on the rows where the
  candidate feature is observed (features compared by how much of their
  observed rows' squared deviation the split removes), and rows missing
  that feature are then routed by backup splits on other features, by a
  Bernoulli draw proportional to child sizes, or as a block to the
  cheaper side;
* "mia" — missing rows enter the split criterion itself: every threshold
  is scored with the missing block sent left and sent right, and each
  feature is additionally scored on separating non-missing from missing.

Thresholds are midpoints of consecutive sorted distinct observed values.
Tie-breaking is total (smaller feature, smaller threshold, left route
before right, thresholded before separate) so fits are reproducible
across platforms and thread counts. Growth happens in one compiled pass
(see _kernels); the split-search functions below price candidates with
the same compiled arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels as K
from . import rng as _rng
from .data import IncompleteMatrix

STRATEGIES = ("mia", "surrogate", "prob", "block")

_STRATEGY_CODES = {
    "mia": K.STRAT_MIA,
    "surrogate": K.STRAT_SURROGATE,
    "prob": K.STRAT_PROB,
    "block": K.STRAT_BLOCK,
}

_ROUTE_NAMES = {K.ROUTE_L: "L", K.ROUTE_R: "R", K.ROUTE_SEP: "SEP",
                K.ROUTE_PROB: "PROB", K.ROUTE_SURR: "SURR"}


@dataclass(frozen=True)
class SplitSpec:
    """One split: feature, optional threshold, and where missing values go.

    kind "threshold" tests x_j <= z; kind "separate" pits non-missing
    (left) against missing (right) and carries no threshold.
    missing_route is "L", "R", "SEP", "PROB" (p_left recorded at fit
    time), or "SURR" (routing delegated to the node's surrogate chain).
    """

    feature: int
    threshold: Optional[float]
    missing_route: str
    kind: str = "threshold"
    p_left: Optional[float] = None

    def __post_init__(self):
        if self.kind == "threshold" and self.threshold is None:
            raise ValueError("thresholded split needs a threshold")
        if self.kind == "separate" and self.threshold is not None:
            raise ValueError("separate split carries no threshold")
        if self.kind == "separate" and self.missing_route != "SEP":
            raise ValueError("separate split fixes missing_route = SEP")
        if self.missing_route == "PROB":
            if self.p_left is None or not 0.0 <= self.p_left <= 1.0:
                raise ValueError("probabilistic route needs p_left in [0, 1]")


@dataclass(frozen=True)
class SurrogateRule:
    """Backup split imitating the primary partition; flip swaps the sides."""

    feature: int
    threshold: float
    direction_flip: bool
    misclassification: float


@dataclass(frozen=True)
class TreeHyper:
    """Stopping rules. min_gain is the fraction of the root's total squared
    deviation a split must remove to be accepted (0 disables it; 0.01 is
    the usual CART complexity-penalty magnitude)."""

    max_depth: int = 30
    min_split: int = 10
    min_leaf: int = 5
    min_gain: float = 0.0

    def __post_init__(self):
        if self.max_depth < 0 or self.min_split < 2 or self.min_leaf < 1:
            raise ValueError("invalid tree hyperparameters")
        if not 0.0 <= self.min_gain < 1.0:
            raise ValueError("min_gain must lie in [0, 1)")


class TreeModel:
    """Fitted tree stored as flat node arrays (node 0 is the root)."""

    def __init__(self, strategy, hyper, d, seed, arrays):
        (self.feature, self.threshold, self.route, self.p_left, self.left,
         self.right, self.n_node, self.value, self.majority,
         self.surr_feature, self.surr_threshold, self.surr_flip,
         self.surr_err, self.surr_start, self.surr_count,
         train_pred) = arrays
        self.strategy = strategy
        self.hyper = hyper
        self.d = d
        self.seed = seed
        self.train_pred: Optional[np.ndarray] = train_pred

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def root(self) -> "TreeNode":
        return TreeNode(self, 0)

    def is_leaf(self, nid: int) -> bool:
        return self.feature[nid] < 0

    def split_spec(self, nid: int) -> Optional[SplitSpec]:
        if self.is_leaf(nid):
            return None
        route = _ROUTE_NAMES[int(self.route[nid])]
        if route == "SEP":
            return SplitSpec(feature=int(self.feature[nid]), threshold=None,
                             missing_route="SEP", kind="separate")
        p = float(self.p_left[nid]) if route == "PROB" else None
        return SplitSpec(feature=int(self.feature[nid]),
                         threshold=float(self.threshold[nid]),
                         missing_route=route, p_left=p)

    def surrogate_rules(self, nid: int) -> list[SurrogateRule]:
        lo = int(self.surr_start[nid])
        hi = lo + int(self.surr_count[nid])
        return [
            SurrogateRule(
                feature=int(self.surr_feature[q]),
                threshold=float(self.surr_threshold[q]),
                direction_flip=bool(self.surr_flip[q]),
                misclassification=float(self.surr_err[q]),
            )
            for q in range(lo, hi)
        ]

    def majority_side(self, nid: int) -> str:
        return "L" if self.majority[nid] == 0 else "R"


class TreeNode:
    """Read-only view of one node of a TreeModel."""

    __slots__ = ("_model", "nid")

    def __init__(self, model: TreeModel, nid: int):
        self._model = model
        self.nid = nid

    @property
    def is_leaf(self) -> bool:
        return self._model.is_leaf(self.nid)

    @property
    def split(self) -> Optional[SplitSpec]:
        return self._model.split_spec(self.nid)

    @property
    def surrogates(self) -> list[SurrogateRule]:
        return self._model.surrogate_rules(self.nid)

    @property
    def majority_side(self) -> str:
        return self._model.majority_side(self.nid)

    @property
    def left(self) -> Optional["TreeNode"]:
        nid = int(self._model.left[self.nid])
        return TreeNode(self._model, nid) if nid >= 0 else None

    @property
    def right(self) -> Optional["TreeNode"]:
        nid = int(self._model.right[self.nid])
        return TreeNode(self._model, nid) if nid >= 0 else None

    @property
    def leaf_value(self) -> float:
        return float(self._model.value[self.nid])

    @property
    def n_node(self) -> int:
        return int(self._model.n_node[self.nid])


def _sorted_observed(rows, x, y, j):
    obs = rows[~x.mask[rows, j]]
    order = np.argsort(x.values[obs, j], kind="stable")
    obs = obs[order]
    return obs, x.values[obs, j], y[obs]


def best_split_observed(
    rows: np.ndarray,
    x: IncompleteMatrix,
    y: np.ndarray,
    hyper: TreeHyper,
    features: Optional[Sequence[int]] = None,
) -> Optional[tuple[SplitSpec, float]]:
    """Best thresholded split scored on the splitting feature's observed rows.

    Within a feature the criterion is the within-child sum of squared
    deviations over rows with the feature observed; across features the
    comparison is by the reduction of that sum relative to the feature's
    observed rows (raw sums are not comparable between features observed
    on different row counts). Ties break on smaller feature index, then
    smaller threshold. Returns the winning split (route unset) and its
    within-child sum, or None when no feature admits a split.
    """
    rows = np.asarray(rows)
    if rows.size < hyper.min_split:
        return None
    if features is None:
        features = range(x.d)
    best = None  # (neg_gain, feature, z, sse)
    for j in features:
        obs, xs, ys = _sorted_observed(rows, x, y, j)
        if obs.size < 2 * hyper.min_leaf:
            continue
        found, sse, z, _, _, _, _, ty, ty2 = K.scan_feature(
            xs, ys, 0.0, 0.0, 0, hyper.min_leaf, False
        )
        if not found:
            continue
        gain = (ty2 - ty * ty / obs.size) - sse
        if best is None or -gain < best[0]:
            best = (-gain, j, float(z), float(sse))
    if best is None:
        return None
    _, j, z, sse_val = best
    return SplitSpec(feature=j, threshold=z, missing_route="UNSET"), sse_val


def best_split_mia(
    rows: np.ndarray,
    x: IncompleteMatrix,
    y: np.ndarray,
    hyper: TreeHyper,
    features: Optional[Sequence[int]] = None,
) -> Optional[tuple[SplitSpec, float]]:
    """Best split with the missing rows scored inside the criterion.

    Each threshold is priced with the missing block sent left and sent
    right (block included in the child aggregates); each feature offers
    one extra candidate separating non-missing from missing. Ties break
    on (feature, threshold, left before right, thresholded before
    separate).
    """
    rows = np.asarray(rows)
    if rows.size < hyper.min_split:
        return None
    if features is None:
        features = range(x.d)
    best = None  # (criterion, SplitSpec)
    for j in features:
        miss = rows[x.mask[rows, j]]
        my = float(y[miss].sum())
        my2 = float(np.dot(y[miss], y[miss]))
        obs, xs, ys = _sorted_observed(rows, x, y, j)
        if obs.size >= 2:
            found, sse, z, rt, _, _, _, _, _ = K.scan_feature(
                xs, ys, my, my2, miss.size, hyper.min_leaf, True
            )
            if found and (best is None or sse < best[0]):
                best = (
                    float(sse),
                    SplitSpec(feature=j, threshold=float(z),
                              missing_route=_ROUTE_NAMES[int(rt)]),
                )
        if miss.size >= hyper.min_leaf and obs.size >= hyper.min_leaf:
            oy = float(ys.sum())
            oy2 = float(np.dot(ys, ys))
            val = (oy2 - oy * oy / obs.size) + (my2 - my * my / miss.size)
            if best is None or val < best[0]:
                best = (
                    val,
                    SplitSpec(feature=j, threshold=None, missing_route="SEP",
                              kind="separate"),
                )
    if best is None:
        return None
    return best[1], best[0]


def fit_surrogates(
    rows: np.ndarray,
    x: IncompleteMatrix,
    y: np.ndarray,
    primary: SplitSpec,
) -> tuple[list[SurrogateRule], str]:
    """Backup splits imitating the primary partition, plus the majority side.

    Each other feature gets a one-cut classifier of the primary side,
    fitted on the rows where both features are observed; it is kept only
    if its misclassification strictly beats the blind rule of sending
    everything to the more populated side. Rules come back in ascending
    misclassification order.
    """
    if primary.kind != "threshold":
        raise ValueError("surrogates require a thresholded primary split")
    rows = np.asarray(rows)
    j0, z0 = primary.feature, primary.threshold
    obs0 = rows[~x.mask[rows, j0]]
    nl = int((x.values[obs0, j0] <= z0).sum())
    nr = obs0.size - nl
    majority = "L" if nl >= nr else "R"
    if obs0.size == 0:
        return [], majority
    blind = min(nl, nr) / (nl + nr)
    rules = []
    for j in range(x.d):
        if j == j0:
            continue
        both = obs0[~x.mask[obs0, j]]
        if both.size < 2:
            continue
        order = np.argsort(x.values[both, j], kind="stable")
        both = both[order]
        xs = x.values[both, j]
        ts = (x.values[both, j0] <= z0).astype(float)
        found, wrong, z, flip = K.surrogate_scan(xs, ts)
        if not found:
            continue
        err = float(wrong) / both.size
        if err < blind:
            rules.append(
                SurrogateRule(feature=j, threshold=float(z),
                              direction_flip=bool(flip),
                              misclassification=err)
            )
    rules.sort(key=lambda r: (r.misclassification, r.feature))
    return rules, majority


def route_missing_block(
    y_block: np.ndarray, y_left: np.ndarray, y_right: np.ndarray
) -> str:
    """Cheaper side for the whole missing block, child means recomputed with it."""
    yb = np.asarray(y_block, dtype=float)
    yl = np.asarray(y_left, dtype=float)
    yr = np.asarray(y_right, dtype=float)

    def sse_of(arr):
        if arr.size == 0:
            return 0.0
        return float(np.dot(arr, arr) - arr.sum() ** 2 / arr.size)

    err_left = sse_of(np.concatenate([yl, yb])) + sse_of(yr)
    err_right = sse_of(yl) + sse_of(np.concatenate([yr, yb]))
    return "L" if err_left <= err_right else "R"


def fit_tree(
    x: IncompleteMatrix,
    y: np.ndarray,
    strategy: str,
    hyper: Optional[TreeHyper] = None,
    seed: int = 0,
    features: Optional[Sequence[int]] = None,
    mtry: Optional[int] = None,
    collect_train_pred: bool = False,
) -> TreeModel:
    """Grow a tree with the given missing-value strategy.

    `features` restricts the candidate split features globally; `mtry`
    additionally subsamples that many candidates per node (forests).
    Surrogate fitting always sees the full feature set.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}")
    if hyper is None:
        hyper = TreeHyper()
    y = np.ascontiguousarray(y, dtype=float)
    if y.ndim != 1 or y.shape[0] != x.n:
        raise ValueError("target length must match the row count")
    if not np.all(np.isfinite(y)):
        raise ValueError("target contains non-finite entries")
    if x.n == 0:
        raise ValueError("empty training data")
    allowed = np.arange(x.d) if features is None else np.asarray(sorted(features))
    key = np.where(x.mask, np.inf, x.values)
    order = np.ascontiguousarray(
        np.argsort(key, axis=0, kind="stable").T.astype(np.int32)
    )
    rows = np.arange(x.n, dtype=np.int32)
    # min_gain is anchored to the root's total squared deviation, so the
    # absolute cutoff is fixed once per fit.
    min_gain_abs = hyper.min_gain * float(np.sum((y - y.mean()) ** 2))
    arrays = K.grow_tree(
        np.ascontiguousarray(x.values),
        np.ascontiguousarray(x.mask),
        y,
        order,
        rows,
        allowed.astype(np.int64),
        int(mtry) if mtry is not None else 0,
        _STRATEGY_CODES[strategy],
        hyper.max_depth,
        hyper.min_split,
        hyper.min_leaf,
        min_gain_abs,
        np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
    )
    arrays = list(arrays)
    if not collect_train_pred:
        arrays[-1] = None
    return TreeModel(strategy=strategy, hyper=hyper, d=x.d, seed=seed,
                     arrays=arrays)


def predict(
    model: TreeModel,
    x: IncompleteMatrix,
    seed: int = 0,
    prob_mode: str = "stochastic",
) -> np.ndarray:
    """Predict each row by routing it with the stored per-node rules.

    Probabilistic nodes draw a Bernoulli(p_left) per missing row from a
    stream keyed by (seed, node id); prob_mode="deterministic" instead
    averages the two subtrees with weights (p_left, 1 - p_left).
    """
    if x.d != model.d:
        raise ValueError(f"row width {x.d} does not match fitted d={model.d}")
    if prob_mode not in ("stochastic", "deterministic"):
        raise ValueError("prob_mode must be 'stochastic' or 'deterministic'")
    out = np.zeros(x.n)

    def walk(nid: int, rows: np.ndarray, weights: np.ndarray):
        if rows.size == 0:
            return
        if model.is_leaf(nid):
            out[rows] += weights * model.value[nid]
            return
        f = int(model.feature[nid])
        route = int(model.route[nid])
        if route == K.ROUTE_SEP:
            go_left = ~x.mask[rows, f]
        else:
            obs_flags = ~x.mask[rows, f]
            go_left = np.zeros(rows.size, dtype=bool)
            go_left[obs_flags] = x.values[rows[obs_flags], f] <= model.threshold[nid]
            miss_local = np.flatnonzero(~obs_flags)
            if miss_local.size:
                if route == K.ROUTE_L:
                    go_left[miss_local] = True
                elif route == K.ROUTE_R:
                    pass
                elif route == K.ROUTE_SURR:
                    rules = model.surrogate_rules(nid)
                    maj = model.majority[nid] == 0
                    for i in miss_local:
                        r = rows[i]
                        side = maj
                        for rule in rules:
                            if not x.mask[r, rule.feature]:
                                low = x.values[r, rule.feature] <= rule.threshold
                                side = (not low) if rule.direction_flip else low
                                break
                        go_left[i] = side
                else:  # PROB
                    pl = float(model.p_left[nid])
                    if prob_mode == "stochastic":
                        draws = _rng.generator(seed, nid).random(miss_local.size)
                        go_left[miss_local] = draws < pl
                    else:
                        miss_rows = rows[miss_local]
                        miss_w = weights[miss_local]
                        walk(int(model.left[nid]), miss_rows, miss_w * pl)
                        walk(int(model.right[nid]), miss_rows, miss_w * (1.0 - pl))
                        keep = np.ones(rows.size, dtype=bool)
                        keep[miss_local] = False
                        rows = rows[keep]
                        weights = weights[keep]
                        go_left = go_left[keep]
        walk(int(model.left[nid]), rows[go_left], weights[go_left])
        walk(int(model.right[nid]), rows[~go_left], weights[~go_left])

    walk(0, np.arange(x.n), np.ones(x.n))
    return out


def predict_row(model: TreeModel, values, mask, seed: int = 0,
                prob_mode: str = "stochastic") -> float:
    """Single-row convenience wrapper around predict."""
    m = IncompleteMatrix(
        np.asarray(values, dtype=float).reshape(1, -1),
        np.asarray(mask, dtype=bool).reshape(1, -1),
    )
    return float(predict(model, m, seed=seed, prob_mode=prob_mode)[0])


def selected_root_feature(model: TreeModel) -> Optional[int]:
    """Feature of the root split, or None for a pure-leaf tree."""
    if model.is_leaf(0):
        return None
    return int(model.feature[0])


def leaf_nodes(model: TreeModel) -> list[TreeNode]:
    return [TreeNode(model, nid) for nid in range(model.node_count)
            if model.is_leaf(nid)]


def dump_tree(model: TreeModel) -> str:
    """Indented one-node-per-line dump (1-based features, 17 significant digits)."""
    lines = []

    def visit(nid: int, depth: int):
        pad = "  " * depth
        n = int(model.n_node[nid])
        val = float(model.value[nid])
        if model.is_leaf(nid):
            lines.append(f"{pad}n={n} value={val:.17g}")
            return
        route = int(model.route[nid])
        if route == K.ROUTE_SEP:
            z = "NA"
        else:
            z = f"{float(model.threshold[nid]):.17g}"
        if route == K.ROUTE_PROB:
            miss = f"P:{float(model.p_left[nid]):.17g}"
        elif route == K.ROUTE_SURR:
            miss = model.majority_side(nid)
        else:
            miss = _ROUTE_NAMES[route]
        lines.append(
            f"{pad}j={int(model.feature[nid]) + 1} z={z} miss={miss} "
            f"n={n} value={val:.17g}"
        )
        visit(int(model.left[nid]), depth + 1)
        visit(int(model.right[nid]), depth + 1)

    visit(0, 0)
    return "\n".join(lines) + "\n"
