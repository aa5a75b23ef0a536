"""Closed-form split criteria and single-split risks, with Monte-Carlo cross-checks.

Analytic setting: y equals a U(0,1) variable x1 that is missing completely
at random with probability p; a second covariate x2 equals x1 when a
Bernoulli link W is on (P[W=0] = eta) and 0 otherwise. All four
missing-value strategies admit exact stump risks here, which the
mc_stump_risk oracle verifies by simulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from . import rng as _rng
from .data import IncompleteMatrix
from .tree import (
    TreeHyper,
    best_split_observed,
    fit_surrogates,
    fit_tree,
    predict,
)

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0

RISK_KEYS = ("mia", "block", "block_cf", "prob", "surr")


@dataclass(frozen=True)
class TheoryPoint:
    p: float
    eta: float
    s_star_mia: float
    risks: Dict[str, float]


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n: int
    reps: int


def cart_root_criterion(s: float) -> float:
    """Within-cell variance after splitting U(0,1) response at s: s(s-1)/4 + 1/12."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    return s * (s - 1.0) / 4.0 + 1.0 / 12.0


def c_mia(s: float, side: str, p: float) -> float:
    """Stump criterion when the missing fraction p is routed to one side.

    Side "L" is the closed form; side "R" mirrors it via s -> 1-s.
    """
    if side not in ("L", "R"):
        raise ValueError("side must be 'L' or 'R'")
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if side == "R":
        return c_mia(1.0 - s, "L", p)
    denom = p + (1.0 - p) * s
    if denom == 0.0:
        raise ZeroDivisionError("degenerate criterion: p = 0 and s = 0 on side L")
    return (
        1.0 / 3.0
        - (p / 2.0 + (1.0 - p) * s * s / 2.0) ** 2 / denom
        - (1.0 - p) * (1.0 - s) * ((1.0 + s) / 2.0) ** 2
    )


def _c_mia_grid(s: np.ndarray, p: float) -> np.ndarray:
    denom = p + (1.0 - p) * s
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (
            1.0 / 3.0
            - (p / 2.0 + (1.0 - p) * s * s / 2.0) ** 2 / denom
            - (1.0 - p) * (1.0 - s) * ((1.0 + s) / 2.0) ** 2
        )
    return np.where(denom == 0.0, np.inf, out)


def argmin_c_mia(
    p: float, side: str = "L", grid_size: int = 10_000, refine_tol: float = 1e-6
) -> float:
    """Minimizing threshold of c_mia over s in [0,1]: grid scan + golden-section."""
    if not 0.0 <= p <= 0.999:
        raise ValueError("p must lie in [0, 0.999]; the criterion is flat at p = 1")
    if side == "R":
        return 1.0 - argmin_c_mia(p, "L", grid_size, refine_tol)
    grid = np.linspace(0.0, 1.0, grid_size)
    if p == 0.0:
        grid = grid[1:]  # s = 0 is the degenerate denominator
    values = _c_mia_grid(grid, p)
    k = int(np.argmin(values))
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    # Golden-section refinement on the bracketing interval.
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = c_mia(x1, "L", p), c_mia(x2, "L", p)
    while b - a > refine_tol:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = c_mia(x1, "L", p)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = c_mia(x2, "L", p)
    return float((a + b) / 2.0)


def risk_prob(p: float) -> float:
    """Stump risk under probabilistic routing: -p^2/16 + p/8 + 1/48."""
    return -(p * p) / 16.0 + p / 8.0 + 1.0 / 48.0


def risk_surr(p: float, eta: float) -> float:
    """Stump risk under surrogate routing: 1/48 + (6/48) eta p."""
    return 1.0 / 48.0 + (6.0 / 48.0) * eta * p


def risk_block(p: float) -> float:
    """Constructive block risk: criterion at s = 1/2 with the block on the cheaper side."""
    return min(c_mia(0.5, "L", p), c_mia(0.5, "R", p))


def risk_block_closed_form(p: float) -> float:
    """Block risk expression from the analytic comparison, kept verbatim.

    Goes negative as p -> 1, which a risk cannot; risk_block is the
    constructive value and mc_stump_risk arbitrates between the two.
    """
    return -11.0 / 48.0 + (3.0 * p + 2.0) / (8.0 * (2.0 * p + 1.0))


def risk_mia(p: float, eta: float) -> float:
    """Stump risk of the in-criterion strategy.

    The split lands on x1 when p <= eta and on the x2 proxy otherwise,
    whose zero atom of mass eta acts exactly like a missing fraction eta
    sent left.
    """
    rate = p if p <= eta else eta
    if rate >= 0.9995:
        return 1.0 / 12.0
    s = argmin_c_mia(rate, "L")
    return float(c_mia(s, "L", rate))


def risk_closed_forms(p: float, eta: float) -> TheoryPoint:
    """All five stump-risk entries at (p, eta)."""
    if not (0.0 <= p <= 1.0 and 0.0 <= eta <= 1.0):
        raise ValueError("p and eta must lie in [0, 1]")
    s_star = argmin_c_mia(p, "L") if p <= 0.999 else float("nan")
    risks = {
        "mia": risk_mia(p, eta),
        "block": risk_block(p),
        "block_cf": risk_block_closed_form(p),
        "prob": risk_prob(p),
        "surr": risk_surr(p, eta),
    }
    return TheoryPoint(p=p, eta=eta, s_star_mia=s_star, risks=risks)


def theory_curves(p_grid, eta_set) -> list[TheoryPoint]:
    """Tabulate risk_closed_forms over a (p, eta) product grid."""
    points = []
    for p in p_grid:
        for eta in eta_set:
            points.append(risk_closed_forms(float(p), float(eta)))
    return points


def _draw_model(n: int, p: float, eta: float, gen: np.random.Generator):
    """One sample of the two-covariate coupling model, with its mask."""
    x1 = gen.random(n)
    w = gen.random(n) >= eta  # w True means the proxy copies x1
    x2 = np.where(w, x1, 0.0)
    m = np.zeros((n, 2), dtype=bool)
    m[:, 0] = gen.random(n) < p
    return IncompleteMatrix(np.column_stack([x1, x2]), m), x1


def _surrogate_stump_risk(train, y_train, test, y_test, hyper) -> float:
    """Risk of the analytic surrogate stump: split on x1, observed-row leaf means.

    The closed form fixes leaf values to the means of the observed rows of
    each side; rows routed by the surrogate do not shift them. The general
    tree includes routed rows in its leaves, so the oracle is assembled
    here from the split-search and surrogate-fitting primitives directly.
    """
    rows = np.arange(train.n)
    found = best_split_observed(rows, train, y_train, hyper, features=(0,))
    if found is None:
        return float(np.mean((y_test - y_train.mean()) ** 2))
    split, _ = found
    obs = rows[~train.mask[:, 0]]
    go_left = train.values[obs, 0] <= split.threshold
    left_mean = float(y_train[obs[go_left]].mean())
    right_mean = float(y_train[obs[~go_left]].mean())
    chain, majority = fit_surrogates(rows, train, y_train, split)

    test_obs = ~test.mask[:, 0]
    side_left = np.zeros(test.n, dtype=bool)
    side_left[test_obs] = test.values[test_obs, 0] <= split.threshold
    for i in np.flatnonzero(~test_obs):
        side = majority
        for rule in chain:
            if not test.mask[i, rule.feature]:
                left = test.values[i, rule.feature] <= rule.threshold
                side = ("R" if left else "L") if rule.direction_flip else ("L" if left else "R")
                break
        side_left[i] = side == "L"
    pred = np.where(side_left, left_mean, right_mean)
    return float(np.mean((y_test - pred) ** 2))


def mc_stump_risk(
    strategy: str, p: float, eta: float, n: int, reps: int, seed: int
) -> McEstimate:
    """Monte-Carlo stump risk on the coupling model, cross-checking the closed forms.

    The analytic comparison puts the primary split on x1 for the
    observed-criterion strategies (with x2 serving only as the surrogate
    or as noise); the simulated stumps mirror that construction. The
    in-criterion strategy searches both covariates, as its formula does.
    """
    if n < 1_000:
        raise ValueError("n must be at least 1000 for a stable risk estimate")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    hyper = TreeHyper(max_depth=1, min_split=10, min_leaf=5)
    risks = np.zeros(reps)
    for r in range(reps):
        gen = _rng.generator(seed, r, 11)
        train, y_train = _draw_model(n, p, eta, gen)
        test, y_test = _draw_model(n, p, eta, gen)
        if strategy == "surrogate":
            risks[r] = _surrogate_stump_risk(train, y_train, test, y_test, hyper)
            continue
        features = None if strategy == "mia" else (0,)
        model = fit_tree(
            train,
            y_train,
            strategy=strategy,
            hyper=hyper,
            seed=_rng.derive_seed(seed, r, 12),
            features=features,
        )
        pred = predict(model, test, seed=_rng.derive_seed(seed, r, 13))
        risks[r] = float(np.mean((y_test - pred) ** 2))
    mean = float(risks.mean())
    se = float(risks.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return McEstimate(mean=mean, std_error=se, n=n, reps=reps)
