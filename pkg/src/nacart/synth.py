"""Synthetic regression models and amputation mechanisms.

Four generative models over correlated Gaussian (or hidden-uniform)
covariates, plus three ways of inserting missing values: independent
Bernoulli masking (MCAR), censoring above an empirical quantile (MNAR),
and predictive missingness where the mask itself enters the response.
Generators are pure functions of (spec, n, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .data import IncompleteMatrix, as_target, complete
from . import rng as _rng

MODEL_IDS = ("quadratic", "linear", "friedman", "nonlinear")

LINEAR_BETA = np.array([1.0, 2.0, -1.0, 3.0, -0.5, -1.0, 0.3, 1.7, 0.4, -0.3])

# Feature maps of the hidden-uniform model, applied to X ~ U[-3, 0].
_NONLINEAR_FEATURES = (
    lambda x: x**2,
    lambda x: np.sin(x),
    lambda x: np.tanh(x) * np.exp(x) * np.sin(x),
    lambda x: np.sin(x - 1) + np.cos(x - 3) ** 3,
    lambda x: (1 - x) ** 3,
    lambda x: np.sqrt(np.sin(x**2) + 2),
    lambda x: x - 3,
    lambda x: (1 - x) * np.sin(x) * np.cosh(x),
    lambda x: 1.0 / (np.sin(2 * x) - 2),
    lambda x: x**4,
)
_NONLINEAR_FEATURE_SD = 0.05


@dataclass(frozen=True)
class ModelSpec:
    model_id: str
    d: int
    rho: float = 0.0
    noise_sd: float = 0.1

    def __post_init__(self):
        if self.model_id not in MODEL_IDS:
            raise ValueError(f"unknown model_id {self.model_id!r}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")
        if self.noise_sd <= 0 and self.noise_sd != 0.0:
            raise ValueError("noise_sd must be nonnegative")
        if self.model_id == "quadratic" and self.d < 1:
            raise ValueError("quadratic model needs d >= 1")
        if self.model_id == "linear" and self.d != 10:
            raise ValueError("linear model is defined for d = 10")
        if self.model_id == "friedman" and self.d < 5:
            raise ValueError("friedman model needs d >= 5")
        if self.model_id == "nonlinear" and self.d != 10:
            raise ValueError("nonlinear model is defined for d = 10")


@dataclass(frozen=True)
class AmputationSpec:
    mechanism: str  # "mcar" | "mnar" | "predictive"
    p: float
    target_columns: tuple[int, ...] = ()
    shift: float = 3.0

    def __post_init__(self):
        if self.mechanism not in ("mcar", "mnar", "predictive"):
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.mechanism == "predictive" and len(self.target_columns) > 1:
            raise ValueError("predictive missingness applies to a single column")


@dataclass(frozen=True)
class LabeledDataset:
    features: IncompleteMatrix
    y: np.ndarray
    bayes_values: Optional[np.ndarray] = None
    # Hidden driver of the nonlinear model; for structural tests only,
    # never handed to a learner.
    hidden: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.y) != self.features.n:
            raise ValueError("feature and target lengths disagree")
        if self.bayes_values is not None and len(self.bayes_values) != self.features.n:
            raise ValueError("bayes_values length disagrees")


def gen_gaussian_covariates(n: int, d: int, rho: float, seed: int) -> IncompleteMatrix:
    """Rows i.i.d. N(1_d, rho*11' + (1-rho)*I), sampled via Cholesky."""
    if n < 1 or d < 1:
        raise ValueError("n and d must be >= 1")
    if not 0.0 <= rho < 1.0:
        raise ValueError("rho must lie in [0, 1); the covariance is singular at 1")
    gen = _rng.generator(seed)
    sigma = rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d)
    chol = np.linalg.cholesky(sigma)
    z = gen.standard_normal((n, d))
    return complete(1.0 + z @ chol.T)


def regression_function(spec: ModelSpec) -> Callable[[np.ndarray], np.ndarray]:
    """Noiseless response surface f*(x) evaluated row-wise on a complete matrix."""
    if spec.model_id == "quadratic":
        return lambda x: x[:, 0] ** 2
    if spec.model_id == "linear":
        return lambda x: x @ LINEAR_BETA
    # Both Friedman variants share the functional form up to scaling.
    if spec.model_id == "friedman":
        return lambda x: (
            10.0 * np.sin(np.pi * x[:, 0] * x[:, 1])
            + 20.0 * (x[:, 2] - 0.5) ** 2
            + 10.0 * x[:, 3]
            + 5.0 * x[:, 4]
        )
    return lambda x: (
        np.sin(np.pi * x[:, 0] * x[:, 1])
        + 2.0 * (x[:, 2] - 0.5) ** 2
        + x[:, 3]
        + 0.5 * x[:, 4]
    )


def gen_model(spec: ModelSpec, n: int, seed: int) -> LabeledDataset:
    """Draw n labeled rows: covariates per spec, y = f*(X) + N(0, noise_sd^2)."""
    hidden = None
    if spec.model_id == "nonlinear":
        gen = _rng.generator(seed, 1)
        hidden = gen.uniform(-3.0, 0.0, size=n)
        cols = [f(hidden) for f in _NONLINEAR_FEATURES]
        x = np.column_stack(cols)
        x += gen.normal(0.0, _NONLINEAR_FEATURE_SD, size=x.shape)
        features = complete(x)
    else:
        features = gen_gaussian_covariates(n, spec.d, spec.rho, _rng.derive_seed(seed, 1))
    f_star = regression_function(spec)(features.values)
    noise_gen = _rng.generator(seed, 2)
    y = f_star + noise_gen.normal(0.0, spec.noise_sd, size=n)
    return LabeledDataset(
        features=features,
        y=as_target(y),
        bayes_values=f_star,
        hidden=hidden,
    )


def ampute(x: IncompleteMatrix, spec: AmputationSpec, seed: int) -> IncompleteMatrix:
    """Insert missing values into the target columns of a complete-on-target matrix."""
    if spec.mechanism == "predictive":
        raise ValueError(
            "predictive missingness rewrites the response; use gen_predictive"
        )
    cols = spec.target_columns if spec.target_columns else tuple(range(x.d))
    for j in cols:
        if not 0 <= j < x.d:
            raise IndexError(f"target column {j} out of range")
        if x.mask[:, j].any():
            raise ValueError(f"column {j} already has missing values")
    mask = x.mask.copy()
    if spec.mechanism == "mcar":
        gen = _rng.generator(seed)
        for j in cols:
            mask[:, j] = gen.random(x.n) < spec.p
    else:  # mnar: censor strictly above the empirical (1-p) quantile
        for j in cols:
            col = x.values[:, j]
            # 1-based order-statistic index ceil((1-p) n); index 0 masks all.
            k = int(np.ceil((1.0 - spec.p) * x.n))
            if k <= 0:
                mask[:, j] = True
            else:
                threshold = np.sort(col)[k - 1]
                mask[:, j] = col > threshold
    return IncompleteMatrix(x.values.copy(), mask)


def gen_predictive(
    base: ModelSpec, n: int, p: float, shift: float, seed: int, column: int = 0
) -> LabeledDataset:
    """Pattern-mixture quadratic model: mask ~ B(p) independent of X enters y.

    y = x_j^2 + shift * m_j + noise; the mask is applied to column j.
    """
    if base.model_id != "quadratic":
        raise ValueError("predictive missingness is defined on the quadratic model")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    covariates = gen_gaussian_covariates(n, base.d, base.rho, _rng.derive_seed(seed, 1))
    mask_gen = _rng.generator(seed, 3)
    m = mask_gen.random(n) < p
    f_star = covariates.values[:, column] ** 2 + shift * m.astype(float)
    noise_gen = _rng.generator(seed, 2)
    y = f_star + noise_gen.normal(0.0, base.noise_sd, size=n)
    mask = np.zeros((n, base.d), dtype=bool)
    mask[:, column] = m
    return LabeledDataset(
        features=IncompleteMatrix(covariates.values.copy(), mask),
        y=as_target(y),
        bayes_values=f_star,
    )
