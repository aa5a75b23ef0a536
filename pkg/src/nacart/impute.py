"""Fit-on-train, transform-on-test imputers.

Constant imputation (column mean, out-of-range, or user-supplied values),
a multivariate-Gaussian fitter that fills sufficient statistics by EM,
conditional-mean imputation, and multiple-imputation prediction that
averages a complete-data predictor over draws of the missing block from
its conditional Gaussian.

The imputation model never sees the response; fitted imputers are frozen
and reused verbatim on test data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .data import IncompleteMatrix, observed_stats

CONSTANT_KINDS = ("mean", "oor", "custom")


@dataclass(frozen=True)
class ConstantImputer:
    alphas: np.ndarray  # one fill value per column
    kind: str
    degenerate_columns: tuple[int, ...] = ()  # fully-missing at fit time


@dataclass(frozen=True)
class GaussianParams:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        if self.sigma.shape != (self.mu.size, self.mu.size):
            raise ValueError("sigma must be d x d")
        if not np.allclose(self.sigma, self.sigma.T, atol=1e-10):
            raise ValueError("sigma must be symmetric")


@dataclass(frozen=True)
class ConditionalGaussian:
    """Law of the missing block given the observed block."""

    mu_cond: np.ndarray
    sigma_cond: np.ndarray


def fit_constant(train: IncompleteMatrix, kind: str = "mean",
                 values=None) -> ConstantImputer:
    """Per-column fill values learned from the training columns.

    "mean" uses the observed mean; "oor" uses min - max(1, range), strictly
    below every observed value; "custom" takes `values` as given. A column
    with nothing observed falls back to 0 and is reported in
    degenerate_columns.
    """
    if kind not in CONSTANT_KINDS:
        raise ValueError(f"unknown constant imputer kind {kind!r}")
    if kind == "custom":
        alphas = np.asarray(values, dtype=float)
        if alphas.shape != (train.d,):
            raise ValueError("custom imputer needs one value per column")
        return ConstantImputer(alphas=alphas, kind=kind)
    alphas = np.zeros(train.d)
    degenerate = []
    for j in range(train.d):
        stats = observed_stats(train, j)
        if stats.observed_count == 0:
            degenerate.append(j)
            alphas[j] = 0.0
        elif kind == "mean":
            alphas[j] = stats.mean
        else:
            alphas[j] = stats.min - max(1.0, stats.max - stats.min)
    return ConstantImputer(alphas=alphas, kind=kind,
                           degenerate_columns=tuple(degenerate))


def transform(imp: ConstantImputer, x: IncompleteMatrix,
              add_mask: bool = False) -> np.ndarray:
    """Complete copy of x with every masked cell replaced by its fitted alpha."""
    if imp.alphas.size != x.d:
        raise ValueError(f"imputer fitted on d={imp.alphas.size}, got d={x.d}")
    filled = np.where(x.mask, imp.alphas[np.newaxis, :], x.values)
    if add_mask:
        return np.hstack([filled, x.mask.astype(float)])
    return filled


def _pattern_groups(mask: np.ndarray):
    """Group row indices by identical missingness pattern."""
    _, inverse = np.unique(mask, axis=0, return_inverse=True)
    groups = {}
    for i, g in enumerate(inverse):
        groups.setdefault(int(g), []).append(i)
    return [(mask[idx[0]], np.array(idx)) for idx in groups.values()]


def observed_loglik(params: GaussianParams, x: IncompleteMatrix) -> float:
    """Sum over rows of the log-density of the observed sub-vector.

    Constant terms included; a fully missing row contributes 0.
    """
    total = 0.0
    for pattern, idx in _pattern_groups(x.mask):
        obs = ~pattern
        k = int(obs.sum())
        if k == 0:
            continue
        mu_o = params.mu[obs]
        sig_oo = params.sigma[np.ix_(obs, obs)]
        sign, logdet = np.linalg.slogdet(sig_oo)
        if sign <= 0:
            raise np.linalg.LinAlgError("singular marginal covariance")
        diff = x.values[np.ix_(idx, np.flatnonzero(obs))] - mu_o
        solved = np.linalg.solve(sig_oo, diff.T).T
        quad = np.einsum("ij,ij->i", diff, solved)
        total += float(
            -0.5 * (quad.sum() + idx.size * (k * np.log(2.0 * np.pi) + logdet))
        )
    return total


def conditional_gaussian(params: GaussianParams, observed_idx,
                         observed_vals) -> ConditionalGaussian:
    """Conditional law of the missing coordinates given the observed ones."""
    d = params.mu.size
    obs = np.zeros(d, dtype=bool)
    obs[list(observed_idx)] = True
    miss = ~obs
    if not miss.any():
        return ConditionalGaussian(mu_cond=np.empty(0),
                                   sigma_cond=np.empty((0, 0)))
    if not obs.any():
        return ConditionalGaussian(mu_cond=params.mu.copy(),
                                   sigma_cond=params.sigma.copy())
    sig_oo = params.sigma[np.ix_(obs, obs)]
    sig_mo = params.sigma[np.ix_(miss, obs)]
    sig_mm = params.sigma[np.ix_(miss, miss)]
    x_o = np.asarray(observed_vals, dtype=float)
    try:
        gain = np.linalg.solve(sig_oo, sig_mo.T).T
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "singular observed-block covariance; shrink the covariance first"
        ) from exc
    mu_cond = params.mu[miss] + gain @ (x_o - params.mu[obs])
    sigma_cond = sig_mm - gain @ sig_mo.T
    return ConditionalGaussian(mu_cond=mu_cond, sigma_cond=sigma_cond)


def shrink_covariance(sigma: np.ndarray) -> np.ndarray:
    """0.99 * sigma + 0.01 * tr(sigma) * I, exactly as printed.

    The trace is not divided by the dimension; see fit_gaussian_em notes.
    """
    sigma = np.asarray(sigma, dtype=float)
    if not np.allclose(sigma, sigma.T, atol=1e-10):
        raise ValueError("sigma must be symmetric")
    return 0.99 * sigma + 0.01 * np.trace(sigma) * np.eye(sigma.shape[0])


def fit_gaussian_em(
    train: IncompleteMatrix,
    max_iter: int = 500,
    tol: float = 1e-8,
) -> tuple[GaussianParams, list[float]]:
    """Maximum-likelihood Gaussian parameters from incomplete data.

    The E-step fills the per-row first and second moments of the missing
    block given the observed block under the current parameters (the
    sufficient statistics are imputed, never the data); the M-step is the
    usual closed-form update with divisor n. Returns the parameters and
    the observed log-likelihood trace, one entry per iterate including the
    initial one; the trace is non-decreasing.
    """
    if train.n < 2:
        raise ValueError("need at least two rows")
    for j in range(train.d):
        if (~train.mask[:, j]).sum() < 2:
            raise ValueError(
                f"column {j} has fewer than 2 observed values; covariance undefined"
            )
    n, d = train.n, train.d
    mu = np.array([observed_stats(train, j).mean for j in range(d)])
    var0 = np.array(
        [train.column_observed(j).var() + 1e-6 for j in range(d)]
    )
    sigma = np.diag(var0)
    groups = _pattern_groups(train.mask)
    filled0 = np.where(train.mask, 0.0, train.values)

    params = GaussianParams(mu=mu, sigma=sigma)
    trace = [observed_loglik(params, train)]
    for _ in range(max_iter):
        s1 = np.zeros(d)
        s2 = np.zeros((d, d))
        try:
            for pattern, idx in groups:
                obs = ~pattern
                rows = filled0[idx]
                if pattern.any():
                    if obs.any():
                        cond = _conditional_block(params, obs)
                        x_o = rows[:, obs]
                        mu_m = params.mu[pattern] + (x_o - params.mu[obs]) @ cond["gain"].T
                        cov_mm = cond["sigma_cond"]
                    else:
                        mu_m = np.tile(params.mu, (idx.size, 1))
                        cov_mm = params.sigma
                    rows = rows.copy()
                    rows[:, pattern] = mu_m
                    s2[np.ix_(pattern, pattern)] += idx.size * cov_mm
                s1 += rows.sum(axis=0)
                s2 += rows.T @ rows
            mu_new = s1 / n
            sigma_new = s2 / n - np.outer(mu_new, mu_new)
            sigma_new = (sigma_new + sigma_new.T) / 2.0
            candidate = GaussianParams(mu=mu_new, sigma=sigma_new)
            ll = observed_loglik(candidate, train)
        except np.linalg.LinAlgError:
            # Degenerate data (e.g. exactly collinear columns) drives the
            # fit toward a singular covariance; stop at the last evaluable
            # iterate and leave regularization to shrink_covariance.
            break
        params = candidate
        trace.append(ll)
        if abs(trace[-1] - trace[-2]) < tol:
            break
    return params, trace


def _conditional_block(params: GaussianParams, obs: np.ndarray):
    """Regression of the missing block on the observed block (shared per pattern)."""
    miss = ~obs
    sig_oo = params.sigma[np.ix_(obs, obs)]
    sig_mo = params.sigma[np.ix_(miss, obs)]
    gain = np.linalg.solve(sig_oo, sig_mo.T).T
    sigma_cond = params.sigma[np.ix_(miss, miss)] - gain @ sig_mo.T
    return {"gain": gain, "sigma_cond": sigma_cond}


def impute_conditional_mean(params: GaussianParams,
                            x: IncompleteMatrix) -> np.ndarray:
    """Complete copy of x, each missing block replaced by its conditional mean."""
    if params.mu.size != x.d:
        raise ValueError("parameter dimension does not match the matrix")
    out = np.where(x.mask, 0.0, x.values)
    for pattern, idx in _pattern_groups(x.mask):
        if not pattern.any():
            continue
        obs = ~pattern
        if obs.any():
            cond = _conditional_block(params, obs)
            x_o = out[np.ix_(idx, np.flatnonzero(obs))]
            out[np.ix_(idx, np.flatnonzero(pattern))] = (
                params.mu[pattern] + (x_o - params.mu[obs]) @ cond["gain"].T
            )
        else:
            out[np.ix_(idx, np.flatnonzero(pattern))] = params.mu[pattern]
    return out


class GaussianImputer:
    """EM-fitted Gaussian conditional-mean imputer with the fixed shrinkage step."""

    def __init__(self, max_iter: int = 500, tol: float = 1e-8):
        self.max_iter = max_iter
        self.tol = tol
        self.params: Optional[GaussianParams] = None
        self.trace: list[float] = []

    def fit(self, train: IncompleteMatrix) -> "GaussianImputer":
        raw, self.trace = fit_gaussian_em(train, self.max_iter, self.tol)
        self.params = GaussianParams(mu=raw.mu,
                                     sigma=shrink_covariance(raw.sigma))
        return self

    def transform(self, x: IncompleteMatrix, add_mask: bool = False) -> np.ndarray:
        if self.params is None:
            raise RuntimeError("imputer is not fitted")
        filled = impute_conditional_mean(self.params, x)
        if add_mask:
            return np.hstack([filled, x.mask.astype(float)])
        return filled


def sample_missing(params: GaussianParams, values, mask, k: int,
                   gen: np.random.Generator) -> np.ndarray:
    """k completed copies of one row, missing block drawn from its conditional."""
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    cond = conditional_gaussian(params, np.flatnonzero(~mask), values[~mask])
    out = np.tile(np.where(mask, 0.0, values), (k, 1))
    if mask.any():
        chol = np.linalg.cholesky(
            cond.sigma_cond + 1e-12 * np.eye(int(mask.sum()))
        )
        draws = cond.mu_cond + gen.standard_normal((k, int(mask.sum()))) @ chol.T
        out[:, mask] = draws
    return out


def multiple_impute_predict(
    params: GaussianParams,
    f: Callable[[np.ndarray], np.ndarray],
    values,
    mask,
    k: int,
    seed: int,
) -> float:
    """Average of f over k conditional-Gaussian completions of one row.

    f maps a batch of complete rows to a vector of predictions. With no
    missing coordinate the answer is exactly f on the row, for any k.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=float)
    if not mask.any():
        return float(np.asarray(f(values.reshape(1, -1)))[0])
    completed = sample_missing(params, values, mask, k, _rng.generator(seed))
    return float(np.mean(np.asarray(f(completed))))


def multiple_impute_predict_sampled(
    f: Callable[[np.ndarray], np.ndarray],
    values,
    mask,
    sampler: Callable[[np.random.Generator, int], np.ndarray],
    k: int,
    seed: int,
) -> float:
    """multiple_impute_predict with a caller-supplied missing-block sampler.

    sampler(gen, k) must return a (k, n_missing) array of draws; used in
    tests to substitute the true conditional law for the Gaussian one.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values, dtype=float)
    if not mask.any():
        return float(np.asarray(f(values.reshape(1, -1)))[0])
    completed = np.tile(np.where(mask, 0.0, values), (k, 1))
    draws = np.asarray(sampler(_rng.generator(seed), k), dtype=float)
    completed[:, mask] = draws.reshape(k, -1)
    return float(np.mean(np.asarray(f(completed))))
