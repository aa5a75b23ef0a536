"""Benchmark harness: generate, ampute, impute or route, fit, score.

Each repetition draws a fresh train/test pair from rep-derived seeds,
fits every registered method on the training set (imputers included),
scores test-set explained variance, and appends one record per
(rep, method). Reruns with the same master seed are byte-identical,
regardless of the worker count, apart from wall-clock timing columns
(which can be suppressed for determinism checks).
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import rng as _rng
from .data import IncompleteMatrix, complete
from .ensemble import fit_boosting, fit_forest, predict_ensemble
from .impute import GaussianImputer, fit_constant, transform
from .synth import (
    AmputationSpec,
    LabeledDataset,
    ModelSpec,
    ampute,
    gen_model,
    gen_predictive,
    regression_function,
)
from .tree import TreeHyper, dump_tree, fit_tree, predict, selected_root_feature

LEARNERS = ("tree", "forest", "boost")

METHOD_NAMES = (
    "mia",
    "surrogate",
    "prob",
    "block",
    "impute_mean",
    "impute_mean+mask",
    "impute_oor",
    "impute_oor+mask",
    "impute_gaussian",
)

# Seed-stream tags; fixed so any reimplementation reproduces the streams.
TAG_TRAIN = 1
TAG_TEST = 2
TAG_FIT = 3
TAG_PREDICT = 4


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec
    pattern: AmputationSpec
    n_train: int
    n_test: int
    reps: int
    learner: str = "tree"
    methods: tuple[str, ...] = METHOD_NAMES
    master_seed: int = 0
    trees: int = 100
    mtry: Optional[int] = None
    rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 30
    min_split: int = 10
    min_leaf: int = 5
    min_gain: float = 0.0
    timings: bool = True

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        for name in self.methods:
            if name not in METHOD_NAMES:
                raise ValueError(f"unknown method {name!r}")
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")

    def hyper(self) -> TreeHyper:
        return TreeHyper(
            max_depth=self.max_depth,
            min_split=self.min_split,
            min_leaf=self.min_leaf,
            min_gain=self.min_gain,
        )


@dataclass(frozen=True)
class RunRecord:
    rep: int
    method: str
    learner: str
    model: str
    pattern: str
    p: float
    rho: float
    n_train: int
    n_test: int
    r2: float
    fit_ms: int
    predict_ms: int


CSV_HEADER = "rep,method,learner,model,pattern,p,rho,n_train,n_test,r2,fit_ms,predict_ms"


def r2_score(y_true, y_pred) -> float:
    """Explained variance on held-out data: 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if y_true.shape != y_pred.shape or y_true.size == 0:
        raise ValueError("y_true and y_pred must be equal-length and nonempty")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("zero-variance target")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def relative_scores(records: list[RunRecord]) -> list[RunRecord]:
    """Center each repetition's scores by the across-method mean."""
    by_rep: dict[int, list[RunRecord]] = {}
    for rec in records:
        by_rep.setdefault(rec.rep, []).append(rec)
    methods = sorted({rec.method for rec in records})
    out = []
    for rep in sorted(by_rep):
        group = by_rep[rep]
        names = sorted(rec.method for rec in group)
        if names != methods:
            raise ValueError(f"rep {rep} does not contain every method exactly once")
        mean = float(np.mean([rec.r2 for rec in group]))
        for rec in group:
            out.append(replace(rec, r2=rec.r2 - mean))
    return out


class _Learner:
    """Tree/forest/boost fitting behind one interface, per the config."""

    def __init__(self, config: ExperimentConfig, strategy: str):
        self.config = config
        self.strategy = strategy
        self.model = None

    def fit(self, x: IncompleteMatrix, y, seed: int):
        cfg = self.config
        if cfg.learner == "tree":
            self.model = fit_tree(
                x, y, strategy=self.strategy, hyper=cfg.hyper(), seed=seed
            )
        elif cfg.learner == "forest":
            self.model = fit_forest(
                x, y, strategy=self.strategy, hyper=cfg.hyper(),
                b=cfg.trees, mtry=cfg.mtry, seed=seed,
            )
        else:
            self.model = fit_boosting(
                x, y, strategy=self.strategy, hyper=TreeHyper(
                    max_depth=min(cfg.max_depth, 6),
                    min_split=cfg.min_split, min_leaf=cfg.min_leaf,
                    min_gain=cfg.min_gain,
                ),
                rounds=cfg.rounds, learning_rate=cfg.learning_rate, seed=seed,
            )
        return self

    def predict(self, x: IncompleteMatrix, seed: int) -> np.ndarray:
        if self.config.learner == "tree":
            return predict(self.model, x, seed=seed)
        return predict_ensemble(self.model, x, seed=seed)

    def digest_text(self) -> str:
        if self.config.learner == "tree":
            return dump_tree(self.model)
        if self.config.learner == "forest":
            return "".join(dump_tree(t) for t in self.model.trees)
        parts = [repr(self.model.init_value)]
        parts += [dump_tree(t) for t, _ in self.model.stages]
        return "".join(parts)


class _FittedMethod:
    def __init__(self, learner: _Learner, preprocess, digest_extra: str = ""):
        self._learner = learner
        self._preprocess = preprocess
        self._digest_extra = digest_extra

    def predict(self, x: IncompleteMatrix, seed: int) -> np.ndarray:
        return self._learner.predict(self._preprocess(x), seed=seed)

    def digest(self) -> str:
        payload = self._digest_extra + self._learner.digest_text()
        return hashlib.sha256(payload.encode()).hexdigest()


def _fit_strategy_method(strategy):
    def fit(x, y, config, seed):
        learner = _Learner(config, strategy).fit(x, y, seed)
        return _FittedMethod(learner, lambda t: t)

    return fit


def _fit_constant_method(kind, add_mask):
    def fit(x, y, config, seed):
        imp = fit_constant(x, kind=kind)
        train_arr = transform(imp, x, add_mask=add_mask)
        learner = _Learner(config, "mia").fit(complete(train_arr), y, seed)
        return _FittedMethod(
            learner,
            lambda t: complete(transform(imp, t, add_mask=add_mask)),
            digest_extra=repr(imp.alphas.tolist()),
        )

    return fit


def _fit_gaussian_method():
    def fit(x, y, config, seed):
        imp = GaussianImputer().fit(x)
        learner = _Learner(config, "mia").fit(complete(imp.transform(x)), y, seed)
        return _FittedMethod(
            learner,
            lambda t: complete(imp.transform(t)),
            digest_extra=repr(imp.params.mu.tolist())
            + repr(imp.params.sigma.tolist()),
        )

    return fit


METHODS: dict[str, Callable] = {
    "mia": _fit_strategy_method("mia"),
    "surrogate": _fit_strategy_method("surrogate"),
    "prob": _fit_strategy_method("prob"),
    "block": _fit_strategy_method("block"),
    "impute_mean": _fit_constant_method("mean", add_mask=False),
    "impute_mean+mask": _fit_constant_method("mean", add_mask=True),
    "impute_oor": _fit_constant_method("oor", add_mask=False),
    "impute_oor+mask": _fit_constant_method("oor", add_mask=True),
    "impute_gaussian": _fit_gaussian_method(),
}


def draw_dataset(config: ExperimentConfig, n: int, seed: int) -> LabeledDataset:
    """One labeled draw under the config's model and missingness pattern."""
    if config.pattern.mechanism == "predictive":
        return gen_predictive(
            config.model, n, config.pattern.p, config.pattern.shift, seed
        )
    ds = gen_model(config.model, n, seed)
    if config.pattern.p > 0:
        features = ampute(ds.features, config.pattern, _rng.derive_seed(seed, 7))
        ds = LabeledDataset(features=features, y=ds.y, bayes_values=ds.bayes_values)
    return ds


def _run_rep(config: ExperimentConfig, rep: int, audit: bool,
             digest_sink: Optional[dict]) -> list[RunRecord]:
    train = draw_dataset(config, config.n_train,
                         _rng.derive_seed(config.master_seed, rep, TAG_TRAIN))
    fitted: list = []
    test = None
    if not audit:
        test = draw_dataset(config, config.n_test,
                            _rng.derive_seed(config.master_seed, rep, TAG_TEST))
    for mi, name in enumerate(config.methods):
        t0 = time.monotonic_ns()
        model = METHODS[name](
            train.features, train.y, config,
            _rng.derive_seed(config.master_seed, rep, mi, TAG_FIT),
        )
        fit_ms = (time.monotonic_ns() - t0) // 1_000_000
        if digest_sink is not None:
            digest_sink[(rep, name)] = model.digest()
        fitted.append((mi, name, model, fit_ms))
    if test is None:  # audit mode: every model was fitted before this draw
        test = draw_dataset(config, config.n_test,
                            _rng.derive_seed(config.master_seed, rep, TAG_TEST))
    records = []
    for mi, name, model, fit_ms in fitted:
        t0 = time.monotonic_ns()
        pred = model.predict(
            test.features,
            _rng.derive_seed(config.master_seed, rep, mi, TAG_PREDICT),
        )
        predict_ms = (time.monotonic_ns() - t0) // 1_000_000
        records.append(
            RunRecord(
                rep=rep,
                method=name,
                learner=config.learner,
                model=config.model.model_id,
                pattern=config.pattern.mechanism,
                p=config.pattern.p,
                rho=config.model.rho,
                n_train=config.n_train,
                n_test=config.n_test,
                r2=r2_score(test.y, pred),
                fit_ms=int(fit_ms) if config.timings else 0,
                predict_ms=int(predict_ms) if config.timings else 0,
            )
        )
    return records


def run_experiment(
    config: ExperimentConfig,
    workers: int = 1,
    audit: bool = False,
    digest_sink: Optional[dict] = None,
) -> list[RunRecord]:
    """All (rep, method) records, ordered by (rep, method index).

    Repetitions may run on a thread pool; every random stream is derived
    from (master_seed, rep, ...) up front, so the schedule cannot change
    any record. A failing method aborts its repetition with the original
    exception rather than skipping silently.
    """
    if workers <= 1:
        per_rep = [_run_rep(config, rep, audit, digest_sink)
                   for rep in range(config.reps)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_rep = list(
                pool.map(
                    lambda rep: _run_rep(config, rep, audit, digest_sink),
                    range(config.reps),
                )
            )
    return [rec for group in per_rep for rec in group]


def emit_csv(records: list[RunRecord], path) -> None:
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.rep},{r.method},{r.learner},{r.model},{r.pattern},"
                f"{r.p!r},{r.rho!r},{r.n_train},{r.n_test},"
                f"{r.r2!r},{r.fit_ms},{r.predict_ms}\n"
            )


def read_records_csv(path) -> list[RunRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError("not a bench records CSV")
    out = []
    for line in lines[1:]:
        c = line.split(",")
        out.append(
            RunRecord(
                rep=int(c[0]), method=c[1], learner=c[2], model=c[3],
                pattern=c[4], p=float(c[5]), rho=float(c[6]),
                n_train=int(c[7]), n_test=int(c[8]), r2=float(c[9]),
                fit_ms=int(c[10]), predict_ms=int(c[11]),
            )
        )
    return out


def estimate_bayes_rate(
    model: ModelSpec,
    pattern: AmputationSpec,
    n_large: int,
    k: int,
    seed: int,
) -> float:
    """Explained variance of the optimal predictor under the true model.

    Each test row is predicted by averaging the true response surface over
    draws of its missing block from the exact conditional Gaussian of the
    covariate design. Only the Gaussian-design models qualify, and only
    independent masking: the conditional law is otherwise not the stated
    one.
    """
    if model.model_id == "nonlinear":
        raise ValueError("no Bayes-rate estimate for the non-Gaussian design")
    if pattern.mechanism != "mcar":
        raise ValueError("Bayes-rate estimation assumes MCAR masking")
    d = model.d
    mu = np.ones(d)
    sigma = model.rho * np.ones((d, d)) + (1.0 - model.rho) * np.eye(d)
    ds = gen_model(model, n_large, seed)
    features = (
        ampute(ds.features, pattern, _rng.derive_seed(seed, 7))
        if pattern.p > 0
        else ds.features
    )
    f = regression_function(model)
    preds = np.zeros(n_large)
    gen = _rng.generator(seed, 9)
    patterns, inverse = np.unique(features.mask, axis=0, return_inverse=True)
    for g in range(patterns.shape[0]):
        rows = np.flatnonzero(inverse == g)
        pat = patterns[g]
        vals = np.where(pat, 0.0, features.values[rows])
        if not pat.any():
            preds[rows] = f(vals)
            continue
        obs = ~pat
        n_m = int(pat.sum())
        if obs.any():
            sig_oo = sigma[np.ix_(obs, obs)]
            sig_mo = sigma[np.ix_(pat, obs)]
            gain = np.linalg.solve(sig_oo, sig_mo.T).T
            cond_cov = sigma[np.ix_(pat, pat)] - gain @ sig_mo.T
            cond_mu = mu[pat] + (vals[:, obs] - mu[obs]) @ gain.T
        else:
            cond_cov = sigma
            cond_mu = np.tile(mu, (rows.size, 1))
        chol = np.linalg.cholesky(cond_cov + 1e-12 * np.eye(n_m))
        for start in range(0, rows.size, 256):
            sl = slice(start, min(start + 256, rows.size))
            nb = cond_mu[sl].shape[0]
            draws = cond_mu[sl][:, None, :] + (
                gen.standard_normal((nb, k, n_m)) @ chol.T
            )
            completed = np.broadcast_to(vals[sl][:, None, :], (nb, k, d)).copy()
            completed[:, :, pat] = draws
            values = f(completed.reshape(nb * k, d)).reshape(nb, k)
            preds[rows[sl]] = values.mean(axis=1)
    return r2_score(ds.y, preds)


def selection_frequency_experiment(
    p_grid,
    n_grid,
    missing_on: str,
    reps: int,
    seed: int,
) -> list[dict]:
    """Root-feature selection frequencies for a weak-signal two-feature stump.

    Design: two independent standard normal covariates, response
    0.25 * x1 + standard normal noise, independent masking at rate p on x1
    only or on both covariates. Returns one row per (p, n) with the
    fraction of repetitions whose stump roots on x1.
    """
    if missing_on not in ("x1", "both"):
        raise ValueError("missing_on must be 'x1' or 'both'")
    hyper = TreeHyper(max_depth=1, min_split=10, min_leaf=5)
    out = []
    for p in p_grid:
        for n in n_grid:
            hits = 0
            for rep in range(reps):
                gen = _rng.generator(seed, int(round(p * 10_000)), n, rep)
                x = gen.normal(size=(int(n), 2))
                y = 0.25 * x[:, 0] + gen.normal(size=int(n))
                mask = np.zeros((int(n), 2), dtype=bool)
                mask[:, 0] = gen.random(int(n)) < p
                if missing_on == "both":
                    mask[:, 1] = gen.random(int(n)) < p
                model = fit_tree(
                    IncompleteMatrix(x, mask), y, strategy="block",
                    hyper=hyper, seed=_rng.derive_seed(seed, rep, 21),
                )
                if selected_root_feature(model) == 0:
                    hits += 1
            out.append({"p": float(p), "n": int(n), "frequency": hits / reps})
    return out
