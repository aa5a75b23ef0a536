import numpy as np
import pytest

from nacart.data import complete, make_incomplete
from nacart.ensemble import (
    default_mtry,
    fit_boosting,
    fit_forest,
    predict_ensemble,
)
from nacart.tree import TreeHyper, fit_tree, predict


def _toy(n=300, d=4, miss=0.2, seed=0):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(n, d))
    mask = rng.random((n, d)) < miss
    y = values[:, 0] ** 2 + values[:, 1] + rng.normal(0, 0.2, n)
    return make_incomplete(np.where(mask, np.nan, values), mask), y


def test_single_tree_forest_degenerates():
    m, y = _toy(miss=0.0)
    forest = fit_forest(m, y, "mia", b=1, bootstrap=False, mtry=m.d, seed=5)
    tree = fit_tree(m, y, "mia", TreeHyper(), seed=forest.trees[0].seed)
    assert np.array_equal(predict_ensemble(forest, m), predict(tree, m))


def test_forest_constant_target():
    m, _ = _toy()
    y = np.full(m.n, 3.25)
    forest = fit_forest(m, y, "mia", b=5, seed=1)
    assert np.allclose(predict_ensemble(forest, m), 3.25)


def test_forest_beats_single_tree():
    from scipy.stats import binomtest
    from nacart.bench import r2_score
    from nacart.synth import AmputationSpec, ModelSpec, ampute, gen_model

    spec = ModelSpec("friedman", d=5, rho=0.0)
    wins = 0
    reps = 20
    for rep in range(reps):
        train = gen_model(spec, 400, 100 + rep)
        test = gen_model(spec, 400, 200 + rep)
        pat = AmputationSpec("mcar", 0.2)
        xtr = ampute(train.features, pat, rep)
        xte = ampute(test.features, pat, 1000 + rep)
        tree = fit_tree(xtr, train.y, "mia", seed=rep)
        forest = fit_forest(xtr, train.y, "mia", b=100, seed=rep)
        r2_tree = r2_score(test.y, predict(tree, xte))
        r2_forest = r2_score(test.y, predict_ensemble(forest, xte))
        wins += int(r2_forest > r2_tree)
    assert binomtest(wins, reps, 0.5, alternative="greater").pvalue < 0.05


def test_boosting_closes_strategy_gap_on_linear_model():
    # at n = 10^4 the native missing-value boosting and boosting on
    # conditionally imputed data land within 0.05 of each other
    from nacart.bench import r2_score
    from nacart.data import complete
    from nacart.impute import GaussianImputer
    from nacart.synth import AmputationSpec, ModelSpec, ampute, gen_model

    spec = ModelSpec("linear", d=10, rho=0.5)
    pat = AmputationSpec("mcar", 0.2)
    train = gen_model(spec, 10_000, 1)
    test = gen_model(spec, 10_000, 2)
    xtr = ampute(train.features, pat, 3)
    xte = ampute(test.features, pat, 4)

    imp = GaussianImputer().fit(xtr)
    on_imputed = fit_boosting(complete(imp.transform(xtr)), train.y, "mia",
                              rounds=200, learning_rate=0.1, seed=6)
    r2_imputed = r2_score(test.y,
                          predict_ensemble(on_imputed,
                                           complete(imp.transform(xte))))
    native = fit_boosting(xtr, train.y, "mia", rounds=200, learning_rate=0.1,
                          seed=6)
    r2_native = r2_score(test.y, predict_ensemble(native, xte))
    assert abs(r2_native - r2_imputed) < 0.05
    assert r2_native > 0.8 and r2_imputed > 0.8


def test_forest_mtry_default():
    assert default_mtry(9) == 3
    assert default_mtry(1) == 1


def test_forest_determinism():
    m, y = _toy(seed=2)
    a = predict_ensemble(fit_forest(m, y, "prob", b=8, seed=9), m, seed=3)
    b = predict_ensemble(fit_forest(m, y, "prob", b=8, seed=9), m, seed=3)
    assert np.array_equal(a, b)


def test_forest_prediction_orderless():
    m, y = _toy(seed=3)
    forest = fit_forest(m, y, "mia", b=10, seed=4)
    base = predict_ensemble(forest, m)
    manual = np.zeros(m.n)
    for t, tree in enumerate(forest.trees):
        import nacart.rng as rng_mod

        manual += predict(tree, m, seed=rng_mod.derive_seed(0, t, 104))
    assert np.allclose(base, manual / forest.b, atol=1e-12)


def test_boosting_single_round_full_rate():
    m, y = _toy(miss=0.0, seed=4)
    boost = fit_boosting(m, y, "mia", rounds=1, learning_rate=1.0,
                         hyper=TreeHyper(max_depth=8), seed=1)
    tree_pred = predict(boost.stages[0][0], m)
    assert np.allclose(predict_ensemble(boost, m), y.mean() + tree_pred)


def test_boosting_improves_on_mean_for_any_strategy():
    m, y = _toy(seed=5)
    for strategy in ("mia", "prob"):
        boost = fit_boosting(m, y, strategy, rounds=30, learning_rate=0.3, seed=2)
        preds = predict_ensemble(boost, m)
        assert np.mean((y - preds) ** 2) <= np.var(y) + 1e-9


def test_boosting_residual_norm_decreases():
    m, y = _toy(miss=0.0, seed=6)
    errs = []
    for rounds in (1, 5, 20, 60):
        boost = fit_boosting(m, y, "mia", rounds=rounds, learning_rate=0.2, seed=3)
        errs.append(float(np.mean((y - predict_ensemble(boost, m)) ** 2)))
    assert all(b <= a + 1e-12 for a, b in zip(errs, errs[1:]))


def test_boosting_zero_stage_trees():
    m, _ = _toy(seed=7)
    y = np.full(m.n, -2.5)
    boost = fit_boosting(m, y, "mia", rounds=3, learning_rate=0.5, seed=4)
    assert np.allclose(predict_ensemble(boost, m), -2.5)


def test_ensemble_dimension_check():
    m, y = _toy(seed=8)
    forest = fit_forest(m, y, "mia", b=2, seed=5)
    with pytest.raises(ValueError):
        predict_ensemble(forest, complete(np.zeros((1, m.d + 1))))


def test_ensemble_validation():
    m, y = _toy(seed=9)
    with pytest.raises(ValueError):
        fit_forest(m, y, "mia", b=0)
    with pytest.raises(ValueError):
        fit_forest(m, y, "mia", mtry=0)
    with pytest.raises(ValueError):
        fit_boosting(m, y, "mia", rounds=0)
    with pytest.raises(ValueError):
        fit_boosting(m, y, "mia", learning_rate=1.5)
