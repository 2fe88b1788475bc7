import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_shapley
from respforecast.errors import ComputationError
from respforecast.shapley import (
    background_sample,
    exact_shapley,
    explain,
    global_importance,
    importance_table,
    shapley_sampling,
)
from respforecast.trees import ForestParams, fit_random_forest


def linear(w, b=0.0):
    w = np.asarray(w, float)
    return lambda X: np.asarray(X) @ w + b


def test_linear_closed_form_exact():
    rng = np.random.default_rng(0)
    w = rng.normal(size=5)
    bg = rng.normal(size=(30, 5))
    x = rng.normal(size=5)
    att = exact_shapley(linear(w, 2.0), x, bg)
    assert np.allclose(att.phi, w * (x - bg.mean(axis=0)), atol=1e-10, rtol=0)
    assert att.efficiency_gap == pytest.approx(0.0, abs=1e-10)


def test_linear_sampling_example():
    att = shapley_sampling(linear([3, 2]), [1, 1], [[0, 0]], n_samples=64, seed=0)
    assert np.allclose(att.phi, [3, 2], atol=1e-12)


def test_symmetric_features_and_null_instance():
    f = lambda X: np.asarray(X)[:, 0] + np.asarray(X)[:, 1]  # noqa: E731
    half = np.random.default_rng(1).normal(size=(20, 2))
    bg = np.vstack([half, half[:, ::-1]])
    att = exact_shapley(f, [2.0, 2.0], bg)
    assert att.phi[0] == pytest.approx(att.phi[1], abs=1e-12)
    z = bg[:1]
    s = shapley_sampling(f, z[0], z, n_samples=10, seed=3)
    assert np.all(s.phi == 0)


def test_exact_matches_permutation_definition():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(80, 4)), rng.normal(size=80)
    model = fit_random_forest(X, y, ForestParams(mtry=2, min_n=3, n_trees=10, seed=1))
    bg = X[:15]
    att = exact_shapley(model.predict, X[20], bg)
    assert np.allclose(att.phi, brute_shapley(model.predict, X[20], bg), atol=1e-12)


def test_dummy_feature_gets_zero():
    f = lambda X: np.asarray(X)[:, 0] ** 2 + np.asarray(X)[:, 2]  # noqa: E731
    bg = np.random.default_rng(3).normal(size=(20, 3))
    assert exact_shapley(f, [1.0, 5.0, -1.0], bg).phi[1] == 0.0


def test_exact_feature_limit():
    with pytest.raises(ValueError, match="12"):
        exact_shapley(linear(np.ones(13)), np.ones(13), np.zeros((1, 13)))


def test_sampling_deterministic_and_variance_shrinks():
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(100, 6)), rng.normal(size=100)
    model = fit_random_forest(X, y, ForestParams(mtry=3, min_n=3, n_trees=10, seed=2))
    a = shapley_sampling(model.predict, X[0], X[1:50], n_samples=100, seed=9)
    b = shapley_sampling(model.predict, X[0], X[1:50], n_samples=100, seed=9)
    assert np.array_equal(a.phi, b.phi)
    big = shapley_sampling(model.predict, X[0], X[1:50], n_samples=1600, seed=9)
    assert np.mean(big.se) < 0.5 * np.mean(a.se)


def test_sampling_efficiency_within_error():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(100, 6))
    model = fit_random_forest(X, X[:, 0] + X[:, 1] ** 2, ForestParams(mtry=3, min_n=2, n_trees=10, seed=3))
    att = shapley_sampling(model.predict, X[0], X[1:], n_samples=400, seed=1)
    spread = np.std(model.predict(X[1:])) / np.sqrt(400)
    assert abs(att.efficiency_gap) <= 3 * spread + 1e-12


def test_global_importance_hand_case():
    g = global_importance([np.array([3.0, 1.0])], ["a", "b"])
    assert np.allclose(g.percent, [75, 25])
    g = global_importance([np.array([3.0, 0.0, 1.0])], ["a", "b", "c"])
    assert np.isnan(g.rendered(1.0)["b"])
    with pytest.raises(ComputationError):
        global_importance([np.zeros(3)])


@settings(max_examples=40)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=4, max_size=4), min_size=1, max_size=6), st.permutations(range(4)))
def test_global_importance_properties(phis, perm):
    phis = np.array(phis)
    if not np.abs(phis).sum() > 1e-9:
        return
    g = global_importance(phis, list("abcd"))
    assert g.percent.sum() == pytest.approx(100, abs=0.1)
    gp = global_importance(phis[:, list(perm)], [list("abcd")[i] for i in perm])
    assert np.allclose(gp.percent, g.percent[list(perm)])


def test_background_subsample_and_explain():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(400, 3))
    bg = background_sample(X, 256, seed=1)
    assert len(bg) == 256 and np.array_equal(bg, background_sample(X, 256, seed=1))
    atts, imp = explain(linear([1, 0, 2]), X[:5], X, ["a", "b", "c"], n_samples=20, seed=2)
    assert len(atts) == 5 and imp.percent[1] == 0
    table = importance_table({"r1": imp, "r2": imp}, 1.0)
    assert list(table.columns) == ["r1", "r2"] and "b" not in table.index
