import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from oracles import mlp_gradient_error
from pitchml.ml import (
    FORMAT_VERSION, KnnModel, MlpModel, fit_gmm, fit_kmeans, fit_linreg, fit_logreg, fit_mlp, knn_predict,
    knn_regress, model_from_dict, model_to_dict, standardize_apply, standardize_fit,
)
from pitchml.ml.cluster import VarianceCollapseError
from pitchml.ml.linear import logreg_objective
from pitchml.ml.mlp import HIDDEN, TrainingDivergedError


def blobs(n=200, sep=10.0, dim=3, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, dim))
    b = rng.standard_normal((n, dim)) + sep
    return np.vstack([a, b]), np.r_[np.zeros(n, int), np.ones(n, int)]


# -- standardizer -------------------------------------------------------------------

def test_standardizer_moments_and_roundtrip():
    x = np.random.default_rng(1).normal(5, 3, (500, 4))
    s = standardize_fit(x)
    z = standardize_apply(s, x)
    np.testing.assert_allclose(z.mean(0), 0, atol=1e-9)
    np.testing.assert_allclose(z.std(0), 1, atol=1e-9)
    np.testing.assert_allclose(s.inverse(z), x, atol=1e-9)


def test_standardizer_constant_column_and_dims():
    x = np.column_stack([np.full(10, 0.1), np.arange(10.0)])
    s = standardize_fit(x)
    assert np.all(s.apply(x)[:, 0] == 0.0)
    assert s.std[0] == 1e-8
    with pytest.raises(ValueError):
        s.apply(np.zeros((3, 3)))


# -- k-means -------------------------------------------------------------------------

def test_kmeans_recovers_blob_means():
    x, y = blobs()
    m = fit_kmeans(x, 2, seed=0)
    centres = sorted(m.centroids.tolist(), key=lambda c: c[0])
    np.testing.assert_allclose(centres[0], x[y == 0].mean(0), atol=1e-9)
    np.testing.assert_allclose(centres[1], x[y == 1].mean(0), atol=1e-9)
    assert np.all(np.abs(np.array(centres[1]) - 10) < 0.3)
    assert np.all(np.abs(np.array(centres[0])) < 0.3)


def test_kmeans_one_point_per_cluster():
    x = np.random.default_rng(2).standard_normal((5, 2))
    assert fit_kmeans(x, 5).inertia == 0.0


def test_kmeans_identical_points_flagged():
    m = fit_kmeans(np.ones((10, 2)), 2)
    assert m.degenerate and m.inertia == 0.0


def test_kmeans_too_few_points():
    with pytest.raises(ValueError):
        fit_kmeans(np.ones((1, 2)), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 4))
def test_kmeans_inertia_non_increasing(seed, k):
    x = np.random.default_rng(seed).standard_normal((60, 3)) * np.array([1, 3, 0.5])
    m = fit_kmeans(x, k, seed=seed, n_init=1)
    h = np.array(m.history)
    assert np.all(np.diff(h) <= 1e-9 * h[0])


def test_kmeans_deterministic():
    x, _ = blobs(sep=2)
    a, b = fit_kmeans(x, 2, seed=7), fit_kmeans(x, 2, seed=7)
    np.testing.assert_array_equal(a.centroids, b.centroids)


# -- GMM -----------------------------------------------------------------------------

def test_gmm_single_component_closed_form():
    x = np.random.default_rng(3).normal([1, -2], [0.5, 2.0], (400, 2))
    g = fit_gmm(x, 1)
    np.testing.assert_allclose(g.means[0], x.mean(0), atol=1e-6)
    np.testing.assert_allclose(g.variances[0], x.var(0), atol=1e-6)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_gmm_blobs_responsibilities():
    x, y = blobs(sep=10)
    g = fit_gmm(x, 2)
    r = g.responsibilities(x)
    own = r[np.arange(len(x)), np.where(y == 0, np.argmax(r[y == 0].mean(0)), np.argmax(r[y == 1].mean(0)))]
    assert np.all(own >= 0.99)
    assert np.all(g.variances >= 1e-6)


def test_gmm_collapse_error():
    with pytest.raises(VarianceCollapseError, match="variance"):
        fit_gmm(np.full((10, 2), 3.0), 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_gmm_log_likelihood_non_decreasing(seed):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(0, 1, (40, 2)), rng.normal(rng.uniform(0, 4), rng.uniform(0.2, 2), (30, 2))])
    h = np.array(fit_gmm(x, 2, seed=seed).history)
    assert np.all(np.diff(h) >= -1e-12 * np.abs(h[:-1]))


# -- logistic regression -----------------------------------------------------------

def test_logreg_separable_pair():
    m = fit_logreg(np.array([[-1.0], [1.0]]), np.array([0, 1]), l2_lambda=1e-4)
    assert np.array_equal(m.predict(np.array([[-1.0], [1.0]])), [False, True])


def test_logreg_symmetric_data_zero_bias():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((100, 3))
    y = (rng.uniform(size=100) < 0.5).astype(int)
    m = fit_logreg(np.vstack([x, -x]), np.r_[y, 1 - y])
    assert abs(m.bias) < 1e-6


def test_logreg_gradient_at_optimum():
    x, y = blobs(sep=1.5, seed=5)
    m = fit_logreg(x, y, l2_lambda=1e-2)
    _, gw, gb = logreg_objective(m.weights, m.bias, x, y, 1e-2)
    assert np.sqrt(gw @ gw + gb * gb) < 1e-6
    assert m.grad_norm < 1e-6


def test_logreg_convex_two_starts_agree():
    x, y = blobs(sep=1.0, seed=6)
    a = fit_logreg(x, y, l2_lambda=1e-2)
    b = fit_logreg(x, y, l2_lambda=1e-2, init=np.random.default_rng(0).normal(0, 3, x.shape[1] + 1))
    fa = logreg_objective(a.weights, a.bias, x, y, 1e-2)[0]
    fb = logreg_objective(b.weights, b.bias, x, y, 1e-2)[0]
    assert abs(fa - fb) < 1e-6


def test_logreg_single_class_error():
    with pytest.raises(ValueError):
        fit_logreg(np.ones((4, 2)), np.zeros(4))


# -- linear regression -----------------------------------------------------------------

def test_linreg_exact_fit():
    x = np.random.default_rng(7).standard_normal((50, 3))
    t = x @ np.array([1.0, -2.0, 0.5]) + 4.0
    m = fit_linreg(x, t)
    np.testing.assert_allclose(m.coef, [1.0, -2.0, 0.5], atol=1e-10)
    assert m.intercept == pytest.approx(4.0)


# -- KNN -------------------------------------------------------------------------------

def test_knn_exact_match_k1():
    x = np.random.default_rng(8).standard_normal((20, 2))
    y = np.arange(20) % 2
    m = KnnModel(x, y, k=1)
    assert np.array_equal(knn_predict(m, x), y)


def test_knn_majority_3_to_2():
    x = np.array([[0.0], [1], [2], [3], [4], [100]])
    y = np.array([1, 0, 1, 0, 1, 0])
    assert knn_predict(KnnModel(x, y, 5), np.array([[2.0]]))[0] == 1


def test_knn_distance_tie_goes_to_lower_index():
    x = np.array([[1.0], [-1.0]])
    assert knn_predict(KnnModel(x, np.array([7, 3]), 1), np.array([[0.0]]))[0] == 7
    assert knn_predict(KnnModel(x[::-1], np.array([3, 7]), 1), np.array([[0.0]]))[0] == 3


def test_knn_dimension_mismatch_and_regress():
    m = KnnModel(np.zeros((3, 2)), np.array([1.0, 2.0, 3.0]), 1)
    with pytest.raises(ValueError):
        knn_predict(m, np.zeros((1, 3)))
    m = KnnModel(np.array([[0.0], [1.0], [5.0]]), np.array([10.0, 20.0, 30.0]), 1)
    assert knn_regress(m, np.array([[1.0]]))[0] == 20.0


def test_knn_neighbors_match_brute_force():
    rng = np.random.default_rng(9)
    x = np.round(rng.standard_normal((300, 4)), 1)  # rounding creates distance ties
    q = np.round(rng.standard_normal((50, 4)), 1)
    m = KnnModel(x, np.zeros(300), 5)
    got = m.neighbors(q)
    for row, qi in zip(got, q):
        d = ((x - qi) ** 2).sum(1)
        expect = sorted(range(len(x)), key=lambda i: (d[i], i))[:5]
        assert list(row) == expect


# -- MLP -------------------------------------------------------------------------------

@pytest.mark.parametrize("head,n_out", [("sigmoid", 1), ("softmax", 3), ("linear", 2)])
def test_mlp_gradient_check(head, n_out):
    rng = np.random.default_rng(10)
    model = MlpModel.init(4, n_out, head, hidden=(5, 3), seed=1)
    x = rng.standard_normal((7, 4))
    t = {"sigmoid": rng.integers(0, 2, 7), "softmax": rng.integers(0, 3, 7),
         "linear": rng.standard_normal((7, 2))}[head]
    assert mlp_gradient_error(model, x, t) < 1e-4


def test_mlp_architecture_and_init():
    m = MlpModel.init(48, 1, "sigmoid", seed=0)
    assert m.sizes == [48, 20, 10, 1] and HIDDEN == (20, 10)
    for w, fan_in in zip(m.weights, m.sizes[:-1]):
        assert np.all(np.abs(w) <= 1 / np.sqrt(fan_in))


def test_mlp_xor():
    x = np.tile(np.array([[0.0, 0], [0, 1], [1, 0], [1, 1]]), (64, 1))
    y = np.tile(np.array([0, 1, 1, 0]), 64)
    z = (x - 0.5) * 2
    solved = 0
    for seed in range(10):
        m = fit_mlp(z, y, "sigmoid", seed=seed, epochs=100)
        solved += np.array_equal(m.predict_output(z[:4]) > 0.5, [False, True, True, False])
    assert solved >= 8


def test_mlp_zero_epochs_is_initialization():
    x = np.random.default_rng(11).standard_normal((30, 3))
    y = (x[:, 0] > 0).astype(int)
    m = fit_mlp(x, y, epochs=0, seed=3)
    rng = np.random.default_rng(3)
    init = MlpModel.init(3, 1, "sigmoid", seed=int(rng.integers(2**31)))
    assert m.loss(x, y) == init.loss(x, y)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning", "ignore:invalid value:RuntimeWarning")
def test_mlp_nan_loss_aborts():
    x = np.full((30, 2), 1e200)
    with pytest.raises(TrainingDivergedError, match="loss"):
        fit_mlp(x, np.arange(30) % 2, lr=1e10, epochs=3)


def test_mlp_deterministic():
    x, y = blobs(n=50, sep=2)
    a = fit_mlp(x, y, seed=4, epochs=5)
    b = fit_mlp(x, y, seed=4, epochs=5)
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)


# -- serialization ---------------------------------------------------------------------

def test_model_roundtrip():
    import json
    x, y = blobs(n=40, sep=3)
    models = [standardize_fit(x), fit_kmeans(x, 2), fit_gmm(x, 2), fit_logreg(x, y), fit_linreg(x, y),
              KnnModel(x, y, 5), fit_mlp(x, y, epochs=3)]
    for m in models:
        d = json.loads(json.dumps(model_to_dict(m)))
        assert d["format_version"] == FORMAT_VERSION
        back = model_from_dict(d)
        assert type(back) is type(m)
    with pytest.raises(ValueError):
        model_from_dict({**model_to_dict(models[0]), "format_version": FORMAT_VERSION + 1})


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_standardizer_roundtrip_property(x):
    s = standardize_fit(x)
    np.testing.assert_allclose(s.inverse(s.apply(x)), x, atol=1e-9 * max(1.0, np.abs(x).max()))
