import json

import numpy as np
import pytest

from xrtumap import evaluation as ev
from xrtumap import metrics
from xrtumap.errors import DataError
from xrtumap.hypercube import HyperCube


def _blobs_2d(rng, n=100):
    X = np.vstack([rng.normal(size=(n, 2)) + [-4, 0], rng.normal(size=(n, 2)) + [4, 0]])
    return X, np.repeat([0, 1], n)


def test_separable_blobs_reach_full_accuracy(rng):
    X, y = _blobs_2d(rng)
    # margin check: the construction is separable by x = 0
    assert X[y == 0, 0].max() < 0 < X[y == 1, 0].min()
    model = ev.fit_shallow(X, y, epochs=200)
    assert np.mean(model.predict(X) == y) == 1.0


def test_single_class_rejected(rng):
    with pytest.raises(DataError):
        ev.fit_shallow(rng.normal(size=(10, 2)), np.zeros(10, dtype=int))


def test_nonfinite_features_rejected():
    X = np.ones((4, 2))
    X[1, 0] = np.inf
    with pytest.raises(DataError):
        ev.fit_shallow(X, np.array([0, 1, 0, 1]))


def test_linear_regressor_matches_least_squares(rng):
    X = rng.normal(size=(200, 3))
    T = X @ np.array([[1.5, -2.0], [0.3, 0.0], [-1.0, 4.0]]) + [2.0, -1.0]
    model = ev.fit_shallow(X, T, epochs=200)
    A = np.hstack([X, np.ones((200, 1))])
    coef, *_ = np.linalg.lstsq(A, T, rcond=None)
    assert np.mean((model.predict(X) - T) ** 2) < 1e-6
    assert np.allclose(model.predict(X), A @ coef, atol=1e-3)


def test_regressor_converges_on_correlated_features(rng):
    # nearly collinear columns plus an exact duplicate: badly conditioned
    base = rng.normal(size=(300, 3))
    X = np.hstack([base, base[:, :1] + 1e-3 * rng.normal(size=(300, 1)), base[:, 1:2]])
    T = base @ np.array([1.0, -2.0, 0.5]) + 0.05 * rng.normal(size=300)
    model = ev.fit_shallow(X, T, epochs=200)
    A = np.hstack([X, np.ones((300, 1))])
    coef, *_ = np.linalg.lstsq(A, T, rcond=None)
    best = np.mean((A @ coef - T) ** 2)
    assert np.mean((model.predict(X).ravel() - T) ** 2) <= best * (1 + 1e-6)
    assert model.weights.shape == (6, 1)


@pytest.mark.parametrize("kind", ["classifier", "regressor"])
def test_loss_trace_non_increasing(rng, kind):
    X = rng.normal(size=(150, 4))
    if kind == "classifier":
        y = (X[:, 0] + 0.5 * rng.normal(size=150) > 0).astype(int)
        model = ev.fit_shallow(X, y, epochs=100, step=50.0)
    else:
        y = X @ rng.normal(size=4) + 0.1 * rng.normal(size=150)
        model = ev.fit_shallow(X, y, epochs=100, step=50.0)
    assert len(model.trace) == 101
    assert np.all(np.diff(model.trace) <= 0)


def test_fit_is_deterministic(rng):
    X, y = _blobs_2d(rng)
    a = ev.fit_shallow(X, y, epochs=20, seed=3)
    b = ev.fit_shallow(X, y, epochs=20, seed=3)
    assert np.array_equal(a.weights, b.weights)


def test_balanced_weights_keep_minority_class(rng):
    X = rng.normal(size=(1000, 2))
    y = (X[:, 0] > 1.8).astype(int)  # about 4% positives
    plain = ev.fit_shallow(X, y, epochs=100, balanced=False)
    balanced = ev.fit_shallow(X, y, epochs=100)
    recall = lambda m: np.mean(m.predict(X)[y == 1] == 1)
    assert recall(balanced) > recall(plain)
    assert recall(balanced) > 0.9


def test_perfect_model_scores_iou_one(rng):
    X, y = _blobs_2d(rng)
    model = ev.fit_shallow(X, y)
    report = ev.evaluate_pixelwise(model, X, y, method="raw")
    assert report.metrics["iou"] == 1.0
    assert report.metrics["dice"] == 1.0
    assert len(report.mutual_information) == 2


def test_random_model_is_chance_level():
    rng = np.random.default_rng(7)
    accs = []
    for seed in range(20):
        X = rng.normal(size=(2000, 4))
        y = rng.integers(0, 2, size=2000)
        model = ev.random_shallow(4, seed=seed)
        accs.append(ev.evaluate_pixelwise(model, X, y).metrics["accuracy"])
    assert all(abs(a - 0.5) < 0.05 for a in accs)


def test_regression_report_has_sh(rng):
    X = rng.uniform(size=(100, 3))
    T = np.column_stack([X @ [1.0, 2.0, 0.5] + 1.0, X[:, 0] + 2.0])
    model = ev.fit_shallow(X, T)
    report = ev.evaluate_pixelwise(model, X, T)
    assert report.task == "regression"
    assert set(report.metrics) == {"s_0", "s_1", "sh"}
    assert report.metrics["sh"] > 0.99


def test_report_json_round_trip(rng):
    X, y = _blobs_2d(rng)
    report = ev.evaluate_pixelwise(ev.fit_shallow(X, y), X, y, method="pca",
                                   explained_variance=[0.7, 0.2], run=3, seed=5)
    back = metrics.EvalReport.from_json(report.to_json())
    assert back == report


def test_shape_mismatch_rejected(rng):
    X, y = _blobs_2d(rng)
    model = ev.fit_shallow(X, y)
    with pytest.raises(DataError):
        ev.evaluate_pixelwise(model, X, y[:10])
    with pytest.raises(DataError):
        model.predict(X[:, :1])


def test_evaluate_is_pure(rng):
    X, y = _blobs_2d(rng)
    model = ev.fit_shallow(X, y)
    w = model.weights.copy()
    a = ev.evaluate_pixelwise(model, X, y).to_json()
    b = ev.evaluate_pixelwise(model, X, y).to_json()
    assert a == b and np.array_equal(model.weights, w)


# --- comparison -------------------------------------------------------------


def _pixel_sets(rng, n_images=3, shape=(8, 8, 6)):
    def make():
        cubes, labels = [], []
        for _ in range(n_images):
            lab = np.zeros(shape[:2], dtype=np.int64)
            lab[2:5, 3:7] = 1
            data = rng.uniform(0.5, 1.0, size=shape)
            data[lab == 1] *= 0.4
            cubes.append(HyperCube(data, transmittance=True))
            labels.append(lab)
        return ev.PixelSet.from_cubes(cubes, labels)
    return make(), make()


def test_raw_method_is_passthrough(rng):
    train, test = _pixel_sets(rng)
    table = ev.compare_methods(train, test, ["raw"], dims=6, runs=1)
    assert table.reports[0].dims == 6
    assert table.mean("raw", "iou") > 0.9


def test_compare_is_reproducible(rng):
    train, test = _pixel_sets(rng)
    opts = dict(umap_params=None, fit_fraction=1.0)
    a = ev.compare_methods(train, test, ["pca", "nmf"], dims=3, runs=3, seed=11, **opts)
    b = ev.compare_methods(train, test, ["pca", "nmf"], dims=3, runs=3, seed=11, **opts)
    assert a.to_csv() == b.to_csv() and a.to_json() == b.to_json()
    assert [r.seed for r in a.reports] == [11, 12, 13, 11, 12, 13]


def test_compare_rejects_too_many_dims(rng):
    train, test = _pixel_sets(rng)
    with pytest.raises(DataError):
        ev.compare_methods(train, test, ["pca"], dims=7, runs=1)


def test_table_aggregate_statistics():
    table = ev.ComparisonTable()
    for run, v in enumerate([0.2, 0.4, 0.6]):
        table.add(metrics.EvalReport("pca", 2, "segmentation", {"iou": v}, run=run))
    agg = table.aggregate()["pca"]["iou"]
    assert agg["n"] == 3
    assert abs(agg["mean"] - 0.4) < 1e-12
    assert abs(agg["std"] - 0.2) < 1e-12
    assert abs(agg["stderr"] - 0.2 / np.sqrt(3)) < 1e-12
    doc = json.loads(table.to_json())
    assert doc["aggregate"]["pca"]["iou"]["n"] == 3
    assert table.to_csv().splitlines()[0] == "method,dims,run,metric,value"


def test_neighborhood_features_stack_3x3(rng):
    Z = np.arange(12, dtype=float).reshape(12, 1)
    pixels = ev.PixelSet(np.zeros((12, 1)), np.zeros(12), np.zeros(12), [(3, 4)])
    F = ev.neighborhood_features(Z, pixels)
    assert F.shape == (12, 9)
    # center pixel (1, 1) has value 5 and sees 0..2, 4..6, 8..10
    assert list(F[5]) == [0, 1, 2, 4, 5, 6, 8, 9, 10]
    # corner replicates edges
    assert list(F[0]) == [0, 0, 1, 0, 0, 1, 4, 4, 5]


def test_spatial_flag_keeps_reduced_dims(rng):
    train, test = _pixel_sets(rng)
    report = ev.evaluate_method("pca", 2, train, test, spatial=True)
    assert report.dims == 2 and len(report.mutual_information) == 2
