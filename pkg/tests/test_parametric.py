import numpy as np
import pytest

from conftest import separation_ratio, two_blobs
from oracles import encoder_loss, gradient_check_draw
from xrtumap import manifold as mf
from xrtumap import parametric as pm
from xrtumap.errors import ConfigError, DataError

CURVE = mf.fit_curve(0.1, 1.0)


def test_zero_network_outputs_zero(rng):
    net = pm.init_encoder([6, 4, 3], seed=0)
    for p in net.params():
        p[...] = 0.0
    assert np.array_equal(pm.encoder_forward(net, rng.normal(size=(9, 6))), np.zeros((9, 3)))


def test_single_identity_layer(rng):
    net = pm.EncoderNet([np.eye(4)], [np.zeros(4)])
    X = rng.normal(size=(7, 4))
    assert np.array_equal(pm.encoder_forward(net, X), X)


def test_forward_matches_layer_oracle(rng):
    net = pm.init_encoder([5, 7, 6, 2], seed=3)
    X = rng.normal(size=(20, 5))
    h = X
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = np.einsum("nc,cd->nd", h, W) + b
        h = z if layer == 2 else np.where(z > 0, z, 0.0)
    assert np.allclose(pm.encoder_forward(net, X), h, atol=1e-6)


def test_forward_is_pure(rng):
    net = pm.init_encoder([5, 4, 2], seed=1)
    X = rng.normal(size=(10, 5))
    assert np.array_equal(pm.encoder_forward(net, X), pm.encoder_forward(net, X))


def test_forward_rejects_wrong_width(rng):
    net = pm.init_encoder([5, 4, 2])
    with pytest.raises(DataError):
        pm.encoder_forward(net, rng.normal(size=(3, 4)))


def test_init_glorot_bounds():
    net = pm.init_encoder([10, 30, 2], seed=0)
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 40)
    assert np.abs(net.weights[1]).max() <= np.sqrt(6 / 32)
    assert all(np.all(b == 0) for b in net.biases)


def test_empty_batch_gives_zero_loss_and_grads(rng):
    net = pm.init_encoder([4, 3, 2])
    loss, grads = pm.encoder_loss_and_grad(net, [], [], rng.normal(size=(5, 4)), *CURVE)
    assert loss == 0.0
    assert all(np.all(g == 0) for g in grads)


def test_loss_matches_loop_oracle(rng):
    net = pm.init_encoder([4, 5, 2], seed=2)
    X = rng.normal(size=(8, 4))
    edges = np.array([[0, 1, 0.7], [2, 5, 1.0], [3, 4, 0.2]])
    negs = np.array([[0, 6], [2, 7], [3, 1]])
    loss, _ = pm.encoder_loss_and_grad(net, edges, negs, X, *CURVE)
    expected = encoder_loss(
        [w.tolist() for w in net.weights], [b.tolist() for b in net.biases],
        X.tolist(), edges.tolist(), negs.tolist(), *CURVE,
    )
    assert abs(loss - expected) < 1e-9 * max(1.0, abs(expected))


@pytest.mark.parametrize("draw", range(10))
def test_gradient_matches_central_differences(draw):
    worst, checked, skipped = gradient_check_draw(draw)
    assert checked > 0.9 * (checked + skipped)
    assert worst < 1e-3


def test_coincident_positive_edge_has_no_loss(rng):
    net = pm.init_encoder([3, 4, 2], seed=0)
    X = rng.normal(size=(4, 3))
    X[1] = X[0]
    loss, grads = pm.encoder_loss_and_grad(net, [[0, 1, 1.0]], [], X, *CURVE)
    assert abs(loss) < 1e-12
    assert all(np.all(np.isfinite(g)) for g in grads)


def test_out_of_range_index_rejected(rng):
    net = pm.init_encoder([3, 2])
    with pytest.raises(DataError):
        pm.encoder_loss_and_grad(net, [[0, 9, 1.0]], [], rng.normal(size=(4, 3)), *CURVE)


def test_train_config_validation():
    with pytest.raises(ConfigError):
        pm.TrainConfig(batch_edges=0)
    with pytest.raises(ConfigError):
        pm.TrainConfig(step_size=-1.0)


# --- training ---------------------------------------------------------------


@pytest.fixture(scope="module")
def blobs():
    X, y = two_blobs(n_per=50, dims=10, gap=8.0)
    graph = mf.calibrate_bandwidths(mf.knn_graph(X, 15))
    return X, y, mf.fuzzy_simplicial_set(graph)


@pytest.fixture(scope="module")
def trained(blobs):
    X, _, fs = blobs
    val = pm.sample_validation_set(fs, 4096, 5, seed=99)
    result = pm.train_parametric(X, fs, pm.TrainConfig(epochs=50), CURVE, 2, validation=val)
    return result, val


def test_zero_epochs_returns_initial_net(blobs):
    X, _, fs = blobs
    result = pm.train_parametric(X, fs, pm.TrainConfig(epochs=0, seed=4), CURVE, 2)
    fresh = pm.init_encoder([10, 64, 64, 2], seed=4)
    assert all(np.array_equal(p, q) for p, q in zip(result.net.params(), fresh.params()))
    assert result.loss_trace == []


def test_training_separates_clusters(blobs, trained):
    X, y, _ = blobs
    Y = pm.encoder_forward(trained[0].net, X)
    assert separation_ratio(Y, y) > 5


def test_validation_trace_smoothed_non_increasing(trained):
    v = np.array(trained[0].val_trace)
    n = v.size // 20 * 20
    windows = v[:n].reshape(-1, 20).mean(axis=1)
    assert np.all(np.diff(windows) <= 0)


def test_training_is_reproducible(blobs):
    X, _, fs = blobs
    cfg = pm.TrainConfig(epochs=3, seed=5)
    a = pm.train_parametric(X, fs, cfg, CURVE, 2)
    b = pm.train_parametric(X, fs, cfg, CURVE, 2)
    assert all(np.array_equal(p, q) for p, q in zip(a.net.params(), b.net.params()))
    assert a.loss_trace == b.loss_trace


def test_projection_consistency_with_nonparametric(blobs, trained):
    X, _, fs = blobs
    result, val = trained
    param_loss = pm.validation_loss(result.net, X, val, *CURVE)
    fit = mf.umap_fit(X, mf.UmapParams(n_neighbors=15, seed=0))
    edges, negs = val
    ref_loss = pm.embedding_loss_and_grad(fit.embedding.coords, edges, negs, *CURVE)[0] / len(edges)
    assert abs(param_loss - ref_loss) <= 0.2 * ref_loss


def test_training_rejects_mismatched_graph(blobs):
    X, _, fs = blobs
    with pytest.raises(DataError):
        pm.train_parametric(X[:10], fs, pm.TrainConfig(epochs=1), CURVE, 2)


def test_save_load_round_trip(trained, tmp_path, rng):
    net = trained[0].net
    pm.save_encoder(net, tmp_path / "enc.json", curve=CURVE, config=pm.TrainConfig())
    back, meta = pm.load_encoder(tmp_path / "enc.json")
    X = rng.normal(size=(5, 10))
    assert np.array_equal(pm.encoder_forward(back, X), pm.encoder_forward(net, X))
    assert meta["sizes"] == [10, 64, 64, 2]
    assert tuple(meta["curve"]) == CURVE
