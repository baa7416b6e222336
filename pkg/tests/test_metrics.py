import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from xrtumap.errors import DataError
from xrtumap.metrics import (
    EvalReport,
    dice,
    iou,
    mutual_information,
    s_score,
    s_scores,
    sh_score,
    trustworthiness,
    weighted_loss,
)


def test_s_score_examples():
    assert s_score([1, 2], [1, 2]) == 1.0
    assert s_score([0], [1]) == pytest.approx(0.36788, abs=1e-5)
    assert s_score([2, 0], [1, 1]) == pytest.approx(math.exp(-1), rel=1e-12)


def test_s_score_requires_positive_target_sum():
    with pytest.raises(DataError):
        s_score([1.0], [0.0])


def test_s_score_strictly_decreasing_in_error(rng):
    t = rng.uniform(0.5, 2, 20)
    scores = [s_score(t + e, t) for e in (0.0, 0.1, 0.2, 0.5)]
    assert all(b < a for a, b in zip(scores, scores[1:]))


def test_s_scores_columns(rng):
    P, T = rng.uniform(size=(30, 3)), rng.uniform(0.1, 1, size=(30, 3))
    assert np.allclose(s_scores(P, T), [s_score(P[:, i], T[:, i]) for i in range(3)])


def test_sh_examples():
    assert sh_score([1, 1, 1]) == 1.0
    assert sh_score([0.5, 1.0]) == pytest.approx(2 * 0.5 / 1.5, rel=1e-12)
    assert sh_score([0.9, 0.0001, 0.8]) < 0.001 * 3


def test_sh_single_target_follows_formula():
    # M * prod / sum is identically 1 for one score
    assert sh_score([0.42]) == 1.0


def test_sh_errors():
    with pytest.raises(DataError):
        sh_score([0.0, 0.0])
    with pytest.raises(DataError):
        sh_score([1.2])
    with pytest.raises(DataError):
        sh_score([])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=6))
def test_sh_bounded(scores):
    v = sh_score(scores)
    assert 0.0 <= v <= 1.0 + 1e-12


def test_weighted_loss_examples():
    t = np.array([[1.0, 2.0, 4.0]])
    assert weighted_loss(t, t) == 0.0
    assert weighted_loss(t * 1.1, t) == pytest.approx(0.105, rel=1e-9)
    assert weighted_loss(t * 1.1, t, (1.0, 10.0, 10.0)) == pytest.approx(0.21, rel=1e-9)


def test_weighted_loss_zero_iff_equal(rng):
    t = rng.uniform(0.5, 1, size=(10, 3))
    p = t.copy()
    assert weighted_loss(p, t) == 0.0
    p[3, 1] += 1e-9
    assert weighted_loss(p, t) > 0.0


def test_weighted_loss_zero_target():
    with pytest.raises(DataError):
        weighted_loss([[1.0, 1.0, 1.0]], [[1.0, 0.0, 1.0]])


def test_mask_examples():
    a = np.array([1, 1, 0, 0])
    assert iou(a, a) == 1 and dice(a, a) == 1
    assert iou(a, 1 - a) == 0 and dice(a, 1 - a) == 0
    b = np.array([0, 1, 1, 0])
    assert iou(a, b) == pytest.approx(1 / 3)
    assert dice(a, b) == pytest.approx(1 / 2)
    assert iou(np.zeros(3), np.zeros(3)) == 1.0 and dice(np.zeros(3), np.zeros(3)) == 1.0


def test_mask_shape_mismatch():
    with pytest.raises(DataError):
        iou(np.zeros((2, 2)), np.zeros(4))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=40))
def test_dice_iou_identity(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    j = iou(a, b)
    assert dice(a, b) == pytest.approx(2 * j / (1 + j), rel=1e-12, abs=1e-15)


def test_mi_examples(rng):
    x = rng.normal(size=200)
    assert mutual_information(x, np.zeros(200, dtype=int)) == 0.0
    y = np.repeat([0, 1], 100)
    assert mutual_information(y.astype(float), y, bins=2) == pytest.approx(1.0, abs=1e-12)
    assert mutual_information(np.ones(10), np.arange(10) % 2) == 0.0


def test_mi_entropy_bound(rng):
    for _ in range(50):
        x = rng.normal(size=100)
        y = rng.integers(0, 3, 100)
        mi = mutual_information(x, y, bins=8)
        hx = oracles.entropy(oracles.equal_width_bins(list(x), 8))
        hy = oracles.entropy(list(y))
        assert -1e-12 <= mi <= min(hx, hy) + 1e-9


def test_mi_affine_invariant(rng):
    x = rng.normal(size=300)
    y = (x + rng.normal(scale=0.5, size=300) > 0).astype(int)
    base = mutual_information(x, y)
    assert mutual_information(3.0 * x + 7.0, y) == pytest.approx(base, abs=1e-12)


def test_mi_quantile_option(rng):
    x = rng.exponential(size=400)
    y = (x > 1).astype(int)
    assert mutual_information(x, y, bins=4, quantile=True) > 0.5


def test_trustworthiness_identity(rng):
    X = rng.normal(size=(60, 4))
    assert trustworthiness(X, X, k=5) == pytest.approx(1.0)


def test_trustworthiness_matches_rank_oracle(rng):
    X = rng.normal(size=(40, 5))
    Y = rng.permutation(X)[:, :2]
    got = trustworthiness(X, Y, k=5, chunk=7)
    assert got == pytest.approx(oracles.trustworthiness(X.tolist(), Y.tolist(), 5), abs=1e-12)
    assert got < 0.9


def test_trustworthiness_rotation_invariant(rng):
    X = rng.normal(size=(80, 6))
    Y = X[:, :2] + 0.1 * rng.normal(size=(80, 2))
    q, _ = np.linalg.qr(rng.normal(size=(2, 2)))
    assert trustworthiness(X, Y @ q, k=7) == pytest.approx(trustworthiness(X, Y, k=7), abs=1e-12)


def test_trustworthiness_degenerate_k(rng):
    with pytest.raises(DataError):
        trustworthiness(rng.normal(size=(10, 2)), rng.normal(size=(10, 2)), k=5)


def test_report_round_trip(tmp_path):
    rep = EvalReport("umap", 3, "segmentation", {"iou": 0.1 + 0.2, "dice": 1 / 3},
                     [0.5, 0.25, 1e-17], [0.7, 0.2, 0.1], ["c0", "c1", "c2"], run=2, seed=9)
    assert EvalReport.from_json(rep.to_json()) == rep
    rep.save(tmp_path / "r")
    assert EvalReport.load(tmp_path / "r.json") == rep
    csv_text = (tmp_path / "r.csv").read_text().splitlines()
    assert csv_text[0] == "method,dims,run,metric,component,value"
    assert len(csv_text) == 1 + 2 + 3 + 3


def test_report_load_rejects_other_json(tmp_path):
    (tmp_path / "x.json").write_text('{"foo": 1}')
    with pytest.raises(DataError):
        EvalReport.load(tmp_path / "x.json")
