"""Downstream feature-quality evaluation.

A shallow per-pixel model (softmax classifier or linear regressor) is
trained on reduced features; its test scores rank the reduction methods.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics
from .errors import DataError, NumericalError
from .hypercube import flatten_pixels, reshape_pixels
from .reducers import make_reducer

MAX_HALVINGS = 40


@dataclass
class ShallowModel:
    kind: str  # "softmax-classifier" or "linear-regressor"
    weights: np.ndarray  # [D + 1, K], last row is the bias
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    classes: np.ndarray | None = None
    target_mean: np.ndarray | None = None
    target_scale: np.ndarray | None = None
    trace: list = field(default_factory=list)

    def _design(self, features):
        F = np.asarray(features, dtype=np.float64)
        if F.ndim != 2 or F.shape[1] != self.feature_mean.size:
            raise DataError(f"expected [N, {self.feature_mean.size}] features, got {F.shape}")
        Z = (F - self.feature_mean) / self.feature_scale
        return np.hstack([Z, np.ones((Z.shape[0], 1))])

    def decision(self, features) -> np.ndarray:
        return self._design(features) @ self.weights

    def predict(self, features) -> np.ndarray:
        out = self.decision(features)
        if self.kind == "softmax-classifier":
            return self.classes[np.argmax(out, axis=1)]
        return out * self.target_scale + self.target_mean


def _softmax_loss(W, A, Y):
    """Cross-entropy where ``Y`` rows are one-hot labels scaled by class weight."""
    logits = A @ W
    logits -= logits.max(axis=1, keepdims=True)
    logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    sw = Y.sum(axis=1, keepdims=True)
    loss = -(Y * logp).sum() / A.shape[0]
    grad = A.T @ (sw * np.exp(logp) - Y) / A.shape[0]
    return loss, grad


def _mse_loss(W, A, T):
    r = A @ W - T
    return (r * r).sum() / r.size, 2.0 * A.T @ r / r.size


def _standardize(X):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    return mean, scale


def _whitener(Z, floor=1e-10):
    """Maps standardized features to uncorrelated unit-variance ones.

    Correlated features (typical of encoder outputs) leave plain gradient
    descent crawling along a narrow valley; whitening makes every direction
    equally curved without changing what a linear model can express.
    Directions with variance below ``floor`` times the largest are dropped.
    """
    lam, vec = np.linalg.eigh(Z.T @ Z / Z.shape[0])
    keep = lam > floor * max(lam.max(), 0.0)
    if not keep.any():
        return np.eye(Z.shape[1])
    return vec[:, keep] / np.sqrt(lam[keep])


def fit_shallow(features, targets, epochs: int = 200, step: float = 1.0, seed: int = 0,
                kind: str | None = None, balanced: bool = True) -> ShallowModel:
    """Full-batch gradient descent with step halving whenever the loss would
    increase, so the recorded loss trace never goes up.

    Integer 1-D targets train a softmax classifier, real targets a linear
    regressor (override with ``kind``). Features are standardized with the
    training statistics, which the model keeps, and whitened for the descent. ``balanced`` weights each
    class by ``N / (K * count)`` in the classification loss.
    """
    F = np.asarray(features, dtype=np.float64)
    T = np.asarray(targets)
    if F.ndim != 2 or not np.all(np.isfinite(F)):
        raise DataError("features must be a finite [N, D] matrix")
    if T.shape[0] != F.shape[0]:
        raise DataError("features and targets have different sample counts")
    if kind is None:
        discrete = T.dtype == bool or np.issubdtype(T.dtype, np.integer)
        kind = "softmax-classifier" if T.ndim == 1 and discrete else "linear-regressor"
    f_mean, f_scale = _standardize(F)
    rotate = _whitener((F - f_mean) / f_scale)
    A = np.hstack([(F - f_mean) / f_scale @ rotate, np.ones((F.shape[0], 1))])
    model = ShallowModel(kind, None, f_mean, f_scale)
    if kind == "softmax-classifier":
        classes, y = np.unique(T, return_inverse=True)
        if classes.size < 2:
            raise DataError("classification needs at least two classes")
        if F.shape[0] < classes.size:
            raise DataError("fewer samples than classes")
        Y = np.eye(classes.size)[y]
        if balanced:
            counts = np.bincount(y, minlength=classes.size)
            Y *= (y.size / (classes.size * counts))[y][:, None]
        model.classes = classes
        objective = _softmax_loss
    elif kind == "linear-regressor":
        T = T.astype(np.float64).reshape(F.shape[0], -1)
        if not np.all(np.isfinite(T)):
            raise DataError("regression targets must be finite")
        model.target_mean, model.target_scale = _standardize(T)
        Y = (T - model.target_mean) / model.target_scale
        objective = _mse_loss
    else:
        raise DataError(f"unknown shallow model kind {kind!r}")
    rng = np.random.default_rng(seed)
    W = rng.normal(scale=0.01, size=(A.shape[1], Y.shape[1]))
    loss, grad = objective(W, A, Y)
    trace = [loss]
    for epoch in range(epochs):
        for _ in range(MAX_HALVINGS):
            trial = W - step * grad
            new_loss, new_grad = objective(trial, A, Y)
            if not math.isfinite(new_loss):
                raise NumericalError("shallow model loss is not finite", step=epoch)
            if new_loss <= loss:
                W, loss, grad = trial, new_loss, new_grad
                break
            step *= 0.5
        trace.append(loss)
    # descent ran on whitened features; fold the rotation back in
    model.weights = np.vstack([rotate @ W[:-1], W[-1:]])
    model.trace = trace
    return model


def random_shallow(n_features: int, classes=(0, 1), seed: int = 0) -> ShallowModel:
    """Untrained classifier with random weights; a chance-level baseline."""
    rng = np.random.default_rng(seed)
    return ShallowModel(
        "softmax-classifier",
        rng.normal(size=(n_features + 1, len(classes))),
        np.zeros(n_features),
        np.ones(n_features),
        classes=np.asarray(classes),
    )


def evaluate_pixelwise(model: ShallowModel, features, reference, method: str = "",
                       image_ids=None, explained_variance=None, mi_bins: int = metrics.DEFAULT_MI_BINS,
                       run: int = 0, seed: int = 0) -> metrics.EvalReport:
    """Score a model on held-out pixels.

    Classifiers report pooled IoU and Dice of the positive class (label 1),
    plus accuracy and per-image means when ``image_ids`` is given.
    Regressors report one S score per target column and the SH score.
    """
    F = np.asarray(features, dtype=np.float64)
    ref = np.asarray(reference)
    if ref.shape[0] != F.shape[0]:
        raise DataError("features and reference have different sample counts")
    pred = model.predict(F)
    report = metrics.EvalReport(
        method=method, dims=F.shape[1],
        task="segmentation" if model.kind == "softmax-classifier" else "regression",
        run=run, seed=seed,
        component_labels=[f"c{i}" for i in range(F.shape[1])],
    )
    if model.kind == "softmax-classifier":
        pos = model.classes[-1]
        p_mask = pred == pos
        r_mask = ref == pos
        report.metrics["iou"] = metrics.iou(p_mask, r_mask)
        report.metrics["dice"] = metrics.dice(p_mask, r_mask)
        report.metrics["accuracy"] = float(np.mean(pred == ref))
        if image_ids is not None:
            ids = np.asarray(image_ids)
            per = [(metrics.iou(p_mask[ids == i], r_mask[ids == i]),
                    metrics.dice(p_mask[ids == i], r_mask[ids == i])) for i in np.unique(ids)]
            report.metrics["iou_image_mean"] = float(np.mean([p[0] for p in per]))
            report.metrics["dice_image_mean"] = float(np.mean([p[1] for p in per]))
        report.mutual_information = metrics.mutual_information_per_component(F, ref, mi_bins)
    else:
        T = ref.astype(np.float64).reshape(F.shape[0], -1)
        P = np.asarray(pred).reshape(T.shape)
        scores = metrics.s_scores(P, T)
        for i, s in enumerate(scores):
            report.metrics[f"s_{i}"] = float(s)
        report.metrics["sh"] = metrics.sh_score(scores)
    if explained_variance is not None:
        report.explained_variance_ratio = [float(v) for v in explained_variance]
    return report


# ---------------------------------------------------------------------------
# method comparison
# ---------------------------------------------------------------------------


@dataclass
class PixelSet:
    """Pixels of several images stacked into one matrix."""

    X: np.ndarray
    y: np.ndarray
    image_ids: np.ndarray
    shapes: list
    masks: list | None = None

    @classmethod
    def from_cubes(cls, cubes, references, masks=None) -> "PixelSet":
        """``references`` are label masks ``[H, W]`` or target maps ``[H, W, M]``;
        ``masks`` optionally restrict which pixels are used."""
        if len(cubes) != len(references) or (masks is not None and len(masks) != len(cubes)):
            raise DataError("need one reference (and mask) per cube")
        xs, ys, ids = [], [], []
        for i, (cube, ref) in enumerate(zip(cubes, references)):
            ref = np.asarray(ref)
            if ref.shape[:2] != (cube.height, cube.width):
                raise DataError(f"reference {i} shape {ref.shape} does not match cube")
            sel = None if masks is None else np.asarray(masks[i], dtype=bool)
            xs.append(flatten_pixels(cube, sel))
            flat = ref.reshape(cube.height * cube.width, -1)
            if sel is not None:
                flat = flat[sel.ravel()]
            ys.append(flat[:, 0] if ref.ndim == 2 else flat)
            ids.append(np.full(xs[-1].shape[0], i))
        return cls(np.vstack(xs), np.concatenate(ys), np.concatenate(ids),
                   [c.shape[:2] for c in cubes], None if masks is None else list(masks))


def neighborhood_features(Z, pixels: PixelSet) -> np.ndarray:
    """Concatenate each pixel's 3x3 neighborhood (edge-replicated)."""
    if pixels.masks is not None:
        raise DataError("neighborhood features need full images, not masked pixels")
    out, start = [], 0
    for h, w in pixels.shapes:
        img = reshape_pixels(Z[start : start + h * w], h, w)
        start += h * w
        padded = np.pad(img, ((1, 1), (1, 1), (0, 0)), mode="edge")
        shifts = [padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy in (-1, 0, 1) for dx in (-1, 0, 1)]
        out.append(np.concatenate(shifts, axis=-1).reshape(h * w, -1))
    return np.vstack(out)


@dataclass
class ComparisonTable:
    rows: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    def aggregate(self) -> dict:
        """``{method: {metric: {mean, std, stderr, n}}}`` over runs."""
        values: dict = {}
        for r in self.rows:
            values.setdefault(r["method"], {}).setdefault(r["metric"], []).append(r["value"])
        out = {}
        for method, per_metric in values.items():
            out[method] = {}
            for metric, v in per_metric.items():
                v = np.asarray(v, dtype=np.float64)
                std = float(v.std(ddof=1)) if v.size > 1 else 0.0
                out[method][metric] = {
                    "mean": float(v.mean()), "std": std,
                    "stderr": std / math.sqrt(v.size), "n": int(v.size),
                }
        return out

    def add(self, report: metrics.EvalReport) -> None:
        self.reports.append(report)
        for name in sorted(report.metrics):
            self.rows.append({"method": report.method, "dims": report.dims, "run": report.run,
                              "metric": name, "value": report.metrics[name]})

    def mean(self, method: str, metric: str) -> float:
        return self.aggregate()[method][metric]["mean"]

    def to_csv(self) -> str:
        return metrics.rows_to_csv(self.rows, ["method", "dims", "run", "metric", "value"])

    def to_json(self) -> str:
        doc = {
            "rows": self.rows,
            "aggregate": self.aggregate(),
            "reports": [r.to_dict() for r in self.reports],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def save(self, stem) -> None:
        stem = Path(stem)
        stem.with_suffix(".csv").write_text(self.to_csv())
        stem.with_suffix(".json").write_text(self.to_json() + "\n")


def evaluate_method(method, dims, train: PixelSet, test: PixelSet, seed=0, run=0,
                    epochs=200, step=1.0, spatial=False, **reducer_options) -> metrics.EvalReport:
    """Reduce, fit the shallow model on train pixels, score on test pixels."""
    if method == "raw":
        dims = train.X.shape[1]
    reducer = make_reducer(method, dims, seed=seed, **reducer_options)
    reducer.fit(train.X)
    Ztr, Zte = reducer.transform(train.X), reducer.transform(test.X)
    if spatial:
        Ftr, Fte = neighborhood_features(Ztr, train), neighborhood_features(Zte, test)
    else:
        Ftr, Fte = Ztr, Zte
    model = fit_shallow(Ftr, train.y, epochs=epochs, step=step, seed=seed)
    report = evaluate_pixelwise(
        model, Fte, test.y, method=method, image_ids=test.image_ids,
        explained_variance=reducer.explained_variance_ratio, run=run, seed=seed,
    )
    if spatial:
        # per-component MI refers to the reduced features, not the 3x3 stack
        report.dims = Zte.shape[1]
        report.component_labels = [f"c{i}" for i in range(Zte.shape[1])]
        if report.task == "segmentation":
            report.mutual_information = metrics.mutual_information_per_component(Zte, test.y)
    return report


def compare_methods(train: PixelSet, test: PixelSet, methods, dims: int, runs: int = 10,
                    seed: int = 0, **options) -> ComparisonTable:
    """Every method is run ``runs`` times with seed ``seed + run``."""
    if dims > train.X.shape[1]:
        raise DataError(f"dims {dims} exceeds band count {train.X.shape[1]}")
    table = ComparisonTable()
    for method in methods:
        for run in range(runs):
            table.add(evaluate_method(method, dims, train, test, seed=seed + run, run=run, **options))
    return table
