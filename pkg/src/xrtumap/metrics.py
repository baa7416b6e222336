"""Evaluation metrics: regression scores, mask overlap, mutual information and
trustworthiness, plus the :class:`EvalReport` container."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._layout import pair_sq_dists
from .errors import DataError

# weights for (mass, component A, component B)
DEFAULT_LOSS_WEIGHTS = (0.5, 5.0, 5.0)
DEFAULT_MI_BINS = 32


def s_score(p, t) -> float:
    """Per-target score ``exp(-sum|p - t| / sum t)`` over all samples."""
    p = np.asarray(p, dtype=np.float64).ravel()
    t = np.asarray(t, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise DataError("prediction and target lengths differ")
    total = t.sum()
    if not total > 0:
        raise DataError("target sum must be positive")
    return math.exp(-np.abs(p - t).sum() / total)


def s_scores(P, T) -> np.ndarray:
    """:func:`s_score` for every column of ``[N, M]`` predictions/targets."""
    P = np.asarray(P, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if P.shape != T.shape or P.ndim != 2:
        raise DataError("predictions and targets must be equal-shape [N, M] matrices")
    return np.array([s_score(P[:, i], T[:, i]) for i in range(P.shape[1])])


def sh_score(scores) -> float:
    """``M * prod(S) / sum(S)``; collapses towards 0 when any score does."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    if s.size == 0:
        raise DataError("need at least one score")
    if np.any((s < 0) | (s > 1)):
        raise DataError("scores must lie in [0, 1]")
    total = s.sum()
    if total <= 0:
        raise DataError("all scores are zero")
    return float(s.size * np.prod(s) / total)


def weighted_loss(p, t, weights=DEFAULT_LOSS_WEIGHTS) -> float:
    """Weighted squared relative error, summed over targets and averaged over
    samples. ``p`` and ``t`` are ``[N, M]`` (or a single ``[M]`` sample)."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64)
    if p.shape != t.shape or p.shape[1] != w.size:
        raise DataError("prediction, target and weight shapes disagree")
    if np.any(t == 0):
        raise DataError("targets must be non-zero")
    rel = (p - t) / t
    return float((rel**2 @ w).mean())


def _mask_pair(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DataError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a.astype(bool), b.astype(bool)


def iou(pred, ref) -> float:
    a, b = _mask_pair(pred, ref)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def dice(pred, ref) -> float:
    a, b = _mask_pair(pred, ref)
    total = np.count_nonzero(a) + np.count_nonzero(b)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(a & b) / total


def bin_feature(feature, bins: int = DEFAULT_MI_BINS, quantile: bool = False) -> np.ndarray:
    """Bin indices in ``[0, bins)``; equal-width over ``[min, max]`` by default."""
    x = np.asarray(feature, dtype=np.float64).ravel()
    if bins < 1:
        raise DataError("bins must be positive")
    lo, hi = x.min(), x.max()
    if hi == lo:
        return np.zeros(x.size, dtype=np.int64)
    if quantile:
        edges = np.quantile(x, np.linspace(0, 1, bins + 1)[1:-1])
        return np.searchsorted(edges, x, side="right").astype(np.int64)
    idx = np.floor((x - lo) / (hi - lo) * bins).astype(np.int64)
    return np.minimum(idx, bins - 1)


def mutual_information(feature, labels, bins: int = DEFAULT_MI_BINS, quantile: bool = False) -> float:
    """Plug-in MI in bits between a binned continuous feature and labels."""
    x = bin_feature(feature, bins, quantile)
    y = np.asarray(labels).ravel()
    if x.size != y.size:
        raise DataError("feature and labels lengths differ")
    if x.size < 2:
        raise DataError("need at least two samples")
    _, y = np.unique(y, return_inverse=True)
    joint = np.zeros((bins, y.max() + 1))
    np.add.at(joint, (x, y), 1.0)
    joint /= x.size
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    mi = (joint[nz] * np.log2(joint[nz] / (px @ py)[nz])).sum()
    return float(max(mi, 0.0))


def mutual_information_per_component(Z, labels, bins: int = DEFAULT_MI_BINS) -> list[float]:
    Z = np.asarray(Z)
    return [mutual_information(Z[:, i], labels, bins) for i in range(Z.shape[1])]


def _sq_dists(A, B):
    out = np.empty((A.shape[0], B.shape[0]))
    pair_sq_dists(np.ascontiguousarray(A), np.ascontiguousarray(B), out)
    return out


def trustworthiness(X_high, Y_low, k: int = 10, chunk: int = 256) -> float:
    """Trustworthiness of a low-dimensional embedding (1 = no false neighbors).

    Points that enter a low-dimensional k-neighborhood are penalized by how
    far outside the high-dimensional k-neighborhood they rank.
    """
    X = np.asarray(X_high, dtype=np.float64)
    Y = np.asarray(Y_low, dtype=np.float64)
    n = X.shape[0]
    if Y.shape[0] != n:
        raise DataError("X_high and Y_low have different sample counts")
    if not 1 <= k < n / 2:
        raise DataError(f"k must satisfy 1 <= k < N/2, got k={k}, N={n}")
    penalty = 0.0
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        dx = _sq_dists(X[rows], X)
        dy = _sq_dists(Y[rows], Y)
        dx[np.arange(rows.size), rows] = -1.0
        dy[np.arange(rows.size), rows] = -1.0
        order_x = np.argsort(dx, axis=1, kind="stable")
        ranks = np.empty_like(order_x)
        np.put_along_axis(ranks, order_x, np.arange(n)[None, :], axis=1)
        low_nn = np.argsort(dy, axis=1, kind="stable")[:, 1 : k + 1]
        r = np.take_along_axis(ranks, low_nn, axis=1)
        penalty += np.clip(r - k, 0, None).sum()
    return float(1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty)


@dataclass
class EvalReport:
    """Metric bundle for one (method, dims, run) cell."""

    method: str
    dims: int
    task: str  # "segmentation" or "regression"
    metrics: dict = field(default_factory=dict)
    mutual_information: list = field(default_factory=list)
    explained_variance_ratio: list | None = None
    component_labels: list = field(default_factory=list)
    run: int = 0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        missing = {"method", "dims", "task"} - set(d)
        if missing:
            raise DataError(f"report missing fields {sorted(missing)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))

    def rows(self) -> list[dict]:
        """Flat ``(metric, component, value)`` rows."""
        base = {"method": self.method, "dims": self.dims, "run": self.run}
        out = [dict(base, metric=name, component="", value=self.metrics[name])
               for name in sorted(self.metrics)]
        labels = self.component_labels or [str(i) for i in range(len(self.mutual_information))]
        out += [dict(base, metric="mi", component=lab, value=v)
                for lab, v in zip(labels, self.mutual_information)]
        if self.explained_variance_ratio is not None:
            out += [dict(base, metric="evr", component=lab, value=v)
                    for lab, v in zip(labels, self.explained_variance_ratio)]
        return out

    def to_csv(self) -> str:
        return rows_to_csv(self.rows())

    def save(self, stem) -> None:
        stem = Path(stem)
        stem.with_suffix(".json").write_text(self.to_json() + "\n")
        stem.with_suffix(".csv").write_text(self.to_csv())

    @classmethod
    def load(cls, path) -> "EvalReport":
        path = Path(path)
        try:
            return cls.from_json(path.read_text())
        except (OSError, json.JSONDecodeError, TypeError) as exc:
            raise DataError(f"{path}: not an evaluation report ({exc})") from exc


REPORT_COLUMNS = ["method", "dims", "run", "metric", "component", "value"]


def rows_to_csv(rows, columns=REPORT_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()
