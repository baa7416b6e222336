"""Linear reduction baselines: PCA and multiplicative-update NMF."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import store
from .errors import DataError

NMF_EPS = 1e-12
NMF_REL_TOL = 1e-6


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # [D, C], rows orthonormal
    explained_variance_ratio: np.ndarray
    scale: np.ndarray | None = None  # per-band std when fitted with standardize=True

    @property
    def dim(self) -> int:
        return self.components.shape[0]


@dataclass
class NmfModel:
    basis: np.ndarray  # [D, C]
    reconstruction_error: float
    error_trace: list = field(default_factory=list)

    @property
    def rank(self) -> int:
        return self.basis.shape[0]


def _check_matrix(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} must be a 2-D pixel matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError(f"{name} contains non-finite values")
    return X


def pca_fit(X, dim: int, standardize: bool = False) -> PcaModel:
    """Top-``dim`` principal axes from the band covariance matrix."""
    X = _check_matrix(X)
    n, c = X.shape
    if n < 2:
        raise DataError("PCA needs at least two samples")
    if not 1 <= dim <= min(n, c):
        raise DataError(f"PCA dimension {dim} outside [1, {min(n, c)}]")
    mean = X.mean(axis=0)
    Xc = X - mean
    scale = None
    if standardize:
        scale = Xc.std(axis=0)
        scale[scale == 0] = 1.0
        Xc = Xc / scale
    cov = Xc.T @ Xc / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order[:dim]].T.copy()
    # make each component's largest-magnitude entry positive
    pivot = np.argmax(np.abs(evecs), axis=1)
    signs = np.sign(evecs[np.arange(dim), pivot])
    evecs *= signs[:, None]
    total = evals.sum()
    ratio = evals[:dim] / total if total > 0 else np.zeros(dim)
    return PcaModel(mean=mean, components=evecs, explained_variance_ratio=ratio, scale=scale)


def pca_transform(model: PcaModel, X) -> np.ndarray:
    X = _check_matrix(X)
    if X.shape[1] != model.mean.shape[0]:
        raise DataError(f"expected {model.mean.shape[0]} columns, got {X.shape[1]}")
    Xc = X - model.mean
    if model.scale is not None:
        Xc = Xc / model.scale
    return Xc @ model.components.T


def pca_inverse(model: PcaModel, Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    Xc = Z @ model.components
    if model.scale is not None:
        Xc = Xc * model.scale
    return Xc + model.mean


def _frobenius(X, W, H) -> float:
    return float(np.linalg.norm(X - W @ H))


def nmf_fit(X, rank: int, iters: int = 200, seed: int = 0) -> tuple[NmfModel, np.ndarray]:
    """Lee-Seung multiplicative updates for ``X ~ W @ H`` under Frobenius loss.

    Returns the model (basis ``H``) and the training weights ``W``.
    """
    X = _check_matrix(X)
    n, c = X.shape
    if np.any(X < 0):
        raise DataError("NMF input must be non-negative")
    if not np.any(X > 0):
        raise DataError("NMF input is the zero matrix")
    if not 1 <= rank <= min(n, c):
        raise DataError(f"NMF rank {rank} outside [1, {min(n, c)}]")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(X.mean() / rank)
    # uniform on (0, 1]
    W = (1.0 - rng.random((n, rank))) * scale
    H = (1.0 - rng.random((rank, c))) * scale
    err = _frobenius(X, W, H)
    trace = [err]
    for _ in range(iters):
        H *= (W.T @ X) / (W.T @ W @ H + NMF_EPS)
        W *= (X @ H.T) / (W @ (H @ H.T) + NMF_EPS)
        new = _frobenius(X, W, H)
        trace.append(new)
        improved = err - new
        err = new
        if improved < NMF_REL_TOL * max(trace[-2], NMF_EPS):
            break
    return NmfModel(basis=H, reconstruction_error=err, error_trace=trace), W


def nmf_transform(model: NmfModel, X, iters: int = 500, return_trace: bool = False):
    """Non-negative weights for ``X`` with the basis held fixed."""
    X = _check_matrix(X)
    H = model.basis
    if X.shape[1] != H.shape[1]:
        raise DataError(f"expected {H.shape[1]} columns, got {X.shape[1]}")
    if np.any(X < 0):
        raise DataError("NMF input must be non-negative")
    mean = X.mean()
    W = np.full((X.shape[0], model.rank), np.sqrt(mean / model.rank) if mean > 0 else 0.0)
    HHt = H @ H.T
    XHt = X @ H.T
    trace = [_frobenius(X, W, H)]
    for _ in range(iters):
        W *= XHt / (W @ HHt + NMF_EPS)
        if return_trace:
            trace.append(_frobenius(X, W, H))
    if return_trace:
        return W, trace
    return W


def save_pca(model: PcaModel, path) -> None:
    arrays = {
        "mean": model.mean,
        "components": model.components,
        "explained_variance_ratio": model.explained_variance_ratio,
    }
    if model.scale is not None:
        arrays["scale"] = model.scale
    store.save_bundle(path, "pca", {"dim": model.dim}, arrays)


def load_pca(path) -> PcaModel:
    _, a = store.load_bundle(path, "pca")
    return PcaModel(a["mean"], a["components"], a["explained_variance_ratio"], a.get("scale"))


def save_nmf(model: NmfModel, path) -> None:
    meta = {
        "rank": model.rank,
        "reconstruction_error": model.reconstruction_error,
        "error_trace": list(model.error_trace),
    }
    store.save_bundle(path, "nmf", meta, {"basis": model.basis})


def load_nmf(path) -> NmfModel:
    meta, a = store.load_bundle(path, "nmf")
    return NmfModel(a["basis"], meta["reconstruction_error"], meta["error_trace"])
