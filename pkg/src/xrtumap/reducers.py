"""Uniform fit/transform/save wrappers around every reduction method."""

from __future__ import annotations

from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import baselines, manifold, parametric, store
from .errors import ConfigError, DataError

METHODS = ("raw", "pca", "nmf", "umap", "parametric-umap")


def subsample(n: int, fraction: float, seed: int, minimum: int = 64) -> np.ndarray:
    """Sorted row indices of a seeded random subset."""
    if not 0 < fraction <= 1:
        raise ConfigError("fit fraction must be in (0, 1]")
    size = min(n, max(minimum, int(round(fraction * n))))
    if size == n:
        return np.arange(n)
    return np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))


class Reducer:
    method = ""
    explained_variance_ratio = None

    def __init__(self, dims: int):
        self.dims = dims

    def fit(self, X):
        raise NotImplementedError

    def transform(self, X) -> np.ndarray:
        raise NotImplementedError

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def save(self, path) -> None:
        raise NotImplementedError


class RawReducer(Reducer):
    method = "raw"

    def fit(self, X):
        X = np.asarray(X)
        if self.dims != X.shape[1]:
            raise ConfigError(f"raw features keep all {X.shape[1]} bands, not {self.dims}")
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1] != self.dims:
            raise DataError(f"expected {self.dims} columns, got {X.shape[1]}")
        return X.copy()

    def save(self, path):
        store.save_bundle(path, "raw", {"dims": self.dims}, {})


class PcaReducer(Reducer):
    method = "pca"

    def __init__(self, dims, standardize=False, model=None):
        super().__init__(dims)
        self.standardize = standardize
        self.model = model

    @property
    def explained_variance_ratio(self):
        return None if self.model is None else self.model.explained_variance_ratio

    def fit(self, X):
        self.model = baselines.pca_fit(X, self.dims, standardize=self.standardize)
        return self

    def transform(self, X):
        return baselines.pca_transform(self.model, X)

    def save(self, path):
        baselines.save_pca(self.model, path)


class NmfReducer(Reducer):
    method = "nmf"

    def __init__(self, dims, seed=0, iters=300, transform_iters=300, model=None):
        super().__init__(dims)
        self.seed = seed
        self.iters = iters
        self.transform_iters = transform_iters
        self.model = model

    def fit(self, X):
        self.model, _ = baselines.nmf_fit(X, self.dims, self.iters, self.seed)
        return self

    def transform(self, X):
        # train and test pixels are projected the same way
        return baselines.nmf_transform(self.model, X, self.transform_iters)

    def save(self, path):
        baselines.save_nmf(self.model, path)


class UmapReducer(Reducer):
    method = "umap"

    def __init__(self, dims, params=None, fit_fraction=1.0, refine_epochs=0, init="spectral", fitted=None):
        super().__init__(dims)
        params = params or manifold.UmapParams()
        self.params = replace(params, target_dim=dims)
        self.fit_fraction = fit_fraction
        self.refine_epochs = refine_epochs
        self.init = init
        self.fitted = fitted
        self.parallel = False  # Hogwild SGD; faster but not reproducible

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        rows = subsample(X.shape[0], self.fit_fraction, self.params.seed)
        self.fitted = manifold.umap_fit(X[rows], self.params, init=self.init, parallel=self.parallel)
        return self

    def transform(self, X):
        return manifold.transform_new(self.fitted, X, self.refine_epochs, parallel=self.parallel)

    def save(self, path):
        manifold.save_umap(self.fitted, path)


class ParametricReducer(Reducer):
    method = "parametric-umap"

    def __init__(self, dims, params=None, train=None, fit_fraction=1.0, net=None):
        super().__init__(dims)
        params = params or manifold.UmapParams()
        self.params = replace(params, target_dim=dims)
        self.train = train or parametric.TrainConfig(seed=self.params.seed)
        self.fit_fraction = fit_fraction
        self.net = net
        self.curve = None

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        rows = subsample(X.shape[0], self.fit_fraction, self.params.seed)
        sub = X[rows]
        p = self.params
        graph = manifold.calibrate_bandwidths(manifold.knn_graph(sub, p.n_neighbors))
        fs = manifold.fuzzy_simplicial_set(graph)
        self.curve = manifold.fit_curve(p.min_dist, p.spread)
        self.net = parametric.train_parametric(sub, fs, self.train, self.curve, self.dims).net
        return self

    def transform(self, X):
        return parametric.encoder_forward(self.net, X)

    def save(self, path):
        parametric.save_encoder(self.net, path, self.curve, self.train)


def make_reducer(method: str, dims: int, seed: int = 0, umap_params=None,
                 fit_fraction: float = 1.0, train_config=None, **options) -> Reducer:
    if method == "raw":
        return RawReducer(dims)
    if method == "pca":
        return PcaReducer(dims, standardize=options.get("standardize", False))
    if method == "nmf":
        return NmfReducer(dims, seed=seed, iters=options.get("nmf_iters", 300))
    params = replace(umap_params or manifold.UmapParams(), seed=seed)
    if method == "umap":
        return UmapReducer(dims, params, fit_fraction, options.get("refine_epochs", 0))
    if method == "parametric-umap":
        train = replace(train_config or parametric.TrainConfig(), seed=seed)
        return ParametricReducer(dims, params, train, fit_fraction)
    raise ConfigError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")


def load_reducer(path) -> Reducer:
    kind = store.bundle_kind(path)
    if kind == "raw":
        meta, _ = store.load_bundle(path, "raw")
        return RawReducer(meta["dims"])
    if kind == "pca":
        model = baselines.load_pca(path)
        return PcaReducer(model.dim, model.scale is not None, model)
    if kind == "nmf":
        model = baselines.load_nmf(path)
        return NmfReducer(model.rank, model=model)
    if kind == "umap":
        fitted = manifold.load_umap(path)
        return UmapReducer(fitted.params.target_dim, fitted.params, fitted=fitted)
    if kind == "encoder":
        net, meta = parametric.load_encoder(path)
        r = ParametricReducer(net.sizes[-1], net=net)
        r.curve = tuple(meta.get("curve", ())) or None
        return r
    raise DataError(f"{Path(path)}: unknown model kind {kind!r}")


def describe(reducer: Reducer) -> dict:
    out = {"method": reducer.method, "dims": reducer.dims}
    if isinstance(reducer, (UmapReducer, ParametricReducer)):
        out["umap"] = asdict(reducer.params)
        out["fit_fraction"] = reducer.fit_fraction
    return out
