"""UMAP: neighbor graph, fuzzy simplicial set and layout optimization.

The pipeline is ``knn_graph -> calibrate_bandwidths -> fuzzy_simplicial_set
-> initialize_embedding -> optimize_embedding``; :func:`umap_fit` chains
them and :func:`transform_new` places unseen points against a fitted model.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _layout, store
from .errors import ConfigError, DataError, NumericalError

log = logging.getLogger(__name__)

MIN_SIGMA = 1e-3
MAX_SIGMA = 1e6
CALIBRATION_TOL = 1e-5
CALIBRATION_ITERS = 64
WEIGHT_FLOOR = 1e-9
MAX_COMPONENTS = 10
KNN_CHUNK_BYTES = 32 * 2**20


@dataclass(frozen=True)
class UmapParams:
    n_neighbors: int = 15
    min_dist: float = 0.1
    spread: float = 1.0
    target_dim: int = 2
    n_epochs: int = 200
    learning_rate: float = 1.0
    negative_sample_rate: int = 5
    seed: int = 0
    metric: str = "euclidean"

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ConfigError("n_neighbors must be at least 2")
        if self.spread <= 0 or not 0 <= self.min_dist < 3 * self.spread:
            raise ConfigError("need spread > 0 and 0 <= min_dist < 3 * spread")
        if self.target_dim < 1:
            raise ConfigError("target_dim must be at least 1")
        if self.n_epochs < 0 or self.negative_sample_rate < 0:
            raise ConfigError("n_epochs and negative_sample_rate must be non-negative")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.metric != "euclidean":
            raise ConfigError(f"unsupported metric {self.metric!r}")


@dataclass
class NeighborGraph:
    indices: np.ndarray  # [N, k] int64
    distances: np.ndarray  # [N, k], ascending per row
    rho: np.ndarray | None = None
    sigma: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass
class FuzzySet:
    """Symmetric membership graph stored once per unordered pair (``i < j``)."""

    n_vertices: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    def to_csr(self) -> sp.csr_matrix:
        n = self.n_vertices
        upper = sp.coo_matrix((self.weights, (self.rows, self.cols)), shape=(n, n))
        return (upper + upper.T).tocsr()

    def directed_edges(self):
        """Both orientations of every edge, in row-major order."""
        m = self.to_csr().tocoo()
        order = np.lexsort((m.col, m.row))
        return (
            m.row[order].astype(np.int64),
            m.col[order].astype(np.int64),
            m.data[order].astype(np.float64),
        )


@dataclass
class Embedding:
    coords: np.ndarray
    params: UmapParams
    curve_a: float
    curve_b: float
    loss_trace: list = field(default_factory=list)


@dataclass
class FittedUmap:
    embedding: Embedding
    graph: NeighborGraph
    source: np.ndarray

    @property
    def params(self) -> UmapParams:
        return self.embedding.params


# ---------------------------------------------------------------------------
# neighbor graph
# ---------------------------------------------------------------------------


def _as_pixels(X, name="X") -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"{name} must be 2-D, got shape {X.shape}")
    bad = ~np.all(np.isfinite(X), axis=1)
    if bad.any():
        raise DataError(f"{name} row {int(np.flatnonzero(bad)[0])} is not finite")
    return X


def _knn_query(Q, R, k, exclude_self):
    """Exact k-NN of each row of ``Q`` among rows of ``R``; ties -> lower index."""
    m, n = Q.shape[0], R.shape[0]
    indices = np.empty((m, k), dtype=np.int64)
    dists = np.empty((m, k), dtype=np.float64)
    chunk = max(1, KNN_CHUNK_BYTES // (8 * n))
    buf = np.empty((chunk, n), dtype=np.float64)
    for start in range(0, m, chunk):
        stop = min(m, start + chunk)
        d2 = buf[: stop - start]
        _layout.pair_sq_dists(Q[start:stop], R, d2)
        if exclude_self:
            d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        kth = np.partition(d2, k - 1, axis=1)[:, k - 1]
        for r in range(stop - start):
            cand = np.flatnonzero(d2[r] <= kth[r])
            # stable sort keeps ascending index order among equal distances
            order = np.argsort(d2[r, cand], kind="stable")[:k]
            indices[start + r] = cand[order]
            dists[start + r] = np.sqrt(d2[r, cand[order]])
    return indices, dists


def knn_graph(X, k: int, seed: int = 0) -> NeighborGraph:
    """Brute-force exact Euclidean k-NN graph without self-loops.

    ``seed`` is accepted for interface symmetry; the search is exact and
    uses no randomness.
    """
    X = _as_pixels(X)
    if k < 1 or k >= X.shape[0]:
        raise DataError(f"need 1 <= k < N, got k={k}, N={X.shape[0]}")
    indices, dists = _knn_query(X, X, k, exclude_self=True)
    return NeighborGraph(indices, dists)


def _membership_sum(d, rho, sigma):
    return np.exp(-np.maximum(d - rho[:, None], 0.0) / sigma[:, None]).sum(axis=1)


def _solve_sigma(distances, rho, k):
    target = np.log2(k)
    n = distances.shape[0]
    sigma = np.empty(n)
    lo = np.full(n, MIN_SIGMA)
    hi = np.full(n, MAX_SIGMA)
    f_lo = _membership_sum(distances, rho, lo)
    f_hi = _membership_sum(distances, rho, hi)
    low_clamp = f_lo >= target
    high_clamp = f_hi < target
    sigma[low_clamp] = MIN_SIGMA
    sigma[high_clamp & ~low_clamp] = MAX_SIGMA
    active = np.flatnonzero(~(low_clamp | high_clamp))
    d, r = distances[active], rho[active]
    lo, hi = lo[active], hi[active]
    mid = 0.5 * (lo + hi)
    done = np.zeros(active.size, dtype=bool)
    for _ in range(CALIBRATION_ITERS):
        if done.all():
            break
        mid = np.where(done, mid, 0.5 * (lo + hi))
        f = _membership_sum(d, r, mid)
        done |= np.abs(f - target) < CALIBRATION_TOL
        above = (f > target) & ~done
        below = (f < target) & ~done
        hi = np.where(above, mid, hi)
        lo = np.where(below, mid, lo)
    sigma[active] = mid
    return sigma


def calibrate_bandwidths(graph: NeighborGraph, k: int | None = None) -> NeighborGraph:
    """Fill ``rho`` (nearest positive distance) and ``sigma`` (bandwidth).

    ``sigma_i`` solves ``sum_j exp(-max(0, d_ij - rho_i) / sigma_i) = log2(k)``
    by bisection; rows where no solution lies inside
    ``[MIN_SIGMA, MAX_SIGMA]`` are clamped to the nearer bound.
    """
    k = graph.k if k is None else k
    d = graph.distances
    positive = np.where(d > 0, d, np.inf)
    rho = positive.min(axis=1)
    rho[~np.isfinite(rho)] = 0.0
    sigma = _solve_sigma(d, rho, k)
    return replace(graph, rho=rho, sigma=sigma)


def calibration_residual(graph: NeighborGraph, k: int | None = None) -> np.ndarray:
    k = graph.k if k is None else k
    return np.abs(_membership_sum(graph.distances, graph.rho, graph.sigma) - np.log2(k))


def clamped_rows(graph: NeighborGraph) -> np.ndarray:
    return (graph.sigma <= MIN_SIGMA) | (graph.sigma >= MAX_SIGMA)


def directed_memberships(graph: NeighborGraph) -> np.ndarray:
    return np.exp(
        -np.maximum(graph.distances - graph.rho[:, None], 0.0) / graph.sigma[:, None]
    )


# ---------------------------------------------------------------------------
# fuzzy set
# ---------------------------------------------------------------------------


def fuzzy_simplicial_set(graph: NeighborGraph) -> FuzzySet:
    if graph.sigma is None:
        raise DataError("neighbor graph has not been calibrated")
    n, k = graph.indices.shape
    w = directed_memberships(graph)
    rows = np.repeat(np.arange(n), k)
    A = sp.csr_matrix((w.ravel(), (rows, graph.indices.ravel())), shape=(n, n))
    At = A.T.tocsr()
    W = (A + At - A.multiply(At)).tocsr()
    upper = sp.triu(W, k=1).tocoo()
    keep = upper.data > WEIGHT_FLOOR
    order = np.lexsort((upper.col[keep], upper.row[keep]))
    return FuzzySet(
        n_vertices=n,
        rows=upper.row[keep][order].astype(np.int64),
        cols=upper.col[keep][order].astype(np.int64),
        weights=np.minimum(upper.data[keep][order], 1.0),
    )


# ---------------------------------------------------------------------------
# low-dimensional curve
# ---------------------------------------------------------------------------


def curve_target(min_dist, spread, n_samples=300):
    d = np.linspace(0.0, 3.0 * spread, n_samples)
    g = np.where(d <= min_dist, 1.0, np.exp(-(d - min_dist) / spread))
    return d, g


def curve_value(d, a, b):
    return 1.0 / (1.0 + a * np.power(d, 2.0 * b))


def fit_curve(min_dist: float, spread: float = 1.0, rounds: int = 60) -> tuple[float, float]:
    """Least-squares ``(a, b)`` for ``1 / (1 + a d^(2b))`` against the offset
    exponential target, by zooming grid search over ``(log a, b)``."""
    if spread <= 0 or not 0 <= min_dist < 3 * spread:
        raise ConfigError("need spread > 0 and 0 <= min_dist < 3 * spread")
    d, g = curve_target(min_dist, spread)
    center = np.array([0.0, 1.0])
    half = np.array([6.0, 0.95])
    steps = np.linspace(-1.0, 1.0, 21)
    best, best_sse = center, np.inf
    for _ in range(rounds):
        la = center[0] + half[0] * steps
        bb = np.clip(center[1] + half[1] * steps, 1e-3, None)
        A, B = np.meshgrid(np.exp(la), bb, indexing="ij")
        pred = 1.0 / (1.0 + A[..., None] * d ** (2.0 * B[..., None]))
        sse = ((pred - g) ** 2).sum(axis=-1)
        i, j = np.unravel_index(np.argmin(sse), sse.shape)
        if sse[i, j] < best_sse:
            best_sse = sse[i, j]
            best = np.array([la[i], bb[j]])
        center = best
        half = half * 0.6
    a, b = float(np.exp(best[0])), float(best[1])
    rel = best_sse / float(g @ g)
    if rel >= 1e-2:
        log.warning("curve fit residual %.3g above 1e-2; keeping best (a=%g, b=%g)", rel, a, b)
    return a, b


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def _spectral_layout(fs: FuzzySet, dim: int, rng, tol=1e-6):
    """Smallest nontrivial eigenvectors of the normalized Laplacian.

    Block power iteration on ``(I + D^-1/2 W D^-1/2) / 2`` with the trivial
    ``sqrt(degree)`` vector deflated and Rayleigh-Ritz every few steps.
    Returns ``None`` if it does not converge within ``5 N`` iterations.
    """
    n = fs.n_vertices
    W = fs.to_csr()
    deg = np.asarray(W.sum(axis=1)).ravel()
    if np.any(deg <= 0):
        return None
    inv_sqrt = 1.0 / np.sqrt(deg)
    M = sp.diags(inv_sqrt) @ W @ sp.diags(inv_sqrt)
    trivial = np.sqrt(deg)
    trivial /= np.linalg.norm(trivial)

    def apply(V):
        return 0.5 * (V + M @ V)

    p = min(n - 1, dim + 8)
    V = rng.standard_normal((n, p))
    for it in range(1, 5 * n + 1):
        V = apply(V)
        V -= np.outer(trivial, trivial @ V)
        V, _ = np.linalg.qr(V)
        if it % 10 == 0 or it == 5 * n:
            BV = apply(V)
            T = V.T @ BV
            theta, S = np.linalg.eigh(0.5 * (T + T.T))
            order = np.argsort(theta)[::-1]
            theta, S = theta[order], S[:, order]
            V = V @ S
            BV = BV @ S
            resid = np.linalg.norm(BV[:, :dim] - V[:, :dim] * theta[:dim], axis=0)
            if np.all(resid < tol):
                return V[:, :dim]
    return None


def initialize_embedding(fs: FuzzySet, dim: int, seed: int = 0, mode: str = "spectral") -> np.ndarray:
    if fs.weights.size == 0:
        raise DataError("fuzzy set has no edges")
    if mode not in ("spectral", "random"):
        raise ConfigError(f"unknown init mode {mode!r}")
    rng = np.random.default_rng(seed)
    n = fs.n_vertices
    if mode == "spectral":
        n_comp, _ = connected_components(fs.to_csr(), directed=False)
        if n_comp > MAX_COMPONENTS:
            log.warning("graph has %d components; falling back to random init", n_comp)
        elif n - 1 < dim + 1:
            log.warning("too few points for spectral init; falling back to random init")
        else:
            vecs = _spectral_layout(fs, dim, rng)
            if vecs is None:
                log.warning("spectral init did not converge; falling back to random init")
            else:
                coords = vecs * (0.1 / vecs.std())
                return coords + rng.uniform(-1e-4, 1e-4, size=coords.shape)
    return rng.uniform(-10.0, 10.0, size=(n, dim))


# ---------------------------------------------------------------------------
# layout optimization
# ---------------------------------------------------------------------------


def epochs_per_sample(weights, n_epochs):
    """Edge ``e`` fires every ``max(w) / w_e`` epochs."""
    weights = np.asarray(weights, dtype=np.float64)
    out = np.full(weights.shape, -1.0)
    n_samples = n_epochs * (weights / weights.max())
    pos = n_samples > 0
    out[pos] = n_epochs / n_samples[pos]
    return out


@dataclass
class LossProbe:
    """Frozen edge and negative sample set for tracking the cross-entropy."""

    heads: np.ndarray
    tails: np.ndarray
    weights: np.ndarray
    neg_heads: np.ndarray
    neg_tails: np.ndarray
    neg_weights: np.ndarray


def make_loss_probe(fs: FuzzySet, negative_rate: int = 5, n_edges: int = 2000, seed: int = 0) -> LossProbe:
    rng = np.random.default_rng(seed)
    heads, tails, weights = fs.directed_edges()
    pick = np.sort(rng.choice(heads.size, size=min(n_edges, heads.size), replace=False))
    heads, tails, weights = heads[pick], tails[pick], weights[pick]
    neg_heads = np.repeat(heads, negative_rate)
    neg_tails = rng.integers(0, fs.n_vertices, size=neg_heads.size)
    keep = neg_tails != neg_heads
    return LossProbe(
        heads, tails, weights,
        neg_heads[keep], neg_tails[keep], np.repeat(weights, negative_rate)[keep],
    )


def edge_cross_entropy(coords, probe: LossProbe, a: float, b: float, eps: float = 1e-7) -> float:
    """Weighted cross-entropy on the probe, normalized by total edge weight.

    Each edge contributes ``-w log q``; each of its negatives ``-w log(1 - q)``.
    """
    def q(i, j):
        d2 = ((coords[i] - coords[j]) ** 2).sum(axis=1)
        return 1.0 / (1.0 + a * np.power(d2, b))

    attract = -(probe.weights * np.log(q(probe.heads, probe.tails) + eps)).sum()
    repel = -(probe.neg_weights * np.log(1.0 - q(probe.neg_heads, probe.neg_tails) + eps)).sum()
    return float((attract + repel) / probe.weights.sum())


def _run_sgd(head_emb, tail_emb, heads, tails, weights, n_epochs, a, b, lr,
             negative_rate, n_tail, rng, move_other, parallel=False, probe=None,
             probe_coords=None):
    kernel = _layout.sgd_epoch_parallel if parallel else _layout.sgd_epoch
    eps = epochs_per_sample(weights, n_epochs)
    live = eps > 0
    heads, tails, eps = heads[live], tails[live], eps[live]
    eps_neg = eps / negative_rate if negative_rate > 0 else None
    next_sample = eps.copy()
    next_neg = eps_neg.copy() if eps_neg is not None else None
    trace = []
    for epoch in range(n_epochs):
        n = epoch + 1
        active = np.flatnonzero(next_sample <= n)
        if eps_neg is not None:
            n_neg = np.floor((n - next_neg[active]) / eps_neg[active]).astype(np.int64)
            n_neg = np.maximum(n_neg, 0)
            next_neg[active] += n_neg * eps_neg[active]
        else:
            n_neg = np.zeros(active.size, dtype=np.int64)
        next_sample[active] += eps[active]
        offsets = np.zeros(active.size + 1, dtype=np.int64)
        np.cumsum(n_neg, out=offsets[1:])
        negs = rng.integers(0, n_tail, size=int(offsets[-1]), dtype=np.int64)
        alpha = lr * (1.0 - epoch / n_epochs)
        kernel(head_emb, tail_emb, heads[active], tails[active], offsets, negs,
               a, b, alpha, move_other)
        if not np.all(np.isfinite(head_emb)):
            raise NumericalError("layout optimization produced non-finite coordinates", step=epoch)
        if probe is not None:
            trace.append(edge_cross_entropy(probe_coords, probe, a, b))
    return trace


def optimize_embedding(fs: FuzzySet, coords, params: UmapParams, curve=None,
                       parallel: bool = False, probe: LossProbe | None = None) -> Embedding:
    """Edge-sampled SGD on the fuzzy cross-entropy.

    ``coords`` is updated in place. With ``parallel=True`` edges are
    processed by unsynchronized threads and results are not reproducible.
    """
    a, b = curve if curve is not None else fit_curve(params.min_dist, params.spread)
    coords = np.asarray(coords)
    if coords.dtype != np.float64 or not coords.flags.c_contiguous:
        raise DataError("coords must be a C-contiguous float64 array (updated in place)")
    if coords.shape[0] != fs.n_vertices:
        raise DataError("coords row count does not match the fuzzy set")
    trace = []
    if params.n_epochs > 0 and fs.weights.size:
        heads, tails, weights = fs.directed_edges()
        rng = np.random.default_rng(params.seed)
        trace = _run_sgd(
            coords, coords, heads, tails, weights, params.n_epochs, a, b,
            params.learning_rate, params.negative_sample_rate, fs.n_vertices, rng,
            move_other=True, parallel=parallel, probe=probe, probe_coords=coords,
        )
    return Embedding(coords=coords, params=params, curve_a=a, curve_b=b, loss_trace=trace)


# ---------------------------------------------------------------------------
# full fit and out-of-sample transform
# ---------------------------------------------------------------------------


def umap_fit(X, params: UmapParams | None = None, init: str = "spectral",
             parallel: bool = False, probe_edges: int = 0) -> FittedUmap:
    params = params or UmapParams()
    X = _as_pixels(X)
    graph = calibrate_bandwidths(knn_graph(X, params.n_neighbors, params.seed))
    fs = fuzzy_simplicial_set(graph)
    coords = initialize_embedding(fs, params.target_dim, params.seed, init)
    probe = None
    if probe_edges:
        probe = make_loss_probe(fs, params.negative_sample_rate, probe_edges, params.seed + 1)
    emb = optimize_embedding(fs, coords, params, parallel=parallel, probe=probe)
    return FittedUmap(embedding=emb, graph=graph, source=X)


def _new_point_memberships(fitted: FittedUmap, Xnew):
    k = fitted.params.n_neighbors
    idx, dist = _knn_query(Xnew, fitted.source, k, exclude_self=False)
    g = calibrate_bandwidths(NeighborGraph(idx, dist), k)
    return g, directed_memberships(g)


def transform_new(fitted: FittedUmap, Xnew, refine_epochs: int = 0, parallel: bool = False) -> np.ndarray:
    """Embed unseen rows against a fitted model.

    Each point starts at the membership-weighted mean of its neighbors'
    embedded coordinates (or exactly at a training point it duplicates),
    then optionally takes ``refine_epochs`` of SGD with training
    coordinates frozen.
    """
    Xnew = _as_pixels(Xnew, "Xnew")
    if Xnew.shape[1] != fitted.source.shape[1]:
        raise DataError(
            f"expected {fitted.source.shape[1]} columns, got {Xnew.shape[1]}"
        )
    Y = fitted.embedding.coords
    g, w = _new_point_memberships(fitted, Xnew)
    coords = (w[..., None] * Y[g.indices]).sum(axis=1) / w.sum(axis=1, keepdims=True)
    exact = g.distances[:, 0] == 0.0
    coords[exact] = Y[g.indices[exact, 0]]
    coords = np.ascontiguousarray(coords)
    if refine_epochs > 0:
        p = fitted.params
        m, k = g.indices.shape
        heads = np.repeat(np.arange(m, dtype=np.int64), k)
        rng = np.random.default_rng(p.seed + 7919)
        _run_sgd(
            coords, np.ascontiguousarray(Y, dtype=np.float64), heads,
            g.indices.ravel().astype(np.int64), w.ravel(), refine_epochs,
            fitted.embedding.curve_a, fitted.embedding.curve_b,
            p.learning_rate / 4.0, p.negative_sample_rate, Y.shape[0], rng,
            move_other=False, parallel=parallel,
        )
    return coords


def save_umap(fitted: FittedUmap, path) -> None:
    emb = fitted.embedding
    meta = {
        "params": asdict(emb.params),
        "curve_a": emb.curve_a,
        "curve_b": emb.curve_b,
        "loss_trace": list(emb.loss_trace),
    }
    arrays = {
        "coords": emb.coords,
        "source": fitted.source,
        "indices": fitted.graph.indices,
        "distances": fitted.graph.distances,
        "rho": fitted.graph.rho,
        "sigma": fitted.graph.sigma,
    }
    store.save_bundle(path, "umap", meta, arrays, sidecar=True)


def load_umap(path) -> FittedUmap:
    meta, a = store.load_bundle(path, "umap")
    params = UmapParams(**meta["params"])
    emb = Embedding(a["coords"], params, meta["curve_a"], meta["curve_b"], meta["loss_trace"])
    graph = NeighborGraph(a["indices"], a["distances"], a["rho"], a["sigma"])
    return FittedUmap(emb, graph, a["source"])
