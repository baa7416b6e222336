"""Parametric UMAP: a small ReLU encoder trained on the fuzzy-set
cross-entropy so new spectra embed with a single forward pass."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import store
from .errors import ConfigError, DataError, NumericalError
from .manifold import FuzzySet

Q_FLOOR = 1e-7


@dataclass
class EncoderNet:
    weights: list  # weights[l] has shape [fan_in, fan_out]
    biases: list

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]

    def copy(self) -> "EncoderNet":
        return EncoderNet([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass(frozen=True)
class TrainConfig:
    batch_edges: int = 256
    epochs: int = 50
    step_size: float = 1e-3
    negative_sample_rate: int = 5
    seed: int = 0
    hidden: tuple = (64, 64)
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    decay: bool = True  # step size decays linearly to 0 over training

    def __post_init__(self):
        if self.batch_edges < 1 or self.negative_sample_rate < 1 or self.epochs < 0:
            raise ConfigError("batch_edges and negative_sample_rate must be positive")
        if self.step_size <= 0:
            raise ConfigError("step_size must be positive")


@dataclass
class TrainResult:
    net: EncoderNet
    loss_trace: list = field(default_factory=list)
    val_trace: list = field(default_factory=list)


def init_encoder(sizes, seed: int = 0) -> EncoderNet:
    """Glorot-uniform weights, zero biases."""
    if len(sizes) < 2 or min(sizes) < 1:
        raise ConfigError(f"invalid layer sizes {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EncoderNet(weights, biases)


def _forward(net: EncoderNet, X):
    acts = [X]
    h = X
    last = len(net.weights) - 1
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ W + b
        h = z if layer == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def encoder_forward(net: EncoderNet, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != net.sizes[0]:
        raise DataError(f"expected [N, {net.sizes[0]}] input, got {X.shape}")
    return _forward(net, X)[-1]


def _pair_terms(Y, i, j, a, b):
    diff = Y[i] - Y[j]
    d2 = (diff * diff).sum(axis=1)
    u = np.power(d2, b)
    q = 1.0 / (1.0 + a * u)
    with np.errstate(divide="ignore", invalid="ignore"):
        du = np.where(d2 > 0, 2.0 * b * np.power(d2, b - 1.0), 0.0)
    return diff, q, u, du


def embedding_loss_and_grad(Y, edges, negatives, a, b):
    """Cross-entropy and its gradient with respect to embedded coordinates.

    ``edges`` is an ``[E, 3]`` array of ``(i, j, weight)``; ``negatives`` an
    ``[R, 2]`` integer array of ``(i, r)``.
    """
    grad = np.zeros_like(Y)
    loss = 0.0
    if len(edges):
        i = edges[:, 0].astype(np.int64)
        j = edges[:, 1].astype(np.int64)
        w = edges[:, 2]
        diff, q, u, du = _pair_terms(Y, i, j, a, b)
        loss -= (w * np.log(q)).sum()
        # d/dy_i of w * log(1 + a u)
        g = (w * a * du / (1.0 + a * u))[:, None] * diff
        np.add.at(grad, i, g)
        np.add.at(grad, j, -g)
    if len(negatives):
        i = negatives[:, 0].astype(np.int64)
        r = negatives[:, 1].astype(np.int64)
        diff, q, u, du = _pair_terms(Y, i, r, a, b)
        loss -= np.log(1.0 - q + Q_FLOOR).sum()
        # d/dy_i of -log(1 - q + eps), with dq/du = -a q^2
        g = (-(a * q * q) * du / (1.0 - q + Q_FLOOR))[:, None] * diff
        np.add.at(grad, i, g)
        np.add.at(grad, r, -g)
    return float(loss), grad


def _as_edges(edge_batch):
    e = np.asarray(edge_batch, dtype=np.float64)
    return e.reshape(-1, 3)


def _as_negs(negatives):
    n = np.asarray(negatives, dtype=np.int64)
    return n.reshape(-1, 2)


def encoder_loss_and_grad(net: EncoderNet, edge_batch, negatives, X, a: float, b: float):
    """Loss ``-sum w log q - sum log(1 - q + 1e-7)`` over the batch and its
    gradient for every network parameter (same order as ``net.params()``)."""
    edges = _as_edges(edge_batch)
    negs = _as_negs(negatives)
    X = np.asarray(X, dtype=np.float64)
    points = np.unique(np.concatenate([edges[:, :2].astype(np.int64).ravel(), negs.ravel()]))
    if points.size == 0:
        return 0.0, [np.zeros_like(p) for p in net.params()]
    if points[0] < 0 or points[-1] >= X.shape[0]:
        raise DataError("edge or negative index out of range")
    local = np.searchsorted(points, np.arange(X.shape[0]))
    edges_local = edges.copy()
    edges_local[:, 0] = local[edges[:, 0].astype(np.int64)]
    edges_local[:, 1] = local[edges[:, 1].astype(np.int64)]
    negs_local = local[negs]
    acts = _forward(net, X[points])
    loss, delta = embedding_loss_and_grad(acts[-1], edges_local, negs_local, a, b)
    grads = [None] * (2 * len(net.weights))
    for layer in range(len(net.weights) - 1, -1, -1):
        grads[2 * layer] = acts[layer].T @ delta
        grads[2 * layer + 1] = delta.sum(axis=0)
        if layer:
            delta = (delta @ net.weights[layer].T) * (acts[layer] > 0)
    return loss, grads


def _adam_step(params, grads, m, v, t, cfg: TrainConfig, scale=1.0):
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for p, g, mk, vk in zip(params, grads, m, v):
        mk *= cfg.beta1
        mk += (1.0 - cfg.beta1) * g
        vk *= cfg.beta2
        vk += (1.0 - cfg.beta2) * g * g
        p -= scale * cfg.step_size * (mk / c1) / (np.sqrt(vk / c2) + cfg.adam_eps)


def sample_validation_set(fs: FuzzySet, n_edges: int = 512, negative_rate: int = 5, seed: int = 0):
    """Frozen ``(edges, negatives)`` drawn like a training batch."""
    rng = np.random.default_rng(seed)
    heads, tails, weights = fs.directed_edges()
    pick = rng.choice(heads.size, size=n_edges, p=weights / weights.sum())
    edges = np.column_stack([heads[pick], tails[pick], np.ones(n_edges)])
    neg_i = np.repeat(heads[pick], negative_rate)
    negs = np.column_stack([neg_i, rng.integers(0, fs.n_vertices, size=neg_i.size)])
    return edges, negs[negs[:, 0] != negs[:, 1]]


def validation_loss(net, X, validation, a, b) -> float:
    edges, negs = validation
    Y = encoder_forward(net, X)
    loss, _ = embedding_loss_and_grad(Y, edges, negs, a, b)
    return loss / len(edges)


def train_parametric(X, fs: FuzzySet, cfg: TrainConfig, curve, dim: int,
                     validation=None) -> TrainResult:
    """Minibatch Adam on the UMAP cross-entropy.

    Positive edges are drawn in proportion to their membership weight and
    enter the loss with unit weight; each brings ``negative_sample_rate``
    uniformly drawn repulsion partners. One epoch draws as many edges as
    the fuzzy set has directed edges. ``validation`` (from
    :func:`sample_validation_set`) is scored after every batch.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != fs.n_vertices:
        raise DataError("fuzzy set was not built from X")
    a, b = curve
    sizes = [X.shape[1], *cfg.hidden, dim]
    net = init_encoder(sizes, cfg.seed)
    result = TrainResult(net)
    if cfg.epochs == 0:
        return result
    rng = np.random.default_rng(cfg.seed + 1)
    heads, tails, weights = fs.directed_edges()
    prob = weights / weights.sum()
    params = net.params()
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    n_batches = cfg.epochs * -(-heads.size // cfg.batch_edges)
    for _ in range(cfg.epochs):
        picks = rng.choice(heads.size, size=heads.size, p=prob)
        for start in range(0, picks.size, cfg.batch_edges):
            sel = picks[start : start + cfg.batch_edges]
            edges = np.column_stack([heads[sel], tails[sel], np.ones(sel.size)])
            neg_i = np.repeat(heads[sel], cfg.negative_sample_rate)
            neg_r = rng.integers(0, fs.n_vertices, size=neg_i.size)
            keep = neg_i != neg_r
            negs = np.column_stack([neg_i[keep], neg_r[keep]])
            loss, grads = encoder_loss_and_grad(net, edges, negs, X, a, b)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise NumericalError("parametric training loss is not finite", step=step)
            scale = 1.0 - step / n_batches if cfg.decay else 1.0
            step += 1
            _adam_step(params, grads, m, v, step, cfg, scale)
            result.loss_trace.append(loss / sel.size)
            if validation is not None:
                result.val_trace.append(validation_loss(net, X, validation, a, b))
    return result


def save_encoder(net: EncoderNet, path, curve=None, config: TrainConfig | None = None) -> None:
    meta = {"sizes": net.sizes}
    if curve is not None:
        meta["curve"] = list(curve)
    if config is not None:
        meta["config"] = asdict(config)
    arrays = {}
    for layer, (W, b) in enumerate(zip(net.weights, net.biases)):
        arrays[f"W{layer}"] = W
        arrays[f"b{layer}"] = b
    store.save_bundle(path, "encoder", meta, arrays, sidecar=True)


def load_encoder(path) -> tuple[EncoderNet, dict]:
    meta, arrays = store.load_bundle(path, "encoder")
    n = len(meta["sizes"]) - 1
    net = EncoderNet([arrays[f"W{i}"] for i in range(n)], [arrays[f"b{i}"] for i in range(n)])
    return net, meta
