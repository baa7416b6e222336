"""Compiled SGD kernels for the layout optimizer.

Random draws are made by the caller, so the kernels themselves are free of
RNG state; the sequential kernel is bit-reproducible.
"""

import numba

GRAD_CLIP = 4.0
REPULSION_EPS = 0.001


@numba.njit(inline="always")
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(inline="always")
def _edge_step(head_emb, tail_emb, j, k, neg_lo, neg_hi, negs, a, b, alpha, move_other):
    dim = head_emb.shape[1]
    current = head_emb[j]
    other = tail_emb[k]
    dist_sq = 0.0
    for d in range(dim):
        diff = current[d] - other[d]
        dist_sq += diff * diff
    if dist_sq > 0.0:
        coeff = -2.0 * a * b * dist_sq ** (b - 1.0) / (a * dist_sq**b + 1.0)
        for d in range(dim):
            g = _clip(coeff * (current[d] - other[d])) * alpha
            current[d] += g
            if move_other:
                other[d] -= g
    for p in range(neg_lo, neg_hi):
        r = negs[p]
        if move_other and r == j:
            continue
        other = tail_emb[r]
        dist_sq = 0.0
        for d in range(dim):
            diff = current[d] - other[d]
            dist_sq += diff * diff
        if dist_sq <= 0.0:
            continue
        coeff = 2.0 * b / ((REPULSION_EPS + dist_sq) * (a * dist_sq**b + 1.0))
        for d in range(dim):
            current[d] += _clip(coeff * (current[d] - other[d])) * alpha


@numba.njit(cache=True)
def sgd_epoch(head_emb, tail_emb, heads, tails, neg_offsets, negs, a, b, alpha, move_other):
    for e in range(heads.shape[0]):
        _edge_step(
            head_emb, tail_emb, heads[e], tails[e],
            neg_offsets[e], neg_offsets[e + 1], negs, a, b, alpha, move_other,
        )


@numba.njit(cache=True, parallel=True)
def sgd_epoch_parallel(head_emb, tail_emb, heads, tails, neg_offsets, negs, a, b, alpha, move_other):
    # unsynchronized updates: results depend on thread interleaving
    for e in numba.prange(heads.shape[0]):
        _edge_step(
            head_emb, tail_emb, heads[e], tails[e],
            neg_offsets[e], neg_offsets[e + 1], negs, a, b, alpha, move_other,
        )


@numba.njit(cache=True)
def pair_sq_dists(A, B, out):
    """Exact squared Euclidean distances, summed in band order."""
    for i in range(A.shape[0]):
        for j in range(B.shape[0]):
            s = 0.0
            for d in range(A.shape[1]):
                diff = A[i, d] - B[j, d]
                s += diff * diff
            out[i, j] = s
