"""Independent reference implementations used only by the tests.

Everything here works on dense matrices or brute-force loops and shares no
code with the package beyond plain data containers.
"""
from __future__ import annotations

import math

import mpmath
import numpy as np


def random_simple_graph(rng: np.random.Generator, n: int, p: float):
    """(src, dst) arrays of a random directed graph without self loops."""
    mask = rng.random((n, n)) < p
    np.fill_diagonal(mask, False)
    dst, src = np.nonzero(mask)
    return src, dst


def dense_adjacency(n, src, dst, weights=None) -> np.ndarray:
    """A[dst, src] = weight (or 1)."""
    A = np.zeros((n, n))
    w = np.ones(len(src)) if weights is None else np.asarray(weights, dtype=float)
    for s, d, x in zip(src, dst, w):
        A[d, s] = x
    return A


def _act(y, fn, slope):
    if fn == "relu":
        return np.where(y > 0, y, 0.0)
    if fn == "leaky_relu":
        return np.where(y >= 0, y, slope * y)
    if fn == "sigmoid":
        return 1.0 / (1.0 + np.exp(-y))
    if fn == "tanh":
        return np.tanh(y)
    if fn == "softmax":
        e = np.exp(y - y.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)
    return y


def dense_conv_layer(A, H, W, *, family="gcn", reduce_op="sum", eps=None, normalize=False,
                     bn=None, activation="relu", slope=0.01):
    """Sum/mean/max/GIN/normalized-GCN layer from dense algebra."""
    n = H.shape[0]
    mask = A != 0
    if reduce_op == "max":
        big = np.where(mask[:, :, None], H[None, :, :], -np.inf)
        agg = np.maximum(H, big.max(axis=1)) if n else H
    elif normalize:
        d = mask.sum(axis=1) + 1.0
        Dm = np.diag(1.0 / np.sqrt(d))
        agg = Dm @ (A + np.eye(n)) @ Dm @ H
    else:
        self_term = (1.0 + eps) * H if (family == "gin" and eps is not None) else H
        msg = A @ H
        if reduce_op == "mean":
            cnt = mask.sum(axis=1, keepdims=True)
            msg = np.divide(msg, cnt, out=np.zeros_like(msg), where=cnt > 0)
        agg = self_term + msg
    Y = agg @ W
    if bn is not None:
        Y = bn[0] * Y + bn[1]
    return _act(Y, activation, slope)


def dense_gat_layer(A, H, W, att, *, concat=True, bn=None, activation="relu", slope=0.01,
                    neg_slope=0.2):
    """Masked-softmax attention over self plus in-neighbors, dense form."""
    n = H.shape[0]
    heads, _, d = W.shape
    mask = (A != 0) | np.eye(n, dtype=bool)
    outs = []
    for h in range(heads):
        Z = H @ W[h]
        s = (Z @ att[h, :d])[:, None] + (Z @ att[h, d:])[None, :]
        s = np.where(s >= 0, s, neg_slope * s)
        s = np.where(mask, s, -np.inf)
        s = s - s.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(s), 0.0)
        alpha = e / e.sum(axis=1, keepdims=True)
        outs.append(alpha @ Z)
    Y = np.concatenate(outs, axis=1) if concat else np.mean(outs, axis=0)
    if bn is not None:
        Y = bn[0] * Y + bn[1]
    return _act(Y, activation, slope)


def brute_force_blocks(A_mask: np.ndarray, V: int, N: int):
    """Per (output group, input group) edge counts by slicing the dense mask."""
    n = A_mask.shape[0]
    nv, nn = math.ceil(n / V), math.ceil(n / N)
    counts = np.zeros((nv, nn), dtype=int)
    for i in range(nv):
        for j in range(nn):
            counts[i, j] = int(A_mask[i * V:(i + 1) * V, j * N:(j + 1) * N].sum())
    return counts


def q_factor_mp(n_g, length_um, kappa, a, lambda_nm, dps=50):
    """Ring Q from coupling at high precision."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(a) * (1 - mpmath.mpf(kappa) ** 2)
        L = mpmath.mpf(length_um) * 1000
        return mpmath.pi * n_g * L * mpmath.sqrt(x) / (mpmath.mpf(lambda_nm) * (1 - x))


def ops_brute_force(n, edges, F, F_out, activation=True):
    """Count additions, MACs and activations of a sum-GCN layer one at a time."""
    ops = 0
    for _ in edges:          # one add per feature per incoming edge
        for _ in range(F):
            ops += 1
    for _ in range(n):       # dense transform
        for _ in range(F):
            for _ in range(F_out):
                ops += 2
    if activation:
        ops += n * F_out
    return ops
