"""Exact O(N^2) t-SNE.

Initial positions are drawn from a generator seeded by ``(seed, sha256(row))``
and the optimizer runs over rows sorted by that digest.  Floating-point sums
therefore see the same order whatever order the caller used, so permuting the
input permutes the output exactly.  Identical rows start (and stay) together.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np


@dataclass
class EmbeddingResult:
    coords: np.ndarray
    labels: list[str] = field(default_factory=list)
    kl: float = float("nan")
    initial_kl: float = float("nan")
    iterations: int = 0
    seed: int = 0
    perplexity: float = 0.0


def pairwise_sq_distances(x: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - x[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _row_entropy(d: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    p = np.exp(-(d - d.min()) * beta)
    s = p.sum()
    p /= s
    nz = p > 0
    h = -float(np.sum(p[nz] * np.log(p[nz])))
    return h, p


def conditional_affinities(x: np.ndarray, perplexity: float, tol: float = 1e-5,
                           max_iter: int = 200) -> np.ndarray:
    """Row-normalized Gaussian affinities with per-point bandwidth matched to ``perplexity``."""
    n = len(x)
    d = pairwise_sq_distances(x)
    target = np.log(perplexity)
    p = np.zeros((n, n))
    for i in range(n):
        di = np.delete(d[i], i)
        beta, lo, hi = 1.0, -np.inf, np.inf
        h, pi = _row_entropy(di, beta)
        for _ in range(max_iter):
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2 if hi == np.inf else (beta + hi) / 2
            else:
                hi = beta
                beta = beta / 2 if lo == -np.inf else (beta + lo) / 2
            h, pi = _row_entropy(di, beta)
        p[i, np.arange(n) != i] = pi
    return p


def joint_probabilities(x: np.ndarray, perplexity: float) -> np.ndarray:
    p = conditional_affinities(x, perplexity)
    p = (p + p.T) / (2.0 * len(x))
    return np.maximum(p, 1e-12)


def _q(y: np.ndarray):
    num = 1.0 / (1.0 + pairwise_sq_distances(y))
    np.fill_diagonal(num, 0.0)
    q = np.maximum(num / num.sum(), 1e-12)
    return q, num


def kl_divergence(p: np.ndarray, y: np.ndarray) -> float:
    q, _ = _q(y)
    mask = ~np.eye(len(p), dtype=bool)
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def _row_digests(x: np.ndarray) -> list[bytes]:
    return [hashlib.sha256(np.ascontiguousarray(row, dtype=np.float64).tobytes()).digest() for row in x]


def _initial_positions(digests: list[bytes], seed: int, scale: float = 1e-4) -> np.ndarray:
    y = np.empty((len(digests), 2))
    for i, digest in enumerate(digests):
        words = [int.from_bytes(digest[k:k + 4], "little") for k in range(0, 16, 4)]
        y[i] = np.random.default_rng([seed, *words]).normal(0.0, scale, size=2)
    return y - y.mean(axis=0)


def tsne(vectors, perplexity: float = 10.0, iterations: int = 1000, seed: int = 0,
         learning_rate: float = 100.0, exaggeration: float = 4.0, exaggeration_iters: int = 100,
         momentum_switch: int = 250, labels=None) -> EmbeddingResult:
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or len(x) < 3:
        raise ValueError("t-SNE needs a 2-D array with at least 3 rows")
    if not np.all(np.isfinite(x)):
        raise ValueError("t-SNE input contains non-finite values")
    if not 0 < perplexity < len(x):
        raise ValueError(f"perplexity must be in (0, N={len(x)})")
    digests = _row_digests(x)
    order = sorted(range(len(x)), key=digests.__getitem__)
    x = x[order]
    p = joint_probabilities(x, perplexity)
    y = _initial_positions([digests[i] for i in order], seed)
    initial_kl = kl_divergence(p, y)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    for it in range(iterations):
        pe = p * exaggeration if it < exaggeration_iters else p
        momentum = 0.5 if it < momentum_switch else 0.8
        q, num = _q(y)
        w = (pe - q) * num
        grad = 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)
        same = (grad > 0) == (update > 0)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
    coords = np.empty_like(y)
    coords[order] = y
    return EmbeddingResult(coords, list(labels) if labels is not None else [], kl_divergence(p, y), initial_kl,
                           iterations, seed, perplexity)
