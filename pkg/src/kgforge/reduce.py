"""Dimensionality reduction before clustering: UMAP built from first
principles (exact kNN, smooth-kNN fuzzy graph, SGD cross-entropy layout with
negative sampling) and a PCA baseline.

The layout loop is numba-compiled and single-threaded, so a fixed seed gives
bit-identical output. Inputs are internally processed in a canonical
(row-lexicographic) order, which makes the whole operation equivariant under
permutation of the input points.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
from scipy.optimize import curve_fit

from .embed import pairwise_euclidean
from .errors import KTooLarge, TooFewPoints

_SMOOTH_TOL = 1e-5
_SIGMA_MIN = 1e-8
_SIGMA_MAX = 1e8


@dataclass
class ReduceParams:
    n_neighbors: int = 15
    n_components: int = 2
    min_dist: float = 0.1
    n_epochs: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 2:
            raise ValueError("n_neighbors must be >= 2")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if not 0.0 <= self.min_dist < 1.0:
            raise ValueError("min_dist must be in [0, 1)")
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")


class KnnGraph(NamedTuple):
    indices: np.ndarray  # (n, k) neighbor indices, nearest first
    distances: np.ndarray  # (n, k) matching Euclidean distances


@dataclass
class FuzzyGraph:
    n: int
    edges: list[tuple[int, int, float]]  # undirected, i < j, weight in (0, 1]


def knn_graph(vectors: np.ndarray, k: int) -> KnnGraph:
    """Exact k nearest others per point; ties broken by lower index."""
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if k >= n:
        raise KTooLarge(f"k={k} with only {n} points")
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    block = max(1, (1 << 22) // max(1, n))
    for start in range(0, n, block):
        stop = min(start + block, n)
        dmat = pairwise_euclidean(x[start:stop], x)
        for r in range(stop - start):
            i = start + r
            order = np.argsort(dmat[r], kind="stable")
            others = order[order != i][:k]
            indices[i] = others
            distances[i] = dmat[r][others]
    return KnnGraph(indices, distances)


def _smooth_knn(distances: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-point (rho, sigma).

    rho is the nearest-neighbor distance. sigma solves, by binary search,
    sum over the remaining neighbors of exp(-max(0, d - rho)/sigma) =
    log2(k); the nearest neighbor is excluded from the sum because its term
    is identically 1 and carries no information about sigma.
    """
    n = distances.shape[0]
    rho = distances[:, 0].copy()
    target = math.log2(k)
    rest = np.maximum(distances[:, 1:] - rho[:, None], 0.0)

    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    mid = np.ones(n)
    done = np.zeros(n, dtype=bool)
    for _ in range(64):
        psum = np.exp(-rest / mid[:, None]).sum(axis=1)
        done |= np.abs(psum - target) < _SMOOTH_TOL
        if done.all():
            break
        high = (psum > target) & ~done
        low = ~high & ~done
        hi[high] = mid[high]
        mid[high] = (lo[high] + hi[high]) / 2.0
        lo[low] = mid[low]
        unbounded = low & np.isinf(hi)
        mid[unbounded] = mid[unbounded] * 2.0
        bounded = low & ~np.isinf(hi)
        mid[bounded] = (lo[bounded] + hi[bounded]) / 2.0
    return rho, np.clip(mid, _SIGMA_MIN, _SIGMA_MAX)


def fuzzy_graph(knn: KnnGraph, k: int) -> FuzzyGraph:
    """Directed membership weights exp(-max(0, d - rho)/sigma), symmetrised
    with the probabilistic t-conorm a + b - a*b."""
    indices, distances = knn
    if indices.shape[1] != k:
        raise ValueError(f"knn was built with k={indices.shape[1]}, not {k}")
    n = indices.shape[0]
    rho, sigma = _smooth_knn(distances, k)
    directed: dict[tuple[int, int], float] = {}
    for i in range(n):
        w_row = np.exp(-np.maximum(distances[i] - rho[i], 0.0) / sigma[i])
        for j, w in zip(indices[i], w_row):
            directed[(i, int(j))] = float(w)
    merged: dict[tuple[int, int], float] = {}
    for (i, j), a in directed.items():
        key = (i, j) if i < j else (j, i)
        if key in merged:
            continue
        b = directed.get((j, i), 0.0)
        merged[key] = a + b - a * b
    edges = [(i, j, w) for (i, j), w in sorted(merged.items())]
    return FuzzyGraph(n=n, edges=edges)


@functools.lru_cache(maxsize=32)
def find_ab_params(min_dist: float, spread: float = 1.0) -> tuple[float, float]:
    """Fit the differentiable curve 1/(1 + a x^(2b)) to the target membership
    decay exp(-(x - min_dist)/spread) with a hard plateau below min_dist."""

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    xv = np.linspace(0.0, spread * 3.0, 300)
    yv = np.where(xv < min_dist, 1.0, np.exp(-(xv - min_dist) / spread))
    (a, b), _ = curve_fit(curve, xv, yv)
    return float(a), float(b)


@numba.njit(cache=True)
def _sgd_layout(emb, heads, tails, epochs_per_sample, n_epochs, a, b, rng_state, n_negatives):
    n = emb.shape[0]
    dim = emb.shape[1]
    n_edges = heads.shape[0]
    epoch_of_next = epochs_per_sample.copy()
    state = rng_state
    for epoch in range(n_epochs):
        alpha = 1.0 - epoch / n_epochs
        for e in range(n_edges):
            if epoch_of_next[e] > epoch:
                continue
            i = heads[e]
            j = tails[e]
            d2 = 0.0
            for d in range(dim):
                diff = emb[i, d] - emb[j, d]
                d2 += diff * diff
            if d2 > 0.0:
                coeff = (-2.0 * a * b * d2 ** (b - 1.0)) / (1.0 + a * d2**b)
                for d in range(dim):
                    g = coeff * (emb[i, d] - emb[j, d])
                    if g > 4.0:
                        g = 4.0
                    elif g < -4.0:
                        g = -4.0
                    emb[i, d] += alpha * g
                    emb[j, d] -= alpha * g
            for _ in range(n_negatives):
                state ^= state << np.uint64(13)
                state ^= state >> np.uint64(7)
                state ^= state << np.uint64(17)
                kneg = int(state % np.uint64(n))
                if kneg == i or kneg == j:
                    continue
                d2 = 0.0
                for d in range(dim):
                    diff = emb[i, d] - emb[kneg, d]
                    d2 += diff * diff
                if d2 > 0.0:
                    coeff = 2.0 * b / ((0.001 + d2) * (1.0 + a * d2**b))
                    for d in range(dim):
                        g = coeff * (emb[i, d] - emb[kneg, d])
                        if g > 4.0:
                            g = 4.0
                        elif g < -4.0:
                            g = -4.0
                        emb[i, d] += alpha * g
                else:
                    for d in range(dim):
                        emb[i, d] += alpha * 4.0
            epoch_of_next[e] += epochs_per_sample[e]
    return emb


def _canonical_order(x: np.ndarray) -> np.ndarray:
    return np.lexsort(tuple(x[:, c] for c in range(x.shape[1] - 1, -1, -1)))


def umap(vectors: np.ndarray, params: ReduceParams) -> np.ndarray:
    """Reduce to params.n_components dimensions.

    Layout starts uniformly at random in [-10, 10]^d from the seed and is
    optimized by asynchronous SGD on the UMAP cross-entropy with 5 negative
    samples per edge event and a learning rate annealed linearly 1 -> 0.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if n < params.n_neighbors + 1:
        raise TooFewPoints(f"need >= {params.n_neighbors + 1} points, got {n}")

    order = _canonical_order(x)
    inverse = np.empty(n, dtype=np.int64)
    inverse[order] = np.arange(n)
    xs = x[order]

    graph = fuzzy_graph(knn_graph(xs, params.n_neighbors), params.n_neighbors)
    heads = np.fromiter((e[0] for e in graph.edges), dtype=np.int64)
    tails = np.fromiter((e[1] for e in graph.edges), dtype=np.int64)
    weights = np.fromiter((e[2] for e in graph.edges), dtype=np.float64)
    # Directed both ways so each endpoint leads its own negative sampling.
    heads, tails = np.concatenate([heads, tails]), np.concatenate([tails, heads])
    weights = np.concatenate([weights, weights])
    epochs_per_sample = weights.max() / weights

    rng = np.random.default_rng(params.seed)
    emb = rng.uniform(-10.0, 10.0, size=(n, params.n_components))
    a, b = find_ab_params(params.min_dist)
    rng_state = np.uint64((params.seed * 2 + 1) & ((1 << 64) - 1))
    emb = _sgd_layout(
        emb, heads, tails, epochs_per_sample, params.n_epochs, a, b, rng_state, 5
    )
    return np.asarray(emb)[inverse]


def pca_fit(vectors: np.ndarray, n_components: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(mean, components, singular_values); component signs are fixed so the
    largest-magnitude loading of each component is positive."""
    x = np.asarray(vectors, dtype=np.float64)
    n, dim = x.shape
    if n < 2:
        raise TooFewPoints("pca needs at least 2 points")
    if not 1 <= n_components <= dim:
        raise ValueError(f"n_components must be in [1, {dim}]")
    mean = x.mean(axis=0)
    _, s, vt = np.linalg.svd(x - mean, full_matrices=False)
    comps = vt[:n_components].copy()
    for r in range(comps.shape[0]):
        pivot = int(np.argmax(np.abs(comps[r])))
        if comps[r, pivot] < 0:
            comps[r] = -comps[r]
    return mean, comps, s


def pca(vectors: np.ndarray, n_components: int) -> np.ndarray:
    """Mean-centered projection onto the top right-singular directions."""
    x = np.asarray(vectors, dtype=np.float64)
    mean, comps, _ = pca_fit(x, n_components)
    return (x - mean) @ comps.T
