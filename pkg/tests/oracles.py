"""Independent reference implementations used to check the library.

Nothing here imports the code paths it is compared against.
"""

from __future__ import annotations

import itertools

import numpy as np


def knn_edges_bruteforce(sim: np.ndarray, k: int) -> set[tuple[int, int]]:
    """Full sort of each row by (-similarity, index); union of directed picks."""
    n = len(sim)
    edges = set()
    for u in range(n):
        ranked = sorted((v for v in range(n) if v != u), key=lambda v: (-sim[u, v], v))
        for v in ranked[:k]:
            edges.add((min(u, v), max(u, v)))
    return edges


def induced_edges_filter(edges, members) -> set[tuple[int, int]]:
    m = set(members)
    return {(int(u), int(v)) for u, v in edges if u in m and v in m}


def confusion_f1(scores, labels, tau):
    tp = sum(1 for s, y in zip(scores, labels) if s >= tau and y == 1)
    fp = sum(1 for s, y in zip(scores, labels) if s >= tau and y == 0)
    fn = sum(1 for s, y in zip(scores, labels) if s < tau and y == 1)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


def f1max_dense(scores, labels, n_grid: int = 10_001) -> float:
    """Best F1 over an evenly spaced threshold grid spanning [0, 1]."""
    s = np.asarray(scores)
    y = np.asarray(labels).astype(bool)
    best = 0.0
    n_pos = y.sum()
    for tau in np.linspace(0.0, 1.0, n_grid):
        pred = s >= tau
        tp = np.count_nonzero(pred & y)
        fp = np.count_nonzero(pred & ~y)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / n_pos
        f = 2 * p * r / (p + r) if p + r else 0.0
        best = max(best, f)
    return best


def ct_window_counts(seq: str, groups: dict[str, int]) -> dict[tuple[int, int, int], int]:
    """Count class triads by explicit enumeration of every length-3 slice."""
    counts: dict[tuple[int, int, int], int] = {}
    for start in range(len(seq) - 2):
        window = seq[start : start + 3]
        if all(ch in groups for ch in window):
            key = tuple(groups[ch] for ch in window)
            counts[key] = counts.get(key, 0) + 1
    return counts


def pca_eigh(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Top-2 axes (rows) and eigenvalues from a dense symmetric eigensolver."""
    xc = x - x.mean(axis=0)
    cov = np.cov(xc, rowvar=False)
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1][:2]
    return vecs[:, order].T, vals[order]


def softmax(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    e = np.exp(x)
    return e / e.sum()


def central_diff(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f(x)
        x[idx] = orig - h
        down = f(x)
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


def all_bitvectors(n_bits: int):
    return [np.array(bits, dtype=np.uint8) for bits in itertools.product((0, 1), repeat=n_bits)]
