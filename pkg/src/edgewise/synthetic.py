"""Synthetic Tanimoto-similarity datasets for tests, fixtures and experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .featurize import Fingerprint, one_hot_nodes, pairwise_tanimoto_targets, tanimoto_matrix
from .graph import Graph, Pattern, build_knn_graph


@dataclass
class SyntheticDataset:
    graph: Graph
    patterns: list[Pattern]
    fingerprints: list[Fingerprint]
    similarity: np.ndarray
    hidden: list[str]


def planted_fingerprints(
    n: int, bits: int, n_prototypes: int, flip: float, rng: np.random.Generator
) -> np.ndarray:
    """Each node copies one of a few random prototypes and flips bits with prob ``flip``."""
    protos = rng.random((n_prototypes, bits)) < 0.5
    owner = rng.integers(n_prototypes, size=n)
    noise = rng.random((n, bits)) < flip
    fp = protos[owner] ^ noise
    for row in fp:
        if not row.any():
            row[rng.integers(bits)] = True
    return fp.astype(np.uint8)


def make_tanimoto_dataset(
    n_nodes: int = 60,
    k: int = 4,
    n_pairs: int = 400,
    bits: int = 64,
    n_prototypes: int = 4,
    flip: float = 0.15,
    n_hidden: int = 0,
    similarity_edge_feature: bool = False,
    seed: int = 0,
) -> SyntheticDataset:
    """KNN graph over fingerprint similarity with one-hot node features.

    ``n_pairs`` distinct unordered pairs are sampled.  The ``n_hidden``
    highest-index nodes lose their fingerprints, so pairs touching them come
    out unlabelled.
    """
    rng = np.random.default_rng(seed)
    ids = [f"n{v:03d}" for v in range(n_nodes)]
    fp_bits = planted_fingerprints(n_nodes, bits, n_prototypes, flip, rng)
    fps = [Fingerprint(i, b) for i, b in zip(ids, fp_bits)]
    sim = tanimoto_matrix(fps)
    graph = build_knn_graph(
        sim, k, ids, one_hot_nodes(n_nodes), similarity_edge_feature=similarity_edge_feature
    )
    iu, ju = np.triu_indices(n_nodes, 1)
    if n_pairs > len(iu):
        raise ValueError(f"only {len(iu)} distinct pairs exist")
    pick = np.sort(rng.choice(len(iu), size=n_pairs, replace=False))
    pairs = [(ids[iu[p]], ids[ju[p]]) for p in pick]
    hidden = ids[n_nodes - n_hidden :] if n_hidden else []
    known = [f for f in fps if f.id not in set(hidden)]
    patterns = pairwise_tanimoto_targets(known, pairs)
    return SyntheticDataset(graph, patterns, fps, sim, hidden)
