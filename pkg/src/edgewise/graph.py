"""Undirected feature graphs, KNN construction and two-center pattern subgraphs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Sequence

import numpy as np

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class Pattern:
    """A pair of node ids, optionally labelled."""

    i: str
    j: str
    label: float | None = None

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError(f"pattern endpoints must differ, got ({self.i}, {self.j})")

    @property
    def labeled(self) -> bool:
        return self.label is not None


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with dense node and optional edge features.

    ``edges`` is an ``(m, 2)`` int array of ``(u, v)`` with ``u < v`` in
    lexicographic order; ``edge_features`` rows follow that order.  Build with
    :meth:`from_edges` rather than the constructor.
    """

    node_ids: tuple[str, ...]
    edges: np.ndarray
    node_features: np.ndarray
    edge_features: np.ndarray | None = None
    _index: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_edges(
        cls,
        node_ids: Sequence[Hashable],
        pairs: Iterable[tuple[int, int]],
        node_features: np.ndarray | None = None,
        edge_features: np.ndarray | None = None,
    ) -> "Graph":
        ids = tuple(str(x) for x in node_ids)
        n = len(ids)
        if len(set(ids)) != n:
            raise ValueError("node ids must be unique")
        pairs = [(int(u), int(v)) for u, v in pairs]
        canon = []
        for u, v in pairs:
            if u == v:
                raise ValueError(f"self-loop on node {ids[u] if 0 <= u < n else u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            canon.append((min(u, v), max(u, v)))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edges")
        order = sorted(range(len(canon)), key=canon.__getitem__)
        edges = np.array([canon[k] for k in order], dtype=np.int64).reshape(-1, 2)
        if node_features is None:
            node_features = np.zeros((n, 0))
        node_features = np.asarray(node_features, dtype=np.float64)
        if node_features.ndim != 2 or node_features.shape[0] != n:
            raise ValueError(f"node feature matrix must have {n} rows")
        if edge_features is not None:
            edge_features = np.asarray(edge_features, dtype=np.float64)
            if edge_features.ndim != 2 or edge_features.shape[0] != len(canon):
                raise ValueError(f"edge feature matrix must have {len(canon)} rows")
            edge_features = edge_features[order]
        return cls(ids, edges, node_features, edge_features, {x: k for k, x in enumerate(ids)})

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def feature_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_dim(self) -> int:
        return 0 if self.edge_features is None else self.edge_features.shape[1]

    def index(self, node_id) -> int:
        try:
            return self._index[str(node_id)]
        except KeyError:
            raise KeyError(f"unknown node id {node_id!r}") from None

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        adj: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            adj[u].append(int(v))
            adj[v].append(int(u))
        return tuple(tuple(sorted(a)) for a in adj)

    @cached_property
    def edge_row(self) -> dict[tuple[int, int], int]:
        return {(int(u), int(v)): k for k, (u, v) in enumerate(self.edges)}

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self.adjacency[node]

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self.adjacency])

    def with_node_features(self, features: np.ndarray) -> "Graph":
        return Graph.from_edges(self.node_ids, self.edges, features, self.edge_features)


def build_knn_graph(
    similarity: np.ndarray,
    k: int,
    node_ids: Sequence[Hashable] | None = None,
    node_features: np.ndarray | None = None,
    similarity_edge_feature: bool = False,
) -> Graph:
    """Connect every node to its ``k`` most similar peers, then symmetrise by union.

    The diagonal is ignored and ties go to the lower node index.  With
    ``similarity_edge_feature`` each edge carries its similarity value as a
    one-column edge feature.
    """
    s = np.asarray(similarity, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError(f"similarity must be square, got shape {s.shape}")
    n = s.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    if not np.allclose(s, s.T, rtol=0.0, atol=SYMMETRY_TOL):
        raise ValueError("similarity matrix is not symmetric")
    picks = set()
    for u in range(n):
        row = s[u].copy()
        row[u] = -np.inf
        # stable sort on the negated row keeps lower indices first among ties
        order = np.argsort(-row, kind="stable")
        for v in order[:k]:
            picks.add((min(u, int(v)), max(u, int(v))))
    pairs = sorted(picks)
    edge_features = None
    if similarity_edge_feature:
        edge_features = np.array([[s[u, v]] for u, v in pairs]).reshape(len(pairs), 1)
    ids = node_ids if node_ids is not None else [str(x) for x in range(n)]
    return Graph.from_edges(ids, pairs, node_features, edge_features)


@dataclass(frozen=True, eq=False)
class PatternSubgraph:
    """Subgraph induced by two centers and their one-hop neighbourhoods.

    ``members`` lists global node indices as ``(i, j, *rest ascending)``;
    ``induced_edges`` holds global ``(u, v)`` pairs in the graph's canonical
    order and ``edge_feature_slice`` rows follow them.
    """

    center_i: int
    center_j: int
    members: tuple[int, ...]
    induced_edges: tuple[tuple[int, int], ...]
    node_feature_slice: np.ndarray
    edge_feature_slice: np.ndarray | None
    center_neighbors: dict = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.members)

    @cached_property
    def position(self) -> dict[int, int]:
        return {node: k for k, node in enumerate(self.members)}

    @cached_property
    def edge_position(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.induced_edges)}


def induce_pattern_subgraph(
    graph: Graph, i: int, j: int, exclude_center_edge: bool = False
) -> PatternSubgraph:
    """Induce the pattern subgraph for centers ``i`` and ``j`` (node indices)."""
    n = graph.n_nodes
    for c in (i, j):
        if not 0 <= c < n:
            raise KeyError(f"node index {c} not in graph of {n} nodes")
    if i == j:
        raise ValueError("pattern centers must differ")
    rest = (set(graph.neighbors(i)) | set(graph.neighbors(j))) - {i, j}
    members = (i, j, *sorted(rest))
    member_set = set(members)
    center_edge = (min(i, j), max(i, j))
    induced = []
    rows = []
    for u in sorted(member_set):
        for v in graph.neighbors(u):
            if v > u and v in member_set:
                if exclude_center_edge and (u, v) == center_edge:
                    continue
                induced.append((u, v))
                rows.append(graph.edge_row[(u, v)])
    edge_slice = None
    if graph.edge_features is not None:
        edge_slice = graph.edge_features[rows].reshape(len(rows), graph.edge_dim)
    center_neighbors = {}
    for c in (i, j):
        nb = [v for v in graph.neighbors(c) if v in member_set]
        if exclude_center_edge:
            nb = [v for v in nb if (min(c, v), max(c, v)) != center_edge]
        center_neighbors[c] = tuple(nb)
    return PatternSubgraph(
        center_i=i,
        center_j=j,
        members=members,
        induced_edges=tuple(induced),
        node_feature_slice=graph.node_features[list(members)],
        edge_feature_slice=edge_slice,
        center_neighbors=center_neighbors,
    )


def neighbors_in_subgraph(sub: PatternSubgraph, target: int) -> list[int]:
    """Ascending global indices of members sharing an induced edge with a center."""
    if target not in (sub.center_i, sub.center_j):
        raise ValueError(f"node {target} is not a center of this pattern")
    return list(sub.center_neighbors[target])


def pattern_indices(graph: Graph, patterns: Sequence[Pattern]) -> list[tuple[int, int]]:
    return [(graph.index(p.i), graph.index(p.j)) for p in patterns]
