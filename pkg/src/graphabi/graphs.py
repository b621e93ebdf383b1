"""Graph representation, permutations, padding, and structural helpers.

A graph is an undirected, loop-free adjacency matrix (binary or weighted in
[0, 1]) together with per-node feature rows.  Variable-size graphs are handled
by zero padding plus a validity mask; absent nodes carry no edges and zero
features, so padding never introduces information.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GraphError(ValueError):
    """Raised for structurally invalid graphs or mismatched arguments."""


@dataclass(frozen=True)
class Graph:
    """Undirected attributed graph: symmetric adjacency, zero diagonal."""

    adjacency: np.ndarray  # (n, n), symmetric, nonnegative, zero diagonal
    features: np.ndarray   # (n, p), p may be 0

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.float64)
        feats = np.asarray(self.features, dtype=np.float64)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise GraphError(f"adjacency must be square and nonempty, got {adj.shape}")
        if feats.ndim != 2 or feats.shape[0] != adj.shape[0]:
            raise GraphError(
                f"features must have one row per node: {feats.shape} vs n={adj.shape[0]}"
            )
        if not np.array_equal(adj, adj.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diag(adj) != 0):
            raise GraphError("adjacency diagonal must be zero")
        if np.any(adj < 0):
            raise GraphError("adjacency entries must be nonnegative")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class PaddedGraph:
    """A graph zero-padded to ``n_max`` nodes with a real-node mask."""

    adjacency: np.ndarray  # (n_max, n_max)
    features: np.ndarray   # (n_max, p)
    mask: np.ndarray       # (n_max,), 1.0 = real node

    @property
    def n_max(self) -> int:
        return self.mask.shape[0]

    @property
    def n(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class Permutation:
    """Bijection over node indices; ``order[i]`` is the old index of new node i."""

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        n = order.shape[0]
        if order.ndim != 1 or not np.array_equal(np.sort(order), np.arange(n)):
            raise GraphError("permutation must be a bijection over {0..n-1}")
        object.__setattr__(self, "order", order)

    @property
    def n(self) -> int:
        return self.order.shape[0]

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n))

    @staticmethod
    def random(n: int, rng: np.random.Generator) -> "Permutation":
        return Permutation(rng.permutation(n))

    def inverse(self) -> "Permutation":
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.n)
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """Permutation equal to applying ``other`` first, then ``self``."""
        if self.n != other.n:
            raise GraphError("cannot compose permutations of different sizes")
        return Permutation(other.order[self.order])


def apply_permutation(g: Graph, perm: Permutation) -> Graph:
    """Relabel nodes: adjacency PAP^T and features PX. Input is untouched."""
    if perm.n != g.n:
        raise GraphError(f"permutation size {perm.n} != node count {g.n}")
    o = perm.order
    return Graph(adjacency=g.adjacency[np.ix_(o, o)], features=g.features[o])


def pad_graph(g: Graph, n_max: int) -> PaddedGraph:
    """Zero-pad adjacency and features to ``n_max`` nodes and build the mask."""
    if g.n > n_max:
        raise GraphError(f"cannot pad graph with {g.n} nodes to n_max={n_max}")
    adj = np.zeros((n_max, n_max), dtype=np.float64)
    adj[: g.n, : g.n] = g.adjacency
    feats = np.zeros((n_max, g.p), dtype=np.float64)
    feats[: g.n] = g.features
    mask = np.zeros(n_max, dtype=np.float64)
    mask[: g.n] = 1.0
    return PaddedGraph(adjacency=adj, features=feats, mask=mask)


def unpad_graph(pg: PaddedGraph) -> Graph:
    """Inverse of :func:`pad_graph`; exact because padding is all-zero."""
    n = pg.n
    return Graph(adjacency=pg.adjacency[:n, :n].copy(), features=pg.features[:n].copy())


def common_neighbors(adjacency: np.ndarray) -> np.ndarray:
    """Entry (i, j) counts nodes adjacent to both i and j; equals (A @ A)."""
    a = np.asarray(adjacency)
    return np.rint(a @ a).astype(np.int64)


def degree_features(adjacency: np.ndarray) -> np.ndarray:
    """Node degrees as an (n, 1) matrix; default embedding when p = 0."""
    a = np.asarray(adjacency, dtype=np.float64)
    return a.sum(axis=1, keepdims=True)


def structural_node_features(adjacency: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Permutation-equivariant per-node structure summaries.

    Used as an invariant-safe substitute for raw adjacency-row augmentation:
    every column is equivariant under joint relabeling (PAP^T, PX), so any
    permutation-invariant pooling of these rows is invariant.

    Columns: weighted degree; neighbor-feature aggregates A @ X (p columns);
    triangle count at the node; count and sum of common neighbors over
    non-edges (triadic-closure pressure); edge-weighted L1 feature
    disagreement with neighbors.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    x = np.asarray(features, dtype=np.float64)
    n = a.shape[0]
    binary = (a > 0).astype(np.float64)
    deg = a.sum(axis=1, keepdims=True)
    neigh = a @ x
    cn = binary @ binary
    np.fill_diagonal(cn, 0.0)
    triangles = 0.5 * (binary * cn).sum(axis=1, keepdims=True)
    off = 1.0 - np.eye(n)
    nonedge = (1.0 - binary) * off
    cn_count = (nonedge * (cn > 0)).sum(axis=1, keepdims=True)
    cn_sum = (nonedge * cn).sum(axis=1, keepdims=True)
    l1 = np.abs(x[:, None, :] - x[None, :, :]).sum(axis=2)
    disagree = (a * l1).sum(axis=1, keepdims=True)
    return np.concatenate([deg, neigh, triangles, cn_count, cn_sum, disagree], axis=1)
