"""Robot communication graphs and graph-signal operations.

A graph over the robots turns the stacked per-robot observations into a
graph signal. The shift operator S is an N x N symmetric matrix supported
on the edges; one multiplication by S mixes each node's features with its
neighbors'. Polynomial filters sum powers of S applied to the signal,
weighted by learnable tap matrices, so a filter of order K sees exactly a
K-hop neighborhood.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

KNN = "knn"
THRESHOLD = "threshold"

RAW_ADJACENCY = "raw"
DEGREE_NORMALIZED = "degree"
SELF_LOOP_NORMALIZED = "self_loop"

NORMALIZATIONS = (RAW_ADJACENCY, DEGREE_NORMALIZED, SELF_LOOP_NORMALIZED)


class InvalidK(ValueError):
    """k outside [1, N-1] for k-nearest-neighbor construction."""


class DimensionMismatch(ValueError):
    """Signal, operator or tap dimensions do not line up."""


@dataclass(frozen=True)
class GraphSpec:
    """How to build the robot graph from positions.

    method "knn" connects each robot to its k nearest neighbors
    (symmetrized); "threshold" connects every pair within distance
    `threshold`. normalization picks the shift operator variant.
    """

    method: str = KNN
    k: int = 1
    threshold: float = 1.0
    normalization: str = SELF_LOOP_NORMALIZED

    def validate(self) -> None:
        if self.method not in (KNN, THRESHOLD):
            raise ValueError(f"method must be {KNN!r} or {THRESHOLD!r}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
        if self.method == KNN and self.k < 1:
            raise InvalidK(f"k must be >= 1, got {self.k}")
        if self.method == THRESHOLD and self.threshold <= 0:
            raise ValueError("threshold must be > 0")


@dataclass(frozen=True)
class RobotGraph:
    """Undirected simple graph on robot indices."""

    n_nodes: int
    edges: frozenset  # of frozenset({i, j}) pairs

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n_nodes, self.n_nodes))
        for e in self.edges:
            i, j = sorted(e)
            a[i, j] = a[j, i] = 1.0
        return a

    def degree(self, node: int) -> int:
        return sum(1 for e in self.edges if node in e)

    def edge_list(self) -> list[tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.edges)

    def to_edge_text(self) -> str:
        """Edge list as text, one "i j" pair per line, for debugging."""
        return "\n".join(f"{i} {j}" for i, j in self.edge_list())


def build_graph(positions: np.ndarray, spec: GraphSpec) -> RobotGraph:
    """Connect robots by k-nearest neighbors or by a distance threshold.

    kNN edges are the symmetrized union: (i, j) is an edge iff j is among
    i's k nearest or i is among j's k nearest, so every node has degree
    >= k. Distance ties break toward the lower index.
    """
    spec.validate()
    positions = np.asarray(positions, dtype=np.float64)
    n = positions.shape[0]
    if n < 2:
        raise ValueError("need at least 2 nodes to build a graph")
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    edges = set()
    if spec.method == KNN:
        if spec.k > n - 1:
            raise InvalidK(f"k={spec.k} needs at least {spec.k + 1} nodes, got {n}")
        np.fill_diagonal(dist, np.inf)
        order = np.argsort(dist, axis=1, kind="stable")
        for i in range(n):
            for j in order[i, : spec.k]:
                edges.add(frozenset((i, int(j))))
    else:
        iu, ju = np.nonzero(np.triu(dist <= spec.threshold, k=1))
        for i, j in zip(iu, ju):
            edges.add(frozenset((int(i), int(j))))
    return RobotGraph(n, frozenset(edges))


@dataclass(frozen=True)
class ShiftOperator:
    """Symmetric matrix supported on the graph edges (dense storage).

    had_isolated flags that some node had degree 0 and its degree was
    treated as 1 during normalization.
    """

    matrix: np.ndarray
    normalization: str
    had_isolated: bool = False

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def n_nodes(self) -> int:
        return self.matrix.shape[0]


def shift_operator(graph: RobotGraph, normalization: str = SELF_LOOP_NORMALIZED) -> ShiftOperator:
    """Build S from the graph: adjacency A, D^(-1/2)AD^(-1/2), or the
    self-loop variant on A+I. Zero degrees are treated as 1 (with a warning)
    so normalization never divides by zero."""
    a = graph.adjacency()
    if normalization == RAW_ADJACENCY:
        return ShiftOperator(a, normalization)
    if normalization == SELF_LOOP_NORMALIZED:
        a = a + np.eye(graph.n_nodes)
    deg = a.sum(axis=1)
    had_isolated = bool(np.any(deg == 0))
    if had_isolated:
        warnings.warn("graph has isolated nodes; treating their degree as 1",
                      stacklevel=2)
        deg = np.where(deg == 0, 1.0, deg)
    dinv = 1.0 / np.sqrt(deg)
    # outer product keeps S exactly symmetric bit for bit
    s = a * np.outer(dinv, dinv)
    if normalization in (DEGREE_NORMALIZED, SELF_LOOP_NORMALIZED):
        return ShiftOperator(s, normalization, had_isolated)
    raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


def as_matrix(s) -> np.ndarray:
    """Accept a ShiftOperator or a plain square ndarray."""
    if isinstance(s, ShiftOperator):
        return s.matrix
    m = np.asarray(s, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"shift operator must be square, got {m.shape}")
    return m


def filter_apply(s, x: np.ndarray, taps) -> np.ndarray:
    """Polynomial graph convolution: Z = sum_k S^k X H_k.

    taps is an ordered sequence H_0..H_K of (F_in, F_out) matrices. Powers
    of S are never materialized; the diffused signal is built by repeated
    multiplication X, SX, S(SX), ... so cost stays O(K N^2 F). x may carry
    leading batch dimensions: shape (..., N, F_in).
    """
    m = as_matrix(s)
    x = np.asarray(x, dtype=np.float64)
    n = m.shape[0]
    if x.shape[-2] != n:
        raise DimensionMismatch(
            f"signal has {x.shape[-2]} rows, operator is {n}x{n}")
    taps = [np.asarray(h, dtype=np.float64) for h in taps]
    if not taps:
        raise DimensionMismatch("need at least one tap matrix")
    f_in = x.shape[-1]
    for h in taps:
        if h.shape != taps[0].shape:
            raise DimensionMismatch("all tap matrices must share a shape")
    if taps[0].ndim != 2 or taps[0].shape[0] != f_in:
        raise DimensionMismatch(
            f"taps expect {taps[0].shape[0] if taps[0].ndim == 2 else '?'} input"
            f" features, signal has {f_in}")
    diffused = x
    z = diffused @ taps[0]
    for h in taps[1:]:
        diffused = m @ diffused
        z += diffused @ h
    return z


def k_hop_neighborhood(graph: RobotGraph, node: int, k: int) -> set:
    """Nodes reachable within k edges of `node`, including the node itself."""
    if not 0 <= node < graph.n_nodes:
        raise ValueError(f"node {node} out of range")
    adj = [[] for _ in range(graph.n_nodes)]
    for i, j in graph.edge_list():
        adj[i].append(j)
        adj[j].append(i)
    seen = {node}
    frontier = [node]
    for _ in range(k):
        nxt = []
        for u in frontier:
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    nxt.append(v)
        frontier = nxt
    return seen


def permute_graph(s, x: np.ndarray, perm) -> tuple[np.ndarray, np.ndarray]:
    """Relabel nodes by the permutation: returns (P^T S P, P^T X) where
    P = I[:, perm]. Row i of the result corresponds to node perm[i]."""
    m = as_matrix(s)
    perm = np.asarray(perm)
    n = m.shape[0]
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("perm must be a permutation of 0..N-1")
    return m[np.ix_(perm, perm)], np.asarray(x)[perm]
