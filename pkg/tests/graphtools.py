"""Shared helpers for graph-based tests."""

import numpy as np

from gpgswarm.graphs import RobotGraph


def random_connected_graph(rng, n):
    """Random graph guaranteed connected via a random spanning tree."""
    edges = set()
    order = rng.permutation(n)
    for i in range(1, n):
        j = order[rng.integers(0, i)]
        edges.add(frozenset((int(order[i]), int(j))))
    for _ in range(n):
        i, j = rng.integers(0, n, size=2)
        if i != j:
            edges.add(frozenset((int(i), int(j))))
    return RobotGraph(n, frozenset(edges))


def power_iteration_radius(m, iters=3000):
    """Spectral radius estimate for a symmetric matrix."""
    rng = np.random.default_rng(0)
    v = rng.normal(size=m.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = m @ v
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        lam = float(v @ (m @ v))
    return abs(lam)
