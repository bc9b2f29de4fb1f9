"""Shared oracles for the test suite."""

import numpy as np


def finite_difference(f, params, h=1e-6):
    """Central differences of scalar f() w.r.t. each parameter's entries."""
    grads = {}
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = f()
            flat[i] = orig - h
            lo = f()
            flat[i] = orig
            g.ravel()[i] = (hi - lo) / (2 * h)
        grads[p] = g
    return grads


def max_rel_err(a, b, floor=1e-3):
    # the floor reflects what central differences can resolve: their
    # cancellation noise is ~eps*|f|/(2h), so entries below the floor are
    # compared absolutely at floor*1e-5, an order of magnitude above the
    # noise for |f| <= ~10
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def random_connected_graph(rng, n, extra_edge_prob=0.2):
    """A random spanning tree plus extra edges; every node has degree >= 1."""
    edges = [[i, int(rng.integers(0, i))] for i in range(1, n)]
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < extra_edge_prob:
                edges.append([i, j])
    return edges
