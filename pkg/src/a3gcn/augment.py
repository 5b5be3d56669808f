"""Edge-drop graph views."""

from __future__ import annotations

import numpy as np

from .graph import SparseGraph, build_graph, normalize_adjacency
from .rng import Stream, make_rng


def edge_drop(edges: np.ndarray, p_drop: float, rng: np.random.Generator) -> np.ndarray:
    """Keep each undirected edge iff its uniform draw exceeds ``p_drop``."""
    if not 0.0 <= p_drop <= 1.0:
        raise ValueError(f"p_drop must be in [0, 1], got {p_drop}")
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    z = rng.random(edges.shape[0])
    return edges[z > p_drop]


def make_views(edges: np.ndarray, num_nodes: int, k: int, p_drop: float, seed: int) -> list[SparseGraph]:
    """``k`` normalized views; view ``i`` draws from its own substream of ``seed``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    views = []
    for i in range(k):
        kept = edge_drop(edges, p_drop, make_rng(seed, Stream.VIEW, i))
        views.append(normalize_adjacency(build_graph(num_nodes, kept)))
    return views
