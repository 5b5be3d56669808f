"""Undirected graphs in CSR form and the symmetric GCN normalization."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


class GraphInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SparseGraph:
    """Symmetric CSR adjacency.

    Rows are sorted and duplicate-free.  When ``is_normalized`` is set the
    values hold ``1/sqrt(d_u d_v)`` for the self-looped graph.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    edge_values: np.ndarray
    is_normalized: bool = False

    @property
    def nnz(self) -> int:
        return int(self.col_indices.shape[0])

    @cached_property
    def csr(self) -> sp.csr_matrix:
        n = self.num_nodes
        return sp.csr_matrix((self.edge_values, self.col_indices, self.row_offsets), shape=(n, n))

    def neighbors(self, u: int) -> np.ndarray:
        return self.col_indices[self.row_offsets[u]:self.row_offsets[u + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def to_dense(self) -> np.ndarray:
        return self.csr.toarray()

    def edge_list(self) -> np.ndarray:
        """Canonical ``(u, v)`` pairs with ``u < v`` (self-loops omitted)."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees())
        keep = rows < self.col_indices
        return np.stack([rows[keep], self.col_indices[keep]], axis=1)


def canonical_edges(edges, num_nodes: int) -> np.ndarray:
    """Validate an edge array and return sorted unique ``u < v`` pairs."""
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if e.ndim != 2 or e.shape[1] != 2:
        raise GraphInputError(f"edges must have shape (m, 2), got {e.shape}")
    if e.min() < 0 or e.max() >= num_nodes:
        raise GraphInputError(f"edge endpoint out of range [0, {num_nodes})")
    if np.any(e[:, 0] == e[:, 1]):
        raise GraphInputError("self-loop in raw edge list")
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0)


def build_graph(num_nodes: int, edges) -> SparseGraph:
    e = canonical_edges(edges, num_nodes)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    return _from_coo(num_nodes, rows, cols, np.ones(rows.shape[0]), normalized=False)


def _from_coo(n: int, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray, normalized: bool) -> SparseGraph:
    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=offsets[1:])
    return SparseGraph(n, offsets, cols.astype(np.int64), vals.astype(np.float64), normalized)


def normalize_adjacency(g: SparseGraph) -> SparseGraph:
    """Return ``D^-1/2 (A + I) D^-1/2`` with ``D`` the degree of ``A + I``."""
    if g.is_normalized:
        raise GraphInputError("graph is already normalized")
    n = g.num_nodes
    rows = np.repeat(np.arange(n), g.degrees())
    diag = np.arange(n)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([g.col_indices, diag])
    deg = g.degrees().astype(np.float64) + 1.0
    vals = 1.0 / np.sqrt(deg[rows] * deg[cols])
    return _from_coo(n, rows, cols, vals, normalized=True)


def spmm(g: SparseGraph, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``A @ x``."""
    if x.ndim != 2 or x.shape[0] != g.num_nodes:
        raise GraphInputError(f"expected {g.num_nodes} rows, got shape {x.shape}")
    return np.asarray(g.csr @ x)
