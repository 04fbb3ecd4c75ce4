"""Proximity graphs and the sparse difference operators built on them.

Nodes are indexed 0..n-1. A graph stores an ordered edge list with ``i < j``;
the row order of the first-difference operator follows the edge order, so
edge order is part of the contract.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .errors import DegenerateLayoutError, StructuralError, UnsupportedStructureError

FIRST_DIFFERENCE = "first-difference"
TREND = "trend"
LAPLACIAN = "laplacian"
CUSTOM = "custom"
OPERATOR_KINDS = (FIRST_DIFFERENCE, TREND, LAPLACIAN)

# condition number of the layout covariance beyond which whitening is refused
WHITEN_MAX_CONDITION = 1e12


@dataclass(frozen=True)
class ProximityGraph:
    """Undirected graph over ``n`` nodes given by an ordered edge list."""

    n: int
    edges: np.ndarray = field(repr=False)

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise StructuralError(f"graph needs at least one node, got n={n}")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise StructuralError("edges must satisfy i < j (no self-loops)")
            if edges.min() < 0 or edges.max() >= n:
                raise StructuralError(f"edge index out of range for n={n}")
            keys = edges[:, 0] * n + edges[:, 1]
            if np.unique(keys).size != keys.size:
                raise StructuralError("duplicate edges")
        edges.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "edges", edges)

    @property
    def p(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def adjacency(self) -> sp.csr_matrix:
        e = self.edges
        ones = np.ones(self.p)
        a = sp.coo_matrix((np.r_[ones, ones], (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                          shape=(self.n, self.n))
        return a.tocsr()

    def is_path(self) -> bool:
        """True when the edges are exactly the chain 0-1-...-(n-1)."""
        if self.p != self.n - 1:
            return False
        if self.p == 0:
            return True
        e = self.edges[np.argsort(self.edges[:, 0], kind="stable")]
        return bool(np.all(e[:, 0] == np.arange(self.n - 1)) and np.all(e[:, 1] == e[:, 0] + 1))


@dataclass(frozen=True)
class DifferenceOperator:
    """Sparse structural matrix ``D_s`` (rows x n) plus its kind.

    The Kronecker expansion with the m x m identity is never formed; callers
    apply ``matrix`` to an (n, m) array of node parameters.
    """

    matrix: sp.csr_matrix = field(repr=False)
    kind: str

    def __post_init__(self):
        mat = sp.csr_matrix(self.matrix, dtype=float)
        mat.sum_duplicates()
        mat.sort_indices()
        object.__setattr__(self, "matrix", mat)

    @property
    def n(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def p(self) -> int:
        return int(self.matrix.shape[0])

    @property
    def rows(self) -> list[list[tuple[int, float]]]:
        m = self.matrix
        return [
            [(int(c), float(v)) for c, v in zip(m.indices[m.indptr[r]:m.indptr[r + 1]],
                                                m.data[m.indptr[r]:m.indptr[r + 1]])]
            for r in range(m.shape[0])
        ]

    def apply(self, beta: np.ndarray) -> np.ndarray:
        """Row-wise application to node parameters: (n, m) -> (p, m)."""
        return self.matrix @ beta

    def row_norms(self, beta: np.ndarray) -> np.ndarray:
        diff = self.apply(np.asarray(beta, dtype=float).reshape(self.n, -1))
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    @classmethod
    def from_matrix(cls, matrix, kind: str = CUSTOM) -> "DifferenceOperator":
        return cls(sp.csr_matrix(matrix, dtype=float), kind)


def build_lattice_graph(height: int, width: int) -> ProximityGraph:
    """4-neighbour lattice, row-major nodes; horizontal edges first, then vertical."""
    if height < 1 or width < 1:
        raise StructuralError(f"lattice dimensions must be positive, got {height}x{width}")
    idx = np.arange(height * width, dtype=np.int64).reshape(height, width)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    return ProximityGraph(height * width, np.vstack([horiz, vert]))


def build_path_graph(n: int) -> ProximityGraph:
    i = np.arange(n - 1, dtype=np.int64)
    return ProximityGraph(n, np.column_stack([i, i + 1]))


def whiten_locations(locations: np.ndarray) -> np.ndarray:
    """Map locations to zero sample mean and identity sample covariance.

    Uses the symmetric inverse square root of the (ddof=1) sample covariance.
    """
    v = np.asarray(locations, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2 or v.shape[0] < 2:
        raise StructuralError("whitening needs at least two locations of equal dimension")
    mu = v.mean(axis=0)
    centred = v - mu
    cov = np.atleast_2d(np.cov(centred, rowvar=False))
    evals, evecs = np.linalg.eigh(cov)
    top = evals[-1]
    low = evals[0]
    cond = np.inf if low <= 0 or top <= 0 else top / low
    if not np.isfinite(cond) or cond > WHITEN_MAX_CONDITION:
        direction = evecs[:, 0]
        raise DegenerateLayoutError(
            f"degenerate layout: sample covariance has condition number {cond:.3g}; "
            f"no spread along direction {np.array2string(direction, precision=4)}",
            direction=direction,
            condition=cond,
        )
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    return centred @ inv_sqrt


def build_knn_graph(locations: np.ndarray, k: int, r: float = np.inf) -> ProximityGraph:
    """Symmetrised k-nearest-neighbour graph in whitened coordinates.

    Each node selects its ``k`` nearest neighbours with distance <= ``r``;
    an edge exists when either endpoint selects the other. Distance ties are
    broken by the smaller node index.
    """
    if k < 1:
        raise StructuralError(f"k must be positive, got {k}")
    if r < 0:
        raise StructuralError(f"radius must be non-negative, got {r}")
    w = whiten_locations(locations)
    n = w.shape[0]
    kq = min(n, k + 1 + 8)
    tree = cKDTree(w)
    dist, nbr = tree.query(w, k=kq)
    dist = np.atleast_2d(dist).reshape(n, kq)
    nbr = np.atleast_2d(nbr).reshape(n, kq)
    pairs = []
    for i in range(n):
        d_i, j_i = dist[i], nbr[i]
        keep = (j_i != i) & (j_i < n)
        d_i, j_i = d_i[keep], j_i[keep]
        order = np.lexsort((j_i, d_i))
        d_i, j_i = d_i[order][:k], j_i[order][:k]
        j_i = j_i[d_i <= r]
        for j in j_i:
            pairs.append((min(i, j), max(i, j)))
    if not pairs:
        return ProximityGraph(n, np.empty((0, 2), dtype=np.int64))
    e = np.unique(np.asarray(pairs, dtype=np.int64), axis=0)
    return ProximityGraph(n, e)


def build_operator(graph: ProximityGraph, kind: str = FIRST_DIFFERENCE) -> DifferenceOperator:
    """Sparse difference operator of the requested kind for ``graph``."""
    n, e = graph.n, graph.edges
    if kind == FIRST_DIFFERENCE:
        p = graph.p
        rows = np.r_[np.arange(p), np.arange(p)]
        cols = np.r_[e[:, 0], e[:, 1]]
        vals = np.r_[np.ones(p), -np.ones(p)]
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(p, n))
    elif kind == TREND:
        if not graph.is_path():
            raise UnsupportedStructureError("trend operator requires a path graph 0-1-...-(n-1)")
        if n < 3:
            mat = sp.csr_matrix((0, n))
        else:
            k = np.arange(n - 2)
            rows = np.repeat(k, 3)
            cols = (k[:, None] + np.arange(3)).ravel()
            vals = np.tile([-1.0, 2.0, -1.0], n - 2)
            mat = sp.csr_matrix((vals, (rows, cols)), shape=(n - 2, n))
    elif kind == LAPLACIAN:
        adj = graph.adjacency()
        mat = (sp.diags(graph.degrees().astype(float)) - adj).tocsr()
    else:
        raise UnsupportedStructureError(f"unknown operator kind {kind!r}; expected one of {OPERATOR_KINDS}")
    return DifferenceOperator(mat, kind)


def as_operator(graph_or_op) -> DifferenceOperator:
    """Accept either a graph (first differences) or a ready operator."""
    if isinstance(graph_or_op, DifferenceOperator):
        return graph_or_op
    if isinstance(graph_or_op, ProximityGraph):
        return build_operator(graph_or_op, FIRST_DIFFERENCE)
    raise StructuralError(f"expected ProximityGraph or DifferenceOperator, got {type(graph_or_op).__name__}")
