"""Discrete intrinsic distances and pullback lengths on sample graphs."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from .complex import Correspondence, SimplicialComplex, subdivide
from .errors import PreconditionError
from .plmap import PLMap, evaluate_root

__all__ = [
    "SampleGraph",
    "Defect",
    "sample_graph",
    "intrinsic_distance",
    "pullback_estimate",
    "isometry_defect",
    "pair_table",
]

_SLACK = 1e-12


@dataclass(eq=False)
class SampleGraph:
    """Subdivision vertices of a complex joined whenever they share a closed simplex.

    ``edges`` index into ``nodes``; ``weights`` are straight-line distances
    in the flat simplex holding both ends.
    """

    complex: SimplicialComplex
    sub: SimplicialComplex
    correspondence: Correspondence
    edges: np.ndarray
    weights: np.ndarray
    mesh: float

    @property
    def nodes(self) -> tuple:
        return self.sub.vertices

    @property
    def n_nodes(self) -> int:
        return self.sub.n_vertices

    def node(self, vid) -> int:
        try:
            return self.sub.index[vid]
        except KeyError:
            raise PreconditionError(f"{vid!r} is not a node of the sample graph") from None

    def matrix(self, weights=None, keep=None) -> sparse.csr_matrix:
        w = self.weights if weights is None else weights
        e = self.edges
        if keep is not None:
            e, w = e[keep], w[keep]
        n = self.n_nodes
        # explicit zeros stay stored, so zero-length steps remain edges
        return sparse.csr_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n))


def _graph_cliques(cx, corr, max_step):
    E = cx.rows(1)
    carrier = np.where(corr.weights > 0, corr.carrier, -1)
    weights = corr.weights
    if carrier.shape[1] == 1:
        carrier = np.hstack([carrier, np.full_like(carrier, -1)])
        weights = np.hstack([weights, np.zeros_like(weights)])
    width = (carrier >= 0).sum(axis=1)
    inner = np.flatnonzero(width == 2)
    e_in = cx.find_rows(1, np.sort(carrier[inner], axis=1))
    hi = np.sort(carrier[inner], axis=1)[:, 1]
    w = weights[inner]
    t_in = np.where(carrier[inner, 0] == hi, w[:, 0], w[:, 1])
    # original vertices sit at t = 0 or 1 on every incident edge
    vnode = np.full(cx.n_vertices, -1, dtype=np.int64)
    at_v = np.flatnonzero(width == 1)
    vnode[carrier[at_v].max(axis=1)] = at_v
    j = np.arange(len(E))
    node = np.concatenate([inner, vnode[E[:, 0]], vnode[E[:, 1]]])
    edge = np.concatenate([e_in, j, j])
    t = np.concatenate([t_in, np.zeros(len(E)), np.ones(len(E))])
    order = np.lexsort((t, edge))
    node, edge, t = node[order], edge[order], t[order]
    L = cx.lengths[edge]
    limit = np.inf if max_step is None else max_step * (1 + _SLACK)
    out_e, out_w = [], []
    k = 1
    while k < len(node):
        same = edge[k:] == edge[:-k]
        d = (t[k:] - t[:-k]) * L[k:]
        ok = same & (d <= limit)
        if not ok.any():
            break
        out_e.append(np.stack([node[:-k][ok], node[k:][ok]], axis=1))
        out_w.append(d[ok])
        k += 1
    if not out_e:
        return np.zeros((0, 2), np.int64), np.zeros(0)
    return np.concatenate(out_e), np.concatenate(out_w)


def _simplex_cliques(cx, corr, max_step):
    lam = corr.matrix().toarray()
    out_e, out_w = [], []
    for d, rows in cx.maximal.items():
        if d == 0:
            continue
        D = cx.sqdist(rows)
        for row, Dm in zip(rows, D):
            inside = np.flatnonzero(lam[:, row].sum(axis=1) > 1 - 1e-12)
            B = lam[np.ix_(inside, row)]
            q = np.einsum("ij,jk,ik->i", B, Dm, B)
            d2 = -0.5 * (q[:, None] + q[None, :] - 2 * B @ Dm @ B.T)
            a, b = np.triu_indices(len(inside), 1)
            dist = np.sqrt(np.maximum(d2[a, b], 0.0))
            keep = np.ones(len(a), bool) if max_step is None else dist <= max_step * (1 + _SLACK)
            out_e.append(np.stack([inside[a][keep], inside[b][keep]], axis=1))
            out_w.append(dist[keep])
    if not out_e:
        return np.zeros((0, 2), np.int64), np.zeros(0)
    return np.concatenate(out_e), np.concatenate(out_w)


def sample_graph(cx: SimplicialComplex, level: int, max_step: float | None = None) -> SampleGraph:
    """Sample graph on the level-``level`` subdivision of ``cx``.

    Nodes sharing a closed maximal simplex of ``cx`` are joined; with
    ``max_step`` only pairs at most that far apart are kept.
    """
    sub, corr = subdivide(cx, level)
    if cx.dim <= 1:
        e, w = _graph_cliques(cx, corr, max_step)
    else:
        e, w = _simplex_cliques(cx, corr, max_step)
    if len(e):
        e = np.sort(e, axis=1)
        e, first = np.unique(e, axis=0, return_index=True)
        w = w[first]
    return SampleGraph(cx, sub, corr, e, w, sub.mesh)


def _shortest(graph: SampleGraph, m: sparse.csr_matrix, sources) -> np.ndarray:
    return dijkstra(m, directed=False, indices=np.atleast_1d(sources))


def intrinsic_distance(graph: SampleGraph, x, y) -> float:
    """Shortest-path length between two nodes; ``math.inf`` if unreachable."""
    i, j = graph.node(x), graph.node(y)
    d = float(_shortest(graph, graph.matrix(), i)[0, j])
    return d if np.isfinite(d) else math.inf


def _node_images(f: PLMap, graph: SampleGraph) -> np.ndarray:
    if f.domain.root.vertices != graph.complex.root.vertices:
        raise PreconditionError("map and sample graph live on different complexes")
    if f.domain is graph.sub:
        return f.images
    return evaluate_root(f, *graph.sub.root_carriers())


def _pullback_matrix(f: PLMap, graph: SampleGraph, chain_eps: float) -> sparse.csr_matrix:
    if not chain_eps > 0:
        raise PreconditionError("chain_eps must be positive")
    if chain_eps < graph.mesh * (1 - _SLACK):
        raise PreconditionError(
            f"chain_eps {chain_eps:.6g} is below the sample mesh {graph.mesh:.6g}; "
            "use a finer level or a larger chain_eps")
    X = _node_images(f, graph)
    keep = graph.weights <= chain_eps * (1 + _SLACK)
    w = np.linalg.norm(X[graph.edges[:, 1]] - X[graph.edges[:, 0]], axis=1)
    return graph.matrix(w, keep)


def pullback_estimate(f: PLMap, graph: SampleGraph, x, y, chain_eps: float) -> float:
    """Least image length of a chain from x to y with steps of length <= chain_eps."""
    m = _pullback_matrix(f, graph, chain_eps)
    i, j = graph.node(x), graph.node(y)
    d = float(_shortest(graph, m, i)[0, j])
    return d if np.isfinite(d) else math.inf


class Defect(NamedTuple):
    defect: float
    pair: tuple | None
    intrinsic: float
    pullback: float


def _pair_arrays(graph, pairs, max_sources):
    n = graph.n_nodes
    if pairs is None:
        if n <= max_sources:
            src = np.arange(n)
        else:
            src = np.unique(np.linspace(0, n - 1, max_sources).round().astype(np.int64))
        return src, None
    p = np.array([[graph.node(a), graph.node(b)] for a, b in pairs], dtype=np.int64).reshape(-1, 2)
    return np.unique(p[:, 0]), p


def _distance_tables(f, graph, chain_eps, pairs, max_sources):
    src, p = _pair_arrays(graph, pairs, max_sources)
    d_in = _shortest(graph, graph.matrix(), src)
    d_pb = _shortest(graph, _pullback_matrix(f, graph, chain_eps), src)
    if p is None:
        rows = np.repeat(src, graph.n_nodes)
        cols = np.tile(np.arange(graph.n_nodes), len(src))
        return rows, cols, d_in.ravel(), d_pb.ravel()
    pos = np.searchsorted(src, p[:, 0])
    return p[:, 0], p[:, 1], d_in[pos, p[:, 1]], d_pb[pos, p[:, 1]]


def isometry_defect(f: PLMap, graph: SampleGraph, chain_eps: float, pairs=None,
                    max_sources: int = 2000) -> Defect:
    """Largest gap between intrinsic distance and pullback length.

    ``pairs`` defaults to all node pairs, or to pairs from at most
    ``max_sources`` evenly spread source nodes on large graphs.  Pairs in
    different components are skipped.
    """
    r, c, d_in, d_pb = _distance_tables(f, graph, chain_eps, pairs, max_sources)
    ok = np.isfinite(d_in)
    if not ok.any():
        return Defect(0.0, None, 0.0, 0.0)
    gap = np.full(len(d_in), -np.inf)
    gap[ok] = d_in[ok] - d_pb[ok]
    k = int(np.argmax(gap))
    pair = (graph.nodes[r[k]], graph.nodes[c[k]])
    return Defect(float(gap[k]), pair, float(d_in[k]), float(d_pb[k]))


def pair_table(f: PLMap, graph: SampleGraph, chain_eps: float, pairs) -> list:
    """Rows (pair, intrinsic, pullback, defect) for the given node pairs."""
    r, c, d_in, d_pb = _distance_tables(f, graph, chain_eps, pairs, graph.n_nodes)
    out = []
    for a, b, di, dp in zip(r.tolist(), c.tolist(), d_in.tolist(), d_pb.tolist()):
        name = f"{graph.nodes[a]}|{graph.nodes[b]}"
        if math.isinf(di):
            out.append((name, math.inf, math.inf, math.nan))
        else:
            out.append((name, di, dp, di - dp))
    return out
