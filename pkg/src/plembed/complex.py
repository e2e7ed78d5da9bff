"""Finite metric simplicial complexes.

A complex is stored in array form: vertex ids are kept sorted, and every
simplex is a row of vertex indices in ascending order, so index order and
id order agree.  Subdivided complexes remember where their vertices sit in
the root complex they were cut from.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .errors import PreconditionError

__all__ = [
    "BarycentricPoint",
    "Correspondence",
    "SimplicialComplex",
    "SubComplex",
    "ValidationReport",
    "build_complex",
    "gram_form",
    "gram_forms",
    "validate_metric",
    "star",
    "shell",
    "shell_index",
    "epsilon_at",
    "subdivide",
    "subdivide_edges",
    "vertex_budgets",
    "simplex_budgets",
]

DEFAULT_PD_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class BarycentricPoint:
    """A point of a closed simplex given by barycentric weights."""

    simplex: tuple
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(w) != len(self.simplex):
            raise PreconditionError("weights and simplex differ in length")
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-12:
            raise PreconditionError(f"invalid barycentric weights {w}")
        object.__setattr__(self, "simplex", tuple(self.simplex))
        object.__setattr__(self, "weights", w)

    @classmethod
    def vertex(cls, v):
        return cls((v,), np.ones(1))

    def support(self):
        """Vertices carrying positive weight, i.e. the open simplex holding the point."""
        return tuple(v for v, w in zip(self.simplex, self.weights) if w > 0)


def _closure_rows(rows_by_dim: Mapping[int, np.ndarray]) -> dict[int, np.ndarray]:
    out: dict[int, list[np.ndarray]] = {}
    for d, rows in rows_by_dim.items():
        rows = np.asarray(rows, dtype=np.int64).reshape(-1, d + 1)
        if len(rows) == 0:
            continue
        rows = np.sort(rows, axis=1)
        for j in range(d + 1):
            for cols in itertools.combinations(range(d + 1), j + 1):
                out.setdefault(j, []).append(rows[:, cols])
    return {d: _unique_rows(np.concatenate(parts)) for d, parts in sorted(out.items())}


def _unique_rows(rows: np.ndarray) -> np.ndarray:
    base = int(rows.max()) + 1 if rows.size else 1
    if float(base) ** rows.shape[1] >= 2.0**62:
        return np.unique(rows, axis=0)
    _, first = np.unique(_row_keys(rows, base), return_index=True)
    return rows[first]


def _row_keys(rows: np.ndarray, base: int):
    """Integer keys that sort like the rows (lexicographically)."""
    d1 = rows.shape[1]
    if float(base) ** d1 < 2.0**62:
        keys = np.zeros(len(rows), dtype=np.int64)
        for c in range(d1):
            keys = keys * base + rows[:, c]
        return keys
    return np.array([hash(tuple(r)) for r in rows.tolist()])


class SimplicialComplex:
    """Immutable finite simplicial complex with positive edge lengths.

    Use :func:`build_complex` to construct one from ids; the constructor
    expects already-closed, sorted arrays.
    """

    def __init__(self, vertices: tuple, faces: dict, lengths: np.ndarray,
                 origin: "Correspondence | None" = None):
        self.vertices = tuple(vertices)
        self.faces = {d: np.asarray(r, dtype=np.int64) for d, r in faces.items() if len(r)}
        self.lengths = np.asarray(lengths, dtype=float)
        self.origin = origin
        for arr in self.faces.values():
            arr.setflags(write=False)
        self.lengths.setflags(write=False)

    def __repr__(self):
        counts = ", ".join(f"{len(r)}x{d}" for d, r in self.faces.items())
        return f"SimplicialComplex(n={self.dim}, {counts})"

    @property
    def dim(self) -> int:
        return max(self.faces) if self.faces else -1

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def root(self) -> "SimplicialComplex":
        return self.origin.parent if self.origin is not None else self

    @cached_property
    def index(self) -> dict:
        return {v: i for i, v in enumerate(self.vertices)}

    @cached_property
    def simplices(self) -> frozenset:
        vs = self.vertices
        return frozenset(tuple(vs[i] for i in row) for rows in self.faces.values()
                         for row in rows.tolist())

    @cached_property
    def edge_lengths(self) -> dict:
        vs = self.vertices
        edges = self.faces.get(1, np.zeros((0, 2), dtype=np.int64))
        return {(vs[a], vs[b]): float(L) for (a, b), L in zip(edges.tolist(), self.lengths)}

    @cached_property
    def _keys(self) -> dict:
        return {d: _row_keys(rows, self.n_vertices) for d, rows in self.faces.items()}

    def rows(self, d: int) -> np.ndarray:
        return self.faces.get(d, np.zeros((0, d + 1), dtype=np.int64))

    def find_rows(self, d: int, rows) -> np.ndarray:
        """Positions of index rows among the d-simplices; -1 where absent."""
        rows = np.sort(np.asarray(rows, dtype=np.int64).reshape(-1, d + 1), axis=1)
        if d not in self.faces:
            return np.full(len(rows), -1)
        keys = self._keys[d]
        q = _row_keys(rows, self.n_vertices)
        pos = np.searchsorted(keys, q)
        pos = np.clip(pos, 0, len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def to_rows(self, simplex: Sequence) -> np.ndarray:
        try:
            return np.array(sorted(self.index[v] for v in simplex), dtype=np.int64)
        except KeyError as exc:
            raise PreconditionError(f"unknown vertex {exc.args[0]!r}") from None

    def ids(self, row) -> tuple:
        return tuple(self.vertices[i] for i in row)

    def has_simplex(self, simplex: Sequence) -> bool:
        if any(v not in self.index for v in simplex) or len(set(simplex)) != len(simplex):
            return False
        row = self.to_rows(simplex)
        return bool(self.find_rows(len(row) - 1, row[None])[0] >= 0)

    def sqdist(self, rows: np.ndarray) -> np.ndarray:
        """Squared intrinsic distances among the vertices of each row, (k, d+1, d+1)."""
        rows = np.asarray(rows, dtype=np.int64)
        k, d1 = rows.shape
        out = np.zeros((k, d1, d1))
        for a, b in itertools.combinations(range(d1), 2):
            pos = self.find_rows(1, np.stack([rows[:, a], rows[:, b]], axis=1))
            if np.any(pos < 0):
                raise PreconditionError("rows contain a pair that is not an edge")
            L2 = self.lengths[pos] ** 2
            out[:, a, b] = L2
            out[:, b, a] = L2
        return out

    @cached_property
    def maximal(self) -> dict:
        """Maximal simplices as index rows, keyed by dimension."""
        out = {}
        for d, rows in self.faces.items():
            if d + 1 not in self.faces:
                out[d] = rows
                continue
            up = self.faces[d + 1]
            faces = np.concatenate([up[:, cols] for cols in
                                    itertools.combinations(range(d + 2), d + 1)])
            covered = np.unique(self.find_rows(d, faces))
            mask = np.ones(len(rows), dtype=bool)
            mask[covered[covered >= 0]] = False
            if mask.any():
                out[d] = rows[mask]
        return out

    @cached_property
    def adjacency(self) -> list:
        adj = [[] for _ in self.vertices]
        for a, b in self.rows(1).tolist():
            adj[a].append(b)
            adj[b].append(a)
        return adj

    @cached_property
    def components(self) -> np.ndarray:
        """Connected-component label per vertex, labelled by first vertex index."""
        n = self.n_vertices
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        edges = self.rows(1)
        g = sparse.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
        _, labels = sparse.csgraph.connected_components(g, directed=False)
        first = np.full(labels.max() + 1, n)
        np.minimum.at(first, labels, np.arange(n))
        return first[labels]

    @cached_property
    def mesh(self) -> float:
        return float(self.lengths.max()) if len(self.lengths) else 0.0

    def root_carriers(self) -> tuple[np.ndarray, np.ndarray]:
        """Root carrier indices (V, r) padded with -1, and matching weights."""
        if self.origin is None:
            idx = np.arange(self.n_vertices)[:, None]
            return idx, np.ones((self.n_vertices, 1))
        return self.origin.carrier, self.origin.weights


@dataclass(frozen=True, eq=False)
class Correspondence:
    """Barycentric position of each child vertex in a parent complex."""

    parent: SimplicialComplex
    child_vertices: tuple
    carrier: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.child_vertices)

    @cached_property
    def _pos(self):
        return {v: i for i, v in enumerate(self.child_vertices)}

    def __getitem__(self, vid) -> BarycentricPoint:
        i = self._pos[vid]
        mask = self.carrier[i] >= 0
        return BarycentricPoint(self.parent.ids(self.carrier[i][mask]), self.weights[i][mask])

    def matrix(self) -> sparse.csr_matrix:
        mask = self.carrier >= 0
        rows = np.nonzero(mask)[0]
        return sparse.csr_matrix((self.weights[mask], (rows, self.carrier[mask])),
                                 shape=(len(self), self.parent.n_vertices))


def _padded_from_csr(m: sparse.csr_matrix, width: int | None = None):
    m = m.tocsr()
    m.sort_indices()
    nnz = np.diff(m.indptr)
    width = max(int(nnz.max()) if len(nnz) else 1, width or 1)
    carrier = np.full((m.shape[0], width), -1, dtype=np.int64)
    weights = np.zeros((m.shape[0], width))
    rows = np.repeat(np.arange(m.shape[0]), nnz)
    cols = np.arange(m.nnz) - np.repeat(m.indptr[:-1], nnz)
    carrier[rows, cols] = m.indices
    weights[rows, cols] = m.data
    return carrier, weights


def _point_names(root: SimplicialComplex, carrier: np.ndarray, weights: np.ndarray) -> list:
    """Names like ``a~b@0.25,0.75`` from root carriers; root vertices keep their ids."""
    vs = np.array(root.vertices + (None,), dtype=object)
    c = np.where(weights > 0, carrier, -1)
    width = (c >= 0).sum(axis=1)
    names = np.empty(len(c), dtype=object)
    for w in np.unique(width):
        sel = np.flatnonzero(width == w)
        if w == 1:
            names[sel] = vs[c[sel].max(axis=1)]
            continue
        cc = np.where(c[sel] >= 0, c[sel], np.iinfo(np.int64).max)
        order = np.argsort(cc, axis=1)[:, :w]
        ids = np.take_along_axis(cc, order, axis=1)
        wts = np.take_along_axis(weights[sel], order, axis=1)
        label = vs[ids[:, 0]]
        for j in range(1, w):
            label = label + "~" + vs[ids[:, j]]
        label = label + "@" + np.array(["%.17g" % x for x in wts[:, 0].tolist()], dtype=object)
        for j in range(1, w):
            label = label + "," + np.array(["%.17g" % x for x in wts[:, j].tolist()], dtype=object)
        names[sel] = label
    return names.tolist()


def _assemble(parent: SimplicialComplex, carrier: np.ndarray, weights: np.ndarray,
              max_rows: dict, edge_lengths=None):
    """Build a subdivision of ``parent`` from child positions and top simplices.

    ``max_rows`` index into the child vertex list (in carrier order); if
    ``edge_lengths`` is None, lengths come from the parent's flat metric.
    """
    n_child = len(carrier)
    corr_m = sparse.csr_matrix(
        (weights[carrier >= 0], (np.nonzero(carrier >= 0)[0], carrier[carrier >= 0])),
        shape=(n_child, parent.n_vertices))
    if parent.origin is not None:
        root_m = corr_m @ parent.origin.matrix()
    else:
        root_m = corr_m
    root = parent.root
    r_carrier, r_weights = _padded_from_csr(root_m)
    names = _point_names(root, r_carrier, r_weights)
    if len(set(names)) != len(names):
        raise PreconditionError("subdivision produced coincident vertices")
    order = np.argsort(np.array(names, dtype=object), kind="stable")
    rank = np.empty(n_child, dtype=np.int64)
    rank[order] = np.arange(n_child)
    faces = _closure_rows({d: rank[np.asarray(r, dtype=np.int64)] for d, r in max_rows.items()})
    vertices = tuple(names[i] for i in order)
    edges = faces.get(1, np.zeros((0, 2), dtype=np.int64))
    p_carrier, p_weights = carrier[order], weights[order]
    if edge_lengths is None:
        lengths = _flat_lengths(parent, p_carrier, p_weights, edges)
    else:
        e_rows, e_len = edge_lengths
        e_rows = np.sort(rank[np.asarray(e_rows)], axis=1)
        key_in = _row_keys(e_rows, n_child)
        key_out = _row_keys(edges, n_child)
        srt = np.argsort(key_in)
        pos = srt[np.searchsorted(key_in, key_out, sorter=srt)]
        lengths = np.asarray(e_len, dtype=float)[pos]
    origin = Correspondence(root, vertices, r_carrier[order], r_weights[order])
    child = SimplicialComplex(vertices, faces, lengths, origin=origin)
    corr = Correspondence(parent, vertices, p_carrier, p_weights)
    return child, corr


def _flat_lengths(parent, carrier, weights, edges):
    """Distances between child vertices measured in the flat parent simplices."""
    out = np.empty(len(edges))
    for j, (u, w) in enumerate(edges.tolist()):
        acc: dict = {}
        for c, x in zip(carrier[u], weights[u]):
            if c >= 0:
                acc[c] = acc.get(c, 0.0) + x
        for c, x in zip(carrier[w], weights[w]):
            if c >= 0:
                acc[c] = acc.get(c, 0.0) - x
        verts = sorted(acc)
        delta = np.array([acc[c] for c in verts])
        if len(verts) == 1:
            out[j] = 0.0
            continue
        D = parent.sqdist(np.array([verts]))[0]
        out[j] = np.sqrt(max(-0.5 * delta @ D @ delta, 0.0))
    return out


def _edge_key(k) -> tuple:
    if isinstance(k, str):
        parts = k.split("|")
        if len(parts) != 2:
            raise PreconditionError(f"edge key {k!r} is not of the form 'a|b'")
        return tuple(sorted(parts))
    a, b = k
    return tuple(sorted((a, b)))


def build_complex(vertices: Iterable, simplices: Iterable, edge_lengths: Mapping) -> SimplicialComplex:
    """Build the face closure of ``simplices`` with the given edge lengths.

    ``edge_lengths`` may be keyed by ``(a, b)`` pairs or ``"a|b"`` strings.
    Every edge of the closure needs a positive length.
    """
    vertices = [str(v) for v in vertices]
    if len(set(vertices)) != len(vertices):
        dup = next(v for v in vertices if vertices.count(v) > 1)
        raise PreconditionError(f"duplicate vertex id {dup!r}")
    ordered = sorted(vertices)
    index = {v: i for i, v in enumerate(ordered)}
    by_dim: dict[int, list] = {0: [[i] for i in range(len(ordered))]}
    for s in simplices:
        s = [str(v) for v in s]
        if not s:
            continue
        if len(set(s)) != len(s):
            raise PreconditionError(f"simplex {s} repeats a vertex")
        for v in s:
            if v not in index:
                raise PreconditionError(f"simplex {s} references undeclared vertex {v!r}")
        by_dim.setdefault(len(s) - 1, []).append([index[v] for v in s])
    faces = _closure_rows({d: np.array(r) for d, r in by_dim.items()})
    given = {}
    for k, L in edge_lengths.items():
        key = _edge_key(k)
        if key in given:
            raise PreconditionError(f"edge {key} given twice")
        given[key] = float(L)
    edges = faces.get(1, np.zeros((0, 2), dtype=np.int64))
    lengths = np.empty(len(edges))
    used = set()
    for j, (a, b) in enumerate(edges.tolist()):
        key = (ordered[a], ordered[b])
        if key not in given:
            raise PreconditionError(f"missing edge length for {key[0]}|{key[1]}")
        L = given[key]
        if not np.isfinite(L) or L <= 0:
            raise PreconditionError(f"edge {key[0]}|{key[1]} has non-positive length {L}")
        lengths[j] = L
        used.add(key)
    extra = set(given) - used
    if extra:
        a, b = sorted(extra)[0]
        raise PreconditionError(f"edge length given for {a}|{b}, which is not an edge")
    return SimplicialComplex(tuple(ordered), faces, lengths)


def gram_forms(cx: SimplicialComplex, rows: np.ndarray) -> np.ndarray:
    """Intrinsic Gram forms of a batch of same-dimension simplices, base = least vertex."""
    D = cx.sqdist(rows)
    d0 = D[:, 0, 1:]
    return 0.5 * (d0[:, :, None] + d0[:, None, :] - D[:, 1:, 1:])


def gram_form(cx: SimplicialComplex, simplex: Sequence) -> np.ndarray:
    """Gram form G[a, b] = (d(v0,va)^2 + d(v0,vb)^2 - d(va,vb)^2) / 2 of a simplex."""
    if not cx.has_simplex(simplex):
        raise PreconditionError(f"simplex {tuple(simplex)} is not in the complex")
    row = cx.to_rows(simplex)
    return gram_forms(cx, row[None])[0]


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    failures: list  # (simplex ids, smallest eigenvalue, trace)
    pd_tolerance: float

    def to_dict(self):
        return {
            "valid": self.valid,
            "pd_tolerance": self.pd_tolerance,
            "failures": [{"simplex": list(s), "min_eig": e, "trace": t}
                         for s, e, t in self.failures],
        }


def validate_metric(cx: SimplicialComplex, pd_tolerance: float = DEFAULT_PD_TOL) -> ValidationReport:
    """Check every simplex of dimension >= 1 for a positive definite Gram form.

    A simplex fails when its smallest eigenvalue is <= ``pd_tolerance * trace``.
    """
    failures = []
    for d, rows in cx.faces.items():
        if d == 0:
            continue
        G = gram_forms(cx, rows)
        eig = np.linalg.eigvalsh(G)[:, 0]
        tr = np.trace(G, axis1=1, axis2=2)
        for j in np.nonzero(eig <= pd_tolerance * tr)[0]:
            failures.append((cx.ids(rows[j]), float(eig[j]), float(tr[j])))
    return ValidationReport(not failures, failures, pd_tolerance)


# --- stars and shells -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class SubComplex:
    """Face-closed set of simplices of a parent complex.

    ``open_simplices`` lists the simplices whose relative interiors make up
    the point-set; the remaining faces in ``simplices`` are excluded
    boundary.  For closed stars the two coincide.
    """

    parent: SimplicialComplex
    simplices: frozenset
    open_simplices: frozenset

    @property
    def excluded(self) -> frozenset:
        return self.simplices - self.open_simplices

    def contains(self, point: BarycentricPoint) -> bool:
        return tuple(sorted(point.support())) in self.open_simplices

    def vertices(self) -> set:
        return {s[0] for s in self.simplices if len(s) == 1}


def _bfs(cx: SimplicialComplex, start: int) -> np.ndarray:
    dist = np.full(cx.n_vertices, -1, dtype=np.int64)
    dist[start] = 0
    queue = deque([start])
    adj = cx.adjacency
    while queue:
        u = queue.popleft()
        for w in adj[u]:
            if dist[w] < 0:
                dist[w] = dist[u] + 1
                queue.append(w)
    return dist


def _vertex_index(cx, vertex) -> int:
    if vertex not in cx.index:
        raise PreconditionError(f"unknown vertex {vertex!r}")
    return cx.index[vertex]


def _star_rows(cx, within: np.ndarray) -> set:
    """Closed star of a vertex set given as a boolean mask."""
    out = set()
    for d, rows in cx.maximal.items():
        hit = within[rows].any(axis=1)
        for row in rows[hit].tolist():
            for j in range(1, d + 2):
                out.update(itertools.combinations(row, j))
    return out


def star(cx: SimplicialComplex, vertex, k: int = 1) -> SubComplex:
    """Closed iterated star St^k of a vertex."""
    if k < 1:
        raise PreconditionError("k must be >= 1")
    dist = _bfs(cx, _vertex_index(cx, vertex))
    rows = _star_rows(cx, (dist >= 0) & (dist <= k - 1))
    ids = frozenset(cx.ids(r) for r in rows)
    return SubComplex(cx, ids, ids)


def shell(cx: SimplicialComplex, vertex, k: int) -> SubComplex:
    """Shell Sh^k = St^k minus St^(k-1), stored as its closure plus the open part."""
    outer = star(cx, vertex, k)
    if k == 1:
        return outer
    inner = star(cx, vertex, k - 1)
    opened = outer.simplices - inner.simplices
    closed = set()
    for s in opened:
        for j in range(1, len(s) + 1):
            closed.update(itertools.combinations(s, j))
    return SubComplex(cx, frozenset(closed), frozenset(opened))


def shell_index(cx: SimplicialComplex, vertex=None) -> dict:
    """Shell number of every simplex (as an id tuple) about ``vertex``.

    A simplex belongs to Sh^k when its relative interior does.  Components
    not containing ``vertex`` are indexed from their own least vertex.
    ``vertex`` defaults to the least vertex of the complex.
    """
    start = 0 if vertex is None else _vertex_index(cx, vertex)
    dist = _bfs(cx, start)
    comp = cx.components
    for c in np.unique(comp):
        if dist[c] < 0 and not np.any(dist[comp == c] >= 0):
            sub = _bfs(cx, int(c))
            dist = np.where(sub >= 0, sub, dist)
    out: dict = {}
    for d, rows in cx.maximal.items():
        dmin = dist[rows].min(axis=1)
        for row, m in zip(rows.tolist(), dmin.tolist()):
            for j in range(1, d + 2):
                for face in itertools.combinations(row, j):
                    key = cx.ids(face)
                    if key not in out or out[key] > m + 1:
                        out[key] = m + 1
    return out


def epsilon_at(schedule: Sequence[float], k: int) -> float:
    """k-th accuracy of a schedule (1-based); the last entry repeats."""
    if not len(schedule):
        raise PreconditionError("empty epsilon schedule")
    return float(schedule[min(k, len(schedule)) - 1])


def _check_schedule(schedule):
    schedule = [float(e) for e in schedule]
    if not schedule or any(not (e > 0) for e in schedule):
        raise PreconditionError("epsilon schedule entries must be positive")
    return schedule


def _root_tables(root: SimplicialComplex, schedule, base):
    """Per root simplex: closed-shell budget and the min over its cofaces."""
    eps1 = epsilon_at(schedule, 1)
    shells = shell_index(root, base)
    closed = {}
    for s, k in shells.items():
        e = min(eps1, epsilon_at(schedule, k))
        for j in range(1, len(s) + 1):
            for f in itertools.combinations(s, j):
                e = min(e, eps1, epsilon_at(schedule, shells[f]))
        closed[s] = e
    coface = dict(closed)
    for s, e in closed.items():
        for j in range(1, len(s)):
            for f in itertools.combinations(s, j):
                coface[f] = min(coface[f], e)
    return closed, coface


def _lookup_carriers(cx: SimplicialComplex, carriers: np.ndarray, table: dict) -> np.ndarray:
    root = cx.root
    width = (carriers >= 0).sum(axis=1)
    out = np.empty(len(carriers))
    for d in np.unique(width):
        sel = np.nonzero(width == d)[0]
        rows = np.sort(np.where(carriers[sel] >= 0, carriers[sel], -1), axis=1)[:, -d:]
        pos = root.find_rows(d - 1, rows)
        keys_rows = root.rows(d - 1)
        values = np.array([table[root.ids(r)] for r in keys_rows.tolist()])
        out[sel] = values[pos]
    return out


def vertex_budgets(cx: SimplicialComplex, schedule, base=None) -> np.ndarray:
    """Largest allowed displacement per vertex under a shell schedule.

    A vertex may move by less than min(eps_1, eps_l) for every shell l
    whose closure meets an open simplex the vertex touches (shells taken in
    the root complex about ``base``).
    """
    schedule = _check_schedule(schedule)
    _, coface = _root_tables(cx.root, schedule, base)
    carrier, weights = cx.root_carriers()
    carrier = np.where(weights > 0, carrier, -1)
    return _lookup_carriers(cx, carrier, coface)


def simplex_budgets(cx: SimplicialComplex, rows: np.ndarray, schedule, base=None) -> np.ndarray:
    """Closed-shell budget of each given simplex, via its root carrier."""
    schedule = _check_schedule(schedule)
    closed, _ = _root_tables(cx.root, schedule, base)
    carrier, weights = cx.root_carriers()
    carrier = np.where(weights > 0, carrier, -1)
    rows = np.asarray(rows)
    union = np.concatenate([carrier[rows[:, j]] for j in range(rows.shape[1])], axis=1)
    union = np.sort(union, axis=1)
    dup = np.zeros_like(union, dtype=bool)
    dup[:, 1:] = union[:, 1:] == union[:, :-1]
    union = np.where(dup, -1, union)
    union = np.sort(union, axis=1)
    width = (union >= 0).sum(axis=1).max()
    return _lookup_carriers(cx, union[:, -width:], closed)


# --- subdivision ----------------------------------------------------------


def subdivide_edges(cx: SimplicialComplex, breakpoints: Sequence) -> tuple:
    """Split each edge of a complex of dimension <= 1 at interior parameters.

    ``breakpoints[j]`` holds increasing parameters in (0, 1) for edge row j,
    measured from its lesser vertex.  Returns ``(child, correspondence)``.
    """
    if cx.dim > 1:
        raise PreconditionError("edgewise subdivision needs a complex of dimension <= 1")
    edges = cx.rows(1)
    if len(breakpoints) != len(edges):
        raise PreconditionError("one breakpoint array per edge is required")
    bps = [np.asarray(b, dtype=float).reshape(-1) for b in breakpoints]
    counts = np.array([len(b) for b in bps], dtype=np.int64)
    nv = cx.n_vertices
    n_new = int(counts.sum())
    t_new = np.concatenate(bps) if n_new else np.zeros(0)
    if n_new and (np.any(t_new <= 0) or np.any(t_new >= 1)):
        raise PreconditionError("breakpoints must lie strictly inside (0, 1)")
    edge_of = np.repeat(np.arange(len(edges)), counts)
    carrier = np.full((nv + n_new, 2), -1, dtype=np.int64)
    weights = np.zeros((nv + n_new, 2))
    carrier[:nv, 0] = np.arange(nv)
    weights[:nv, 0] = 1.0
    carrier[nv:] = edges[edge_of]
    weights[nv:, 0] = 1.0 - t_new
    weights[nv:, 1] = t_new
    # node sequence per edge: a, new..., b
    seg = counts + 2
    starts = np.concatenate([[0], np.cumsum(seg)[:-1]]) if len(seg) else np.zeros(0, np.int64)
    seq = np.empty(int(seg.sum()), dtype=np.int64)
    tseq = np.empty(len(seq))
    if len(edges):
        seq[starts] = edges[:, 0]
        seq[starts + seg - 1] = edges[:, 1]
        tseq[starts] = 0.0
        tseq[starts + seg - 1] = 1.0
        inner = np.ones(len(seq), dtype=bool)
        inner[starts] = False
        inner[starts + seg - 1] = False
        seq[inner] = nv + np.arange(n_new)
        tseq[inner] = t_new
    last = np.zeros(len(seq), dtype=bool)
    if len(edges):
        last[starts + seg - 1] = True
        if np.any(np.diff(tseq)[~last[:-1]] <= 0):
            raise PreconditionError("breakpoints must be strictly increasing")
    i = np.nonzero(~last[:-1])[0] if len(seq) else np.zeros(0, np.int64)
    child_edges = np.stack([seq[i], seq[i + 1]], axis=1) if len(i) else np.zeros((0, 2), np.int64)
    parent_edge = np.searchsorted(starts, i, side="right") - 1 if len(i) else np.zeros(0, np.int64)
    child_len = (tseq[i + 1] - tseq[i]) * cx.lengths[parent_edge] if len(i) else np.zeros(0)
    max_rows = {0: np.arange(nv + n_new)[:, None], 1: child_edges}
    return _assemble(cx, carrier, weights, max_rows, edge_lengths=(child_edges, child_len))


def _barycentric_once(cx: SimplicialComplex) -> tuple:
    simplex_ids: dict = {}
    carrier_rows, weight_rows = [], []
    width = cx.dim + 1
    for d, rows in cx.faces.items():
        for row in rows.tolist():
            simplex_ids[tuple(row)] = len(carrier_rows)
            carrier_rows.append(row + [-1] * (width - len(row)))
            weight_rows.append([1.0 / len(row)] * len(row) + [0.0] * (width - len(row)))
    tops: dict = {}
    for d, rows in cx.maximal.items():
        for row in rows.tolist():
            for perm in itertools.permutations(row):
                chain = [simplex_ids[tuple(sorted(perm[: j + 1]))] for j in range(d + 1)]
                tops.setdefault(d, []).append(chain)
    max_rows = {d: np.array(r, dtype=np.int64) for d, r in tops.items()}
    return _assemble(cx, np.array(carrier_rows, dtype=np.int64), np.array(weight_rows), max_rows)


def _compose(first: Correspondence, second: Correspondence) -> Correspondence:
    m = second.matrix() @ first.matrix()
    carrier, weights = _padded_from_csr(m)
    return Correspondence(first.parent, second.child_vertices, carrier, weights)


def subdivide(cx: SimplicialComplex, level: int) -> tuple:
    """Refine a complex ``level`` times.

    Graphs (n <= 1) have every edge split into 2**level equal parts;
    higher-dimensional complexes get ``level`` rounds of barycentric
    subdivision.  Returns ``(child, correspondence)`` with the
    correspondence giving each child vertex in ``cx``'s coordinates.
    """
    if level < 0:
        raise PreconditionError("level must be >= 0")
    if level == 0:
        idx = np.arange(cx.n_vertices)[:, None]
        return cx, Correspondence(cx, cx.vertices, idx, np.ones((cx.n_vertices, 1)))
    if cx.dim <= 1:
        m = 2**level
        t = np.arange(1, m) / m
        return subdivide_edges(cx, [t] * len(cx.rows(1)))
    child, corr = _barycentric_once(cx)
    for _ in range(level - 1):
        child, nxt = _barycentric_once(child)
        corr = _compose(corr, nxt)
    return child, corr
