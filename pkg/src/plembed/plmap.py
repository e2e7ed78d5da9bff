"""Piecewise-linear maps from a complex into Euclidean space."""
from __future__ import annotations

from typing import Mapping, NamedTuple

import numpy as np

from .complex import (BarycentricPoint, Correspondence, SimplicialComplex, gram_forms)
from .errors import PreconditionError

__all__ = [
    "PLMap",
    "Margin",
    "evaluate",
    "evaluate_root",
    "induced_form",
    "induced_forms",
    "simplex_margins",
    "shortness_margin",
    "split_coordinates",
    "direct_sum",
    "contract_toward_point",
    "refine_to",
]


class PLMap:
    """Vertex images of a map that is linear on each simplex of ``domain``.

    ``images`` is a (V, N) array aligned with ``domain.vertices``.
    """

    def __init__(self, domain: SimplicialComplex, images):
        images = np.array(images, dtype=float)
        if images.ndim != 2 or images.shape[0] != domain.n_vertices:
            raise PreconditionError(
                f"expected {domain.n_vertices} vertex images, got array of shape {images.shape}")
        if not np.all(np.isfinite(images)):
            raise PreconditionError("vertex images must be finite")
        images.setflags(write=False)
        self.domain = domain
        self.images = images

    @classmethod
    def from_dict(cls, domain: SimplicialComplex, vertex_images: Mapping) -> "PLMap":
        missing = [v for v in domain.vertices if v not in vertex_images]
        if missing:
            raise PreconditionError(f"vertex {missing[0]!r} has no image")
        return cls(domain, [np.asarray(vertex_images[v], dtype=float) for v in domain.vertices])

    def __repr__(self):
        return f"PLMap({self.domain!r} -> R^{self.ambient_dim})"

    @property
    def ambient_dim(self) -> int:
        return self.images.shape[1]

    @property
    def vertex_images(self) -> dict:
        return {v: self.images[i] for i, v in enumerate(self.domain.vertices)}

    def image(self, vertex) -> np.ndarray:
        return self.images[self.domain.index[vertex]]

    def with_images(self, images) -> "PLMap":
        return PLMap(self.domain, images)


def evaluate(f: PLMap, point: BarycentricPoint) -> np.ndarray:
    """Image of a point given in barycentric coordinates of a domain simplex."""
    if not f.domain.has_simplex(point.simplex):
        raise PreconditionError(f"simplex {point.simplex} is not in the domain")
    idx = [f.domain.index[v] for v in point.simplex]
    return point.weights @ f.images[idx]


def induced_forms(f: PLMap, rows: np.ndarray) -> np.ndarray:
    """Forms E E^T of edge-image vectors from each simplex's least vertex."""
    rows = np.asarray(rows, dtype=np.int64)
    P = f.images[rows]
    E = P[:, 1:, :] - P[:, :1, :]
    return E @ np.swapaxes(E, 1, 2)


def induced_form(f: PLMap, simplex) -> np.ndarray:
    if not f.domain.has_simplex(simplex):
        raise PreconditionError(f"simplex {tuple(simplex)} is not in the domain")
    return induced_forms(f, f.domain.to_rows(simplex)[None])[0]


class Margin(NamedTuple):
    margin: float
    worst_simplex: tuple | None
    ratio: float

    @property
    def short(self) -> bool:
        return self.margin >= -1e-12 * max(1.0, abs(self.ratio))

    @property
    def strictly_short(self) -> bool:
        return self.margin > 0


def simplex_margins(f: PLMap, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Smallest eigenvalue of G - G_f and trace of G for each row."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape[1] == 2:
        L2 = f.domain.sqdist(rows)[:, 0, 1]
        d = f.images[rows[:, 1]] - f.images[rows[:, 0]]
        return L2 - np.einsum("ij,ij->i", d, d), L2
    G = gram_forms(f.domain, rows)
    eig = np.linalg.eigvalsh(G - induced_forms(f, rows))[:, 0]
    return eig, np.trace(G, axis1=1, axis2=2)


def shortness_margin(f: PLMap) -> Margin:
    """Minimum over maximal simplices of the smallest eigenvalue of G - G_f.

    The map is short iff the margin is >= 0 and strictly short iff > 0.
    ``ratio`` is the worst margin divided by the trace of G.
    """
    best = Margin(np.inf, None, np.inf)
    for d, rows in f.domain.maximal.items():
        if d == 0:
            continue
        eig, tr = simplex_margins(f, rows)
        j = int(np.argmin(eig))
        if eig[j] < best.margin:
            best = Margin(float(eig[j]), f.domain.ids(rows[j]), float(eig[j] / tr[j]))
    return best


def split_coordinates(f: PLMap, j: int) -> tuple[PLMap, PLMap]:
    """First ``j`` coordinates and the remaining ones, as two maps."""
    N = f.ambient_dim
    if not 1 <= j < N:
        raise PreconditionError(f"split index {j} outside 1..{N - 1}")
    return PLMap(f.domain, f.images[:, :j]), PLMap(f.domain, f.images[:, j:])


def _same_domain(a: SimplicialComplex, b: SimplicialComplex) -> bool:
    if a is b:
        return True
    if a.vertices != b.vertices or set(a.faces) != set(b.faces):
        return False
    return all(np.array_equal(a.faces[d], b.faces[d]) for d in a.faces) and \
        np.array_equal(a.lengths, b.lengths)


def direct_sum(f1: PLMap, f2: PLMap) -> PLMap:
    """Concatenate the coordinates of two maps on the same domain."""
    if not _same_domain(f1.domain, f2.domain):
        raise PreconditionError("direct sum needs both maps on the same triangulation")
    return PLMap(f1.domain, np.hstack([f1.images, f2.images]))


def contract_toward_point(f: PLMap, center=None, lam: float = 1.0) -> PLMap:
    """Scale the image by ``lam`` about ``center`` (default: centroid of vertex images)."""
    if not 0 < lam <= 1:
        raise PreconditionError(f"contraction factor {lam} outside (0, 1]")
    c = f.images.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    if lam == 1:
        return PLMap(f.domain, f.images)
    return PLMap(f.domain, c + lam * (f.images - c))


def refine_to(f: PLMap, sub: SimplicialComplex, corr: Correspondence) -> PLMap:
    """Re-express ``f`` as a map linear on a subdivision of its domain."""
    if not _same_domain(corr.parent, f.domain):
        raise PreconditionError("correspondence does not refer to the map's domain")
    if corr.child_vertices != sub.vertices:
        raise PreconditionError("correspondence does not match the subdivided complex")
    return PLMap(sub, corr.matrix() @ f.images)


# --- evaluation at points of the root complex -------------------------------


class _GraphLocator:
    """Finds the sub-edge holding a root point, for domains of dimension <= 1."""

    def __init__(self, domain: SimplicialComplex):
        root = domain.root
        carrier, weights = domain.root_carriers()
        carrier = np.where(weights > 0, carrier, -1)
        if carrier.shape[1] == 1:
            carrier = np.hstack([carrier, np.full_like(carrier, -1)])
            weights = np.hstack([weights, np.zeros_like(weights)])
        edges = domain.rows(1)
        both = np.concatenate([carrier[edges[:, 0]], carrier[edges[:, 1]]], axis=1)
        r1 = both.max(axis=1)
        r0 = np.where(both >= 0, both, np.iinfo(np.int64).max).min(axis=1)
        self.root_edge = root.find_rows(1, np.stack([r0, r1], axis=1))

        def weight_on(v, r):
            return (weights[v, 0] * (carrier[v, 0] == r) + weights[v, 1] * (carrier[v, 1] == r))

        s0 = weight_on(edges[:, 0], r1)
        s1 = weight_on(edges[:, 1], r1)
        flip = s0 > s1
        self.lo_v = np.where(flip, edges[:, 1], edges[:, 0])
        self.hi_v = np.where(flip, edges[:, 0], edges[:, 1])
        self.s_lo = np.minimum(s0, s1)
        self.s_hi = np.maximum(s0, s1)
        key = 2.0 * self.root_edge + self.s_lo
        self.order = np.argsort(key, kind="stable")
        self.key = key[self.order]
        self.domain = domain

    def locate(self, root_carrier: np.ndarray, root_weights: np.ndarray):
        """Domain vertex pairs and interpolation weights for root points."""
        root = self.domain.root
        n = len(root_carrier)
        rc = np.where(root_weights > 0, root_carrier, -1)
        if rc.shape[1] == 1:
            rc = np.hstack([rc, np.full_like(rc, -1)])
            root_weights = np.hstack([root_weights, np.zeros_like(root_weights)])
        width = (rc >= 0).sum(axis=1)
        lo = np.zeros(n, dtype=np.int64)
        hi = np.zeros(n, dtype=np.int64)
        t = np.zeros(n)
        at_vertex = width == 1
        if at_vertex.any():
            vid = rc[at_vertex].max(axis=1)
            names = [root.vertices[i] for i in vid.tolist()]
            idx = np.array([self.domain.index[v] for v in names], dtype=np.int64)
            lo[at_vertex] = idx
            hi[at_vertex] = idx
        inner = ~at_vertex
        if inner.any():
            c = np.sort(rc[inner], axis=1)
            e = root.find_rows(1, c[:, -2:])
            if np.any(e < 0):
                raise PreconditionError("query point is not on an edge of the root complex")
            r1 = c[:, -1]
            w = root_weights[inner]
            cc = rc[inner]
            s = w[:, 0] * (cc[:, 0] == r1) + w[:, 1] * (cc[:, 1] == r1)
            pos = np.searchsorted(self.key, 2.0 * e + s, side="right") - 1
            pos = np.clip(pos, 0, len(self.key) - 1)
            j = self.order[pos]
            if np.any(self.root_edge[j] != e):
                raise PreconditionError("query point is not covered by the map's domain")
            span = self.s_hi[j] - self.s_lo[j]
            lo[inner] = self.lo_v[j]
            hi[inner] = self.hi_v[j]
            t[inner] = np.clip((s - self.s_lo[j]) / span, 0.0, 1.0)
        return lo, hi, t


def _locate_generic(domain: SimplicialComplex, root_carrier, root_weights):
    carrier, weights = domain.root_carriers()
    nroot = domain.root.n_vertices
    pos = np.zeros((domain.n_vertices, nroot))
    for i in range(domain.n_vertices):
        for c, w in zip(carrier[i], weights[i]):
            if c >= 0:
                pos[i, c] += w
    cands = []
    for d, rows in domain.maximal.items():
        for row in rows.tolist():
            support = np.nonzero(pos[row].sum(axis=0) > 0)[0]
            cands.append((row, set(support.tolist())))
    out = []
    for c, w in zip(root_carrier.tolist(), root_weights.tolist()):
        q = np.zeros(nroot)
        for ci, wi in zip(c, w):
            if ci >= 0:
                q[ci] += wi
        qs = set(np.nonzero(q > 0)[0].tolist())
        for row, sup in cands:
            if not qs <= sup:
                continue
            cols = sorted(sup)
            A = pos[row][:, cols].T
            lam, *_ = np.linalg.lstsq(A, q[cols], rcond=None)
            if lam.min() >= -1e-9 and np.abs(A @ lam - q[cols]).max() <= 1e-9:
                out.append((row, np.clip(lam, 0, None) / np.clip(lam, 0, None).sum()))
                break
        else:
            raise PreconditionError("query point is not covered by the map's domain")
    return out


def evaluate_root(f: PLMap, root_carrier: np.ndarray, root_weights: np.ndarray) -> np.ndarray:
    """Evaluate ``f`` at points given in barycentric coordinates of the root complex."""
    root_carrier = np.atleast_2d(np.asarray(root_carrier, dtype=np.int64))
    root_weights = np.atleast_2d(np.asarray(root_weights, dtype=float))
    if f.domain.dim <= 1:
        loc = getattr(f.domain, "_graph_locator", None)
        if loc is None:
            loc = _GraphLocator(f.domain)
            f.domain._graph_locator = loc
        lo, hi, t = loc.locate(root_carrier, root_weights)
        return (1 - t)[:, None] * f.images[lo] + t[:, None] * f.images[hi]
    return np.array([lam @ f.images[row]
                     for row, lam in _locate_generic(f.domain, root_carrier, root_weights)])
