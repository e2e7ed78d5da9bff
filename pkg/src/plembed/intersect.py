"""Brute-force injectivity test for PL maps.

Two closed simplices sigma, tau with common face rho have injective image
on their union iff no pair x in sigma, y in tau with f(x) = f(y) puts
weight on a vertex outside rho.  That is a small linear program; segments
get a closed-form distance test instead, and a spatial grid prunes pairs.
"""
from __future__ import annotations

import itertools
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .plmap import PLMap

__all__ = ["Intersection", "find_intersection", "segment_distance", "affine_gap"]


class Intersection(NamedTuple):
    first: tuple
    second: tuple
    kind: str


def affine_gap(P: np.ndarray) -> np.ndarray:
    """Ratio of smallest to largest singular value of point differences.

    ``P`` has shape (B, m, N); the result is 0 for affinely dependent
    point sets and 1 for single points.
    """
    P = np.asarray(P, dtype=float)
    if P.shape[1] < 2:
        return np.ones(P.shape[0])
    E = P[:, 1:, :] - P[:, :1, :]
    s = np.linalg.svd(E, compute_uv=False)
    smax = s[:, 0]
    smin = s[:, -1] if E.shape[1] <= E.shape[2] else np.zeros(len(s))
    return np.where(smax > 0, smin / np.where(smax > 0, smax, 1.0), 0.0)


def _point_segment(x, a, b):
    v = b - a
    c = np.einsum("ij,ij->i", v, v)
    t = np.einsum("ij,ij->i", x - a, v) / np.where(c > 0, c, 1.0)
    t = np.clip(np.where(c > 0, t, 0.0), 0.0, 1.0)
    return np.linalg.norm(x - a - t[:, None] * v, axis=1)


def segment_distance(p0, p1, q0, q1) -> np.ndarray:
    """Euclidean distance between closed segments p0p1 and q0q1, row-wise."""
    p0, p1, q0, q1 = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (p0, p1, q0, q1))
    u, v, w = p1 - p0, q1 - q0, p0 - q0
    a = np.einsum("ij,ij->i", u, u)
    b = np.einsum("ij,ij->i", u, v)
    c = np.einsum("ij,ij->i", v, v)
    d = np.einsum("ij,ij->i", u, w)
    e = np.einsum("ij,ij->i", v, w)
    D = a * c - b * b
    ok = D > 1e-14 * np.maximum(a * c, 1e-300)
    Ds = np.where(ok, D, 1.0)
    s = (b * e - c * d) / Ds
    t = (a * e - b * d) / Ds
    inside = ok & (s > 0) & (s < 1) & (t > 0) & (t < 1)
    best = np.full(len(p0), np.inf)
    if inside.any():
        gap = w + s[:, None] * u - t[:, None] * v
        best = np.where(inside, np.linalg.norm(gap, axis=1), best)
    for x, (y0, y1) in ((p0, (q0, q1)), (p1, (q0, q1)), (q0, (p0, p1)), (q1, (p0, p1))):
        best = np.minimum(best, _point_segment(x, y0, y1))
    return best


def _cell_pairs(cell: np.ndarray, ids: np.ndarray) -> np.ndarray:
    """Pairs of ids sharing a grid cell."""
    dims = cell.max(axis=0) + 1
    if float(np.prod(dims.astype(float))) < 2.0**62:
        key = np.ravel_multi_index(cell.T, dims)
    else:
        key = np.unique(cell, axis=0, return_inverse=True)[1].ravel()
    order = np.lexsort((ids, key))
    key, ids = key[order], ids[order]
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    lens = np.diff(np.r_[starts, len(key)])
    chunks = [np.zeros((0, 2), dtype=np.int64)]
    for g in np.unique(lens):
        if g < 2:
            continue
        st = starts[lens == g]
        a, b = np.triu_indices(g, 1)
        chunks.append(np.stack([ids[st[:, None] + a].ravel(), ids[st[:, None] + b].ravel()], 1))
    return np.concatenate(chunks)


def _grid_pairs(lo: np.ndarray, hi: np.ndarray, tol: float) -> np.ndarray:
    """Index pairs (i < j) whose boxes may overlap.

    Small inputs are compared all-to-all.  Otherwise boxes are hashed into
    a uniform grid (first three coordinates) sized to the median box; the
    few boxes spanning many cells are compared against everything.
    """
    n = len(lo)
    if n < 2:
        return np.zeros((0, 2), dtype=np.int64)
    if n <= 400:
        i, j = np.triu_indices(n, 1)
        pairs = np.stack([i, j], axis=1)
    else:
        k = min(lo.shape[1], 3)
        lo3, hi3 = lo[:, :k] - tol, hi[:, :k] + tol
        ext = (hi3 - lo3).max(axis=1)
        span = float((hi3.max(axis=0) - lo3.min(axis=0)).max())
        h = 2.0 * float(np.median(ext))
        if not h > 0:
            h = max(span / 64.0, 1e-300)
        origin = lo3.min(axis=0)
        clo = np.floor((lo3 - origin) / h).astype(np.int64)
        chi = np.floor((hi3 - origin) / h).astype(np.int64)
        size = chi - clo + 1
        cnt = np.prod(size.astype(float), axis=1)
        big = cnt > 64
        small = np.flatnonzero(~big)
        cnt_s = cnt[small].astype(np.int64)
        ids = np.repeat(small, cnt_s)
        offs = np.arange(int(cnt_s.sum())) - np.repeat(np.cumsum(cnt_s) - cnt_s, cnt_s)
        cell = np.empty((len(ids), k), dtype=np.int64)
        rem = offs
        for c in range(k - 1, -1, -1):
            cell[:, c] = clo[ids, c] + rem % size[ids, c]
            rem = rem // size[ids, c]
        chunks = [_cell_pairs(cell, ids)] if len(ids) else []
        for b in np.flatnonzero(big):
            near = np.flatnonzero(np.all((lo <= hi[b] + tol) & (lo[b] <= hi + tol), axis=1))
            near = near[near != b]
            chunks.append(np.stack([np.full(len(near), b), near], axis=1))
        if not chunks:
            return np.zeros((0, 2), dtype=np.int64)
        pairs = np.unique(np.sort(np.concatenate(chunks), axis=1), axis=0)
    overlap = np.all((lo[pairs[:, 0]] <= hi[pairs[:, 1]] + tol)
                     & (lo[pairs[:, 1]] <= hi[pairs[:, 0]] + tol), axis=1)
    return pairs[overlap]


def _lp_meets(Ps: np.ndarray, Pt: np.ndarray, outside_s: np.ndarray, outside_t: np.ndarray,
              tol: float) -> bool:
    ns, nt = len(Ps), len(Pt)
    N = Ps.shape[1]
    A = np.zeros((N + 2, ns + nt))
    A[:N, :ns] = Ps.T
    A[:N, ns:] = -Pt.T
    A[N, :ns] = 1
    A[N + 1, ns:] = 1
    rhs = np.r_[np.zeros(N), 1.0, 1.0]
    cost = -np.r_[outside_s.astype(float), outside_t.astype(float)]
    res = linprog(cost, A_eq=A, b_eq=rhs, bounds=(0, None), method="highs")
    return res.status == 0 and -res.fun > tol


def _graph_intersection(f: PLMap, tol: float):
    cx = f.domain
    X = f.images
    E = cx.rows(1)
    ids = cx.ids
    if len(E):
        lens = np.linalg.norm(X[E[:, 1]] - X[E[:, 0]], axis=1)
        bad = np.flatnonzero(lens <= tol)
        if len(bad):
            e = E[bad[0]]
            return Intersection(ids(e), ids(e), "degenerate")
    isolated = [r[0] for r in cx.maximal.get(0, np.zeros((0, 1), np.int64)).tolist()]
    # segments and isolated points share one candidate search
    lo = np.concatenate([np.minimum(X[E[:, 0]], X[E[:, 1]]), X[isolated]]) if len(E) else X[isolated]
    hi = np.concatenate([np.maximum(X[E[:, 0]], X[E[:, 1]]), X[isolated]]) if len(E) else X[isolated]
    A = np.concatenate([E, np.array([[v, v] for v in isolated], dtype=np.int64).reshape(-1, 2)])
    pairs = _grid_pairs(lo, hi, tol)
    if len(pairs):
        a, b = A[pairs[:, 0]], A[pairs[:, 1]]
        shared = (a[:, :1] == b).any(axis=1) | (a[:, 1:] == b).any(axis=1)
        dis = pairs[~shared]
        if len(dis):
            a, b = A[dis[:, 0]], A[dis[:, 1]]
            dist = segment_distance(X[a[:, 0]], X[a[:, 1]], X[b[:, 0]], X[b[:, 1]])
            hit = np.flatnonzero(dist <= tol)
            if len(hit):
                h = dis[hit[0]]
                return Intersection(ids(sorted(set(A[h[0]]))), ids(sorted(set(A[h[1]]))), "crossing")
        sh = pairs[shared]
        if len(sh):
            a, b = A[sh[:, 0]], A[sh[:, 1]]
            # common vertex v, other ends p (of a) and q (of b)
            v = np.where((a[:, 0] == b[:, 0]) | (a[:, 0] == b[:, 1]), a[:, 0], a[:, 1])
            p = np.where(a[:, 0] == v, a[:, 1], a[:, 0])
            q = np.where(b[:, 0] == v, b[:, 1], b[:, 0])
            d1 = _point_segment(X[p], X[v], X[q])
            d2 = _point_segment(X[q], X[v], X[p])
            hit = np.flatnonzero(np.minimum(d1, d2) <= tol)
            if len(hit):
                h = sh[hit[0]]
                return Intersection(ids(A[h[0]]), ids(A[h[1]]), "overlap")
    return None


def _generic_intersection(f: PLMap, tol: float, shortcut: bool, rank_tol: float):
    cx = f.domain
    X = f.images
    tops = [row for d in sorted(cx.maximal) for row in cx.maximal[d].tolist()]
    for row in tops:
        if len(row) > 1 and affine_gap(X[row][None])[0] <= rank_tol:
            return Intersection(cx.ids(row), cx.ids(row), "degenerate")
    lo = np.array([X[r].min(axis=0) for r in tops])
    hi = np.array([X[r].max(axis=0) for r in tops])
    for i, j in itertools.combinations(range(len(tops)), 2):
        s, t = tops[i], tops[j]
        common = set(s) & set(t)
        if not common and (np.any(lo[i] > hi[j] + tol) or np.any(lo[j] > hi[i] + tol)):
            continue
        union = sorted(set(s) | set(t))
        if shortcut and len(union) <= X.shape[1] + 1 and \
                affine_gap(X[union][None])[0] > 1e-6:
            continue
        out_s = np.array([v not in common for v in s])
        out_t = np.array([v not in common for v in t])
        if _lp_meets(X[s], X[t], out_s, out_t, 1e-9):
            return Intersection(cx.ids(s), cx.ids(t), "crossing")
    return None


def find_intersection(f: PLMap, tol: float | None = None, shortcut: bool = True,
                      rank_tol: float = 1e-12):
    """Return a witness pair of simplices whose images meet improperly, or None.

    ``tol`` is an absolute distance (default 1e-12 times the image extent).
    With ``shortcut`` a pair whose joint vertex images are affinely
    independent is accepted without solving the LP.
    """
    X = f.images
    scale = float(np.ptp(X, axis=0).max()) if len(X) else 1.0
    if tol is None:
        tol = 1e-12 * max(scale, 1e-300)
    if f.domain.dim <= 1:
        return _graph_intersection(f, tol)
    return _generic_intersection(f, tol, shortcut, rank_tol)
