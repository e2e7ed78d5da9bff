"""Zigzag corrugation of graph maps up to prescribed edge arclengths."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .complex import Correspondence, simplex_budgets, subdivide_edges
from .errors import NumericalFailure, PreconditionError
from .plmap import PLMap

__all__ = ["FoldPlan", "fold_edge", "plan_folds", "apply_plan", "isometrize_graph",
           "edge_arclengths"]

_REL = 1e-12


def _transverse(u: np.ndarray) -> np.ndarray:
    """Unit vectors orthogonal to the rows of ``u`` (zero rows get e_0)."""
    E, N = u.shape
    out = np.zeros((E, N))
    done = np.zeros(E, dtype=bool)
    for i in range(N):
        pick = ~done & (1.0 - u[:, i] ** 2 >= 0.25)
        if pick.any():
            w = -u[pick, i, None] * u[pick]
            w[:, i] += 1.0
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            w -= np.einsum("ij,ij->i", w, u[pick])[:, None] * u[pick]
            out[pick] = w / np.linalg.norm(w, axis=1, keepdims=True)
            done |= pick
    return out


def _piece_count(L, ell, budget, dyadic=False):
    rise = np.sqrt(np.maximum(L * L - ell * ell, 0.0))
    m = np.ceil((rise + ell) / budget).astype(np.int64)
    m += m % 2
    if dyadic:
        m = (2 ** np.ceil(np.log2(np.maximum(m, 1)))).astype(np.int64)
    # the offset must stay strictly inside the budget
    while np.any(bad := rise / m >= budget):
        m = np.where(bad, 2 * m, m)
    straight = ell >= L * (1 - _REL)
    return np.where(straight, 1, np.maximum(m, 2)), np.where(straight, 0.0, rise)


def fold_edge(p, q, target_length: float, amplitude_budget: float, transverse_dir=None) -> np.ndarray:
    """Sawtooth polyline from p to q with total length ``target_length``.

    The chord is cut into m equal steps, m the least even integer at least
    (sqrt(L^2 - l^2) + l) / budget, and interior vertices alternate between
    the chord and an offset of sqrt(L^2 - l^2) / m along ``transverse_dir``.
    Returns the (m + 1, N) vertex array.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    L = float(target_length)
    if not amplitude_budget > 0:
        raise PreconditionError("amplitude budget must be positive")
    ell = float(np.linalg.norm(q - p))
    if ell > L * (1 + _REL):
        raise PreconditionError(f"chord {ell:.6g} exceeds target length {L:.6g}")
    if ell >= L * (1 - _REL):
        return np.stack([p, q])
    if p.size < 2:
        raise PreconditionError("folding needs an ambient dimension of at least 2")
    if transverse_dir is None:
        u = (q - p) / ell if ell > 0 else np.zeros_like(p)
        n = _transverse(u[None])[0]
    else:
        n = np.asarray(transverse_dir, dtype=float)
        if abs(np.linalg.norm(n) - 1) > 1e-9 or abs(n @ (q - p)) > 1e-9 * max(ell, 1.0):
            raise PreconditionError("transverse direction must be a unit vector orthogonal to q - p")
    m, rise = _piece_count(np.array([L]), np.array([ell]), amplitude_budget)
    m = int(m[0])
    t = np.arange(m + 1) / m
    h = np.where(np.arange(m + 1) % 2 == 1, rise[0] / m, 0.0)
    return p + t[:, None] * (q - p) + h[:, None] * n


@dataclass
class FoldPlan:
    """Per-edge corrugation data for a graph map.

    Edge j has ``pieces[j]`` pieces; its interior breakpoints are
    ``params[offsets[j]:offsets[j + 1]]`` (fractions of the edge from its
    lesser vertex) displaced by ``heights`` along ``normals[j]``.
    """

    edges: list
    pieces: np.ndarray
    target_lengths: np.ndarray
    chords: np.ndarray
    directions: np.ndarray
    normals: np.ndarray
    budgets: np.ndarray
    offsets: np.ndarray
    params: np.ndarray
    heights: np.ndarray

    def edge(self, j: int) -> dict:
        s = slice(self.offsets[j], self.offsets[j + 1])
        return {
            "edge": list(self.edges[j]),
            "pieces": int(self.pieces[j]),
            "target_length": float(self.target_lengths[j]),
            "chord": float(self.chords[j]),
            "direction": self.directions[j].tolist(),
            "normal": self.normals[j].tolist(),
            "budget": float(self.budgets[j]),
            "params": self.params[s].tolist(),
            "offsets": self.heights[s].tolist(),
        }

    def to_dict(self) -> dict:
        return {"edges": [self.edge(j) for j in range(len(self.edges))]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _line_breaks(L, delta, budget):
    """Back-and-forth fold along one axis; returns (m, params, heights)."""
    span = abs(delta)
    if span >= L * (1 - _REL):
        return 1, np.zeros(0), np.zeros(0)
    # vertex deviation is a (L - |delta|) / L with forward step a = (L + |delta|) / m
    m = math.ceil((L * L - span * span) / (L * budget))
    m += m % 2
    m = max(m, 2)
    while (L + span) * (L - span) / (m * L) >= budget:
        m += 2
    a, b = (L + span) / m, (L - span) / m
    steps = np.where(np.arange(m) % 2 == 0, a, -b)
    arc = np.cumsum(np.abs(steps))[:-1]
    pos = np.cumsum(steps)[:-1]
    t = arc / L
    sign = 1.0 if delta >= 0 else -1.0
    return m, t, sign * pos - t * delta


def plan_folds(f: PLMap, eps_schedule, base_vertex=None, target_lengths=None, *,
               amplitude_cap=None, dyadic: bool = True, line_folds: bool = False) -> FoldPlan:
    """Compute the corrugation that brings every edge image to its target length.

    Each edge's offset stays below its closed-shell budget (optionally also
    below ``amplitude_cap``).  With ``dyadic`` piece counts are rounded up to
    powers of two.  ``line_folds`` allows N = 1 via back-and-forth folding.
    """
    cx = f.domain
    if cx.dim > 1:
        raise PreconditionError("folding is implemented for complexes of dimension <= 1")
    E = cx.rows(1)
    L = cx.lengths.copy() if target_lengths is None else np.asarray(target_lengths, dtype=float)
    if L.shape != (len(E),):
        raise PreconditionError("one target length per edge is required")
    X = f.images
    N = f.ambient_dim
    d = X[E[:, 1]] - X[E[:, 0]] if len(E) else np.zeros((0, N))
    ell = np.linalg.norm(d, axis=1)
    long = ell > L * (1 + _REL)
    if np.any(long):
        j = int(np.flatnonzero(long)[0])
        raise PreconditionError(
            f"edge {cx.ids(E[j])} has image length {ell[j]:.6g} > target {L[j]:.6g}")
    budget = simplex_budgets(cx, E, eps_schedule, base_vertex) if len(E) else np.zeros(0)
    if amplitude_cap is not None:
        budget = np.minimum(budget, amplitude_cap)
    straight = ell >= L * (1 - _REL)
    u = np.divide(d, ell[:, None], out=np.zeros_like(d), where=ell[:, None] > 0)
    if N == 1:
        if not line_folds and not np.all(straight):
            raise PreconditionError("folding a strictly short edge needs N >= 2")
        pieces, params, heights = [], [], []
        for j in range(len(E)):
            m, t, h = _line_breaks(L[j], d[j, 0], budget[j])
            pieces.append(m)
            params.append(t)
            heights.append(h)
        pieces = np.array(pieces, dtype=np.int64)
        normals = np.ones((len(E), 1))
    else:
        pieces, rise = _piece_count(L, ell, budget, dyadic)
        normals = _transverse(u)
        counts = pieces - 1
        edge_of = np.repeat(np.arange(len(E)), counts)
        i = 1 + np.arange(int(counts.sum())) - np.repeat(np.cumsum(counts) - counts, counts)
        m = pieces[edge_of]
        params = [i / m]
        heights = [np.where(i % 2 == 1, rise[edge_of] / m, 0.0)]
        normals[straight] = 0.0
    counts = np.maximum(pieces - 1, 0)
    offsets = np.r_[0, np.cumsum(counts)]
    return FoldPlan(
        edges=[cx.ids(e) for e in E],
        pieces=pieces,
        target_lengths=L,
        chords=ell,
        directions=u,
        normals=normals,
        budgets=budget,
        offsets=offsets,
        params=np.concatenate(params) if params else np.zeros(0),
        heights=np.concatenate(heights) if heights else np.zeros(0),
    )


def apply_plan(f: PLMap, plan: FoldPlan) -> tuple[PLMap, Correspondence]:
    """Folded map on the edgewise subdivision, with its correspondence to ``f``'s domain."""
    cx = f.domain
    E = cx.rows(1)
    breaks = [plan.params[plan.offsets[j]:plan.offsets[j + 1]] for j in range(len(E))]
    sub, corr = subdivide_edges(cx, breaks)
    X = corr.matrix() @ f.images
    new = (corr.carrier >= 0).sum(axis=1) == 2
    if new.any():
        # match each new vertex to its (edge, parameter) in the plan
        e = cx.find_rows(1, np.sort(corr.carrier[new], axis=1))
        t = np.where(corr.carrier[new, 0] < corr.carrier[new, 1],
                     corr.weights[new, 1], corr.weights[new, 0])
        edge_of = np.repeat(np.arange(len(E)), np.diff(plan.offsets))
        key = edge_of * 2.0 + plan.params
        pos = np.searchsorted(key, e * 2.0 + t)
        pos = np.clip(pos, 0, len(key) - 1)
        if not np.allclose(key[pos], e * 2.0 + t, rtol=0, atol=1e-12):
            raise NumericalFailure("fold breakpoints could not be matched")
        X[new] += plan.heights[pos, None] * plan.normals[e]
    return PLMap(sub, X), corr


def isometrize_graph(f: PLMap, eps_schedule, base_vertex=None, target_lengths=None, *,
                     amplitude_cap=None, dyadic: bool = True, line_folds: bool = False,
                     return_plan: bool = False):
    """Fold each edge so its image arclength equals the edge's length.

    Original vertex images are kept.  Inside the closure of shell l about
    ``base_vertex`` the result differs from ``f`` by less than
    min(eps_1, eps_l).
    """
    if f.domain.dim > 1:
        raise PreconditionError("isometrization is implemented for graphs only")
    plan = plan_folds(f, eps_schedule, base_vertex, target_lengths, amplitude_cap=amplitude_cap,
                      dyadic=dyadic, line_folds=line_folds)
    h, _ = apply_plan(f, plan)
    return (h, plan) if return_plan else h



def edge_arclengths(h: PLMap) -> np.ndarray:
    """Image arclength of each root edge for a map on an edgewise subdivision."""
    cx = h.domain
    root = cx.root
    E = cx.rows(1)
    seg = np.linalg.norm(h.images[E[:, 1]] - h.images[E[:, 0]], axis=1)
    carrier, weights = cx.root_carriers()
    c = np.where(weights > 0, carrier, -1)
    both = np.concatenate([c[E[:, 0]], c[E[:, 1]]], axis=1)
    hi = both.max(axis=1)
    lo = np.where(both >= 0, both, np.iinfo(np.int64).max).min(axis=1)
    parent = root.find_rows(1, np.stack([lo, hi], axis=1))
    if np.any(parent < 0):
        raise PreconditionError("domain is not an edgewise subdivision of its root")
    return np.bincount(parent, weights=seg, minlength=len(root.rows(1)))
