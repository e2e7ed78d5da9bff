"""General position tests and shortness-preserving vertex perturbation."""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from math import comb

import numpy as np

from .complex import epsilon_at, vertex_budgets
from .errors import NumericalFailure, PreconditionError
from .intersect import affine_gap, find_intersection
from .plmap import PLMap, shortness_margin, simplex_margins

__all__ = [
    "GenPosReport",
    "Verdict",
    "is_general_position",
    "perturb_to_embedding",
    "perturb_prefix_general_position",
    "verify_embedding",
]

log = logging.getLogger(__name__)

DEFAULT_RANK_TOL = 1e-9
DEFAULT_RETRIES = 64
DEFAULT_HALVINGS = 20
EXHAUSTIVE_LIMIT = 2000
_CHUNK = 20000
_CERTIFIED = 1e-6  # bounds above this are far from roundoff and need no SVD
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class GenPosReport:
    k: int
    holds: bool
    witness: tuple  # point indices of an affinely dependent subset, empty if holds
    min_singular_gap: float

    def to_dict(self):
        return {"k": self.k, "holds": self.holds, "witness": list(self.witness),
                "min_singular_gap": self.min_singular_gap}


def _subset_blocks(pool, m, moved):
    """Index arrays of m-subsets of ``pool`` (all containing ``moved`` if given), in chunks."""
    if moved is None:
        rest, width = pool, m
    else:
        rest, width = [p for p in pool if p != moved], m - 1
    it = itertools.combinations(rest, width)
    while True:
        flat = np.fromiter(itertools.chain.from_iterable(itertools.islice(it, _CHUNK)),
                           dtype=np.int64)
        if not len(flat):
            return
        block = flat.reshape(-1, width)
        if moved is not None:
            block = np.hstack([np.full((len(block), 1), moved, dtype=np.int64), block])
        yield block


def _pd_after_shift(G: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Row-wise test that G - shift * I is positive definite, by a Cholesky on columns."""
    d = G.shape[1]
    L: dict = {}
    ok = np.ones(len(G), dtype=bool)
    for j in range(d):
        s = G[:, j, j] - shift
        for k in range(j):
            s = s - L[j, k] ** 2
        ok &= s > 0
        L[j, j] = np.sqrt(np.where(ok, s, 1.0))
        for i in range(j + 1, d):
            s = G[:, i, j]
            for k in range(j):
                s = s - L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return ok


def _gap_lower(P: np.ndarray, sure: float) -> np.ndarray:
    """Singular value ratio of each point set, or a lower bound on it above ``sure``.

    A ladder of shifted Cholesky certificates (ratio > t whenever
    G - t^2 tr(G) I is positive definite, G the Gram matrix) settles most
    sets; the SVD handles whatever no rung certifies.
    """
    E = P[:, 1:, :] - P[:, :1, :]
    d = E.shape[1]
    G = E @ E.transpose(0, 2, 1)
    tr = np.trace(G, axis1=1, axis2=2)
    g = np.zeros(len(P))
    unsure = np.flatnonzero(tr > 0)
    t = 0.1
    while len(unsure) and t >= sure:
        # the eps term covers the backward error of the factorization
        ok = _pd_after_shift(G[unsure], (t * t + 4 * d * d * _EPS) * tr[unsure])
        g[unsure[ok]] = t
        unsure = unsure[~ok]
        t *= 0.1
    unsure = np.flatnonzero(g <= sure)
    if len(unsure):
        g[unsure] = affine_gap(P[unsure])
    return g


def is_general_position(points, k: int, rank_tol: float = DEFAULT_RANK_TOL, *,
                        pool=None, moved=None, full: bool = False) -> GenPosReport:
    """Test k-general position: every subset of at most k+1 points is affinely independent.

    A subset counts as independent when the smallest singular value of its
    difference matrix exceeds ``rank_tol`` times the largest.  When more
    than 2000 subsets would be tested and ``moved`` is given (and ``full``
    is false), only subsets containing ``moved`` are checked.  ``pool``
    restricts the test to a subset of point indices.  Subsets certified
    by a Cholesky bound skip the SVD, so ``min_singular_gap`` is exact up
    to 1e-6 and a lower bound (within a factor of about 20) above it.
    """
    P = np.atleast_2d(np.asarray(points, dtype=float))
    N = P.shape[1]
    if k > N:
        raise PreconditionError(f"k = {k} exceeds the ambient dimension {N}")
    pool = list(range(len(P))) if pool is None else sorted(pool)
    top = min(k + 1, len(pool))
    total = sum(comb(len(pool), m) for m in range(2, top + 1))
    restrict = moved if (moved is not None and not full and total > EXHAUSTIVE_LIMIT) else None
    gap = 1.0
    sure = max(_CERTIFIED, rank_tol)
    for m in range(2, top + 1):
        for idx in _subset_blocks(pool, m, restrict):
            g = _gap_lower(P[idx], sure)
            j = int(np.argmin(g))
            gap = min(gap, float(g[j]))
            if g[j] <= rank_tol:
                return GenPosReport(k, False, tuple(int(i) for i in idx[j]), gap)
    return GenPosReport(k, True, (), gap)


@dataclass(frozen=True)
class Verdict:
    embedding: bool
    mode: str
    witness: object = None

    def to_dict(self):
        w = self.witness
        if hasattr(w, "_asdict"):
            w = {k: list(v) if isinstance(v, tuple) else v for k, v in w._asdict().items()}
        elif isinstance(w, tuple):
            w = list(w)
        return {"embedding": self.embedding, "mode": self.mode, "witness": w}


def verify_embedding(f: PLMap, mode: str = "exact", rank_tol: float = DEFAULT_RANK_TOL,
                     shortcut: bool = True) -> Verdict:
    """Decide whether ``f`` is injective.

    ``genpos`` checks (2n+1)-general position of the vertex images, a
    sufficient condition; ``exact`` intersects image simplices pairwise.
    """
    n = f.domain.dim
    if mode == "genpos":
        if f.ambient_dim < 2 * n + 1:
            raise PreconditionError(
                f"general-position criterion needs N >= 2n+1 = {2 * n + 1}, got {f.ambient_dim}")
        rep = is_general_position(f.images, 2 * n + 1, rank_tol, full=True)
        witness = f.domain.ids(rep.witness) if not rep.holds else None
        return Verdict(rep.holds, mode, witness)
    if mode == "exact":
        hit = find_intersection(f, shortcut=shortcut)
        return Verdict(hit is None, mode, hit)
    raise PreconditionError(f"unknown mode {mode!r}")


# --- perturbation ----------------------------------------------------------


def _incident_rows(cx):
    inc = [[] for _ in range(cx.n_vertices)]
    for d, rows in cx.maximal.items():
        if d == 0:
            continue
        for j, row in enumerate(rows.tolist()):
            for v in row:
                inc[v].append((d, j))
    return inc


class _MarginProbe:
    """Smallest margin over the maximal simplices incident to one vertex."""

    def __init__(self, f: PLMap):
        self.cx = f.domain
        self.inc = _incident_rows(f.domain)

    def __call__(self, images: np.ndarray, v: int) -> float:
        if not self.inc[v]:
            return np.inf
        g = PLMap.__new__(PLMap)
        g.domain, g.images = self.cx, images
        best = np.inf
        by_dim: dict = {}
        for d, j in self.inc[v]:
            by_dim.setdefault(d, []).append(j)
        for d, js in by_dim.items():
            eig, _ = simplex_margins(g, self.cx.maximal[d][js])
            best = min(best, float(eig.min()))
        return best


def _safe_radius(probe, images, v, budget, halvings, axes=None):
    """Largest r in {budget, budget/2, ...} keeping incident margins above half."""
    m0 = probe(images, v)
    if not np.isfinite(m0):
        return budget
    N = images.shape[1]
    axes = range(N) if axes is None else axes
    r = budget
    for _ in range(halvings + 1):
        ok = True
        for c in axes:
            for sign in (1.0, -1.0):
                trial = images.copy()
                trial[v, c] += sign * r
                if probe(trial, v) < 0.5 * m0:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return r
        r *= 0.5
    return r


def _ball(rng, N, r):
    x = rng.standard_normal(N)
    x /= np.linalg.norm(x)
    return x * r * rng.random() ** (1.0 / N)


def _require_strictly_short(f: PLMap):
    m = shortness_margin(f)
    if not m.margin > 0:
        raise PreconditionError(
            f"map is not strictly short (margin {m.margin:.3g} on {m.worst_simplex})")
    return m


def perturb_to_embedding(f: PLMap, eps_schedule, base_vertex=None, seed: int = 0, *,
                         rank_tol: float = DEFAULT_RANK_TOL, retries: int = DEFAULT_RETRIES,
                         halvings: int = DEFAULT_HALVINGS, geometric_budgets: bool = False,
                         method: str = "sequential") -> PLMap:
    """Move vertex images so the map becomes a strictly short embedding.

    Vertices are visited in id order.  Each is moved to a random point of an
    open ball whose radius stays inside its shell budget and keeps every
    incident simplex strictly short; the new point is accepted once the
    visited vertices are in (2n+1)-general position.  With
    ``geometric_budgets`` the k-th vertex budget is further divided by
    2**(k+1).  ``method="batch"`` (graphs only) moves every vertex at once
    and certifies injectivity with the exact intersection test instead.
    """
    n = f.domain.dim
    N = f.ambient_dim
    if N < 2 * n + 1:
        raise PreconditionError(f"embedding needs N >= 2n+1 = {2 * n + 1}, got N = {N}")
    _require_strictly_short(f)
    budgets = vertex_budgets(f.domain, eps_schedule, base_vertex)
    if geometric_budgets:
        budgets = budgets / 2.0 ** (np.arange(len(budgets)) + 2)
    rng = np.random.default_rng(seed)
    if method == "batch":
        return _perturb_batch(f, budgets, rng, retries, halvings)
    if method != "sequential":
        raise PreconditionError(f"unknown method {method!r}")
    probe = _MarginProbe(f)
    X = f.images.copy()
    k = 2 * n + 1
    for v in range(len(X)):
        r = _safe_radius(probe, X, v, budgets[v], halvings)
        for _ in range(halvings + 1):
            for _ in range(retries):
                y = X[v] + _ball(rng, N, r)
                trial = X.copy()
                trial[v] = y
                if probe(trial, v) <= 0:
                    continue
                rep = is_general_position(trial, k, rank_tol, pool=range(v + 1), moved=v)
                if rep.holds:
                    X = trial
                    break
            else:
                r *= 0.5
                continue
            break
        else:
            raise NumericalFailure(
                f"could not place vertex {f.domain.vertices[v]!r} in general position")
    out = PLMap(f.domain, X)
    _require_strictly_short(out)
    return out


def _perturb_batch(f: PLMap, budgets, rng, retries, halvings) -> PLMap:
    cx = f.domain
    if cx.dim > 1:
        raise PreconditionError("batch perturbation is implemented for graphs only")
    X0 = f.images
    E = cx.rows(1)
    radius = budgets.copy()
    if len(E):
        slack = cx.lengths - np.linalg.norm(X0[E[:, 1]] - X0[E[:, 0]], axis=1)
        per_v = np.full(len(X0), np.inf)
        np.minimum.at(per_v, E[:, 0], slack)
        np.minimum.at(per_v, E[:, 1], slack)
        # each endpoint moving < slack/4 keeps every edge image shorter than its length
        radius = np.minimum(radius, 0.25 * per_v)
    N = f.ambient_dim
    X = X0.copy()
    move = np.ones(len(X), dtype=bool)
    for attempt in range((halvings + 1) * retries):
        idx = np.flatnonzero(move)
        d = rng.standard_normal((len(idx), N))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        scale = radius[idx] * 0.5 ** (attempt // retries)
        X[idx] = X0[idx] + d * (scale * rng.random(len(idx)) ** (1.0 / N))[:, None]
        g = PLMap(cx, X)
        hit = find_intersection(g)
        if hit is None:
            _require_strictly_short(g)
            return g
        move[:] = False
        for v in set(hit.first) | set(hit.second):
            move[cx.index[v]] = True
        log.debug("batch perturbation retry %d: %s", attempt, hit)
    raise NumericalFailure("batch perturbation could not remove all intersections")


def perturb_prefix_general_position(f: PLMap, eps_schedule, base_vertex=None, seed: int = 0, *,
                                    rank_tol: float = DEFAULT_RANK_TOL,
                                    retries: int = DEFAULT_RETRIES,
                                    halvings: int = DEFAULT_HALVINGS) -> PLMap:
    """Perturb one coordinate at a time so every coordinate prefix is in general position.

    After the pass over coordinate j, the first j coordinates send the
    vertices into min(j, 2n+1)-general position.  Each vertex coordinate
    moves along its own axis by less than min(eps_k, eps_{k+1}) / (4N)
    inside shell k, and the full map stays strictly short throughout.
    """
    n = f.domain.dim
    N = f.ambient_dim
    if N < 3 * n:
        raise PreconditionError(f"prefix construction needs N >= 3n = {3 * n}, got N = {N}")
    _require_strictly_short(f)
    sched = [float(e) for e in eps_schedule]
    paired = [min(epsilon_at(sched, k), epsilon_at(sched, k + 1)) for k in range(1, len(sched) + 1)]
    budgets = vertex_budgets(f.domain, paired, base_vertex) / (4.0 * N)
    rng = np.random.default_rng(seed)
    probe = _MarginProbe(f)
    X = f.images.copy()
    for j in range(N):
        k = min(j + 1, 2 * n + 1)
        for v in range(len(X)):
            r = _safe_radius(probe, X, v, budgets[v], halvings, axes=[j])
            for _ in range(halvings + 1):
                for _ in range(retries):
                    trial = X.copy()
                    trial[v, j] = f.images[v, j] + r * (2.0 * rng.random() - 1.0)
                    if probe(trial, v) <= 0:
                        continue
                    rep = is_general_position(trial[:, : j + 1], k, rank_tol,
                                              pool=range(v + 1), moved=v)
                    if rep.holds:
                        X = trial
                        break
                else:
                    r *= 0.5
                    continue
                break
            else:
                raise NumericalFailure(
                    f"could not place coordinate {j} of vertex {f.domain.vertices[v]!r}")
    out = PLMap(f.domain, X)
    _require_strictly_short(out)
    return out
