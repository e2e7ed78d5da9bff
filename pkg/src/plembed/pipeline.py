"""Split embedding of graph maps and the alternating embed/isometrize iteration."""
from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import dijkstra

from .complex import SimplicialComplex, epsilon_at, shell_index, subdivide
from .errors import NumericalFailure, PreconditionError
from .fold import apply_plan, isometrize_graph, plan_folds
from .genpos import (DEFAULT_RANK_TOL, DEFAULT_RETRIES, is_general_position,
                     perturb_prefix_general_position, perturb_to_embedding, verify_embedding)
from .plmap import (PLMap, contract_toward_point, direct_sum, evaluate_root, refine_to,
                    shortness_margin)
from .pullback import isometry_defect, sample_graph

__all__ = ["SplitResult", "ConvergenceReport", "split_embed_pipeline", "iterate_nash"]

log = logging.getLogger(__name__)


# --- shells of sample points -------------------------------------------------


def _point_simplices(root: SimplicialComplex, carrier, weights) -> list:
    """Root simplex (id tuple) whose interior holds each point."""
    out = []
    for c, w in zip(np.asarray(carrier).tolist(), np.asarray(weights).tolist()):
        out.append(root.ids(sorted(i for i, x in zip(c, w) if i >= 0 and x > 0)))
    return out


def _closed_shells(root: SimplicialComplex, base) -> tuple[dict, dict]:
    """Open shell of every root simplex, and the shells whose closure holds it."""
    shells = shell_index(root, base)
    closed = {s: set() for s in shells}
    for s, k in shells.items():
        # every face of s lies in the closure of shell k
        n = len(s)
        for mask in range(1, 2**n):
            face = tuple(s[i] for i in range(n) if mask >> i & 1)
            closed[face].add(k)
    return shells, closed


def _check_graph_map(f: PLMap, min_dim: int):
    if f.domain.dim != 1:
        raise PreconditionError(f"this construction needs a graph (n = 1), got n = {f.domain.dim}")
    if f.ambient_dim < min_dim:
        raise PreconditionError(f"this construction needs N >= {min_dim}, got N = {f.ambient_dim}")
    m = shortness_margin(f)
    if not m.margin > 0:
        raise PreconditionError(
            f"map is not strictly short (margin {m.margin:.3g} on {m.worst_simplex})")


# --- split pipeline ----------------------------------------------------------


@dataclass
class SplitResult:
    map: PLMap
    prefix: PLMap
    residual: PLMap
    delta: float
    mu: dict
    level: int
    amplitudes: list
    plan: object = field(repr=False, default=None)


def _separation(g: PLMap, root_shells, delta: float, start: int, max_level: int):
    """Measured separation mu_k of g over pairs at intrinsic distance >= delta.

    Grid minima are reduced by the grid mesh s, which bounds how far any
    point and pair distance can be from a grid sample (g is short).
    """
    cx = g.domain
    shells, closed = root_shells
    K = max(shells.values())
    for level in range(start, max_level + 1):
        G = sample_graph(cx, level)
        D = dijkstra(G.matrix(), directed=False)
        s = G.mesh
        F = evaluate_root(g, *G.sub.root_carriers())
        img = np.linalg.norm(F[:, None, :] - F[None, :, :], axis=2)
        far = D >= delta - s
        np.fill_diagonal(far, False)
        near_min = np.where(far, img, np.inf).min(axis=1) - s
        mu = {k: np.inf for k in range(1, K + 1)}
        for x, simplex in enumerate(_point_simplices(cx.root, *G.sub.root_carriers())):
            for k in closed[simplex]:
                mu[k] = min(mu[k], float(near_min[x]))
        if all(v > 0 for v in mu.values()):
            return mu, level
    raise NumericalFailure(f"separation could not be certified up to grid level {max_level}")


def split_embed_pipeline(f: PLMap, eps_schedule, base_vertex=None, seed: int = 0, *,
                         rank_tol: float = DEFAULT_RANK_TOL, retries: int = DEFAULT_RETRIES,
                         grid_level: int = 3, max_level: int = 9,
                         return_details: bool = False):
    """Strictly short graph map into R^N (N >= 3) to an intrinsically isometric embedding.

    The first two coordinates are perturbed into a local embedding h1;
    the rest are folded so every edge gains exactly the missing length
    sqrt(L^2 - |h1(e)|^2).  Fold amplitudes in shell k stay below
    min(eps_k / 2, eps_{k+1} / 2, mu_k / 3), mu_k being the measured
    separation of the unfolded map inside the closure of shell k.
    """
    _check_graph_map(f, 3)
    cx = f.domain
    g = perturb_prefix_general_position(f, eps_schedule, base_vertex, seed,
                                        rank_tol=rank_tol, retries=retries)
    h1 = PLMap(cx, g.images[:, :2])
    f2 = PLMap(cx, g.images[:, 2:])
    if not is_general_position(h1.images, 2, rank_tol).holds:
        raise NumericalFailure("prefix map lost 2-general position")
    E = cx.rows(1)
    ell1 = np.linalg.norm(h1.images[E[:, 1]] - h1.images[E[:, 0]], axis=1)
    residual = np.sqrt(np.maximum(cx.lengths**2 - ell1**2, 0.0))
    delta = 0.5 * float(cx.lengths.min())
    root_shells = _closed_shells(cx.root, base_vertex)
    mu, level = _separation(g, root_shells, delta, grid_level, max_level)
    K = max(mu)
    sched = [float(e) for e in eps_schedule]
    amps = [min(epsilon_at(sched, k) / 2, epsilon_at(sched, k + 1) / 2, mu[k] / 3)
            for k in range(1, K + 1)]
    plan = plan_folds(f2, amps, base_vertex, target_lengths=residual, dyadic=False,
                      line_folds=True)
    h2, corr = apply_plan(f2, plan)
    h = direct_sum(refine_to(h1, h2.domain, corr), h2)
    verdict = verify_embedding(h, "exact")
    if not verdict.embedding:
        raise NumericalFailure(f"split map is not injective: {verdict.witness}")
    if not return_details:
        return h
    return SplitResult(h, h1, f2, delta, mu, level, amps, plan)


# --- alternating iteration ---------------------------------------------------


@dataclass
class ConvergenceReport:
    """Diagnostics of the alternating embed/isometrize sequence.

    ``alpha[i][k - 1]`` and ``beta[i][k - 1]`` are the budgets of iteration
    i + 1 in shell k; ``alpha[0]`` is zero because the input is used as is.
    """

    eps: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    alpha: list = field(default_factory=list)
    beta: list = field(default_factory=list)
    mu: list = field(default_factory=list)
    gaps: dict = field(default_factory=dict)
    lam: list = field(default_factory=list)
    cauchy_ratio: list = field(default_factory=list)
    shell_accuracy: float = 0.0

    CSV_HEADER = ("iter", "sup_delta", "min_gap", "defect", "alpha", "beta")

    @property
    def checks(self) -> dict:
        I = len(self.rows)
        budget = all(self.alpha[i][k] < self.eps[k] / 4 ** (i + 1) and
                     self.beta[i][k] < self.eps[k] / 4 ** (i + 1)
                     for i in range(I) for k in range(len(self.eps)))
        separation = all(g > self.mu[j - 1] / 2 for j, g in self.gaps.items()
                         if np.isfinite(self.mu[j - 1]))
        return {
            "budgets": bool(budget),
            "cauchy": bool(all(r <= 1 for r in self.cauchy_ratio)),
            "separation": bool(separation),
            "shell_accuracy": bool(self.shell_accuracy < 1),
        }

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_HEADER)
        for r in self.rows:
            w.writerow([r["iter"]] + [repr(float(r[k])) for k in self.CSV_HEADER[1:]])
        return buf.getvalue()

    def to_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not np.isfinite(x):
                return None
            return x
        return {
            "eps": self.eps,
            "rows": [{k: clean(v) for k, v in r.items()} for r in self.rows],
            "alpha": self.alpha,
            "beta": self.beta,
            "mu": [clean(m) for m in self.mu],
            "gaps": {str(j): clean(g) for j, g in self.gaps.items()},
            "lambda": self.lam,
            "cauchy_ratio": self.cauchy_ratio,
            "shell_accuracy": self.shell_accuracy,
            "checks": self.checks,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


class _Grid:
    """Fixed root-complex sample points with shell and component labels."""

    def __init__(self, root: SimplicialComplex, level: int, shells):
        sub, _ = subdivide(root, level)
        self.carrier, self.weights = sub.root_carriers()
        simp = _point_simplices(root, self.carrier, self.weights)
        self.shell = np.array([shells[s] for s in simp])
        comp = root.components
        self.component = np.array([comp[root.index[s[0]]] for s in simp])
        self.simplices = simp

    def __len__(self):
        return len(self.carrier)

    def at(self, f: PLMap) -> np.ndarray:
        return evaluate_root(f, self.carrier, self.weights)


def _separated_pairs(grid: _Grid, root, f1_images, i: int) -> np.ndarray:
    """Grid pairs on the first i root edges, same component, |f1 gap| >= 2^-i."""
    E = root.rows(1)
    first = {root.ids(e) for e in E[:i]}
    vert = {v for e in first for v in e}
    on = np.array([s in first or (len(s) == 1 and s[0] in vert) for s in grid.simplices])
    idx = np.flatnonzero(on)
    a, b = np.triu_indices(len(idx), 1)
    a, b = idx[a], idx[b]
    gap = np.linalg.norm(f1_images[a] - f1_images[b], axis=1)
    keep = (grid.component[a] == grid.component[b]) & (gap >= 2.0**-i)
    return np.stack([a[keep], b[keep]], axis=1)


def _min_gap(images, pairs) -> float:
    if not len(pairs):
        return np.inf
    return float(np.linalg.norm(images[pairs[:, 0]] - images[pairs[:, 1]], axis=1).min())


def _defect(h: PLMap, sources: int) -> float:
    G = sample_graph(h.domain, 0)
    return isometry_defect(h, G, G.mesh, max_sources=sources).defect


def iterate_nash(f: PLMap, eps_schedule, base_vertex=None, iterations: int = 6, seed: int = 0, *,
                 safety: float = 0.9, pair_level: int = 4, sample_level: int = 6,
                 retries: int = DEFAULT_RETRIES, defect_sources: int = 16):
    """Alternate isometrization and re-embedding of a strictly short graph embedding.

    Iteration i folds f_i into an intrinsic isometry h_i with accuracy
    beta_i, then contracts h_i slightly and perturbs it into the embedding
    f_{i+1} with accuracy alpha_{i+1}.  In shell k both budgets stay below
    eps_k / 4^i, and after the separated set S_j is measured (gap mu_j)
    every later budget also stays below mu_j / 4^i / 2, with beta_j < mu_j / 8.
    Returns the last isometry h_I and a :class:`ConvergenceReport`.
    """
    if iterations < 0:
        raise PreconditionError("iteration count must be >= 0")
    _check_graph_map(f, 3)
    root = f.domain.root
    shells = shell_index(root, base_vertex)
    K = max(shells.values())
    sched = [float(e) for e in eps_schedule]
    eps = [epsilon_at(sched, k) for k in range(1, K + 1)]
    report = ConvergenceReport(eps=eps)
    if iterations == 0:
        return f, report
    if not verify_embedding(f, "exact").embedding:
        raise PreconditionError("input map is not an embedding; run perturb_to_embedding first")

    pairs_grid = _Grid(root, pair_level, shells)
    samples = _Grid(root, sample_level, shells)
    f1_pairs = pairs_grid.at(f)
    f_samples = samples.at(f)
    eps_arr = np.array(eps)
    seeds = np.random.SeedSequence(seed).spawn(iterations)

    S: dict = {}
    fi = f
    prev = f_samples
    alpha = np.zeros(K)
    for i in range(1, iterations + 1):
        S[i] = _separated_pairs(pairs_grid, root, f1_pairs, i)
        Pi = pairs_grid.at(fi)
        mu_i = _min_gap(Pi, S[i])
        if not mu_i > 0:
            raise NumericalFailure(f"f_{i} is not injective on the separated set S_{i}")
        report.mu.append(mu_i)
        for j in S:
            report.gaps[j] = min(report.gaps.get(j, np.inf), _min_gap(Pi, S[j]))

        cap = min([report.mu[j - 1] / 2 / 4**i for j in range(1, i)], default=np.inf)
        beta = safety * np.minimum(eps_arr / 4**i, min(mu_i / 8, cap))
        hi = isometrize_graph(fi, beta, base_vertex, dyadic=False)
        Hs = samples.at(hi)
        Hp = pairs_grid.at(hi)
        for j in S:
            report.gaps[j] = min(report.gaps[j], _min_gap(Hp, S[j]))

        # per-sample bound on the move since the previous isometry
        step = np.linalg.norm(Hs - prev, axis=1)
        bound = alpha[samples.shell - 1] + beta[samples.shell - 1]
        report.cauchy_ratio.append(float((step / bound).max()))
        report.alpha.append(alpha.tolist())
        report.beta.append(beta.tolist())
        report.rows.append({
            "iter": i,
            "sup_delta": float(step.max()),
            "min_gap": _min_gap(Hp, S[i]),
            "defect": _defect(hi, defect_sources),
            "alpha": float(alpha.max()),
            "beta": float(beta.max()),
        })
        log.info("iteration %d: %s", i, report.rows[-1])
        prev = Hs
        if i == iterations:
            break

        cap = min(report.mu[j - 1] / 2 / 4 ** (i + 1) for j in range(1, i + 1))
        alpha = safety * np.minimum(eps_arr / 4 ** (i + 1), cap)
        center = hi.images.mean(axis=0)
        R = float(np.linalg.norm(hi.images - center, axis=1).max())
        shrink = min(4.0 ** (-i - 2), 0.5 * float(alpha.min()) / R) if R > 0 else 4.0 ** (-i - 2)
        lam = 1.0 - shrink
        report.lam.append(lam)
        g = contract_toward_point(hi, center, lam)
        fi = perturb_to_embedding(g, alpha - shrink * R, base_vertex,
                                  seed=int(seeds[i].generate_state(1)[0]),
                                  retries=retries, method="batch")
    ratio = np.linalg.norm(prev - f_samples, axis=1) / eps_arr[samples.shell - 1]
    report.shell_accuracy = float(ratio.max())
    return hi, report
