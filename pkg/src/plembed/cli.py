"""Command-line entry point: ``plembed --cmd NAME --complex C.json [--map M.json] ...``.

Exit codes: 0 success, 1 unreadable or malformed input, 2 precondition
violation, 3 numerical failure (retry budget exhausted or a report check
failing).
"""
from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .complex import validate_metric
from .errors import NumericalFailure, PreconditionError, SchemaError
from .fold import edge_arclengths, isometrize_graph
from .genpos import (DEFAULT_RANK_TOL, DEFAULT_RETRIES, is_general_position,
                     perturb_to_embedding, verify_embedding)
from .io import complex_to_dict, load_complex, load_map, map_to_dict, write_json
from .pipeline import iterate_nash, split_embed_pipeline
from .plmap import evaluate_root, shortness_margin, simplex_margins
from .pullback import isometry_defect, pair_table, sample_graph

COMMANDS = ("validate", "margin", "genpos", "perturb", "pullback", "fold", "split-pipeline",
            "iterate")

log = logging.getLogger("plembed")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _eps(text: str) -> list:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError("eps entries must be positive")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="plembed", description="Short PL maps, embeddings and isometric folding.")
    p.add_argument("--cmd", required=True, choices=COMMANDS)
    p.add_argument("--complex", required=True, type=Path, help="complex JSON file")
    p.add_argument("--map", type=Path, help="map JSON file")
    p.add_argument("--eps", type=_eps, default=[0.05], help="per-shell accuracies e1,e2,...")
    p.add_argument("--base-vertex", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=int, default=4, help="subdivision level of sample graphs")
    p.add_argument("--chain-eps", type=float, default=None, help="chain step (default: mesh)")
    p.add_argument("--rank-tol", type=float, default=DEFAULT_RANK_TOL)
    p.add_argument("--retries", type=int, default=DEFAULT_RETRIES)
    p.add_argument("--iters", type=int, default=6)
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--emit-plan", action="store_true", help="also write the fold plan")
    p.add_argument("--emit-map", action="store_true",
                   help="iterate: also write the final map and complex (large)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _need_map(args, cx):
    if args.map is None:
        raise PreconditionError(f"command {args.cmd!r} needs --map")
    return load_map(args.map, cx)


def _displacement(old, new) -> float:
    return float(np.linalg.norm(old - new, axis=1).max()) if len(old) else 0.0


def _deviation(f, h) -> float:
    return _displacement(evaluate_root(f, *h.domain.root_carriers()), h.images)


def _arclength_error(h) -> float:
    L = h.domain.root.lengths
    return float(np.max(np.abs(edge_arclengths(h) - L) / L)) if len(L) else 0.0


def _run(args) -> tuple[dict, dict]:
    """Execute one command; returns (JSON report, extra files)."""
    cx = load_complex(args.complex)
    files: dict = {}
    if args.cmd == "validate":
        return validate_metric(cx).to_dict(), files

    f = _need_map(args, cx)
    if args.cmd == "margin":
        m = shortness_margin(f)
        per = []
        for d, rows in sorted(cx.maximal.items()):
            if d == 0:
                continue
            eig, _ = simplex_margins(f, rows)
            per += [{"simplex": list(cx.ids(r)), "margin": float(e)} for r, e in zip(rows, eig)]
        return {"margin": m.margin, "worst_simplex": list(m.worst_simplex or ()),
                "ratio": m.ratio, "short": m.short, "strictly_short": m.strictly_short,
                "simplices": per}, files

    if args.cmd == "genpos":
        k = 2 * cx.dim + 1
        rep = is_general_position(f.images, min(k, f.ambient_dim), args.rank_tol, full=True)
        out = {"k": rep.k, "holds": rep.holds,
               "witness": list(cx.ids(rep.witness)) if rep.witness else [],
               "min_singular_gap": rep.min_singular_gap,
               "criterion_applies": f.ambient_dim >= k,
               "exact": verify_embedding(f, "exact").to_dict()}
        return out, files

    if args.cmd == "perturb":
        g = perturb_to_embedding(f, args.eps, args.base_vertex, args.seed,
                                 rank_tol=args.rank_tol, retries=args.retries)
        files["map.json"] = map_to_dict(g)
        return {"margin": shortness_margin(g).margin,
                "max_displacement": _displacement(f.images, g.images),
                "genpos": verify_embedding(g, "genpos", args.rank_tol).embedding,
                "exact": verify_embedding(g, "exact").embedding}, files

    if args.cmd == "pullback":
        G = sample_graph(cx, args.level)
        eps = G.mesh if args.chain_eps is None else args.chain_eps
        pairs = list(itertools.combinations(cx.vertices, 2))
        rows = pair_table(f, G, eps, pairs)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["pair", "intrinsic", "pullback", "defect"])
        for r in rows:
            w.writerow([r[0]] + [repr(float(x)) for x in r[1:]])
        files["report.csv"] = buf.getvalue()
        d = isometry_defect(f, G, eps)
        return {"level": args.level, "chain_eps": eps, "mesh": G.mesh, "defect": d.defect,
                "pair": list(d.pair) if d.pair else None}, files

    if args.cmd == "fold":
        h, plan = isometrize_graph(f, args.eps, args.base_vertex, return_plan=True)
        files["map.json"] = map_to_dict(h)
        files["complex.json"] = complex_to_dict(h.domain)
        if args.emit_plan:
            files["plan.json"] = plan.to_dict()
        return {"pieces": plan.pieces.tolist(), "arclength_rel_error": _arclength_error(h),
                "max_deviation": _deviation(f, h)}, files

    if args.cmd == "split-pipeline":
        res = split_embed_pipeline(f, args.eps, args.base_vertex, args.seed,
                                   rank_tol=args.rank_tol, retries=args.retries,
                                   return_details=True)
        h = res.map
        files["map.json"] = map_to_dict(h)
        files["complex.json"] = complex_to_dict(h.domain)
        if args.emit_plan:
            files["plan.json"] = res.plan.to_dict()
        return {"arclength_rel_error": _arclength_error(h), "delta": res.delta,
                "mu": {str(k): v for k, v in res.mu.items()}, "grid_level": res.level,
                "amplitudes": res.amplitudes, "max_deviation": _deviation(f, h),
                "exact": True}, files

    # iterate
    h, rep = iterate_nash(f, args.eps, args.base_vertex, args.iters, args.seed,
                          retries=args.retries)
    if args.emit_map:
        files["map.json"] = map_to_dict(h)
        files["complex.json"] = complex_to_dict(h.domain)
    files["report.csv"] = rep.to_csv()
    out = rep.to_dict()
    if not rep.ok:
        failed = [k for k, v in rep.checks.items() if not v]
        out["failed_checks"] = failed
    return out, files


def _emit(args, report, files):
    if args.out is None:
        print(json.dumps(report, indent=2, sort_keys=True))
        return
    args.out.mkdir(parents=True, exist_ok=True)
    write_json(args.out / "report.json", report)
    for name, content in files.items():
        if isinstance(content, str):
            (args.out / name).write_text(content, encoding="utf-8")
        else:
            write_json(args.out / name, content, compact=True)


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        report, files = _run(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PreconditionError as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    _emit(args, report, files)
    if args.cmd == "validate" and not report["valid"]:
        print("metric is not Euclidean on every simplex", file=sys.stderr)
        return 2
    if report.get("failed_checks"):
        print(f"report checks failed: {', '.join(report['failed_checks'])}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
