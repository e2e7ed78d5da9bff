"""JSON scene files: complexes and maps."""
from __future__ import annotations

import json
from pathlib import Path

import jsonschema
import numpy as np

from .complex import SimplicialComplex, build_complex
from .errors import PreconditionError, SchemaError
from .plmap import PLMap

__all__ = [
    "COMPLEX_SCHEMA",
    "MAP_SCHEMA",
    "parse_complex",
    "parse_map",
    "load_complex",
    "load_map",
    "complex_to_dict",
    "map_to_dict",
    "write_json",
]

_ID = {"type": ["string", "integer"]}

COMPLEX_SCHEMA = {
    "type": "object",
    "required": ["vertices", "simplices", "edge_lengths"],
    "properties": {
        "vertices": {"type": "array", "items": _ID},
        "simplices": {"type": "array", "items": {"type": "array", "items": _ID, "minItems": 1}},
        "edge_lengths": {
            "type": "object",
            "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
        },
    },
}

MAP_SCHEMA = {
    "type": "object",
    "required": ["ambient_dim", "vertex_images"],
    "properties": {
        "ambient_dim": {"type": "integer", "minimum": 1},
        "vertex_images": {
            "type": "object",
            "additionalProperties": {"type": "array", "items": {"type": "number"}},
        },
    },
}


def _validate(obj, schema, source):
    err = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(obj))
    if err is not None:
        element = "/" + "/".join(str(p) for p in err.absolute_path)
        raise SchemaError(source, element, err.message)


def _read(path) -> object:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise SchemaError(str(path), "/", f"cannot read file: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), "/", f"invalid JSON at line {exc.lineno}: {exc.msg}") from None


def parse_complex(obj, source: str = "<complex>") -> SimplicialComplex:
    _validate(obj, COMPLEX_SCHEMA, source)
    try:
        return build_complex(obj["vertices"], obj["simplices"], obj["edge_lengths"])
    except PreconditionError as exc:
        raise SchemaError(source, "/", str(exc)) from None


def parse_map(obj, domain: SimplicialComplex, source: str = "<map>") -> PLMap:
    _validate(obj, MAP_SCHEMA, source)
    N = obj["ambient_dim"]
    images = {str(k): v for k, v in obj["vertex_images"].items()}
    for v in domain.vertices:
        if v not in images:
            raise SchemaError(source, "/vertex_images", f"vertex {v!r} has no image")
        if len(images[v]) != N:
            raise SchemaError(source, f"/vertex_images/{v}",
                              f"expected {N} coordinates, got {len(images[v])}")
    extra = sorted(set(images) - set(domain.vertices))
    if extra:
        raise SchemaError(source, f"/vertex_images/{extra[0]}", "not a vertex of the complex")
    return PLMap.from_dict(domain, images)


def load_complex(path) -> SimplicialComplex:
    return parse_complex(_read(path), str(path))


def load_map(path, domain: SimplicialComplex) -> PLMap:
    return parse_map(_read(path), domain, str(path))


def complex_to_dict(cx: SimplicialComplex) -> dict:
    names = np.array(cx.vertices, dtype=object)
    tops = [t for d in sorted(cx.maximal) for t in names[cx.maximal[d]].tolist()]
    E = cx.rows(1)
    keys = [f"{a}|{b}" for a, b in names[E].tolist()] if len(E) else []
    return {
        "vertices": list(cx.vertices),
        "simplices": tops,
        "edge_lengths": dict(zip(keys, cx.lengths.tolist())),
    }


def map_to_dict(f: PLMap) -> dict:
    return {
        "ambient_dim": f.ambient_dim,
        "vertex_images": dict(zip(f.domain.vertices, f.images.tolist())),
    }


def write_json(path, obj, compact: bool = False) -> None:
    """Deterministic JSON (sorted keys, no NaN); ``compact`` drops indentation for large data."""
    kw = {"separators": (",", ":")} if compact else {"indent": 2}
    Path(path).write_text(json.dumps(obj, sort_keys=True, allow_nan=False, **kw) + "\n",
                          encoding="utf-8")
