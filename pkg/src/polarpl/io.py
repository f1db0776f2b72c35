"""JSON formats for functions, Busemann instances, reduction embeddings and reports."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Union

import jsonschema
import numpy as np

from .busemann import BusemannInstance, Potential, ReductionEmbedding
from .convolutions import ConvolutionParams
from .grid import GridFunction

PathLike = Union[str, os.PathLike]

DEFAULT_SHAPE = {1: 513, 2: 129}

_BOX = {"type": "array", "minItems": 1, "maxItems": 2,
        "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": {"type": "number"}}}
_NUM_OR_INF = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf"]}]}

FUNCTION_SCHEMA = {
    "oneOf": [
        {"type": "object", "required": ["kind", "box", "shape", "values"],
         "properties": {"kind": {"const": "grid"}, "box": _BOX,
                        "shape": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                        "values": {"type": "array", "items": {"anyOf": [{"type": "number"}, {"const": "inf"}]}}}},
        {"type": "object", "required": ["kind", "box", "terms"],
         "properties": {"kind": {"const": "max_affine"}, "box": _BOX,
                        "shape": {"type": "array", "items": {"type": "integer", "minimum": 2}},
                        "terms": {"type": "array", "minItems": 1,
                                  "items": {"type": "array", "minItems": 2, "maxItems": 2}}}},
    ]
}

REPORT_SCHEMA = {
    "type": "object",
    "required": ["theorem", "lhs", "rhs", "margin", "rel_tol", "resolution", "hypothesis_check",
                 "instance", "verdict", "details"],
    "properties": {
        "theorem": {"enum": ["classical-pl", "polar-pl", "polar-pl-mu", "lp", "busemann"]},
        "lhs": _NUM_OR_INF, "rhs": _NUM_OR_INF, "margin": _NUM_OR_INF,
        "rel_tol": {"type": "number", "minimum": 0},
        "resolution": {"type": "object"},
        "hypothesis_check": {"type": "object", "required": ["passed", "worst", "tol", "witness"],
                             "properties": {"passed": {"type": "boolean"}, "worst": _NUM_OR_INF,
                                            "tol": {"type": "number"},
                                            "witness": {"type": ["object", "null"]}}},
        "instance": {"type": "object"},
        "verdict": {"enum": ["pass", "fail", "inconclusive"]},
        "details": {"type": "object"},
        "generated_at": {"type": "string"},
    },
    "additionalProperties": False,
}

REDUCTION_SCHEMA = {
    "type": "object",
    "required": ["passed", "failed", "checks"],
    "properties": {
        "passed": {"type": "boolean"},
        "failed": {"type": "array", "items": {"enum": ["identity", "involution", "segments", "inclusion"]}},
        "checks": {"type": "object", "required": ["identity", "involution", "segments", "inclusion"],
                   "additionalProperties": {"type": "object", "required": ["passed", "value", "tol", "witness"]}},
        "generated_at": {"type": "string"},
    },
    "additionalProperties": False,
}


# --------------------------------------------------------------------- files

def write_atomic(path: PathLike, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_json(path: PathLike):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# --------------------------------------------------------------------- functions

def function_from_dict(d: dict) -> GridFunction:
    """Schema A (grid values, "inf" for +inf, row-major) or schema B (max-affine terms)."""
    jsonschema.validate(d, FUNCTION_SCHEMA)
    box = tuple(tuple(float(v) for v in b) for b in d["box"])
    if d["kind"] == "grid":
        shape = tuple(int(s) for s in d["shape"])
        if len(shape) != len(box):
            raise ValueError("shape and box have different dimensions")
        vals = np.array([np.inf if v == "inf" else float(v) for v in d["values"]])
        if vals.size != int(np.prod(shape)):
            raise ValueError(f"{vals.size} values do not fill shape {list(shape)}")
        return GridFunction(box, vals.reshape(shape))
    n = len(box)
    shape = tuple(int(s) for s in d.get("shape", [DEFAULT_SHAPE[n]] * n))
    a = np.array([np.atleast_1d(np.asarray(t[0], dtype=float)) for t in d["terms"]])
    b = np.array([float(t[1]) for t in d["terms"]])
    if a.shape[1] != n:
        raise ValueError(f"term slopes have {a.shape[1]} coordinates, box has {n}")
    if np.any(b < 0):
        raise ValueError("max_affine terms need b >= 0")

    def phi(x):
        return np.maximum(0.0, (x @ a.T - b).max(axis=1))
    return GridFunction.from_callable(phi, box, shape)


def function_to_dict(f: GridFunction) -> dict:
    vals = ["inf" if np.isposinf(v) else float(v) for v in f.values.reshape(-1)]
    if any(isinstance(v, float) and not np.isfinite(v) for v in vals):
        raise ValueError("grid functions may hold finite values or +inf only")
    return {"kind": "grid", "box": [list(b) for b in f.box], "shape": list(f.shape), "values": vals}


def load_function(path: PathLike) -> GridFunction:
    return function_from_dict(read_json(path))


def save_function(path: PathLike, f: GridFunction) -> None:
    write_atomic(path, dumps(function_to_dict(f)))


# --------------------------------------------------------------------- instances

def _function_field(d, key, base: Path):
    v = d.get(key)
    if v is None:
        return None
    if isinstance(v, str):
        return load_function(base / v)
    return function_from_dict(v)


def potential_from_dict(d) -> Potential:
    if d is None:
        return Potential()
    kind = d.get("kind", "zero")
    if kind == "epi_weight":
        raise ValueError("epi_weight potentials come from reduction embeddings only")
    return Potential(kind, d.get("A"), d.get("b"))


def instance_from_dict(d: dict) -> BusemannInstance:
    """Fields n (default 1), x0, x1, lam, K0, K1 (ambient point lists whose
    hulls are the sets), psi ({kind, A, b}) and optional K_lam."""
    for key in ("x0", "x1", "lam", "K0", "K1"):
        if key not in d:
            raise ValueError(f"instance is missing {key!r}")
    K_lam = d.get("K_lam")
    return BusemannInstance(np.asarray(d["x0"], dtype=float), np.asarray(d["x1"], dtype=float),
                            float(d["lam"]), np.asarray(d["K0"], dtype=float),
                            np.asarray(d["K1"], dtype=float), potential_from_dict(d.get("psi")),
                            None if K_lam is None else np.asarray(K_lam, dtype=float), int(d.get("n", 1)))


def embedding_from_dict(d: dict, base: PathLike = ".") -> ReductionEmbedding:
    """Fields s0, s1, lam, phi0, phi1 and optional phi_lam, alpha, t_samples.
    Functions are inline specs or paths relative to ``base``."""
    base = Path(base)
    for key in ("s0", "s1", "lam", "phi0", "phi1"):
        if key not in d:
            raise ValueError(f"embedding is missing {key!r}")
    lam = float(d["lam"])
    params = ConvolutionParams(lam, int(d.get("t_samples", 65)))
    return ReductionEmbedding(float(d["s0"]), float(d["s1"]), lam, _function_field(d, "phi0", base),
                              _function_field(d, "phi1", base), _function_field(d, "phi_lam", base),
                              _function_field(d, "alpha", base), params)
