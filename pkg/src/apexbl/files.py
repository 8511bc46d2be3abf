"""JSON formats for instances and certificates."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .certificate import WolfeCertificate
from .problems import ChainMaxProblem, FirstOrderOracle, MaxQuadProblem, gen_maxquad, toy_problem


class FormatError(ValueError):
    """A file does not follow the documented layout."""


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def maxquad_spec(d, k, mu, L, seed=0, shared_eigvecs=False) -> dict:
    if not (d >= 1 and k >= 1):
        raise ValueError("d and k must be positive")
    if not (L >= mu > 0):
        raise ValueError("need L >= mu > 0")
    return {"type": "maxquad", "d": int(d), "k": int(k), "mu": float(mu), "L": float(L),
            "seed": int(seed), "shared_eigvecs": bool(shared_eigvecs)}


def chain_spec(k, n, mu, L) -> dict:
    if not (k >= 1 and n >= 1):
        raise ValueError("k and n must be positive")
    if not (L >= mu > 0):
        raise ValueError("need L >= mu > 0")
    return {"type": "chain", "k": int(k), "n": int(n), "mu": float(mu), "L": float(L)}


def literal_spec(p: MaxQuadProblem) -> dict:
    """Dense ``{A_i, b_i, c_i}`` form of a MAXQUAD instance."""
    return {"type": "maxquad_literal", "A": _floats(p.A), "b": _floats(p.B), "c": _floats(p.c)}


def build(spec: dict) -> FirstOrderOracle:
    """Instance described by a parsed JSON document."""
    try:
        kind = spec["type"]
        if kind == "maxquad":
            return gen_maxquad(int(spec["d"]), int(spec["k"]), float(spec["mu"]), float(spec["L"]),
                               seed=int(spec.get("seed", 0)),
                               shared_eigvecs=bool(spec.get("shared_eigvecs", False)))
        if kind == "maxquad_literal":
            return MaxQuadProblem(np.asarray(spec["A"], dtype=float), np.asarray(spec["b"], dtype=float),
                                  np.asarray(spec["c"], dtype=float))
        if kind == "chain":
            return ChainMaxProblem(int(spec["k"]), int(spec["n"]), float(spec["mu"]), float(spec["L"]))
        if kind == "toy":
            return toy_problem(spec["name"], spec.get("i"), spec.get("M"))
    except (KeyError, TypeError) as e:
        raise FormatError(f"malformed instance: {e}") from e
    raise FormatError(f"unknown instance type {kind!r}")


def dumps(doc: dict) -> str:
    """Canonical text: sorted keys, fixed layout, so output is byte-reproducible."""
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_json(path: Union[str, Path], doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc))
    return path


def read_json(path: Union[str, Path]) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"cannot read {path}: {e}") from e
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: top level must be an object")
    return doc


def load_instance(src: Union[str, Path, dict]) -> FirstOrderOracle:
    """Instance from a file path, a JSON string, or an already parsed document."""
    if isinstance(src, dict):
        return build(src)
    s = str(src)
    if s.lstrip().startswith("{"):
        try:
            return build(json.loads(s))
        except json.JSONDecodeError as e:
            raise FormatError(f"inline instance is not JSON: {e}") from e
    return build(read_json(s))


def save_certificate(path, cert: WolfeCertificate) -> Path:
    return write_json(path, cert.to_json())


def load_certificate(path) -> WolfeCertificate:
    doc = read_json(path)
    try:
        cert = WolfeCertificate.from_json(doc)
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"malformed certificate: {e}") from e
    d = cert.center.size
    if any(c.z.size != d or c.g.size != d for c in cert.points):
        raise FormatError("certificate points do not match the center dimension")
    return cert
