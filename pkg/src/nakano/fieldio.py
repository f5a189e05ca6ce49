"""Sampled-field files.

A file is one line of UTF-8 JSON (the header) terminated by ``\\n``,
followed by the raw payload of little-endian float64 values::

    {"kind": "matrix", "n": 2, "r": 2, "mins": [...], "maxs": [...],
     "points": [...], "dtype": "f64",
     "order": "row-major, last axis fastest, matrix entries row-major innermost"}

``kind`` is one of ``scalar``, ``section``, ``matrix``, ``oneform``.  For
one-forms the component index is the outermost axis.  Readers check the
payload length exactly.
"""
import json

import numpy as np

from .errors import FieldFileError
from .fields import GridSpec, MatrixField, OneForm, ScalarField, SectionField

ORDER = "row-major, last axis fastest, matrix entries row-major innermost"
_KINDS = {ScalarField: "scalar", SectionField: "section", MatrixField: "matrix", OneForm: "oneform"}


def _payload_shape(kind, grid, r):
    if kind == "scalar":
        return grid.shape
    if kind == "section":
        return grid.shape + (r,)
    if kind == "matrix":
        return grid.shape + (r, r)
    if kind == "oneform":
        return (grid.n,) + grid.shape + (r,)
    raise FieldFileError(f"unknown field kind {kind!r}")


def header_for(field) -> dict:
    kind = _KINDS.get(type(field))
    if kind is None:
        raise FieldFileError(f"cannot serialize {type(field).__name__}")
    grid = field.grid
    return {
        "kind": kind,
        "n": grid.n,
        "r": 1 if kind == "scalar" else field.r,
        "mins": list(grid.mins),
        "maxs": list(grid.maxs),
        "points": list(grid.points),
        "dtype": "f64",
        "order": ORDER,
    }


def dumps(field) -> bytes:
    header = header_for(field)
    data = field.components if header["kind"] == "oneform" else field.values
    payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    return json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def loads(blob: bytes):
    head, sep, payload = blob.partition(b"\n")
    if not sep:
        raise FieldFileError("missing header terminator")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FieldFileError(f"bad header: {exc}") from exc
    for key in ("kind", "n", "r", "mins", "maxs", "points", "dtype"):
        if key not in header:
            raise FieldFileError(f"header lacks {key!r}")
    if header["dtype"] != "f64":
        raise FieldFileError(f"unsupported dtype {header['dtype']!r}")
    grid = GridSpec(header["mins"], header["maxs"], header["points"])
    if grid.n != header["n"]:
        raise FieldFileError("header n disagrees with the grid")
    shape = _payload_shape(header["kind"], grid, int(header["r"]))
    expected = 8 * int(np.prod(shape))
    if len(payload) != expected:
        raise FieldFileError(f"payload has {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(float)
    if not np.all(np.isfinite(data)):
        raise FieldFileError("payload contains non-finite values")
    cls = {"scalar": ScalarField, "section": SectionField, "matrix": MatrixField, "oneform": OneForm}
    return cls[header["kind"]](grid, data)


def write_field(path, field):
    with open(path, "wb") as fh:
        fh.write(dumps(field))


def read_field(path):
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except OSError as exc:
        raise FieldFileError(f"cannot read {path}: {exc}") from exc
