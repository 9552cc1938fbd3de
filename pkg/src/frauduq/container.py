"""Deterministic JSON containers for models, tables, and reports.

Arrays are stored as base64 of little-endian row-major float64 (or int64)
bytes, so a save/load round trip is bitwise lossless and serializing the
same object twice produces identical bytes.
"""

import base64
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import FormatError

_DTYPES = {"float64": "<f8", "int64": "<i8"}


def encode_array(a: np.ndarray) -> dict:
    """Encode an array as a JSON-safe dict (shape, dtype, base64 payload)."""
    if a.dtype == np.float64:
        name = "float64"
    elif np.issubdtype(a.dtype, np.integer):
        name = "int64"
        a = a.astype(np.int64)
    else:
        raise TypeError(f"unsupported dtype {a.dtype}")
    payload = np.ascontiguousarray(a).astype(_DTYPES[name]).tobytes(order="C")
    return {
        "shape": list(a.shape),
        "dtype": name,
        "data": base64.b64encode(payload).decode("ascii"),
    }


def decode_array(d: dict, context: str = "array") -> np.ndarray:
    """Inverse of :func:`encode_array`; raises FormatError on any mismatch."""
    try:
        shape = tuple(int(s) for s in d["shape"])
        dtype = _DTYPES[d["dtype"]]
        raw = base64.b64decode(d["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{context}: malformed array record ({exc})") from exc
    expected = int(np.prod(shape)) * 8 if shape else 8
    if len(raw) != expected:
        raise FormatError(
            f"{context}: payload holds {len(raw)} bytes but shape {shape} needs {expected}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(shape).copy()


def dumps_canonical(obj) -> str:
    """Serialize to JSON with a stable key order and layout."""
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def write_json(obj, path) -> None:
    Path(path).write_text(dumps_canonical(obj), encoding="utf-8")


def read_json(path) -> dict:
    """Parse a JSON file; FormatError carries the byte offset on parse failure."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not valid UTF-8 at byte {exc.start}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise FormatError(f"{path}: expected a JSON object at top level")
    return obj


def expect_format(obj: dict, fmt: str, version: int, path) -> None:
    """Check the container's self-description before trusting its contents."""
    if obj.get("format") != fmt:
        raise FormatError(f"{path}: format tag {obj.get('format')!r}, expected {fmt!r}")
    if obj.get("version") != version:
        raise FormatError(f"{path}: unsupported version {obj.get('version')!r}")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
