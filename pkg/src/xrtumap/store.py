"""JSON model bundles with array payloads.

Arrays are stored little-endian, row-major, either inline as base64 strings
or in a binary sidecar next to the JSON file (``model.json`` ->
``model.bin``) with offsets recorded in the JSON.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from .errors import DataError

FORMAT_VERSION = 1


def _le(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    return arr.astype(arr.dtype.newbyteorder("<"), copy=False)


def encode_array(arr) -> dict:
    arr = _le(np.asarray(arr))
    return {
        "dtype": arr.dtype.str,
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(entry: dict) -> np.ndarray:
    raw = base64.b64decode(entry["data"])
    return np.frombuffer(raw, dtype=entry["dtype"]).reshape(entry["shape"]).copy()


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".bin")


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def save_bundle(path, kind: str, meta: dict, arrays: dict, sidecar: bool = False) -> None:
    doc = {"format": FORMAT_VERSION, "kind": kind, "meta": meta}
    if not sidecar:
        doc["arrays"] = {name: encode_array(a) for name, a in arrays.items()}
        dump_json(doc, path)
        return
    index = {}
    offset = 0
    with open(sidecar_path(path), "wb") as fh:
        for name, a in arrays.items():
            a = _le(np.asarray(a))
            buf = a.tobytes()
            index[name] = {
                "dtype": a.dtype.str,
                "shape": list(a.shape),
                "offset": offset,
                "nbytes": len(buf),
            }
            fh.write(buf)
            offset += len(buf)
    doc["sidecar"] = sidecar_path(path).name
    doc["arrays"] = index
    dump_json(doc, path)


def load_bundle(path, kind: str | None = None) -> tuple[dict, dict]:
    """Return ``(meta, arrays)``; ``kind`` if given must match the file."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: cannot read model bundle: {exc}") from exc
    if kind is not None and doc.get("kind") != kind:
        raise DataError(f"{path}: expected a {kind!r} bundle, found {doc.get('kind')!r}")
    arrays = {}
    if "sidecar" in doc:
        raw = (path.parent / doc["sidecar"]).read_bytes()
        for name, e in doc["arrays"].items():
            chunk = raw[e["offset"] : e["offset"] + e["nbytes"]]
            if len(chunk) != e["nbytes"]:
                raise DataError(f"{path}: sidecar truncated in array {name!r}")
            arrays[name] = np.frombuffer(chunk, dtype=e["dtype"]).reshape(e["shape"]).copy()
    else:
        arrays = {name: decode_array(e) for name, e in doc["arrays"].items()}
    return doc["meta"], arrays


def bundle_kind(path) -> str:
    try:
        return json.loads(Path(path).read_text())["kind"]
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: not a model bundle") from exc
