"""Protocol v1 message encoding: line-delimited JSON, UTF-8.

Requests:
    {"v":1,"cmd":"hello"}
    {"cmd":"fit","model":"...","features":[[...]],"labels":[...]}
    {"cmd":"predict_proba","model_id":"m1","features":[[...]]}
    {"cmd":"free","model_id":"m1"}
    {"cmd":"estimate_ate","features":[[...]],"treatment":[...],"outcome":[...]}

Replies carry "ok": true plus payload, or {"ok":false,"error":"..."}.
Floats are serialized through json's repr path (17 significant digits,
shortest round-trip), which more than covers the 15-digit contract; finite
doubles survive encode -> decode bit-for-bit.
"""

import json
import math

import numpy as np

PROTOCOL_VERSION = 1


class BadMessage(ValueError):
    """Request line that cannot be parsed or fails field validation."""


def encode_message(message: dict) -> str:
    """One request or reply as a single newline-terminated line."""
    return json.dumps(message, allow_nan=False, separators=(",", ":")) + "\n"


def decode_line(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise BadMessage(f"malformed request: {exc}") from exc
    if not isinstance(msg, dict):
        raise BadMessage("request must be a JSON object")
    return msg


def matrix_field(msg: dict, key: str) -> np.ndarray:
    """A required, rectangular, all-finite 2-D float field."""
    raw = msg.get(key)
    if raw is None:
        raise BadMessage(f"missing field {key!r}")
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BadMessage(f"field {key!r} is not numeric: {exc}") from exc
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise BadMessage(f"field {key!r} must be a non-empty matrix")
    if not np.all(np.isfinite(arr)):
        raise BadMessage(f"field {key!r} contains non-finite values")
    return arr


def vector_field(msg: dict, key: str, rows: int | None = None) -> np.ndarray:
    raw = msg.get(key)
    if raw is None:
        raise BadMessage(f"missing field {key!r}")
    try:
        arr = np.asarray(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise BadMessage(f"field {key!r} is not numeric: {exc}") from exc
    if arr.ndim != 1 or arr.shape[0] == 0:
        raise BadMessage(f"field {key!r} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise BadMessage(f"field {key!r} contains non-finite values")
    if rows is not None and arr.shape[0] != rows:
        raise BadMessage(
            f"field {key!r} has {arr.shape[0]} entries for {rows} feature rows"
        )
    return arr


def binary_labels(arr: np.ndarray, key: str) -> np.ndarray:
    if not np.all((arr == 0.0) | (arr == 1.0)):
        raise BadMessage(f"field {key!r} must be 0/1")
    return arr


def floats_out(values) -> list:
    """Plain python floats for a reply payload; rejects non-finite values."""
    out = [float(v) for v in np.asarray(values, dtype=float).ravel()]
    for v in out:
        if not math.isfinite(v):
            raise BadMessage("reply payload contains non-finite values")
    return out
