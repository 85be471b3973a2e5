"""Wire format shared with the host engine.

Implemented from the protocol document alone; this package never imports
the engine. Every message is a 4-byte big-endian length prefix followed
by that many bytes of UTF-8 JSON. Pixels travel base64-encoded: images
and probabilities as row-major little-endian float32, labels as uint8.
"""

from __future__ import annotations

import base64
import json
import struct

import numpy as np

PROTOCOL_VERSION = 1


class FrameError(Exception):
    """The peer sent bytes that do not parse as a protocol frame."""


def read_frame(stream) -> dict | None:
    """Read one message; None on clean EOF at a frame boundary."""
    header = stream.read(4)
    if len(header) == 0:
        return None
    if len(header) < 4:
        raise FrameError("truncated length prefix")
    (length,) = struct.unpack(">I", header)
    body = stream.read(length)
    if len(body) < length:
        raise FrameError("truncated payload")
    try:
        payload = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameError(f"payload is not JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise FrameError("payload is not an object")
    return payload


def write_frame(stream, payload: dict) -> None:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    stream.write(struct.pack(">I", len(body)) + body)
    stream.flush()


def decode_f32(text: str, height: int, width: int) -> np.ndarray:
    raw = base64.b64decode(text)
    if len(raw) != height * width * 4:
        raise FrameError(f"expected {height * width * 4} image bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").reshape(height, width)


def decode_u8(text: str, height: int, width: int) -> np.ndarray:
    raw = base64.b64decode(text)
    if len(raw) != height * width:
        raise FrameError(f"expected {height * width} label bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width)


def encode_f32(array: np.ndarray) -> str:
    data = np.ascontiguousarray(array, dtype="<f4")
    return base64.b64encode(data.tobytes()).decode("ascii")
