"""Host side of the external-backend wire protocol (version 1).

Transport: the child's stdin/stdout.  Every message is a 4-byte
big-endian unsigned length prefix followed by a UTF-8 JSON payload.
Pixel data rides as base64: images and probabilities are row-major
little-endian f32, labels are row-major u8.  See docs/bridge-protocol.md
for the byte-exact contract.
"""

from __future__ import annotations

import base64
import json
import select
import shlex
import struct
import subprocess
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ProbMask, Slice, SupportEntry
from .errors import IcsError

PROTOCOL_VERSION = 1


class SpawnFailure(IcsError):
    pass


class HandshakeTimeout(IcsError):
    pass


class VersionMismatch(IcsError):
    pass


class ChildCrashed(IcsError):
    pass


class MalformedResponse(IcsError):
    pass


class OutOfRangeProbability(IcsError):
    pass


class Timeout(IcsError):
    pass


class RemoteError(IcsError):
    """The child replied with an error payload for this request."""


@dataclass
class BridgeHandshake:
    protocol_version: int
    backend_name: str
    required_width: int
    required_height: int
    max_support: int


def encode_f32(a: np.ndarray) -> str:
    return base64.b64encode(np.asarray(a, dtype="<f4").tobytes()).decode("ascii")


def decode_f32(payload: str, count: int) -> np.ndarray:
    raw = base64.b64decode(payload, validate=True)
    if len(raw) != 4 * count:
        raise MalformedResponse(f"expected {4 * count} f32 payload bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype="<f4").astype(np.float64)


def encode_u8(a: np.ndarray) -> str:
    return base64.b64encode(np.asarray(a, dtype=np.uint8).tobytes()).decode("ascii")


def pack_message(payload: dict) -> bytes:
    body = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def _read_exact(stream, n: int, deadline: float, crashed_msg: str) -> bytes:
    fd = stream.fileno()
    buf = b""
    while len(buf) < n:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise Timeout("timed out waiting for child response")
        ready, _, _ = select.select([fd], [], [], min(remaining, 0.5))
        if not ready:
            continue
        chunk = stream.read1(n - len(buf)) if hasattr(stream, "read1") else stream.read(n - len(buf))
        if not chunk:
            raise ChildCrashed(crashed_msg)
        buf += chunk
    return buf


def read_message(stream, timeout_s: float, crashed_msg: str = "child closed its stdout") -> dict:
    deadline = time.monotonic() + timeout_s
    header = _read_exact(stream, 4, deadline, crashed_msg)
    (length,) = struct.unpack(">I", header)
    body = _read_exact(stream, length, deadline, crashed_msg)
    try:
        msg = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedResponse(f"undecodable payload: {exc}") from exc
    if not isinstance(msg, dict) or "kind" not in msg:
        raise MalformedResponse("payload is not an object with a 'kind' field")
    return msg


class BridgeBackend:
    """SegmenterBackend implemented by a child process speaking protocol v1."""

    def __init__(self, proc: subprocess.Popen, handshake: BridgeHandshake, request_timeout_s: float):
        self._proc = proc
        self.handshake = handshake
        self.id = f"bridge:{handshake.backend_name}"
        if handshake.required_width == 0 and handshake.required_height == 0:
            self.required_size = None
        else:
            self.required_size = (handshake.required_width, handshake.required_height)
        self.max_support = handshake.max_support
        self._timeout = request_timeout_s

    def segment(self, query: Slice, support: Sequence[SupportEntry]) -> ProbMask:
        h, w = query.data.shape
        request = {
            "kind": "segment_request",
            "width": w,
            "height": h,
            "query": encode_f32(query.data),
            "support": [
                {"image": encode_f32(e.image.data), "label": encode_u8(e.label.data)}
                for e in support
            ],
        }
        if self._proc.poll() is not None:
            raise ChildCrashed(f"child exited with code {self._proc.returncode}")
        try:
            self._proc.stdin.write(pack_message(request))
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ChildCrashed(f"child pipe broken: {exc}") from exc
        msg = read_message(self._proc.stdout, self._timeout)
        if msg["kind"] == "error":
            raise RemoteError(str(msg.get("message", "")))
        if msg["kind"] != "segment_response" or "prob" not in msg:
            raise MalformedResponse(f"unexpected payload kind {msg['kind']!r}")
        try:
            values = decode_f32(msg["prob"], w * h)
        except (ValueError, TypeError) as exc:
            raise MalformedResponse(f"bad prob payload: {exc}") from exc
        if np.isnan(values).any() or values.min() < 0.0 or values.max() > 1.0:
            raise OutOfRangeProbability("probabilities outside [0, 1]")
        return ProbMask(values.reshape(h, w))

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def bridge_spawn(
    command: str | Sequence[str],
    handshake_timeout_s: float = 30.0,
    request_timeout_s: float = 120.0,
) -> BridgeBackend:
    """Start a child backend and perform the hello exchange."""
    argv = shlex.split(command) if isinstance(command, str) else list(command)
    try:
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
        )
    except OSError as exc:
        raise SpawnFailure(f"cannot start {argv!r}: {exc}") from exc
    try:
        proc.stdin.write(pack_message({"kind": "hello", "protocol_version": PROTOCOL_VERSION}))
        proc.stdin.flush()
    except (BrokenPipeError, OSError) as exc:
        proc.kill()
        raise SpawnFailure(f"child rejected stdin: {exc}") from exc
    try:
        msg = read_message(proc.stdout, handshake_timeout_s, crashed_msg="child exited before hello")
    except Timeout as exc:
        proc.kill()
        raise HandshakeTimeout(str(exc)) from exc
    except (ChildCrashed, MalformedResponse) as exc:
        proc.kill()
        raise SpawnFailure(str(exc)) from exc
    if msg.get("kind") != "hello":
        proc.kill()
        raise SpawnFailure(f"expected hello, got {msg.get('kind')!r}")
    version = msg.get("protocol_version")
    if version != PROTOCOL_VERSION:
        proc.kill()
        raise VersionMismatch(f"child speaks protocol {version}, host speaks {PROTOCOL_VERSION}")
    hs = BridgeHandshake(
        protocol_version=version,
        backend_name=str(msg.get("backend_name", "unknown")),
        required_width=int(msg.get("required_width", 0)),
        required_height=int(msg.get("required_height", 0)),
        max_support=int(msg.get("max_support", 0)),
    )
    if (hs.required_width == 0) != (hs.required_height == 0) or hs.required_width < 0:
        proc.kill()
        raise SpawnFailure("handshake sizes must both be >= 1 or both 0 for native")
    return BridgeBackend(proc, hs, request_timeout_s)
