"""Single-threaded request loop: read a request, run the model, reply.

Per-request failures are answered with an error message and the loop
continues; only a broken pipe or an unparsable frame ends the process.
"""

from __future__ import annotations

import numpy as np

from .protocol import (
    PROTOCOL_VERSION,
    FrameError,
    decode_f32,
    decode_u8,
    encode_f32,
    read_frame,
    write_frame,
)

INPUT_WIDTH = 128
INPUT_HEIGHT = 128
BACKEND_NAME = "universeg"


class RequestError(Exception):
    """A single request cannot be served; reported to the host in-band."""


def _handle(msg: dict, runner) -> dict:
    if msg.get("kind") != "segment_request":
        raise RequestError(f"unexpected message kind {msg.get('kind')!r}")
    width, height = msg.get("width"), msg.get("height")
    if (width, height) != (INPUT_WIDTH, INPUT_HEIGHT):
        raise RequestError(f"expected {INPUT_WIDTH}x{INPUT_HEIGHT} input, got {width}x{height}")
    support = msg.get("support") or []
    if not support:
        raise RequestError("empty support")
    try:
        query = decode_f32(msg["query"], height, width)
        images = [decode_f32(s["image"], height, width) for s in support]
        labels = [decode_u8(s["label"], height, width) for s in support]
    except (KeyError, TypeError, FrameError) as exc:
        raise RequestError(f"bad request payload: {exc}") from exc

    prob = np.asarray(runner(query, images, labels), dtype=np.float32)
    if prob.shape != (height, width):
        raise RequestError(f"model produced shape {prob.shape}")
    if not np.isfinite(prob).all():
        raise RequestError("model produced non-finite probabilities")
    prob = np.clip(prob, 0.0, 1.0)
    return {"kind": "segment_response", "prob": encode_f32(prob)}


def serve(stdin, stdout, runner, max_support: int = 0) -> None:
    """Handshake on *stdin*/*stdout*, then answer requests with *runner*.

    *runner* maps (query, support images, support labels) — float32
    arrays in [0, 1] and uint8 masks, all 128x128 — to a probability
    array of the same shape. Returns when the host closes the pipe.
    """
    hello = read_frame(stdin)
    if hello is None or hello.get("kind") != "hello":
        raise FrameError("host did not open with hello")
    write_frame(
        stdout,
        {
            "kind": "hello",
            "protocol_version": PROTOCOL_VERSION,
            "backend_name": BACKEND_NAME,
            "required_width": INPUT_WIDTH,
            "required_height": INPUT_HEIGHT,
            "max_support": max_support,
        },
    )
    while True:
        msg = read_frame(stdin)
        if msg is None:
            return
        try:
            reply = _handle(msg, runner)
        except RequestError as exc:
            reply = {"kind": "error", "message": str(exc)}
        write_frame(stdout, reply)
