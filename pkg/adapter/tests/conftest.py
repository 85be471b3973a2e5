import base64
import io

import numpy as np
import pytest

from universeg_bridge.protocol import read_frame, write_frame

W = H = 128


def b64_f32(array):
    return base64.b64encode(np.ascontiguousarray(array, dtype="<f4").tobytes()).decode()


def b64_u8(array):
    return base64.b64encode(np.ascontiguousarray(array, dtype=np.uint8).tobytes()).decode()


def segment_request(query, images, labels, width=W, height=H):
    return {
        "kind": "segment_request",
        "width": width,
        "height": height,
        "query": b64_f32(query),
        "support": [
            {"image": b64_f32(i), "label": b64_u8(l)} for i, l in zip(images, labels)
        ],
    }


def host_session(messages, runner, max_support=0):
    """Feed framed *messages* (hello first) to serve(); return the replies."""
    from universeg_bridge.server import serve

    stdin = io.BytesIO()
    for msg in messages:
        write_frame(stdin, msg)
    stdin.seek(0)
    stdout = io.BytesIO()
    serve(stdin, stdout, runner, max_support=max_support)
    stdout.seek(0)
    replies = []
    while (frame := read_frame(stdout)) is not None:
        replies.append(frame)
    return replies


def label_mean_runner(query, images, labels):
    return np.mean([l.astype(np.float32) for l in labels], axis=0)


def echo_runner(query, images, labels):
    return query


@pytest.fixture
def rng():
    return np.random.default_rng(42)
