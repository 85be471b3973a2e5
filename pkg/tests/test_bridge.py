import shlex
import sys
from pathlib import Path

import numpy as np
import pytest

from ics.bridge import (
    ChildCrashed,
    HandshakeTimeout,
    MalformedResponse,
    OutOfRangeProbability,
    RemoteError,
    SpawnFailure,
    Timeout,
    VersionMismatch,
    bridge_spawn,
)
from ics.cascade import InitialSupportSpec, run_baseline
from ics.core import CascadeConfig
from ics.harness import PhantomConfig, gen_phantom

from conftest import make_entry, make_mask, make_slice

STUB = Path(__file__).parent / "stubs" / "stub_backend.py"


def stub_cmd(mode, width=0, height=0):
    return f"{shlex.quote(sys.executable)} {shlex.quote(str(STUB))} --mode {mode} --width {width} --height {height}"


def spawn(mode, **kwargs):
    return bridge_spawn(stub_cmd(mode, kwargs.pop("width", 0), kwargs.pop("height", 0)), **kwargs)


def one_entry(rng, h, w):
    return make_entry(make_slice(rng.random((h, w))), make_mask(rng.integers(0, 2, (h, w))))


class TestHandshake:
    def test_hello_exchange(self):
        with spawn("half", width=128, height=128) as backend:
            assert backend.required_size == (128, 128)
            assert backend.handshake.backend_name == "stub-half"

    def test_native_size(self):
        with spawn("echo") as backend:
            assert backend.required_size is None

    def test_version_mismatch(self):
        with pytest.raises(VersionMismatch):
            spawn("bad-version")

    def test_exit_before_hello(self):
        with pytest.raises((SpawnFailure, HandshakeTimeout)):
            spawn("exit-early", handshake_timeout_s=5)

    def test_handshake_timeout(self):
        with pytest.raises(HandshakeTimeout):
            spawn("no-hello", handshake_timeout_s=0.5)

    def test_missing_executable(self):
        with pytest.raises(SpawnFailure):
            bridge_spawn("/nonexistent/binary-xyz")


class TestSegment:
    def test_half_loopback(self, rng):
        with spawn("half") as backend:
            prob = backend.segment(make_slice(rng.random((6, 6))), [one_entry(rng, 6, 6)])
            assert np.all(prob.data == 0.5)

    def test_echo_round_trip_bit_exact(self, rng):
        with spawn("echo") as backend:
            for _ in range(10):
                data = rng.random((5, 7), dtype=np.float32).astype(np.float64)
                prob = backend.segment(make_slice(data), [one_entry(rng, 5, 7)])
                assert np.array_equal(prob.data, data)

    def test_wrong_length_rejected(self, rng):
        with spawn("wrong-length") as backend:
            with pytest.raises(MalformedResponse):
                backend.segment(make_slice(rng.random((4, 4))), [one_entry(rng, 4, 4)])

    def test_out_of_range_rejected(self, rng):
        with spawn("out-of-range") as backend:
            with pytest.raises(OutOfRangeProbability):
                backend.segment(make_slice(rng.random((4, 4))), [one_entry(rng, 4, 4)])

    def test_error_reply_surfaces(self, rng):
        with spawn("error-reply") as backend:
            with pytest.raises(RemoteError, match="stub always fails"):
                backend.segment(make_slice(rng.random((4, 4))), [one_entry(rng, 4, 4)])

    def test_request_timeout(self, rng):
        with spawn("slow", request_timeout_s=0.5) as backend:
            with pytest.raises(Timeout):
                backend.segment(make_slice(rng.random((4, 4))), [one_entry(rng, 4, 4)])

    def test_crashed_child_detected(self, rng):
        backend = spawn("echo")
        backend._proc.kill()
        backend._proc.wait()
        with pytest.raises(ChildCrashed):
            backend.segment(make_slice(rng.random((4, 4))), [one_entry(rng, 4, 4)])

    def test_requests_are_ordered(self, rng):
        # the echo stub answers in order, so replies must match their query
        with spawn("echo") as backend:
            queries = [rng.random((3, 3), dtype=np.float32).astype(np.float64) for _ in range(5)]
            for q in queries:
                prob = backend.segment(make_slice(q), [one_entry(rng, 3, 3)])
                assert np.array_equal(prob.data, q)


class TestEngineIntegration:
    def test_baseline_through_bridge(self):
        bundle = gen_phantom(PhantomConfig(n_slices=3, width=12, height=12, radius=3.0, center=(6.0, 6.0)))
        spec = InitialSupportSpec(indices=(2,), bundle=bundle)
        cfg = CascadeConfig(capacity=1, augment=False, backend_id="bridge")
        with spawn("half", width=8, height=8) as backend:
            result = run_baseline(bundle, spec, backend, cfg)
        # all-0.5 probabilities threshold (>=) to all-ones at native size
        assert set(result.masks) == {1, 3}
        assert all(m.data.shape == (12, 12) for m in result.masks.values())
        assert all(m.data.all() for m in result.masks.values())
