from __future__ import annotations

import threading
import time

import pytest

from graphsft.backend import (
    BackendProfile,
    Completion,
    PromptRequest,
    complete,
    complete_batch,
)
from graphsft.errors import AuthError, MalformedResponse, RateLimited


def req(text: str = "say hi", **kwargs) -> PromptRequest:
    return PromptRequest(system_text="sys", user_text=text, **kwargs)


class TestPromptRequest:
    def test_rejects_empty_user_text(self):
        with pytest.raises(ValueError):
            PromptRequest(system_text="s", user_text="")

    def test_rejects_bad_max_tokens(self):
        with pytest.raises(ValueError):
            PromptRequest(system_text="s", user_text="u", max_output_tokens=0)

    def test_rejects_out_of_range_temperature(self):
        with pytest.raises(ValueError):
            PromptRequest(system_text="s", user_text="u", temperature=1.5)


class TestMock:
    def test_deterministic_for_fixed_seed(self):
        profile = BackendProfile(kind="mock", seed=7)
        first = complete(profile, req())
        second = complete(profile, req())
        assert first.text == second.text

    def test_different_seeds_differ(self):
        a = complete(BackendProfile(kind="mock", seed=7), req("A"))
        b = complete(BackendProfile(kind="mock", seed=8), req("A"))
        assert a.text != b.text

    def test_length_tracks_max_output_tokens(self):
        profile = BackendProfile(kind="mock", seed=1)
        short = complete(profile, req(max_output_tokens=4))
        assert len(short.text.split()) == 4

    def test_canned_overlay_wins(self):
        profile = BackendProfile(
            kind="mock", seed=1, canned=(("magic", "canned reply"),)
        )
        assert complete(profile, req("the magic words")).text == "canned reply"
        assert complete(profile, req("ordinary")).text != "canned reply"

    def test_responder_exceptions_propagate(self):
        def boom(_request):
            raise MalformedResponse("sentinel")

        profile = BackendProfile(kind="mock", seed=1, responder=boom)
        with pytest.raises(MalformedResponse):
            complete(profile, req())


class TestBatch:
    def test_positional_alignment(self, mock_profile):
        requests = [req(f"prompt {i}") for i in range(3)]
        results = complete_batch(mock_profile, requests)
        assert len(results) == 3
        singles = [complete(mock_profile, r) for r in requests]
        assert [r.text for r in results] == [s.text for s in singles]

    def test_item_failure_embedded(self):
        def maybe_boom(request):
            if "FAIL" in request.user_text:
                raise MalformedResponse("sentinel failure")
            return "ok"

        profile = BackendProfile(kind="mock", seed=1, responder=maybe_boom)
        results = complete_batch(profile, [req("a"), req("FAIL"), req("c")])
        assert isinstance(results[0], Completion)
        assert isinstance(results[1], MalformedResponse)
        assert isinstance(results[2], Completion)

    def test_serial_when_max_concurrent_is_one(self):
        order = []

        def record(request):
            order.append(request.user_text)
            return "ok"

        profile = BackendProfile(
            kind="mock", seed=1, max_concurrent=1, responder=record
        )
        complete_batch(profile, [req(f"p{i}") for i in range(5)])
        assert order == [f"p{i}" for i in range(5)]

    def test_concurrency_bound_respected(self):
        in_flight = 0
        peak = 0
        lock = threading.Lock()

        def slow(request):
            nonlocal in_flight, peak
            with lock:
                in_flight += 1
                peak = max(peak, in_flight)
            time.sleep(0.01)
            with lock:
                in_flight -= 1
            return "ok"

        profile = BackendProfile(
            kind="mock", seed=1, max_concurrent=3, responder=slow
        )
        complete_batch(profile, [req(f"p{i}") for i in range(12)])
        assert peak <= 3

    def test_empty_batch_rejected(self, mock_profile):
        with pytest.raises(ValueError):
            complete_batch(mock_profile, [])


class FakeResponse:
    def __init__(self, status_code: int, payload=None):
        self.status_code = status_code
        self._payload = payload

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


def remote_profile(**kwargs) -> BackendProfile:
    defaults = dict(
        kind="remote", endpoint_url="http://example.invalid/v1/chat", max_retries=2
    )
    defaults.update(kwargs)
    return BackendProfile(**defaults)


class TestRemote:
    def test_auth_error_before_any_network_call(self, monkeypatch):
        monkeypatch.delenv("LLM_API_KEY", raising=False)

        def no_call(*args, **kwargs):
            raise AssertionError("network must not be touched")

        monkeypatch.setattr("graphsft.backend.requests.post", no_call)
        with pytest.raises(AuthError):
            complete(remote_profile(), req())

    def test_retries_then_succeeds(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        monkeypatch.setattr("graphsft.backend.time.sleep", lambda _s: None)
        calls = []
        payload = {
            "choices": [{"message": {"content": "done"}}],
            "usage": {"prompt_tokens": 5, "completion_tokens": 1},
        }

        def post(*args, **kwargs):
            calls.append(1)
            if len(calls) < 3:
                return FakeResponse(429)
            return FakeResponse(200, payload)

        monkeypatch.setattr("graphsft.backend.requests.post", post)
        result = complete(remote_profile(), req())
        assert result.text == "done"
        assert len(calls) == 3

    def test_rate_limited_after_exhaustion(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        monkeypatch.setattr("graphsft.backend.time.sleep", lambda _s: None)
        monkeypatch.setattr(
            "graphsft.backend.requests.post",
            lambda *a, **k: FakeResponse(503),
        )
        with pytest.raises(RateLimited):
            complete(remote_profile(max_retries=1), req())

    def test_malformed_payload(self, monkeypatch):
        monkeypatch.setenv("LLM_API_KEY", "k")
        monkeypatch.setattr(
            "graphsft.backend.requests.post",
            lambda *a, **k: FakeResponse(200, {"unexpected": True}),
        )
        with pytest.raises(MalformedResponse):
            complete(remote_profile(), req())
