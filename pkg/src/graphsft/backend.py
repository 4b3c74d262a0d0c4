"""Uniform interface to text-completion providers.

Two backend kinds share one call surface:

* ``remote`` -- an HTTP chat-completions endpoint (POST, ``messages`` =
  [system, user]) with retry/backoff on 429/5xx/timeouts and a concurrency
  limiter.
* ``mock``   -- a deterministic offline stand-in. By default it emits a
  word-salad derived by hashing (seed, prompt); tests can attach canned
  replies or a responder callable for structured tasks.

Every other module talks to a backend only through :func:`complete` /
:func:`complete_batch`, so the whole pipeline is testable without network
access.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import requests

from .errors import AuthError, MalformedResponse, RateLimited

logger = logging.getLogger(__name__)

API_KEY_ENV = "LLM_API_KEY"

# fixed vocabulary for the mock word-salad; order matters for determinism
_SALAD_VOCAB = (
    "amber", "basin", "cedar", "delta", "ember", "fjord", "gully", "haven",
    "islet", "jetty", "knoll", "ledge", "marsh", "notch", "oxbow", "perch",
    "quarry", "ridge", "shoal", "tarn", "upland", "vale", "weir", "yonder",
    "zenith", "bluff", "cairn", "dune", "eddy", "glade", "heath", "inlet",
)


@dataclass(frozen=True)
class PromptRequest:
    """One completion request; ``tag`` is a caller-supplied provenance label."""

    system_text: str
    user_text: str
    temperature: float = 0.0
    max_output_tokens: int = 1024
    tag: str = ""

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be nonempty")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError("temperature must be in [0, 1]")


@dataclass(frozen=True)
class Completion:
    text: str
    prompt_tokens: int
    output_tokens: int
    backend_id: str


@dataclass(frozen=True)
class BackendProfile:
    """Configuration for one backend.

    ``canned`` and ``responder`` apply to mock profiles only: ``canned`` maps
    a user-text substring to a fixed reply, ``responder`` is a callable
    receiving the PromptRequest (it may raise to simulate failures). Both are
    test/fixture hooks and are never read from config files.
    """

    kind: str = "mock"  # "remote" | "mock"
    endpoint_url: str = ""
    model_name: str = "mock"
    max_concurrent: int = 4
    max_retries: int = 3
    seed: int = 0
    timeout: float = 60.0
    canned: tuple[tuple[str, str], ...] = ()
    responder: Optional[Callable[[PromptRequest], str]] = field(
        default=None, compare=False
    )

    def __post_init__(self) -> None:
        if self.kind not in ("remote", "mock"):
            raise ValueError(f"unknown backend kind: {self.kind!r}")
        if self.max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.kind == "remote" and not self.endpoint_url:
            raise ValueError("remote profile requires endpoint_url")


def _approx_tokens(text: str) -> int:
    return len(text.split())


def mock_override(profile: BackendProfile, request: PromptRequest) -> Optional[str]:
    """Return the canned/responder reply for a mock request, if any.

    Modules with rule-based mock behaviour (extraction, judging, ...) call
    this first: a hit is parsed exactly like a remote reply, a miss falls
    through to the module's deterministic rule.
    """
    if profile.kind != "mock":
        return None
    if profile.responder is not None:
        return profile.responder(request)
    for needle, reply in profile.canned:
        if needle in request.user_text:
            return reply
    return None


def _salad(seed: int, system_text: str, user_text: str, n_tokens: int) -> str:
    digest = hashlib.sha256(
        f"{seed}|{system_text}|{user_text}".encode("utf-8")
    ).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    count = max(1, min(n_tokens, 48))
    return " ".join(rng.choice(_SALAD_VOCAB) for _ in range(count))


def _mock_complete(profile: BackendProfile, request: PromptRequest) -> Completion:
    text = mock_override(profile, request)
    if text is None:
        text = _salad(
            profile.seed, request.system_text, request.user_text,
            request.max_output_tokens,
        )
    return Completion(
        text=text,
        prompt_tokens=_approx_tokens(request.system_text)
        + _approx_tokens(request.user_text),
        output_tokens=_approx_tokens(text),
        backend_id=f"mock-{profile.seed}",
    )


def _backoff_sleep(attempt: int, rng: random.Random) -> None:
    time.sleep((2 ** attempt) * (1.0 + 0.25 * rng.random()))


def _remote_complete(profile: BackendProfile, request: PromptRequest) -> Completion:
    api_key = os.environ.get(API_KEY_ENV)
    if not api_key:
        raise AuthError(f"environment variable {API_KEY_ENV} is not set")

    payload = {
        "model": profile.model_name,
        "messages": [
            {"role": "system", "content": request.system_text},
            {"role": "user", "content": request.user_text},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_output_tokens,
    }
    headers = {"Authorization": f"Bearer {api_key}"}
    rng = random.Random()

    last_error = "no attempt made"
    for attempt in range(profile.max_retries + 1):
        try:
            resp = requests.post(
                profile.endpoint_url, json=payload, headers=headers,
                timeout=profile.timeout,
            )
        except requests.Timeout:
            last_error = "timeout"
            if attempt < profile.max_retries:
                _backoff_sleep(attempt, rng)
            continue
        if resp.status_code in (401, 403):
            raise AuthError(f"credential rejected (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            last_error = f"HTTP {resp.status_code}"
            if attempt < profile.max_retries:
                _backoff_sleep(attempt, rng)
            continue
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unparsable provider payload: {exc}") from exc
        if text is None:
            raise MalformedResponse("provider returned null content")
        return Completion(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            backend_id=profile.model_name,
        )
    raise RateLimited(
        f"retries exhausted after {profile.max_retries + 1} attempts ({last_error})"
    )


def complete(profile: BackendProfile, request: PromptRequest) -> Completion:
    """Run one completion. Mock is a pure function of (seed, prompts)."""
    if profile.kind == "mock":
        return _mock_complete(profile, request)
    return _remote_complete(profile, request)


def complete_batch(
    profile: BackendProfile, requests_: Sequence[PromptRequest]
) -> list[Union[Completion, BaseException]]:
    """Run a batch with at most ``max_concurrent`` requests in flight.

    Results are positionally aligned with the inputs; a per-item failure is
    embedded in its slot instead of aborting the batch.
    """
    if not requests_:
        raise ValueError("request list must be nonempty")

    results: list[Union[Completion, BaseException]] = [None] * len(requests_)  # type: ignore[list-item]

    def run_one(index: int, req: PromptRequest) -> None:
        try:
            results[index] = complete(profile, req)
        except Exception as exc:  # noqa: BLE001 - embedded per contract
            results[index] = exc

    with ThreadPoolExecutor(max_workers=profile.max_concurrent) as pool:
        futures = [
            pool.submit(run_one, i, req) for i, req in enumerate(requests_)
        ]
        for fut in futures:
            fut.result()
    return results
