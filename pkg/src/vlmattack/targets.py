"""Thin clients for black-box image-description targets.

Every target sits behind one chat-with-image call: submit (image file,
prompt), receive response text. Credentials come from environment
variables so they never land in config files; transient transport
failures retry with bounded exponential backoff, while content refusals
come back as ordinary text and are never retried.
"""

from __future__ import annotations

import base64
import json
import os
import time
import urllib.error
import urllib.request

from .errors import (
    ConfigError,
    TargetAuthError,
    TargetRateLimitError,
    TargetTransportError,
)


class StubTarget:
    """Scripted target for tests and dry runs.

    script: list of str responses or Exception instances, consumed in
    order; falls back to `default` once exhausted.
    """

    def __init__(self, target_id="stub", script=None, default="a photo of a dog"):
        self.target_id = target_id
        self.script = list(script or [])
        self.default = default
        self.calls = []

    def describe_image(self, image_path, prompt: str) -> str:
        self.calls.append((os.fspath(image_path), prompt))
        item = self.script.pop(0) if self.script else self.default
        if isinstance(item, Exception):
            raise item
        return str(item)


class HttpTarget:
    """Generic JSON-over-HTTP client: POST {prompt, image_b64} -> {text}.

    The bearer token is read from `credential_env` at call time; a missing
    variable is an auth error naming it.
    """

    def __init__(self, target_id, url, credential_env, timeout=60.0):
        if not url:
            raise ConfigError(f"target {target_id!r}: url is required")
        self.target_id = target_id
        self.url = url
        self.credential_env = credential_env
        self.timeout = float(timeout)

    def describe_image(self, image_path, prompt: str) -> str:
        token = os.environ.get(self.credential_env or "", "")
        if not token:
            raise TargetAuthError(
                f"target {self.target_id!r}: credential environment variable "
                f"{self.credential_env!r} is not set"
            )
        with open(image_path, "rb") as fh:
            payload = {
                "prompt": prompt,
                "image_b64": base64.b64encode(fh.read()).decode("ascii"),
            }
        req = urllib.request.Request(
            self.url,
            data=json.dumps(payload).encode("utf-8"),
            headers={
                "Content-Type": "application/json",
                "Authorization": f"Bearer {token}",
            },
        )
        try:
            with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                body = json.loads(resp.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            if exc.code in (401, 403):
                raise TargetAuthError(
                    f"target {self.target_id!r}: auth rejected ({exc.code})"
                ) from exc
            if exc.code == 429:
                raise TargetRateLimitError(
                    f"target {self.target_id!r}: rate limited"
                ) from exc
            raise TargetTransportError(
                f"target {self.target_id!r}: HTTP {exc.code}"
            ) from exc
        except OSError as exc:
            raise TargetTransportError(
                f"target {self.target_id!r}: transport failure: {exc}"
            ) from exc
        text = body.get("text")
        if not isinstance(text, str):
            raise TargetTransportError(
                f"target {self.target_id!r}: response lacks a 'text' field"
            )
        return text


def query_target(client, image_path, prompt, max_retries=3, backoff_base=0.5,
                 sleep=time.sleep):
    """Query with bounded backoff; returns (response_text, retries_used).

    Transport and rate-limit failures retry up to max_retries with
    exponential backoff; auth failures never retry. Content refusals are
    normal responses, handled downstream by rejection detection.
    """
    attempt = 0
    while True:
        try:
            return client.describe_image(image_path, prompt), attempt
        except (TargetTransportError, TargetRateLimitError):
            if attempt >= max_retries:
                raise
            sleep(backoff_base * (2 ** attempt))
            attempt += 1


class RateLimiter:
    """Enforces a minimum interval between calls to one target."""

    def __init__(self, min_interval=0.0, clock=time.monotonic, sleep=time.sleep):
        self.min_interval = float(min_interval)
        self._clock = clock
        self._sleep = sleep
        self._last = None

    def wait(self):
        if self.min_interval <= 0:
            return
        now = self._clock()
        if self._last is not None:
            remaining = self.min_interval - (now - self._last)
            if remaining > 0:
                self._sleep(remaining)
        self._last = self._clock()


def build_target(spec: dict):
    """Instantiate a target client from a declarative config entry."""
    kind = spec.get("type")
    target_id = spec.get("id")
    if not target_id:
        raise ConfigError("target entry is missing an id")
    if kind == "stub":
        return StubTarget(
            target_id=target_id,
            script=spec.get("script"),
            default=spec.get("default", "a photo of a dog"),
        )
    if kind == "http":
        return HttpTarget(
            target_id=target_id,
            url=spec.get("url"),
            credential_env=spec.get("credential_env"),
            timeout=spec.get("timeout", 60.0),
        )
    raise ConfigError(f"target {target_id!r}: unknown type {kind!r}, expected stub|http")
