"""JSON-over-HTTP backend gateway with record/replay fixtures.

Every request is canonicalized (sorted keys, compact separators, default
float repr) and hashed; fixtures are JSONL records keyed by that digest, so
replay mode answers byte-for-byte deterministically and entirely offline.
Recorded wall-clock latency can be fed back into the caller's simulated
clock on replay.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from numbers import Real
from pathlib import Path
from typing import Callable

import requests

__all__ = [
    "BackendEndpoint",
    "BackendUnavailable",
    "FixtureMiss",
    "GatewayClient",
    "LLM_TOKEN_ENV",
    "MalformedResponse",
    "TimedOut",
    "VLM_TOKEN_ENV",
    "append_fixture",
    "canonical_json",
    "digest",
    "load_fixtures",
    "validate",
]

log = logging.getLogger(__name__)

LLM_TOKEN_ENV = "BEHAV_LLM_TOKEN"
VLM_TOKEN_ENV = "BEHAV_VLM_TOKEN"

MODES = ("live", "record", "replay")


class BackendUnavailable(Exception):
    """Endpoint unreachable or kept failing after retries."""


class TimedOut(Exception):
    """Request deadline exceeded after retries."""


class FixtureMiss(Exception):
    """Replay mode has no fixture for the request digest."""


class MalformedResponse(Exception):
    """Response violates the expected schema; carries the offending field path."""

    def __init__(self, path: str, message: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if message else path)


@dataclass
class BackendEndpoint:
    base_url: str = ""
    auth_env: str = LLM_TOKEN_ENV
    timeout_s: float = 10.0
    retries: int = 2
    mode: str = "replay"
    fixture_path: str | None = None
    backoff_s: float = 0.25

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode in ("live", "record") and not self.base_url:
            raise ValueError(f"{self.mode} mode needs a base_url")
        if self.mode in ("record", "replay") and not self.fixture_path:
            raise ValueError(f"{self.mode} mode needs a fixture_path")


def canonical_json(body: dict) -> str:
    """Canonical serialization used for digests: sorted keys, compact
    separators, repr floats."""
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def digest(body: dict) -> str:
    return hashlib.sha256(canonical_json(body).encode("utf-8")).hexdigest()


def load_fixtures(path) -> dict[str, tuple[dict, float]]:
    """Digest -> (response, latency_s); later records win on collision."""
    table: dict[str, tuple[dict, float]] = {}
    p = Path(path)
    if not p.exists():
        return table
    with open(p, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise ValueError(f"{p}:{lineno}: bad fixture line: {e}") from e
            table[rec["digest"]] = (rec["response"], float(rec.get("latency_s", 0.0)))
    return table


def append_fixture(path, request: dict, response: dict, latency_s: float) -> None:
    rec = {
        "digest": digest(request),
        "request": request,
        "response": response,
        "latency_s": latency_s,
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(rec, sort_keys=True) + "\n")


class GatewayClient:
    """One logical backend (LLM or VLM) in live, record, or replay mode.

    `latency_sink`, when given, receives the recorded latency of each replayed
    call so the caller can advance its simulated clock.
    """

    def __init__(self, endpoint: BackendEndpoint, latency_sink: Callable[[float], None] | None = None):
        self.endpoint = endpoint
        self.latency_sink = latency_sink
        self._fixtures: dict[str, tuple[dict, float]] | None = None

    def call(self, body: dict) -> dict:
        mode = self.endpoint.mode
        if mode == "replay":
            return self._replay(body)
        response, latency_s = self._post(body)
        if mode == "record":
            append_fixture(self.endpoint.fixture_path, body, response, latency_s)
        return response

    def _replay(self, body: dict) -> dict:
        if self._fixtures is None:
            self._fixtures = load_fixtures(self.endpoint.fixture_path)
        key = digest(body)
        if key not in self._fixtures:
            raise FixtureMiss(key)
        response, latency_s = self._fixtures[key]
        if self.latency_sink is not None and latency_s > 0.0:
            self.latency_sink(latency_s)
        return json.loads(json.dumps(response))

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.endpoint.auth_env, "") if self.endpoint.auth_env else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, body: dict) -> tuple[dict, float]:
        ep = self.endpoint
        attempts = ep.retries + 1
        last_error: Exception | None = None
        timed_out = False
        for attempt in range(attempts):
            if attempt:
                time.sleep(min(2.0, ep.backoff_s * 2 ** (attempt - 1)))
            start = time.monotonic()
            try:
                resp = requests.post(ep.base_url, json=body, headers=self._headers(), timeout=ep.timeout_s)
            except requests.Timeout as e:
                timed_out = True
                last_error = e
                continue
            except requests.RequestException as e:
                last_error = e
                continue
            latency_s = time.monotonic() - start
            if resp.status_code >= 500:
                last_error = BackendUnavailable(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BackendUnavailable(f"HTTP {resp.status_code} from {ep.base_url}")
            try:
                return resp.json(), latency_s
            except ValueError as e:
                raise MalformedResponse("$", f"response is not JSON: {e}") from e
        if timed_out:
            raise TimedOut(f"{ep.base_url} after {attempts} attempts") from last_error
        raise BackendUnavailable(f"{ep.base_url} after {attempts} attempts") from last_error


def _require_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, Real):
        raise MalformedResponse(path, f"expected a number, got {type(value).__name__}")
    return float(value)


def _require_str_list(body: dict, key: str) -> list[str]:
    if key not in body:
        raise MalformedResponse(key, "missing")
    value = body[key]
    if not isinstance(value, list):
        raise MalformedResponse(key, "expected a list")
    for i, entry in enumerate(value):
        if not isinstance(entry, str) or not entry.strip():
            raise MalformedResponse(f"{key}[{i}]", "expected a non-empty string")
    return list(value)


def validate(body: dict, schema_id: str):
    """Strict structural validation of a backend response.

    decompose -> dict of the four lists; desirability -> list of floats
    (up to 0.01 outside [0, 1] tolerated); landmark -> (x, y) tuple or None
    for an explicit not-found marker.
    """
    if not isinstance(body, dict):
        raise MalformedResponse("$", "response must be a JSON object")
    if schema_id == "decompose":
        out = {k: _require_str_list(body, k) for k in ("nav_actions", "nav_landmarks", "behav_actions", "behav_targets")}
        if len(out["behav_actions"]) != len(out["behav_targets"]):
            raise MalformedResponse(
                "behav_targets",
                f"length {len(out['behav_targets'])} != behav_actions length {len(out['behav_actions'])}",
            )
        return out
    if schema_id == "desirability":
        if "values" not in body:
            raise MalformedResponse("values", "missing")
        if not isinstance(body["values"], list):
            raise MalformedResponse("values", "expected a list")
        values = []
        for i, v in enumerate(body["values"]):
            x = _require_number(v, f"values[{i}]")
            if not -0.01 <= x <= 1.01:
                raise MalformedResponse(f"values[{i}]", f"{x} outside [-0.01, 1.01]")
            values.append(x)
        return values
    if schema_id == "landmark":
        if body.get("found") is False:
            return None
        if "x" not in body:
            raise MalformedResponse("x", "missing")
        if "y" not in body:
            raise MalformedResponse("y", "missing")
        return (_require_number(body["x"], "x"), _require_number(body["y"], "y"))
    raise ValueError(f"unknown schema {schema_id!r}")
