"""LLM backends: an OpenAI-compatible HTTP client, a deterministic scripted
mock, retrying completion, and parsers for the structured responses the
pipeline stages demand.

Every completion is tagged with the pipeline stage that issued it (refine,
verify, calibrate, judge) so scripted mocks can route responses and tests can
count calls per stage.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx

from .errors import (
    BackendExhaustedError,
    BackendRejectedError,
    ConfigError,
    ParseFailureError,
    PermanentBackendError,
    TransientBackendError,
)

REQUEST_TAGS = ("refine", "verify", "calibrate", "judge")

ENV_BASE_URL = "RRC_LLM_BASE_URL"
ENV_API_KEY = "RRC_LLM_API_KEY"
ENV_MODEL = "RRC_LLM_MODEL"

VALID_LABELS = ("supports", "refutes")


@dataclass(frozen=True)
class CompletionRequest:
    """One prompt for a backend, tagged with the stage that issued it."""

    system_prompt: str
    user_prompt: str
    request_tag: str
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if self.request_tag not in REQUEST_TAGS:
            raise ConfigError(
                f"request_tag must be one of {REQUEST_TAGS}, got {self.request_tag!r}"
            )
        if self.temperature < 0:
            raise ConfigError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class CompletionResult:
    text: str
    backend_id: str
    latency: float
    attempt: int


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff for transient backend failures.

    The delay before retrying attempt ``i + 1`` is
    ``base_delay * backoff_factor ** (i - 1)``.
    """

    max_attempts: int = 3
    base_delay: float = 0.5
    backoff_factor: float = 2.0

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError(f"max_attempts must be >= 1, got {self.max_attempts}")
        if self.base_delay <= 0:
            raise ConfigError(f"base_delay must be > 0, got {self.base_delay}")
        if self.backoff_factor <= 1:
            raise ConfigError(f"backoff_factor must be > 1, got {self.backoff_factor}")


class Backend:
    """Interface every completion backend implements."""

    backend_id: str = "base"

    def send(self, request: CompletionRequest) -> tuple[str, float]:
        """Perform one attempt; return (response_text, latency_seconds).

        Raises TransientBackendError for failures worth retrying and
        PermanentBackendError for ones that are not.
        """
        raise NotImplementedError


def complete(
    backend: Backend,
    request: CompletionRequest,
    policy: RetryPolicy | None = None,
    sleep=time.sleep,
) -> CompletionResult:
    """Send ``request`` with retry on transient failures.

    Transient failures (timeouts, 429, 5xx) are retried up to
    ``policy.max_attempts`` total attempts with exponential backoff;
    non-transient rejections fail immediately as BackendRejectedError.
    """
    policy = policy or RetryPolicy()
    for attempt in range(1, policy.max_attempts + 1):
        try:
            text, latency = backend.send(request)
        except TransientBackendError as exc:
            if attempt == policy.max_attempts:
                raise BackendExhaustedError(
                    f"{attempt} attempt(s) failed; last error: {exc}"
                ) from exc
            sleep(policy.base_delay * policy.backoff_factor ** (attempt - 1))
        except PermanentBackendError as exc:
            raise BackendRejectedError(str(exc)) from exc
        else:
            return CompletionResult(
                text=text, backend_id=backend.backend_id,
                latency=latency, attempt=attempt,
            )
    raise AssertionError("unreachable")


class HttpChatBackend(Backend):
    """OpenAI-compatible chat-completions client over HTTP.

    Configured explicitly or from the environment variables RRC_LLM_BASE_URL,
    RRC_LLM_API_KEY and RRC_LLM_MODEL. Concurrent use is allowed; in-flight
    requests are capped per backend instance.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
    ):
        if not base_url:
            raise ConfigError("backend base_url is not configured")
        if not model:
            raise ConfigError("backend model is not configured")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key
        self.backend_id = f"http:{model}"
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._gate = threading.BoundedSemaphore(max_in_flight)

    @classmethod
    def from_env(cls, **kwargs) -> "HttpChatBackend":
        """Build a backend from RRC_LLM_* environment variables."""
        base_url = os.environ.get(ENV_BASE_URL, "")
        model = os.environ.get(ENV_MODEL, "")
        api_key = os.environ.get(ENV_API_KEY) or None
        if not base_url or not model:
            raise ConfigError(
                f"{ENV_BASE_URL} and {ENV_MODEL} must be set to use the HTTP backend"
            )
        return cls(base_url=base_url, model=model, api_key=api_key, **kwargs)

    def send(self, request: CompletionRequest) -> tuple[str, float]:
        messages = []
        if request.system_prompt:
            messages.append({"role": "system", "content": request.system_prompt})
        messages.append({"role": "user", "content": request.user_prompt})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        headers = {}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        started = time.perf_counter()
        with self._gate:
            try:
                resp = self._client.post(
                    self.base_url + "/chat/completions",
                    json=payload, headers=headers,
                )
            except httpx.TimeoutException as exc:
                raise TransientBackendError(f"timeout: {exc}") from exc
            except httpx.HTTPError as exc:
                raise TransientBackendError(f"connection failure: {exc}") from exc
        latency = time.perf_counter() - started
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientBackendError(f"HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise PermanentBackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransientBackendError(f"malformed response body: {exc}") from exc
        if not isinstance(content, str):
            raise TransientBackendError("response content is not a string")
        return content, latency


@dataclass
class ScriptEntry:
    """One scripted mock response.

    The entry answers requests whose tag matches and whose user prompt
    contains ``match_substring`` (empty matches everything). It raises a
    transient error ``fail_times`` times before answering (negative means it
    fails forever), and unless ``repeat`` is set it is consumed by its first
    successful use.
    """

    tag: str
    response_text: str = ""
    match_substring: str = ""
    fail_times: int = 0
    repeat: bool = False
    _failures_left: int = field(init=False, repr=False)
    _used: bool = field(init=False, default=False, repr=False)

    def __post_init__(self):
        if self.tag not in REQUEST_TAGS:
            raise ConfigError(f"script entry tag must be one of {REQUEST_TAGS}, got {self.tag!r}")
        self._failures_left = self.fail_times

    def reset(self) -> None:
        self._failures_left = self.fail_times
        self._used = False


class MockBackend(Backend):
    """Deterministic scripted backend for tests and offline runs.

    A script is an ordered list of entries; each request is answered by the
    first live entry whose tag and substring matcher accept it. Latency is
    always reported as 0.0 so results are byte-identical across runs.
    """

    backend_id = "mock"

    def __init__(self, entries: list[ScriptEntry]):
        self._entries = entries
        self._lock = threading.Lock()
        self.request_log: list[str] = []

    @classmethod
    def from_raw(cls, raw: list[dict]) -> "MockBackend":
        """Build from parsed JSON: a list of script-entry objects."""
        if not isinstance(raw, list):
            raise ConfigError("mock script must be a JSON list of entries")
        entries = []
        for i, item in enumerate(raw):
            if not isinstance(item, dict) or "tag" not in item:
                raise ConfigError(f"mock script entry {i} must be an object with a 'tag'")
            unknown = set(item) - {"tag", "response_text", "match_substring", "fail_times", "repeat"}
            if unknown:
                raise ConfigError(f"mock script entry {i} has unknown fields {sorted(unknown)}")
            entries.append(ScriptEntry(
                tag=item["tag"],
                response_text=item.get("response_text", ""),
                match_substring=item.get("match_substring", ""),
                fail_times=int(item.get("fail_times", 0)),
                repeat=bool(item.get("repeat", False)),
            ))
        return cls(entries)

    @classmethod
    def from_script(cls, path: str | Path) -> "MockBackend":
        """Load a script from a JSON file."""
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"mock script not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"mock script is not valid JSON: {exc}") from exc
        return cls.from_raw(raw)

    def reset(self) -> None:
        """Restore the script to its initial state (all entries live again)."""
        with self._lock:
            for entry in self._entries:
                entry.reset()
            self.request_log.clear()

    def send(self, request: CompletionRequest) -> tuple[str, float]:
        with self._lock:
            self.request_log.append(request.request_tag)
            for entry in self._entries:
                if entry.tag != request.request_tag:
                    continue
                if entry.match_substring and entry.match_substring not in request.user_prompt:
                    continue
                if entry._used and not entry.repeat:
                    continue
                if entry._failures_left != 0:
                    if entry._failures_left > 0:
                        entry._failures_left -= 1
                    raise TransientBackendError(
                        f"scripted transient failure (tag={entry.tag})"
                    )
                if not entry.repeat:
                    entry._used = True
                return entry.response_text, 0.0
        raise PermanentBackendError(
            f"mock script has no live entry for tag={request.request_tag!r} "
            f"prompt={request.user_prompt[:120]!r}"
        )


# --- structured-response parsing ---------------------------------------------


def _iter_json_objects(raw: str):
    """Yield every parseable top-level JSON object embedded in ``raw``."""
    depth = 0
    start = -1
    in_string = False
    escaped = False
    i = 0
    while i < len(raw):
        ch = raw[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
        elif ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                candidate = raw[start : i + 1]
                try:
                    obj = json.loads(candidate)
                except ValueError:
                    # Not valid JSON; rescan from just inside the brace.
                    i = start
                    depth = 0
                    in_string = False
                    escaped = False
                else:
                    if isinstance(obj, dict):
                        yield obj
        i += 1


def _coerce_confidence(value) -> float:
    if isinstance(value, bool):
        raise ValueError("boolean confidence")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        return float(value.strip())
    raise ValueError(f"non-numeric confidence: {value!r}")


def parse_verdict(raw: str) -> tuple[str, float, str]:
    """Extract (label, confidence, reasoning) from a model response.

    Tolerates surrounding prose and code fences. Raises ParseFailureError
    with reason "no-json", "missing-field", "bad-label" or
    "confidence-out-of-range".
    """
    objs = list(_iter_json_objects(raw))
    if not objs:
        raise ParseFailureError("no-json", f"no JSON object in response: {raw[:120]!r}")
    required = ("label", "confidence", "reasoning")
    obj = next((o for o in objs if all(key in o for key in required)), None)
    if obj is None:
        present = sorted(set().union(*(o.keys() for o in objs)))
        raise ParseFailureError("missing-field", f"JSON object lacks required fields; saw {present}")
    label = obj["label"]
    if not isinstance(label, str) or label.lower() not in VALID_LABELS:
        raise ParseFailureError("bad-label", f"label must be one of {VALID_LABELS}, got {label!r}")
    try:
        confidence = _coerce_confidence(obj["confidence"])
    except ValueError as exc:
        raise ParseFailureError("confidence-out-of-range", str(exc)) from exc
    if not 0.0 <= confidence <= 1.0:
        raise ParseFailureError(
            "confidence-out-of-range", f"confidence must be in [0, 1], got {confidence}"
        )
    reasoning = obj["reasoning"]
    if not isinstance(reasoning, str):
        reasoning = json.dumps(reasoning, ensure_ascii=False)
    return label.lower(), confidence, reasoning


def parse_relabel(raw: str) -> tuple[str, str]:
    """Extract (label, rationale) from a calibration response."""
    objs = list(_iter_json_objects(raw))
    if not objs:
        raise ParseFailureError("no-json", f"no JSON object in response: {raw[:120]!r}")
    obj = next((o for o in objs if "label" in o and "rationale" in o), None)
    if obj is None:
        raise ParseFailureError("missing-field", "JSON object lacks label/rationale")
    label = obj["label"]
    if not isinstance(label, str) or label.lower() not in VALID_LABELS:
        raise ParseFailureError("bad-label", f"label must be one of {VALID_LABELS}, got {label!r}")
    rationale = obj["rationale"]
    if not isinstance(rationale, str):
        rationale = json.dumps(rationale, ensure_ascii=False)
    return label.lower(), rationale


_BARE_SCORE = re.compile(r"^\s*([1-5])\s*$")


def parse_score(raw: str) -> int:
    """Extract an integer 1-5 judge score from a model response."""
    for obj in _iter_json_objects(raw):
        if "score" not in obj:
            continue
        value = obj["score"]
        if isinstance(value, bool):
            break
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, str) and value.strip().isdigit():
            value = int(value.strip())
        if isinstance(value, int) and 1 <= value <= 5:
            return value
        raise ParseFailureError("bad-score", f"score must be an integer in [1, 5], got {value!r}")
    match = _BARE_SCORE.match(raw)
    if match:
        return int(match.group(1))
    raise ParseFailureError("no-json", f"no score in response: {raw[:120]!r}")
