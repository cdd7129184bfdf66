"""Entity extraction from claim text.

Two extractors share one output type: a deterministic rule-based extractor
that needs no model or network, and a client for a remote NER service. Both
return non-overlapping character spans ordered by first appearance, and every
span round-trips: ``text[start:end] == surface``.

The rule-based extractor looks for, in priority order:

1. quoted or ``<i>``-marked title spans;
2. maximal runs of capitalized words, which may bridge the lowercase
   particles "of", "the", "de", "la" between capitalized words and may absorb
   trailing numeral tokens; a sentence-initial run consisting of one single
   capitalized word is ignored unless the same word also appears capitalized
   mid-sentence;
3. any surface shorter than two characters is discarded.
"""

from __future__ import annotations

import logging
import re
import threading
from dataclasses import dataclass

import httpx

from .errors import ConfigError, ExtractorUnavailableError

logger = logging.getLogger(__name__)

DEFAULT_MAX_ENTITIES = 3

_PARTICLES = frozenset({"of", "the", "de", "la"})

_QUOTED = (
    re.compile(r'"([^"\n]+)"'),
    re.compile(r"“([^”\n]+)”"),
    re.compile(r"<i>(.+?)</i>"),
)

# A word token may carry apostrophes and hyphens so names like O'Brien and
# Jean-Luc stay whole; surrounding punctuation stays outside the token.
_WORD = re.compile(r"[\w'’-]+")

_SENTENCE_END = re.compile(r"[.!?]")


@dataclass(frozen=True)
class Entity:
    """One extracted span; ``source`` names the extractor that produced it."""

    surface: str
    start: int
    end: int
    source: str


def _is_capitalized(word: str) -> bool:
    return bool(word) and word[0].isupper()


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def _quoted_spans(text: str) -> list[tuple[int, int]]:
    spans = []
    for pattern in _QUOTED:
        for match in pattern.finditer(text):
            start, end = match.start(1), match.end(1)
            while start < end and text[start].isspace():
                start += 1
            while end > start and text[end - 1].isspace():
                end -= 1
            if end - start >= 2:
                spans.append((start, end))
    spans.sort()
    return spans


def _capitalized_runs(text: str) -> list[tuple[int, int]]:
    """Spans of maximal capitalized-word runs, after the sentence-start rule."""
    words = list(_WORD.finditer(text))

    def adjacent(i: int, j: int) -> bool:
        """True when only whitespace separates word i from word j."""
        return text[words[i].end() : words[j].start()].isspace() or words[i].end() == words[j].start()

    # A word starts a sentence if only non-word text containing . ! or ?
    # (or the start of the claim) precedes it.
    sentence_initial = []
    for i, word in enumerate(words):
        if i == 0:
            sentence_initial.append(True)
        else:
            gap = text[words[i - 1].end() : word.start()]
            sentence_initial.append(bool(_SENTENCE_END.search(gap)))

    runs: list[tuple[int, int, int, int]] = []  # (char start, char end, first word, last word)
    i = 0
    while i < len(words):
        if not _is_capitalized(words[i].group()):
            i += 1
            continue
        last = i
        while True:
            # Extend over an optional chain of particles to another
            # capitalized word, every step separated by whitespace only.
            j = last + 1
            while (
                j < len(words)
                and adjacent(j - 1, j)
                and words[j].group().lower() in _PARTICLES
                and words[j].group().islower()
            ):
                j += 1
            if j < len(words) and adjacent(j - 1, j) and _is_capitalized(words[j].group()):
                last = j
                continue
            # No capitalized continuation; absorb trailing numerals and stop.
            j = last + 1
            while j < len(words) and adjacent(j - 1, j) and words[j].group().isdigit():
                last = j
                j += 1
            break
        runs.append((words[i].start(), words[last].end(), i, last))
        i = last + 1

    kept = []
    for start, end, first, last in runs:
        if first == last and sentence_initial[first]:
            word = words[first].group()
            recurs = any(
                words[j].group() == word and not sentence_initial[j]
                for j in range(len(words))
                if j != first
            )
            if not recurs:
                continue
        if end - start >= 2:
            kept.append((start, end))
    return kept


def extract_entities(text: str, max_n: int = DEFAULT_MAX_ENTITIES) -> list[Entity]:
    """Rule-based extraction of up to ``max_n`` entity spans from ``text``."""
    if max_n < 1:
        raise ConfigError(f"max_n must be >= 1, got {max_n}")
    if not text:
        return []
    accepted: list[tuple[int, int]] = []
    # Quoted/italic title spans take priority over capitalized runs.
    for span in _quoted_spans(text) + _capitalized_runs(text):
        if not any(_spans_overlap(span, other) for other in accepted):
            accepted.append(span)
    accepted.sort()
    return [
        Entity(surface=text[start:end], start=start, end=end, source="heuristic")
        for start, end in accepted[:max_n]
    ]


def _validate_remote_entities(text: str, payload: object) -> list[Entity]:
    if not isinstance(payload, dict) or not isinstance(payload.get("entities"), list):
        raise ExtractorUnavailableError("remote extractor returned an unexpected payload shape")
    entities: list[Entity] = []
    for item in payload["entities"]:
        if not isinstance(item, dict):
            logger.warning("remote entity is not an object; dropped: %r", item)
            continue
        surface, start, end = item.get("surface"), item.get("start"), item.get("end")
        if (
            not isinstance(surface, str)
            or not isinstance(start, int) or isinstance(start, bool)
            or not isinstance(end, int) or isinstance(end, bool)
            or not (0 <= start < end <= len(text))
            or text[start:end] != surface
        ):
            logger.warning("remote entity span does not round-trip; dropped: %r", item)
            continue
        span = (start, end)
        if any(_spans_overlap(span, (e.start, e.end)) for e in entities):
            logger.warning("remote entity overlaps an earlier span; dropped: %r", item)
            continue
        entities.append(Entity(surface=surface, start=start, end=end, source="remote"))
    entities.sort(key=lambda e: e.start)
    return entities


class RemoteEntityExtractor:
    """Client for an HTTP NER service: POST {"text": ...} -> {"entities": [...]}.

    Spans that fail validation (out of bounds, no round-trip, overlapping) are
    dropped with a warning rather than failing the claim.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        max_in_flight: int = 4,
        transport: httpx.BaseTransport | None = None,
    ):
        if not endpoint:
            raise ConfigError("remote extractor endpoint is not configured")
        self.endpoint = endpoint
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._gate = threading.BoundedSemaphore(max_in_flight)

    def extract(self, text: str, max_n: int | None = None) -> list[Entity]:
        with self._gate:
            try:
                resp = self._client.post(self.endpoint, json={"text": text})
            except httpx.HTTPError as exc:
                raise ExtractorUnavailableError(f"remote extractor unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ExtractorUnavailableError(f"remote extractor returned HTTP {resp.status_code}")
        try:
            payload = resp.json()
        except ValueError as exc:
            raise ExtractorUnavailableError(f"remote extractor returned non-JSON: {exc}") from exc
        entities = _validate_remote_entities(text, payload)
        if max_n is not None:
            entities = entities[:max_n]
        return entities


def remote_ner(
    text: str,
    endpoint: str,
    timeout: float = 10.0,
    transport: httpx.BaseTransport | None = None,
) -> list[Entity]:
    """One-shot remote extraction without keeping a client around."""
    return RemoteEntityExtractor(endpoint, timeout=timeout, transport=transport).extract(text)
