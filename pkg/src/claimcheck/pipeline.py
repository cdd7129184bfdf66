"""The claim-verification pipeline.

One claim flows through four stages: entity spans are identified, evidence is
retrieved from the BM25 index per entity (or for the whole claim when there
are no entities), an LLM refines the retrieved documents into one concise
paragraph, an LLM verifier produces an initial label with a verbalized
confidence, and when that confidence falls below the threshold a second-pass
calibrator re-examines the verdict and issues the final label.

The label space is exactly {supports, refutes}: a claim the evidence cannot
establish is treated as refuted rather than given a third class.
"""

from __future__ import annotations

import re
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

from .corpus import Document
from .entities import Entity, RemoteEntityExtractor, extract_entities
from .errors import (
    ClaimCheckError,
    ConfigError,
    ExtractorUnavailableError,
    ParseFailureError,
    VerdictUnparseableError,
)
from .index import InvertedIndex, SearchHit, search
from .llm import Backend, CompletionRequest, RetryPolicy, complete, parse_relabel, parse_verdict
from .templates import SYSTEM_PROMPT, TEMPLATE_VERSION, load_template, render

# Marker used in place of an entity when retrieval fell back to the whole claim.
FULL_CLAIM = "FULL_CLAIM"

# Sentinel text of a refinement that found nothing usable.
NO_EVIDENCE_SENTINEL = "NO RELEVANT EVIDENCE"

# Appended once when a structured response failed to parse.
RETRY_SUFFIX = "\n\nRespond with only the JSON object."


class Label(str, Enum):
    SUPPORTS = "supports"
    REFUTES = "refutes"

    @classmethod
    def from_text(cls, text: str) -> "Label":
        return cls(text.strip().lower())


@dataclass(frozen=True)
class ClaimRecord:
    """One claim to verify; gold label and hop count are optional metadata."""

    claim_id: str
    text: str
    gold_label: Label | None = None
    hops: int | None = None


@dataclass
class EvidenceBundle:
    """Everything retrieval produced for one claim.

    ``per_entity`` pairs each query (an Entity, or the FULL_CLAIM marker) with
    its hits; ``merged`` is the deduplicated union keeping each document's
    maximum score, ordered by descending score then ascending doc_id.
    """

    claim_id: str
    per_entity: list[tuple[Entity | str, list[SearchHit]]]
    merged: list[SearchHit]

    @property
    def merged_doc_ids(self) -> list[str]:
        return [hit.doc_id for hit in self.merged]

    @property
    def used_full_claim(self) -> bool:
        return any(key == FULL_CLAIM for key, _ in self.per_entity)


@dataclass(frozen=True)
class RefinedEvidence:
    """The refinement stage's output paragraph and its provenance."""

    text: str
    source_doc_ids: tuple[str, ...]
    empty_flag: bool

    def __post_init__(self):
        if self.empty_flag != (self.text == NO_EVIDENCE_SENTINEL):
            raise ValueError("empty_flag must mirror the sentinel text")
        if self.empty_flag and self.source_doc_ids:
            raise ValueError("empty refinement cannot cite sources")


@dataclass(frozen=True)
class Verdict:
    """Initial verifier output: label, verbalized confidence, reasoning."""

    label: Label
    confidence: float
    reasoning: str

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class FinalVerdict:
    """The pipeline's final answer, with the initial verdict it came from."""

    label: Label
    calibrated: bool
    initial: Verdict
    rationale: str | None = None


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs for one pipeline run. Defaults follow the package-wide defaults;
    dataset presets override top_k and theta (see claimcheck.config)."""

    max_entities: int = 3
    top_k: int = 10
    theta: float = 0.90
    disable_entity_identifier: bool = False
    disable_refinement: bool = False
    disable_calibrator: bool = False
    extractor: str = "heuristic"
    ner_endpoint: str | None = None
    ner_timeout: float = 10.0
    doc_char_budget: int = 1500
    max_tokens: int = 1024
    stage_temperatures: dict = field(default_factory=dict)
    prompt_dir: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_entities < 1:
            raise ConfigError(f"max_entities must be >= 1, got {self.max_entities}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")
        if self.doc_char_budget < 1:
            raise ConfigError(f"doc_char_budget must be >= 1, got {self.doc_char_budget}")
        if self.max_tokens < 1:
            raise ConfigError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.extractor not in ("heuristic", "remote"):
            raise ConfigError(f"extractor must be 'heuristic' or 'remote', got {self.extractor!r}")
        if self.extractor == "remote" and not self.ner_endpoint:
            raise ConfigError("extractor 'remote' requires ner_endpoint")
        for stage, temp in self.stage_temperatures.items():
            if stage not in ("refine", "verify", "calibrate", "judge"):
                raise ConfigError(f"unknown stage in stage_temperatures: {stage!r}")
            if not isinstance(temp, (int, float)) or temp < 0:
                raise ConfigError(f"temperature for {stage!r} must be >= 0, got {temp!r}")

    def temperature_for(self, stage: str) -> float:
        return float(self.stage_temperatures.get(stage, 0.0))

    def to_dict(self) -> dict:
        """JSON-able snapshot echoed into every report."""
        return {
            "max_entities": self.max_entities,
            "top_k": self.top_k,
            "theta": self.theta,
            "disable_entity_identifier": self.disable_entity_identifier,
            "disable_refinement": self.disable_refinement,
            "disable_calibrator": self.disable_calibrator,
            "extractor": self.extractor,
            "ner_endpoint": self.ner_endpoint,
            "ner_timeout": self.ner_timeout,
            "doc_char_budget": self.doc_char_budget,
            "max_tokens": self.max_tokens,
            "stage_temperatures": dict(sorted(self.stage_temperatures.items())),
            "prompt_dir": self.prompt_dir,
            "retry": {
                "max_attempts": self.retry.max_attempts,
                "base_delay": self.retry.base_delay,
                "backoff_factor": self.retry.backoff_factor,
            },
            "template_version": TEMPLATE_VERSION,
        }


@dataclass
class ClaimResult:
    """Everything recorded about one claim's trip through the pipeline."""

    claim: ClaimRecord
    entities: list[Entity] = field(default_factory=list)
    bundle: EvidenceBundle | None = None
    refined: RefinedEvidence | None = None
    verdict: Verdict | None = None
    final: FinalVerdict | None = None
    stage_calls: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    error: dict | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        retrieval = None
        if self.bundle is not None:
            groups = []
            for key, hits in self.bundle.per_entity:
                if key == FULL_CLAIM:
                    kind, query = "full_claim", self.claim.text
                else:
                    kind, query = "entity", key.surface
                groups.append({
                    "kind": kind,
                    "query": query,
                    "hits": [
                        {"doc_id": h.doc_id, "score": h.score, "rank": h.rank} for h in hits
                    ],
                })
            retrieval = {
                "full_claim": self.bundle.used_full_claim,
                "groups": groups,
                "merged": [
                    {"doc_id": h.doc_id, "score": h.score, "rank": h.rank}
                    for h in self.bundle.merged
                ],
            }
        return {
            "schema_version": 1,
            "claim_id": self.claim.claim_id,
            "claim": self.claim.text,
            "gold_label": self.claim.gold_label.value if self.claim.gold_label else None,
            "hops": self.claim.hops,
            "entities": [
                {"surface": e.surface, "start": e.start, "end": e.end, "source": e.source}
                for e in self.entities
            ],
            "retrieval": retrieval,
            "refined": None if self.refined is None else {
                "text": self.refined.text,
                "source_doc_ids": list(self.refined.source_doc_ids),
                "empty": self.refined.empty_flag,
            },
            "initial_verdict": None if self.verdict is None else {
                "label": self.verdict.label.value,
                "confidence": self.verdict.confidence,
                "reasoning": self.verdict.reasoning,
            },
            "final_verdict": None if self.final is None else {
                "label": self.final.label.value,
                "calibrated": self.final.calibrated,
                "rationale": self.final.rationale,
            },
            "stage_calls": {k: self.stage_calls[k] for k in sorted(self.stage_calls)},
            "warnings": list(self.warnings),
            "error": self.error,
        }


# --- stages -------------------------------------------------------------------


def identify_entities(
    claim: ClaimRecord,
    config: PipelineConfig,
    remote_extractor: RemoteEntityExtractor | None = None,
    warnings: list[str] | None = None,
) -> list[Entity]:
    """Stage 1: find up to ``config.max_entities`` entity spans in the claim.

    A remote extractor that is down degrades to the rule-based extractor with
    a warning instead of failing the claim.
    """
    if config.disable_entity_identifier:
        return []
    if config.extractor == "remote":
        extractor = remote_extractor or RemoteEntityExtractor(
            config.ner_endpoint, timeout=config.ner_timeout
        )
        try:
            return extractor.extract(claim.text, max_n=config.max_entities)
        except ExtractorUnavailableError as exc:
            if warnings is not None:
                warnings.append(f"remote extractor unavailable ({exc}); using rule-based extractor")
    return extract_entities(claim.text, max_n=config.max_entities)


def retrieve_evidence(
    claim: ClaimRecord,
    entities: list[Entity],
    index: InvertedIndex,
    config: PipelineConfig,
) -> EvidenceBundle:
    """Stage 2: one top-k search per entity, or one whole-claim search.

    The merged list deduplicates documents across entities, keeping each
    document's maximum score.
    """
    per_entity: list[tuple[Entity | str, list[SearchHit]]] = []
    if not entities:
        per_entity.append((FULL_CLAIM, search(index, claim.text, config.top_k)))
    else:
        for entity in entities:
            per_entity.append((entity, search(index, entity.surface, config.top_k)))
    best: dict[str, float] = {}
    for _, hits in per_entity:
        for hit in hits:
            if hit.doc_id not in best or hit.score > best[hit.doc_id]:
                best[hit.doc_id] = hit.score
    ordered = sorted(best.items(), key=lambda item: (-item[1], item[0]))
    merged = [
        SearchHit(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ordered, start=1)
    ]
    return EvidenceBundle(claim_id=claim.claim_id, per_entity=per_entity, merged=merged)


def format_evidence_block(docs: list[Document], char_budget: int, numbered: bool) -> str:
    """Render documents (title + text, each truncated to the budget) as text.

    This exact rendering feeds the refinement prompt (numbered) and stands in
    for the refined paragraph when refinement is disabled (unnumbered).
    """
    parts = []
    for i, doc in enumerate(docs, start=1):
        content = (doc.title + "\n" + doc.text) if doc.title else doc.text
        content = content[:char_budget]
        parts.append(f"[{i}] {content}" if numbered else content)
    return "\n\n".join(parts)


def _cited_doc_ids(text: str, docs: list[Document]) -> list[str]:
    """Map [n] citations in the refiner's output back to doc ids, in citation
    order; numbers outside 1..len(docs) are ignored."""
    cited: list[str] = []
    for num in re.findall(r"\[(\d+)\]", text):
        n = int(num)
        if 1 <= n <= len(docs):
            doc_id = docs[n - 1].doc_id
            if doc_id not in cited:
                cited.append(doc_id)
    return cited


def refine_evidence(
    claim: ClaimRecord,
    bundle: EvidenceBundle,
    index: InvertedIndex,
    config: PipelineConfig,
    backend: Backend,
    calls: Counter | None = None,
    sleep=time.sleep,
) -> RefinedEvidence:
    """Stage 3: compress the retrieved documents into one evidence paragraph.

    An empty bundle short-circuits to the sentinel without any backend call.
    With refinement disabled the paragraph is the deterministic concatenation
    of the retrieved documents.
    """
    docs = [index.corpus.get(doc_id) for doc_id in bundle.merged_doc_ids]
    if not docs:
        return RefinedEvidence(text=NO_EVIDENCE_SENTINEL, source_doc_ids=(), empty_flag=True)
    if config.disable_refinement:
        text = format_evidence_block(docs, config.doc_char_budget, numbered=False)
        return RefinedEvidence(
            text=text, source_doc_ids=tuple(d.doc_id for d in docs), empty_flag=False
        )
    prompt = render(
        load_template("refine", config.prompt_dir),
        claim=claim.text,
        documents=format_evidence_block(docs, config.doc_char_budget, numbered=True),
    )
    request = CompletionRequest(
        system_prompt=SYSTEM_PROMPT,
        user_prompt=prompt,
        request_tag="refine",
        temperature=config.temperature_for("refine"),
        max_tokens=config.max_tokens,
    )
    if calls is not None:
        calls["refine"] += 1
    result = complete(backend, request, config.retry, sleep=sleep)
    text = result.text.strip()
    if text == NO_EVIDENCE_SENTINEL:
        return RefinedEvidence(text=NO_EVIDENCE_SENTINEL, source_doc_ids=(), empty_flag=True)
    cited = _cited_doc_ids(text, docs)
    if not cited:
        cited = [d.doc_id for d in docs]
    return RefinedEvidence(text=text, source_doc_ids=tuple(cited), empty_flag=False)


def verify_claim(
    claim: ClaimRecord,
    refined: RefinedEvidence,
    config: PipelineConfig,
    backend: Backend,
    calls: Counter | None = None,
    sleep=time.sleep,
) -> Verdict:
    """Stage 4: initial verdict with verbalized confidence.

    A response that fails structured parsing is re-prompted exactly once with
    an explicit JSON-only instruction; a second failure raises
    VerdictUnparseableError.
    """
    prompt = render(
        load_template("verify", config.prompt_dir),
        claim=claim.text,
        evidence=refined.text,
    )
    request = CompletionRequest(
        system_prompt=SYSTEM_PROMPT,
        user_prompt=prompt,
        request_tag="verify",
        temperature=config.temperature_for("verify"),
        max_tokens=config.max_tokens,
    )
    if calls is not None:
        calls["verify"] += 1
    result = complete(backend, request, config.retry, sleep=sleep)
    try:
        label, confidence, reasoning = parse_verdict(result.text)
    except ParseFailureError as first:
        retry_request = replace(request, user_prompt=prompt + RETRY_SUFFIX)
        if calls is not None:
            calls["verify"] += 1
        retry_result = complete(backend, retry_request, config.retry, sleep=sleep)
        try:
            label, confidence, reasoning = parse_verdict(retry_result.text)
        except ParseFailureError as second:
            raise VerdictUnparseableError(
                f"verifier response unparseable twice: {first.reason}, then {second.reason}"
            ) from second
    return Verdict(label=Label(label), confidence=confidence, reasoning=reasoning)


def calibrate_verdict(
    claim: ClaimRecord,
    refined: RefinedEvidence,
    verdict: Verdict,
    config: PipelineConfig,
    backend: Backend,
    calls: Counter | None = None,
    warnings: list[str] | None = None,
    sleep=time.sleep,
) -> FinalVerdict:
    """Stage 5: re-examine low-confidence verdicts.

    The calibrator runs iff the verifier's confidence is strictly below
    ``config.theta`` (and the stage is enabled); otherwise the initial verdict
    is final. A calibrator response that stays unparseable after one re-prompt
    falls back to the initial label with a warning instead of failing.
    """
    if config.disable_calibrator or verdict.confidence >= config.theta:
        return FinalVerdict(label=verdict.label, calibrated=False, initial=verdict)
    prompt = render(
        load_template("calibrate", config.prompt_dir),
        claim=claim.text,
        evidence=refined.text,
        label=verdict.label.value,
        reasoning=verdict.reasoning,
    )
    request = CompletionRequest(
        system_prompt=SYSTEM_PROMPT,
        user_prompt=prompt,
        request_tag="calibrate",
        temperature=config.temperature_for("calibrate"),
        max_tokens=config.max_tokens,
    )
    if calls is not None:
        calls["calibrate"] += 1
    result = complete(backend, request, config.retry, sleep=sleep)
    try:
        label, rationale = parse_relabel(result.text)
    except ParseFailureError as first:
        retry_request = replace(request, user_prompt=prompt + RETRY_SUFFIX)
        if calls is not None:
            calls["calibrate"] += 1
        retry_result = complete(backend, retry_request, config.retry, sleep=sleep)
        try:
            label, rationale = parse_relabel(retry_result.text)
        except ParseFailureError as second:
            if warnings is not None:
                warnings.append(
                    "calibrator response unparseable "
                    f"({first.reason}, then {second.reason}); keeping initial verdict"
                )
            return FinalVerdict(label=verdict.label, calibrated=False, initial=verdict)
    return FinalVerdict(
        label=Label(label), calibrated=True, initial=verdict, rationale=rationale
    )


def run_pipeline(
    claim: ClaimRecord,
    index: InvertedIndex,
    config: PipelineConfig,
    backend: Backend,
    remote_extractor: RemoteEntityExtractor | None = None,
    sleep=time.sleep,
) -> ClaimResult:
    """Run one claim through every stage; no exception escapes.

    A stage failure produces a ClaimResult whose ``error`` names the stage and
    reason, with everything completed up to that point still recorded.
    """
    result = ClaimResult(claim=claim, stage_calls={"refine": 0, "verify": 0, "calibrate": 0})
    calls = Counter()
    stage = "entities"
    try:
        result.entities = identify_entities(
            claim, config, remote_extractor=remote_extractor, warnings=result.warnings
        )
        stage = "retrieve"
        result.bundle = retrieve_evidence(claim, result.entities, index, config)
        stage = "refine"
        result.refined = refine_evidence(
            claim, result.bundle, index, config, backend, calls=calls, sleep=sleep
        )
        stage = "verify"
        result.verdict = verify_claim(
            claim, result.refined, config, backend, calls=calls, sleep=sleep
        )
        stage = "calibrate"
        result.final = calibrate_verdict(
            claim, result.refined, result.verdict, config, backend,
            calls=calls, warnings=result.warnings, sleep=sleep,
        )
    except ClaimCheckError as exc:
        result.error = {"stage": stage, "reason": f"{type(exc).__name__}: {exc}"}
    except Exception as exc:  # never lose a claim to an unexpected bug
        result.error = {"stage": stage, "reason": f"unexpected {type(exc).__name__}: {exc}"}
    result.stage_calls.update(calls)
    return result
