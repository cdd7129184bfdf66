"""claimcheck: claim verification with BM25 retrieval, LLM evidence
refinement, verification, and confidence-gated calibration."""

from .corpus import Corpus, CorpusStats, Document, ingest_corpus
from .entities import Entity, RemoteEntityExtractor, extract_entities, remote_ner
from .errors import (
    BackendExhaustedError,
    BackendRejectedError,
    CalibrationUnparseableError,
    ClaimCheckError,
    ConfigError,
    CorruptIndexError,
    DocNotFoundError,
    EmptyCorpusError,
    ExtractorUnavailableError,
    JudgeUnparseableError,
    MissingGoldError,
    ParseFailureError,
    VerdictUnparseableError,
    VersionMismatchError,
)
from .evaluation import (
    EvalReport,
    EvalRun,
    QualityComparison,
    QualityScores,
    evaluate,
    judge_quality,
    judge_text_quality,
    load_dataset,
    macro_f1,
    run_ablations,
    sweep,
)
from .index import (
    IndexParams,
    InvertedIndex,
    SearchHit,
    bm25_score,
    build_index,
    load_index,
    save_index,
    search,
)
from .llm import (
    CompletionRequest,
    CompletionResult,
    HttpChatBackend,
    MockBackend,
    RetryPolicy,
    complete,
    parse_relabel,
    parse_score,
    parse_verdict,
)
from .pipeline import (
    FULL_CLAIM,
    NO_EVIDENCE_SENTINEL,
    ClaimRecord,
    ClaimResult,
    EvidenceBundle,
    FinalVerdict,
    Label,
    PipelineConfig,
    RefinedEvidence,
    Verdict,
    calibrate_verdict,
    identify_entities,
    refine_evidence,
    retrieve_evidence,
    run_pipeline,
    verify_claim,
)
from .tokenization import tokenize

__version__ = "0.1.0"
