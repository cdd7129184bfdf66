"""Document corpus: JSONL ingestion, lookup, stats, and on-disk persistence.

A corpus is ingested from a JSONL file where each line is an object with
``id``, ``title`` (optional, may be empty) and ``text`` (non-empty) fields.
Malformed lines never abort ingestion; they are collected into the ingest
report with their line number and a reason.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorruptIndexError, DocNotFoundError, VersionMismatchError
from .tokenization import tokenize

CORPUS_FORMAT_VERSION = 1

_META_FILE = "corpus_meta.json"
_DOCS_FILE = "docs.jsonl"


@dataclass(frozen=True)
class Document:
    """One retrievable unit: a titled text passage."""

    doc_id: str
    title: str
    text: str


@dataclass(frozen=True)
class CorpusStats:
    """Corpus-level token accounting.

    ``total_tokens`` counts the searchable content of every document, i.e.
    the tokenizer output over title and text together, which is what BM25
    length normalization is computed from.
    """

    num_docs: int
    total_tokens: int
    avg_doc_len: float


@dataclass(frozen=True)
class RejectedLine:
    line_no: int
    reason: str


@dataclass
class IngestReport:
    """What happened during one ingestion pass."""

    source: str
    num_ingested: int = 0
    rejected: list[RejectedLine] = field(default_factory=list)


def doc_token_count(doc: Document) -> int:
    """Number of tokens in the document's searchable content (title + text)."""
    return len(tokenize(doc.title)) + len(tokenize(doc.text))


class Corpus:
    """In-memory document collection with stable insertion order."""

    def __init__(self) -> None:
        self._docs: dict[str, Document] = {}
        self._token_counts: dict[str, int] = {}
        self._total_tokens = 0
        self.report: IngestReport | None = None

    # --- content ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self):
        return iter(self._docs.values())

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._docs

    @property
    def doc_ids(self) -> list[str]:
        return list(self._docs)

    def get(self, doc_id: str) -> Document:
        """Return the stored document byte-for-byte, or raise DocNotFoundError."""
        try:
            return self._docs[doc_id]
        except KeyError:
            raise DocNotFoundError(doc_id) from None

    def token_count(self, doc_id: str) -> int:
        """Searchable-content token count for one document."""
        if doc_id not in self._token_counts:
            raise DocNotFoundError(doc_id)
        return self._token_counts[doc_id]

    def add(self, doc: Document) -> None:
        """Insert a document; the caller is responsible for id uniqueness."""
        if doc.doc_id in self._docs:
            raise ValueError(f"duplicate doc_id {doc.doc_id!r}")
        self._docs[doc.doc_id] = doc
        n = doc_token_count(doc)
        self._token_counts[doc.doc_id] = n
        self._total_tokens += n

    @property
    def stats(self) -> CorpusStats:
        n = len(self._docs)
        return CorpusStats(
            num_docs=n,
            total_tokens=self._total_tokens,
            avg_doc_len=(self._total_tokens / n) if n else 0.0,
        )

    # --- persistence ----------------------------------------------------------

    def save(self, directory: str | Path) -> None:
        """Write the corpus to ``directory`` (meta + docs.jsonl), atomically per file."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        meta = {
            "format_version": CORPUS_FORMAT_VERSION,
            "stats": {
                "num_docs": self.stats.num_docs,
                "total_tokens": self.stats.total_tokens,
                "avg_doc_len": self.stats.avg_doc_len,
            },
        }
        _atomic_write(directory / _META_FILE, json.dumps(meta, sort_keys=True, indent=2) + "\n")
        lines = [
            json.dumps({"id": d.doc_id, "title": d.title, "text": d.text},
                       sort_keys=True, ensure_ascii=False)
            for d in self
        ]
        _atomic_write(directory / _DOCS_FILE, "\n".join(lines) + ("\n" if lines else ""))

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        """Reload a persisted corpus; verifies format version and stats."""
        directory = Path(directory)
        meta_path = directory / _META_FILE
        docs_path = directory / _DOCS_FILE
        if not meta_path.is_file() or not docs_path.is_file():
            raise CorruptIndexError(f"not a corpus directory: {directory}")
        try:
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise CorruptIndexError(f"unreadable corpus meta: {exc}") from exc
        version = meta.get("format_version")
        if version != CORPUS_FORMAT_VERSION:
            raise VersionMismatchError(
                f"corpus format version {version!r}, this code reads {CORPUS_FORMAT_VERSION}"
            )
        corpus = cls()
        with docs_path.open(encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    corpus.add(Document(doc_id=rec["id"], title=rec["title"], text=rec["text"]))
                except (ValueError, KeyError, TypeError) as exc:
                    raise CorruptIndexError(
                        f"corrupt corpus record at {docs_path}:{line_no}: {exc}"
                    ) from exc
        saved = meta.get("stats", {})
        stats = corpus.stats
        if (saved.get("num_docs"), saved.get("total_tokens")) != (stats.num_docs, stats.total_tokens):
            raise CorruptIndexError("corpus stats do not match stored documents")
        return corpus


def _atomic_write(path: Path, content: str) -> None:
    """Write-then-rename so a crash never leaves a partial file at ``path``."""
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def _normalize_record(rec: object) -> Document:
    """Turn one parsed JSONL value into a Document or raise ValueError."""
    if not isinstance(rec, dict):
        raise ValueError("line is not a JSON object")
    if "id" not in rec:
        raise ValueError("missing field: id")
    raw_id = rec["id"]
    if isinstance(raw_id, bool) or not isinstance(raw_id, (str, int)):
        raise ValueError("id must be a string or integer")
    doc_id = str(raw_id)
    if not doc_id:
        raise ValueError("empty id")
    title = rec.get("title", "")
    if not isinstance(title, str):
        raise ValueError("title must be a string")
    if "text" not in rec:
        raise ValueError("missing field: text")
    text = rec["text"]
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    if not text.strip():
        raise ValueError("empty text")
    return Document(doc_id=doc_id, title=title, text=text)


def ingest_corpus(path: str | Path) -> Corpus:
    """Ingest a JSONL corpus file.

    Valid records are stored in file order; malformed lines and duplicate ids
    are skipped and listed in ``corpus.report`` with line numbers. The first
    record wins when an id repeats.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    corpus = Corpus()
    report = IngestReport(source=str(path))
    with path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError:
                report.rejected.append(RejectedLine(line_no, "invalid JSON"))
                continue
            try:
                doc = _normalize_record(rec)
            except ValueError as exc:
                report.rejected.append(RejectedLine(line_no, str(exc)))
                continue
            if doc.doc_id in corpus:
                report.rejected.append(RejectedLine(line_no, f"duplicate id {doc.doc_id!r}"))
                continue
            corpus.add(doc)
            report.num_ingested += 1
    corpus.report = report
    return corpus
