"""Okapi BM25 inverted index over a document corpus.

The indexed field of every document is ``title + " " + text``. Scoring uses
a non-negative IDF variant:

    idf(t)       = ln(1 + (N - df(t) + 0.5) / (df(t) + 0.5))
    score(q, d)  = sum over distinct query terms t of
                   idf(t) * tf(t, d) * (k1 + 1)
                   / (tf(t, d) + k1 * (1 - b + b * len(d) / avgdl))

so absent terms contribute exactly zero and no term is penalized below zero.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, CorpusStats, _atomic_write
from .errors import (
    ConfigError,
    CorruptIndexError,
    DocNotFoundError,
    EmptyCorpusError,
    VersionMismatchError,
)
from .tokenization import tokenize

INDEX_FORMAT_VERSION = 1

_META_FILE = "index_meta.json"
_POSTINGS_FILE = "postings.json"
_LENGTHS_FILE = "doc_lengths.json"
_CORPUS_DIR = "corpus"


@dataclass(frozen=True)
class IndexParams:
    """BM25 scoring parameters, serialized with the index they built.

    ``stopwords`` is off by default; when non-empty those tokens are dropped
    from both documents and queries before scoring.
    """

    k1: float = 1.2
    b: float = 0.75
    stopwords: tuple[str, ...] = ()

    def __post_init__(self):
        if self.k1 < 0:
            raise ConfigError(f"k1 must be >= 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ConfigError(f"b must be in [0, 1], got {self.b}")
        # Canonical form keeps serialization deterministic.
        object.__setattr__(self, "stopwords", tuple(sorted(set(self.stopwords))))


@dataclass(frozen=True)
class SearchHit:
    doc_id: str
    score: float
    rank: int


@dataclass
class InvertedIndex:
    """Postings, per-document lengths, and the stats BM25 normalizes against."""

    params: IndexParams
    postings: dict[str, list[tuple[str, int]]]
    doc_lengths: dict[str, int]
    stats: CorpusStats
    corpus: Corpus = field(repr=False)

    def df(self, term: str) -> int:
        """Number of documents containing ``term``."""
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        """Non-negative inverse document frequency of ``term``."""
        n, df = self.stats.num_docs, self.df(term)
        return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def _indexed_tokens(title: str, text: str, stopwords: frozenset[str]) -> list[str]:
    tokens = tokenize(title + " " + text)
    if stopwords:
        tokens = [t for t in tokens if t not in stopwords]
    return tokens


def build_index(corpus: Corpus, params: IndexParams | None = None) -> InvertedIndex:
    """Build an inverted index over every document in ``corpus``."""
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot index an empty corpus")
    params = params or IndexParams()
    stop = frozenset(params.stopwords)
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc in corpus:
        tokens = _indexed_tokens(doc.title, doc.text, stop)
        doc_lengths[doc.doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc.doc_id, tf))
    for term in postings:
        postings[term].sort(key=lambda entry: entry[0])
    total = sum(doc_lengths.values())
    stats = CorpusStats(
        num_docs=len(corpus),
        total_tokens=total,
        avg_doc_len=total / len(corpus),
    )
    return InvertedIndex(
        params=params, postings=postings, doc_lengths=doc_lengths,
        stats=stats, corpus=corpus,
    )


def bm25_score(index: InvertedIndex, query_tokens: list[str], doc_id: str) -> float:
    """BM25 score of one document for a tokenized query.

    Query terms are deduplicated before summation; terms absent from the
    document contribute zero.
    """
    if doc_id not in index.doc_lengths:
        raise DocNotFoundError(doc_id)
    k1, b = index.params.k1, index.params.b
    length = index.doc_lengths[doc_id]
    avgdl = index.stats.avg_doc_len
    score = 0.0
    for term in dict.fromkeys(query_tokens):
        tf = 0
        for posted_id, posted_tf in index.postings.get(term, ()):
            if posted_id == doc_id:
                tf = posted_tf
                break
        if tf == 0:
            continue
        norm = tf + k1 * (1.0 - b + b * length / avgdl)
        score += index.idf(term) * tf * (k1 + 1.0) / norm
    return score


def search(index: InvertedIndex, query: str, k: int) -> list[SearchHit]:
    """Top-``k`` documents for ``query`` by BM25 score.

    Only documents scoring strictly above zero are returned; ties break by
    ascending doc_id, so results are fully deterministic.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    stop = frozenset(index.params.stopwords)
    terms = [t for t in tokenize(query) if t not in stop]
    k1, b = index.params.k1, index.params.b
    avgdl = index.stats.avg_doc_len
    # Accumulate term contributions in query order, which is the same addition
    # order bm25_score uses, so both paths produce bit-identical floats.
    scores: dict[str, float] = {}
    for term in dict.fromkeys(terms):
        entries = index.postings.get(term)
        if not entries:
            continue
        idf = index.idf(term)
        for doc_id, tf in entries:
            norm = tf + k1 * (1.0 - b + b * index.doc_lengths[doc_id] / avgdl)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / norm
    scored = [(s, d) for d, s in scores.items() if s > 0.0]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    return [
        SearchHit(doc_id=doc_id, score=score, rank=rank)
        for rank, (score, doc_id) in enumerate(scored[:k], start=1)
    ]


def save_index(index: InvertedIndex, directory: str | Path) -> None:
    """Persist the index (and its corpus) so a reload reproduces scores exactly."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": INDEX_FORMAT_VERSION,
        "params": {
            "k1": index.params.k1,
            "b": index.params.b,
            "stopwords": list(index.params.stopwords),
        },
        "stats": {
            "num_docs": index.stats.num_docs,
            "total_tokens": index.stats.total_tokens,
            "avg_doc_len": index.stats.avg_doc_len,
        },
    }
    _atomic_write(directory / _META_FILE, json.dumps(meta, sort_keys=True, indent=2) + "\n")
    _atomic_write(
        directory / _POSTINGS_FILE,
        json.dumps(index.postings, sort_keys=True, ensure_ascii=False) + "\n",
    )
    _atomic_write(
        directory / _LENGTHS_FILE,
        json.dumps(index.doc_lengths, sort_keys=True, ensure_ascii=False) + "\n",
    )
    index.corpus.save(directory / _CORPUS_DIR)


def load_index(directory: str | Path) -> InvertedIndex:
    """Reload a persisted index directory built by :func:`save_index`."""
    directory = Path(directory)
    meta_path = directory / _META_FILE
    if not meta_path.is_file():
        raise CorruptIndexError(f"not an index directory: {directory}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        version = meta.get("format_version")
        if version != INDEX_FORMAT_VERSION:
            raise VersionMismatchError(
                f"index format version {version!r}, this code reads {INDEX_FORMAT_VERSION}"
            )
        raw_postings = json.loads((directory / _POSTINGS_FILE).read_text(encoding="utf-8"))
        raw_lengths = json.loads((directory / _LENGTHS_FILE).read_text(encoding="utf-8"))
        params = IndexParams(
            k1=meta["params"]["k1"],
            b=meta["params"]["b"],
            stopwords=tuple(meta["params"]["stopwords"]),
        )
        stats = CorpusStats(
            num_docs=meta["stats"]["num_docs"],
            total_tokens=meta["stats"]["total_tokens"],
            avg_doc_len=meta["stats"]["avg_doc_len"],
        )
        postings = {
            term: [(doc_id, tf) for doc_id, tf in entries]
            for term, entries in raw_postings.items()
        }
        doc_lengths = {doc_id: int(n) for doc_id, n in raw_lengths.items()}
    except VersionMismatchError:
        raise
    except (ValueError, KeyError, TypeError, OSError) as exc:
        raise CorruptIndexError(f"unreadable index at {directory}: {exc}") from exc
    corpus = Corpus.load(directory / _CORPUS_DIR)
    if set(doc_lengths) != set(corpus.doc_ids):
        raise CorruptIndexError("index doc ids do not match stored corpus")
    # Cheap integrity check: postings totals must reproduce doc lengths.
    totals: dict[str, int] = {doc_id: 0 for doc_id in doc_lengths}
    for entries in postings.values():
        for doc_id, tf in entries:
            if doc_id not in totals:
                raise CorruptIndexError(f"posting refers to unknown doc {doc_id!r}")
            totals[doc_id] += tf
    if totals != doc_lengths:
        raise CorruptIndexError("postings do not reproduce stored doc lengths")
    return InvertedIndex(
        params=params, postings=postings, doc_lengths=doc_lengths,
        stats=stats, corpus=corpus,
    )
