"""BM25 index construction, scoring, search semantics, and persistence."""

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimcheck.corpus import Corpus, Document
from claimcheck.errors import (
    ConfigError,
    CorruptIndexError,
    DocNotFoundError,
    EmptyCorpusError,
    VersionMismatchError,
)
from claimcheck.index import (
    INDEX_FORMAT_VERSION,
    IndexParams,
    bm25_score,
    build_index,
    load_index,
    save_index,
    search,
)

from conftest import make_corpus
from oracles import oracle_bm25_scores, oracle_ranking

# ---------------------------------------------------------------------------
# Construction and postings
# ---------------------------------------------------------------------------


def _counts_corpus() -> Corpus:
    return make_corpus(
        [
            ("a", "", "apple banana apple"),
            ("b", "", "banana cherry"),
            ("c", "", "apple"),
        ]
    )


def test_postings_record_term_frequencies_sorted_by_doc_id():
    index = build_index(_counts_corpus())
    assert index.postings["apple"] == [("a", 2), ("c", 1)]
    assert index.postings["banana"] == [("a", 1), ("b", 1)]
    assert index.postings["cherry"] == [("b", 1)]
    assert index.doc_lengths == {"a": 3, "b": 2, "c": 1}


def test_df_and_idf_follow_formula():
    index = build_index(_counts_corpus())
    assert index.df("apple") == 2
    assert index.df("missing") == 0
    n = 3
    for term, df in [("apple", 2), ("banana", 2), ("cherry", 1), ("missing", 0)]:
        expected = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
        assert index.idf(term) == pytest.approx(expected, abs=1e-15)
        assert index.idf(term) >= 0.0


def test_title_is_part_of_indexed_field():
    corpus = make_corpus(
        [
            ("t", "Zebra crossing", "completely unrelated body"),
            ("u", "Other", "plain words here"),
        ]
    )
    index = build_index(corpus)
    hits = search(index, "zebra", k=5)
    assert [h.doc_id for h in hits] == ["t"]


def test_title_and_text_tokens_share_one_frequency_count():
    corpus = make_corpus([("x", "apple", "apple pie"), ("y", "", "pie chart")])
    index = build_index(corpus)
    assert ("x", 2) in index.postings["apple"]


def test_empty_corpus_is_rejected():
    with pytest.raises(EmptyCorpusError):
        build_index(Corpus())


def test_params_validation():
    with pytest.raises(ConfigError):
        IndexParams(k1=-0.1)
    with pytest.raises(ConfigError):
        IndexParams(b=1.5)
    with pytest.raises(ConfigError):
        IndexParams(b=-0.01)
    params = IndexParams(stopwords=("the", "a", "the"))
    assert params.stopwords == ("a", "the")


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------


def test_single_doc_score_is_ln_four_thirds():
    # Hand derivation: with one document of length equal to avgdl and tf = 1,
    # the normalizer is (k1 + 1) in numerator and denominator, so the score
    # collapses to idf alone: ln(1 + 0.5 / 1.5) = ln(4/3).
    corpus = make_corpus([("d1", "", "hello world")])
    index = build_index(corpus)
    expected = math.log(4.0 / 3.0)
    assert bm25_score(index, ["hello"], "d1") == pytest.approx(expected, abs=1e-12)
    hits = search(index, "hello", k=3)
    assert len(hits) == 1
    assert hits[0].score == pytest.approx(expected, abs=1e-12)


def test_duplicate_query_terms_collapse():
    index = build_index(_counts_corpus())
    assert bm25_score(index, ["apple", "apple"], "a") == bm25_score(index, ["apple"], "a")
    assert search(index, "apple apple banana", k=5) == search(index, "apple banana", k=5)


def test_score_for_unknown_doc_raises():
    index = build_index(_counts_corpus())
    with pytest.raises(DocNotFoundError):
        bm25_score(index, ["apple"], "zzz")


def test_higher_tf_scores_higher_at_equal_length():
    corpus = make_corpus(
        [
            ("low", "", "x y y y"),
            ("high", "", "x x y y"),
        ]
    )
    index = build_index(corpus)
    assert bm25_score(index, ["x"], "high") > bm25_score(index, ["x"], "low")


def test_matches_brute_force_reference_on_random_corpora():
    # Expected values come from the no-index reference scorer.
    rng = random.Random(20240817)
    vocab = [f"w{i}" for i in range(40)]
    docs = [
        (
            f"doc{i:02d}",
            " ".join(rng.choices(vocab, k=rng.randint(1, 4))),
            " ".join(rng.choices(vocab, k=rng.randint(5, 40))),
        )
        for i in range(30)
    ]
    index = build_index(make_corpus(docs))
    queries = [" ".join(rng.choices(vocab, k=rng.randint(1, 6))) for _ in range(5)]
    for query in queries:
        expected = oracle_bm25_scores(docs, query)
        for doc_id, _, _ in docs:
            got = bm25_score(index, query.split(), doc_id)
            assert got == pytest.approx(expected[doc_id], abs=1e-9)
        expected_ranking = oracle_ranking(docs, query, k=10)
        hits = search(index, query, k=10)
        assert [h.doc_id for h in hits] == [doc_id for doc_id, _ in expected_ranking]
        for hit, (_, expected_score) in zip(hits, expected_ranking):
            assert hit.score == pytest.approx(expected_score, abs=1e-9)


# ---------------------------------------------------------------------------
# Search semantics
# ---------------------------------------------------------------------------


def test_search_returns_only_positive_scores():
    index = build_index(_counts_corpus())
    assert search(index, "zzz unseen terms", k=5) == []
    assert search(index, "", k=5) == []
    hits = search(index, "cherry", k=5)
    assert [h.doc_id for h in hits] == ["b"]


def test_search_k_truncates_and_ranks_contiguously():
    corpus = make_corpus([(f"d{i}", "", "apple " + "pad " * i) for i in range(6)])
    index = build_index(corpus)
    hits = search(index, "apple", k=3)
    assert len(hits) == 3
    assert [h.rank for h in hits] == [1, 2, 3]
    all_hits = search(index, "apple", k=50)
    assert len(all_hits) == 6
    assert hits == all_hits[:3]


def test_search_rejects_nonpositive_k():
    index = build_index(_counts_corpus())
    with pytest.raises(ConfigError):
        search(index, "apple", k=0)
    with pytest.raises(ConfigError):
        search(index, "apple", k=-2)


def test_ties_break_by_ascending_doc_id():
    corpus = make_corpus(
        [
            ("m", "", "apple pie"),
            ("a", "", "apple pie"),
            ("z", "", "apple pie"),
        ]
    )
    index = build_index(corpus)
    hits = search(index, "apple", k=5)
    assert [h.doc_id for h in hits] == ["a", "m", "z"]
    assert hits[0].score == hits[1].score == hits[2].score


def test_stopwords_are_ignored_in_documents_and_queries():
    texts = {
        "a": "the apple of the orchard",
        "b": "apple apple harvest",
    }
    stripped = {k: " ".join(t for t in v.split() if t not in {"the", "of"}) for k, v in texts.items()}
    with_stop = build_index(
        make_corpus([(k, "", v) for k, v in texts.items()]),
        IndexParams(stopwords=("the", "of")),
    )
    plain = build_index(make_corpus([(k, "", v) for k, v in stripped.items()]))
    for query in ("the apple", "apple of orchard", "harvest"):
        got = search(with_stop, query, k=5)
        want = search(plain, query, k=5)
        assert [(h.doc_id, h.score) for h in got] == [(h.doc_id, h.score) for h in want]


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

_corpus_strategy = st.lists(
    st.text(alphabet="abc d", min_size=1, max_size=30).filter(lambda s: s.strip()),
    min_size=1,
    max_size=8,
)


@settings(max_examples=50)
@given(_corpus_strategy, st.text(alphabet="abc d", max_size=12))
def test_search_invariants(texts, query):
    corpus = make_corpus([(f"d{i}", "", text) for i, text in enumerate(texts)])
    index = build_index(corpus)
    hits = search(index, query, k=4)
    assert len(hits) <= 4
    scores = [h.score for h in hits]
    assert all(s > 0 for s in scores)
    assert scores == sorted(scores, reverse=True)
    assert [h.rank for h in hits] == list(range(1, len(hits) + 1))
    for hit in hits:
        assert bm25_score(index, query.split(), hit.doc_id) == hit.score


@settings(max_examples=50)
@given(_corpus_strategy, st.sampled_from(["a", "b", "c", "d", "ab", "zz"]))
def test_idf_is_never_negative(texts, term):
    corpus = make_corpus([(f"d{i}", "", text) for i, text in enumerate(texts)])
    index = build_index(corpus)
    assert index.idf(term) >= 0.0


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def test_save_load_round_trip(band_corpus, tmp_path):
    index = build_index(band_corpus, IndexParams(k1=1.4, b=0.6, stopwords=("the",)))
    target = tmp_path / "idx"
    save_index(index, target)
    reloaded = load_index(target)
    assert reloaded.params == index.params
    assert reloaded.postings == index.postings
    assert reloaded.doc_lengths == index.doc_lengths
    assert reloaded.stats == index.stats
    for query in ("eme 15", "east of eden", "denmark town", "tide pools"):
        assert search(reloaded, query, k=4) == search(index, query, k=4)


def test_saved_files_are_deterministic(band_corpus, tmp_path):
    index = build_index(band_corpus)
    first, second = tmp_path / "one", tmp_path / "two"
    save_index(index, first)
    save_index(build_index(band_corpus), second)
    for name in ("index_meta.json", "postings.json", "doc_lengths.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    assert (first / "corpus" / "docs.jsonl").read_bytes() == (
        second / "corpus" / "docs.jsonl"
    ).read_bytes()


def test_load_rejects_future_version(band_corpus, tmp_path):
    index = build_index(band_corpus)
    target = tmp_path / "idx"
    save_index(index, target)
    meta_path = target / "index_meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    meta["format_version"] = INDEX_FORMAT_VERSION + 1
    meta_path.write_text(json.dumps(meta), encoding="utf-8")
    with pytest.raises(VersionMismatchError):
        load_index(target)


def test_load_rejects_truncated_postings(band_corpus, tmp_path):
    index = build_index(band_corpus)
    target = tmp_path / "idx"
    save_index(index, target)
    postings_path = target / "postings.json"
    raw = postings_path.read_text(encoding="utf-8")
    postings_path.write_text(raw[: len(raw) // 2], encoding="utf-8")
    with pytest.raises(CorruptIndexError):
        load_index(target)


def test_load_rejects_tampered_lengths(band_corpus, tmp_path):
    index = build_index(band_corpus)
    target = tmp_path / "idx"
    save_index(index, target)
    lengths_path = target / "doc_lengths.json"
    lengths = json.loads(lengths_path.read_text(encoding="utf-8"))
    first_key = next(iter(lengths))
    lengths[first_key] += 5
    lengths_path.write_text(json.dumps(lengths, sort_keys=True), encoding="utf-8")
    with pytest.raises(CorruptIndexError):
        load_index(target)


def test_load_rejects_missing_directory(tmp_path):
    with pytest.raises(CorruptIndexError):
        load_index(tmp_path / "nothing_here")
