from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphsft.corpus import (
    Document,
    chunk_document,
    count_tokens,
    ingest_documents,
    tokenize,
)
from graphsft.errors import BadParams, EmptyCorpus
from oracles import ref_chunk_spans, ref_count_tokens


def doc_of(n_tokens: int) -> Document:
    text = " ".join(f"w{i}" for i in range(n_tokens))
    return Document("d", "d", "d", text, n_tokens)


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_hand_example(self):
        assert count_tokens("Hello, world!") == 4

    def test_punctuation_runs_are_single_tokens(self):
        # one lead run, core, one trail run
        assert count_tokens('"Hello!!!"') == 3
        assert count_tokens("...") == 1

    def test_against_reference_implementation(self):
        rng = random.Random(0)
        words = ["alpha", "beta,", '"gamma"', "d.", "(e)", "--", "f!?", "génial,"]
        text = " ".join(rng.choice(words) for _ in range(1000))
        assert count_tokens(text) == ref_count_tokens(text)

    @given(st.text(max_size=300))
    @settings(max_examples=200)
    def test_matches_reference_on_arbitrary_text(self, text):
        assert count_tokens(text) == ref_count_tokens(text)

    def test_spans_reconstruct_source(self):
        text = "Hello, world! (Again.)"
        for token in tokenize(text):
            assert text[token.start : token.end] == token.text


class TestIngest:
    def test_lexicographic_order(self, tmp_path):
        (tmp_path / "b.txt").write_text("bee", encoding="utf-8")
        (tmp_path / "a.txt").write_text("ay", encoding="utf-8")
        docs, errors = ingest_documents(tmp_path)
        assert not errors
        assert [d.doc_id.split("-", 1)[1] for d in docs] == ["a.txt", "b.txt"]

    def test_empty_directory_raises(self, tmp_path):
        with pytest.raises(EmptyCorpus):
            ingest_documents(tmp_path)

    def test_invalid_utf8_collected_not_fatal(self, tmp_path):
        (tmp_path / "good.txt").write_text("fine", encoding="utf-8")
        (tmp_path / "bad.txt").write_bytes(b"\xff\xfe broken")
        docs, errors = ingest_documents(tmp_path)
        assert len(docs) == 1 and docs[0].doc_id.endswith("good.txt")
        assert len(errors) == 1 and "bad.txt" in errors[0]

    def test_token_count_matches_rule(self, tmp_path):
        (tmp_path / "a.txt").write_text("Hello, world!", encoding="utf-8")
        docs, _ = ingest_documents(tmp_path)
        assert docs[0].token_count == 4

    def test_deterministic_ids(self, tmp_path):
        (tmp_path / "a.txt").write_text("same bytes", encoding="utf-8")
        first, _ = ingest_documents(tmp_path)
        second, _ = ingest_documents(tmp_path)
        assert first[0].doc_id == second[0].doc_id


class TestChunking:
    def test_empty_document(self):
        assert chunk_document(doc_of(0), 100, 20) == []

    def test_hand_enumerated_250_100_20(self):
        units = chunk_document(doc_of(250), 100, 20)
        spans = [(u.token_start, u.token_end) for u in units]
        assert spans == [(0, 100), (80, 180), (160, 250), (240, 250)]
        assert units[-1].token_count == 10

    def test_single_window(self):
        units = chunk_document(doc_of(50), 100, 20)
        assert len(units) == 1
        assert (units[0].token_start, units[0].token_end) == (0, 50)

    def test_bad_params(self):
        with pytest.raises(BadParams):
            chunk_document(doc_of(10), 20, 20)
        with pytest.raises(BadParams):
            chunk_document(doc_of(10), 20, -1)

    def test_overlap_exact_except_tail(self):
        units = chunk_document(doc_of(500), 120, 30)
        for prev, cur in zip(units, units[1:-1]):
            assert prev.token_end - cur.token_start == 30

    def test_text_reconstructed_from_char_spans(self):
        text = 'One two, three! Four "five" six seven eight nine ten.'
        doc = Document("d", "d", "d", text, count_tokens(text))
        units = chunk_document(doc, 4, 1)
        for unit in units:
            assert unit.text in text
        assert units[0].text.startswith("One")

    @given(
        st.integers(min_value=0, max_value=400),
        st.integers(min_value=1, max_value=150),
        st.integers(min_value=0, max_value=149),
    )
    @settings(max_examples=200)
    def test_matches_brute_force_enumerator(self, n, chunk, overlap):
        if not chunk > overlap:
            return
        units = chunk_document(doc_of(n), chunk, overlap)
        assert [(u.token_start, u.token_end) for u in units] == ref_chunk_spans(
            n, chunk, overlap
        )

    def test_determinism(self):
        doc = doc_of(333)
        first = chunk_document(doc, 60, 15)
        second = chunk_document(doc, 60, 15)
        assert first == second
