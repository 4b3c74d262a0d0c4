from __future__ import annotations

import json
from pathlib import Path

import pytest

from finetune_glue.errors import MissingAdapter
from finetune_glue.inference import answer_queries, load_adapter
from finetune_glue.training import train_adapter


@pytest.fixture
def adapter(tmp_path, small_dataset, train_config_file):
    train_adapter(
        small_dataset, train_config_file, tmp_path / "adapter",
        max_steps_override=2, seed=0,
    )
    return load_adapter(tmp_path / "adapter")


def write_queries(path: Path, n: int) -> Path:
    lines = [
        json.dumps({"query_id": f"q{i}", "query": f"What does fixture item {i} describe?"})
        for i in range(n)
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadAdapter:
    def test_missing_directory(self, tmp_path):
        with pytest.raises(MissingAdapter):
            load_adapter(tmp_path / "nowhere")

    def test_corrupt_manifest(self, tmp_path, adapter):
        (adapter.path / "manifest.json").write_text("{broken", encoding="utf-8")
        with pytest.raises(MissingAdapter):
            load_adapter(adapter.path)

    def test_round_trip_fields(self, adapter):
        assert adapter.base_model_name == "Qwen2-7B-Instruct"
        assert adapter.manifest["actual_base_model"] == "byte-lm-tiny"


class TestAnswerQueries:
    def test_five_queries_five_aligned_answers(self, tmp_path, adapter):
        queries = write_queries(tmp_path / "q.jsonl", 5)
        out = tmp_path / "answers.jsonl"
        assert answer_queries(adapter, queries, out) == 5
        records = [
            json.loads(line) for line in out.read_text("utf-8").splitlines()
        ]
        assert [r["query_id"] for r in records] == [f"q{i}" for i in range(5)]
        assert all(set(r) == {"query_id", "answer"} for r in records)
        assert all(r["answer"] for r in records)

    def test_greedy_decoding_is_deterministic(self, tmp_path, adapter):
        queries = write_queries(tmp_path / "q.jsonl", 3)
        first, second = tmp_path / "a1.jsonl", tmp_path / "a2.jsonl"
        answer_queries(adapter, queries, first)
        answer_queries(adapter, queries, second)
        assert first.read_bytes() == second.read_bytes()

    def test_malformed_line_skipped_others_answered(self, tmp_path, adapter):
        path = tmp_path / "q.jsonl"
        path.write_text(
            json.dumps({"query_id": "q0", "query": "First?"}) + "\n"
            + "not json at all\n"
            + json.dumps({"query": "missing id"}) + "\n"
            + json.dumps({"query_id": "q1", "query": "Second?"}) + "\n",
            encoding="utf-8",
        )
        out = tmp_path / "answers.jsonl"
        assert answer_queries(adapter, path, out) == 2
        records = [json.loads(l) for l in out.read_text("utf-8").splitlines()]
        assert [r["query_id"] for r in records] == ["q0", "q1"]
