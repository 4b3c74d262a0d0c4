"""Greedy (temperature-0) batch inference over a queries file.

Answers are written as JSONL records with exactly the fields the pairwise
judge expects for an answers file: ``query_id`` and ``answer``. Malformed
query lines are skipped with a log line; well-formed ones always receive a
nonempty answer.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import torch

from .errors import MissingAdapter
from .model import ByteLM, ModelConfig, decode_bytes, encode_prompt
from .training import ADAPTER_FILE, MANIFEST_FILE, AdapterArtifact

logger = logging.getLogger(__name__)


def load_adapter(path: str | Path) -> AdapterArtifact:
    """Load a trained adapter directory back into an artifact handle."""
    path = Path(path)
    manifest_path = path / MANIFEST_FILE
    weights_path = path / ADAPTER_FILE
    if not manifest_path.exists() or not weights_path.exists():
        raise MissingAdapter(f"no adapter at {path}")
    try:
        manifest = json.loads(manifest_path.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise MissingAdapter(f"unreadable manifest at {manifest_path}") from exc
    return AdapterArtifact(
        path=path, base_model_name=manifest["base_model_name"], manifest=manifest
    )


def _build_model(artifact: AdapterArtifact) -> ByteLM:
    model_config = ModelConfig(**artifact.manifest["model_config"])
    model = ByteLM(model_config)
    try:
        state = torch.load(artifact.path / ADAPTER_FILE, weights_only=True)
        model.load_adapter_state(state)
    except (OSError, KeyError, RuntimeError) as exc:
        raise MissingAdapter(f"adapter weights not loadable: {exc}") from exc
    model.eval()
    return model


def answer_queries(
    adapter: AdapterArtifact,
    queries_path: str | Path,
    out_path: str | Path,
    max_new_tokens: int = 48,
) -> int:
    """Answer every well-formed query record; returns the number answered.

    Input records need ``query_id`` and ``query``; extra fields are ignored.
    Output lines are ``{"answer": ..., "query_id": ...}`` in input order.
    """
    model = _build_model(adapter)
    records = []
    for lineno, line in enumerate(
        Path(queries_path).read_text("utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            query_id, query = rec["query_id"], rec["query"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            logger.warning("query line %d skipped: %s", lineno, exc)
            continue
        prompt = encode_prompt(query, model.config.max_seq_len)
        generated = model.greedy_decode(prompt, max_new_tokens=max_new_tokens)
        answer = decode_bytes(generated).strip() or "(no output)"
        records.append({"query_id": query_id, "answer": answer})

    lines = [
        json.dumps(rec, ensure_ascii=False, sort_keys=True) for rec in records
    ]
    Path(out_path).write_text(
        "\n".join(lines) + ("\n" if lines else ""), encoding="utf-8"
    )
    return len(records)
