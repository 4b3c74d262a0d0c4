"""SFT dataset assembly, statistics, serialization, and training config.

Assembly drops exact duplicate queries (case-folded), keeping the duplicate
with the smallest pair_id so the result is invariant under input ordering,
then sorts by pair_id. Files are emitted byte-stably: UTF-8, LF endings,
sorted JSON keys.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .errors import BadOverride, EmptyDataset
from .synthesis import QueryAnswerPair, is_answer_too_short

JSONL_FIELDS = (
    "pair_id", "scope", "kind", "query", "answer",
    "provenance", "query_tokens", "answer_tokens",
)


@dataclass
class SftDataset:
    dataset_id: str
    pairs: list[QueryAnswerPair]
    created_from: str  # config hash
    split_tags: Optional[dict[str, str]] = None


@dataclass(frozen=True)
class DatasetStats:
    query_count: int
    avg_query_tokens: float
    avg_answer_tokens: float
    count_by_scope: dict[str, int]
    count_by_kind: dict[str, int]


@dataclass(frozen=True)
class TrainConfig:
    """Fine-tuning configuration exported for the training stage."""

    base_model_name: str = "Qwen2-7B-Instruct"
    adapter_rank: int = 64
    learning_rate: float = 1e-4
    schedule: str = "cosine"
    epochs: int = 3
    eval_temperature: float = 0.0


def assemble(
    pairs: Sequence[QueryAnswerPair], config_hash: str = ""
) -> SftDataset:
    """Deduplicate by case-folded query text and order stably by pair_id."""
    by_query: dict[str, QueryAnswerPair] = {}
    for pair in pairs:
        key = pair.query.casefold()
        kept = by_query.get(key)
        if kept is None or pair.pair_id < kept.pair_id:
            by_query[key] = pair
    survivors = sorted(by_query.values(), key=lambda p: p.pair_id)
    if not survivors:
        raise EmptyDataset("zero pairs survived assembly")
    digest = hashlib.sha256(
        ("|".join(p.pair_id for p in survivors) + "|" + config_hash).encode("utf-8")
    ).hexdigest()[:16]
    return SftDataset(
        dataset_id=f"ds-{digest}", pairs=survivors, created_from=config_hash
    )


def stats(dataset: SftDataset) -> DatasetStats:
    """Arithmetic means of the stored token counts plus scope/kind tallies."""
    if not dataset.pairs:
        raise EmptyDataset("cannot compute stats of an empty dataset")
    n = len(dataset.pairs)
    by_scope: dict[str, int] = {}
    by_kind: dict[str, int] = {}
    for pair in dataset.pairs:
        by_scope[pair.scope] = by_scope.get(pair.scope, 0) + 1
        by_kind[pair.kind] = by_kind.get(pair.kind, 0) + 1
    return DatasetStats(
        query_count=n,
        avg_query_tokens=sum(p.query_tokens for p in dataset.pairs) / n,
        avg_answer_tokens=sum(p.answer_tokens for p in dataset.pairs) / n,
        count_by_scope=by_scope,
        count_by_kind=by_kind,
    )


def tag_holdout(
    dataset: SftDataset, fraction: float = 0.05, seed: int = 0
) -> SftDataset:
    """Seeded train/holdout tagging; a convenience for downstream sanity evals."""
    rng = random.Random(seed)
    ids = [p.pair_id for p in dataset.pairs]
    holdout_count = int(len(ids) * fraction)
    holdout = set(rng.sample(ids, holdout_count))
    dataset.split_tags = {
        pid: ("holdout" if pid in holdout else "train") for pid in ids
    }
    return dataset


# --- serialization ---------------------------------------------------------

def pair_to_record(pair: QueryAnswerPair) -> dict:
    return {
        "pair_id": pair.pair_id,
        "scope": pair.scope,
        "kind": pair.kind,
        "query": pair.query,
        "answer": pair.answer,
        "provenance": sorted(pair.provenance),
        "query_tokens": pair.query_tokens,
        "answer_tokens": pair.answer_tokens,
    }


def pair_from_record(rec: dict) -> QueryAnswerPair:
    pair = QueryAnswerPair(
        pair_id=rec["pair_id"],
        scope=rec["scope"],
        kind=rec["kind"],
        query=rec["query"],
        answer=rec["answer"],
        provenance=set(rec["provenance"]),
        query_tokens=rec["query_tokens"],
        answer_tokens=rec["answer_tokens"],
    )
    # flags are derived, not serialized; recompute so round-trips are identities
    if is_answer_too_short(pair.answer):
        pair.flags.add("answer_too_short")
    return pair


def emit_jsonl(dataset: SftDataset, path: str | Path) -> None:
    """One JSON object per pair; byte-stable for identical datasets."""
    path = Path(path)
    lines = [
        json.dumps(pair_to_record(pair), ensure_ascii=False, sort_keys=True)
        for pair in dataset.pairs
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")


def load_jsonl(path: str | Path, config_hash: str = "") -> SftDataset:
    pairs = [
        pair_from_record(json.loads(line))
        for line in Path(path).read_text("utf-8").splitlines()
        if line.strip()
    ]
    if not pairs:
        raise EmptyDataset(f"no pairs in {path}")
    digest = hashlib.sha256(
        ("|".join(p.pair_id for p in pairs) + "|" + config_hash).encode("utf-8")
    ).hexdigest()[:16]
    return SftDataset(
        dataset_id=f"ds-{digest}", pairs=pairs, created_from=config_hash
    )


# --- training config -------------------------------------------------------

_TRAIN_FIELDS = (
    "base_model_name", "adapter_rank", "learning_rate",
    "schedule", "epochs", "eval_temperature",
)


def export_train_config(
    path: str | Path, overrides: Optional[dict] = None
) -> TrainConfig:
    """Write the fine-tuning defaults as a flat key=value file.

    Raises:
        BadOverride: unknown key, non-positive rank/epochs, or bad schedule.
    """
    values = {f: getattr(TrainConfig, f) for f in _TRAIN_FIELDS}
    for key, value in (overrides or {}).items():
        if key not in values:
            raise BadOverride(f"unknown train config key: {key}")
        values[key] = value
    config = TrainConfig(**values)
    if config.adapter_rank <= 0:
        raise BadOverride("adapter_rank must be positive")
    if config.epochs < 1:
        raise BadOverride("epochs must be >= 1")
    if config.schedule != "cosine":
        raise BadOverride(f"unsupported schedule: {config.schedule}")

    lines = [f"{f}={getattr(config, f)}" for f in sorted(_TRAIN_FIELDS)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    return config


def load_train_config(path: str | Path) -> TrainConfig:
    values: dict[str, str] = {}
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return TrainConfig(
        base_model_name=values.get("base_model_name", TrainConfig.base_model_name),
        adapter_rank=int(values.get("adapter_rank", TrainConfig.adapter_rank)),
        learning_rate=float(values.get("learning_rate", TrainConfig.learning_rate)),
        schedule=values.get("schedule", TrainConfig.schedule),
        epochs=int(values.get("epochs", TrainConfig.epochs)),
        eval_temperature=float(
            values.get("eval_temperature", TrainConfig.eval_temperature)
        ),
    )
