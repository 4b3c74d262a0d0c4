"""Pipeline configuration: flat key=value file, validated, hashed.

The config hash covers every key that influences artifact content (not the
output directory), and is stamped into the manifest next to each artifact so
resumed runs can refuse stale upstream files.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .backend import BackendProfile


@dataclass(frozen=True)
class PipelineConfig:
    corpus_root: str = "corpus"
    corpus_glob: str = "*.txt"
    chunk_tokens: int = 600
    overlap_tokens: int = 100
    backend: str = "mock"
    endpoint_url: str = ""
    model_name: str = "mock"
    max_concurrent: int = 4
    max_retries: int = 3
    seed: int = 7
    levels: int = 4
    mode: str = "both"
    pairs_per_entity: int = 3
    pairs_per_relation: int = 2
    pairs_per_unit: int = 2
    context_budget: int = 2000
    summary_budget: int = 1000
    holdout_fraction: float = 0.0
    out_dir: str = "out"

    def validate(self) -> None:
        if not (self.chunk_tokens > self.overlap_tokens >= 0):
            raise ValueError("need chunk_tokens > overlap_tokens >= 0")
        if self.backend not in ("mock", "remote"):
            raise ValueError("backend must be mock or remote")
        if self.mode not in ("local_only", "global_only", "both"):
            raise ValueError("mode must be local_only, global_only, or both")
        if self.levels < 1:
            raise ValueError("levels must be >= 1")

    def backend_profile(self) -> BackendProfile:
        return BackendProfile(
            kind=self.backend,
            endpoint_url=self.endpoint_url,
            model_name=self.model_name,
            max_concurrent=self.max_concurrent,
            max_retries=self.max_retries,
            seed=self.seed,
        )

    def config_hash(self) -> str:
        # out_dir is placement, not content: exclude it so runs into
        # different directories stay byte-identical
        parts = [
            f"{f.name}={getattr(self, f.name)}"
            for f in fields(self)
            if f.name != "out_dir"
        ]
        return hashlib.sha256("\n".join(parts).encode("utf-8")).hexdigest()[:16]


_INT_FIELDS = {
    "chunk_tokens", "overlap_tokens", "max_concurrent", "max_retries",
    "seed", "levels", "pairs_per_entity", "pairs_per_relation",
    "pairs_per_unit", "context_budget", "summary_budget",
}
_FLOAT_FIELDS = {"holdout_fraction"}


def load_config(path: str | Path) -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    values: dict = {}
    for lineno, line in enumerate(Path(path).read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        if key in _INT_FIELDS:
            values[key] = int(value)
        elif key in _FLOAT_FIELDS:
            values[key] = float(value)
        else:
            values[key] = value
    config = PipelineConfig(**values)
    config.validate()
    return config


def with_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    updated = replace(
        config, **{k: v for k, v in overrides.items() if v is not None}
    )
    updated.validate()
    return updated
