"""Adapter training over a query-answer JSONL dataset.

Each dataset pair maps to a chat-format example (user = query, assistant =
answer, no system prompt). Training follows the exported config: adapter
rank, learning rate, cosine schedule, epochs. By default the loss covers
only the answer tokens; set ``mask_query=False`` to also train on the query.

The trained artifact is a directory holding the adapter weights plus a
manifest recording the exact dataset file hash, the effective config, and
the final smoothed loss, so downstream consumers can verify what produced
the adapter.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import torch
from torch import nn

from .errors import ConfigMismatch, OutOfMemory
from .model import ByteLM, ModelConfig, encode_example

logger = logging.getLogger(__name__)

ADAPTER_FILE = "adapter.pt"
MANIFEST_FILE = "manifest.json"

_TRAIN_DEFAULTS = {
    "base_model_name": "Qwen2-7B-Instruct",
    "adapter_rank": 64,
    "learning_rate": 1e-4,
    "schedule": "cosine",
    "epochs": 3,
    "eval_temperature": 0.0,
}
_INT_KEYS = {"adapter_rank", "epochs"}
_FLOAT_KEYS = {"learning_rate", "eval_temperature"}


@dataclass(frozen=True)
class AdapterArtifact:
    path: Path  # directory with adapter weights + manifest
    base_model_name: str
    manifest: dict


def load_train_config(path: str | Path) -> dict:
    """Parse the flat key=value training config file."""
    values = dict(_TRAIN_DEFAULTS)
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#") or "=" not in line:
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in values:
            raise ConfigMismatch(f"unknown train config key: {key}")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        else:
            values[key] = value
    return values


def _validate(config: dict) -> None:
    if config["epochs"] < 1:
        raise ConfigMismatch("epochs must be >= 1")
    if config["adapter_rank"] < 1:
        raise ConfigMismatch("adapter_rank must be positive")
    if config["schedule"] != "cosine":
        raise ConfigMismatch(f"unsupported schedule: {config['schedule']}")
    if config["learning_rate"] <= 0:
        raise ConfigMismatch("learning_rate must be positive")


def _load_pairs(dataset_path: Path) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(
        dataset_path.read_text("utf-8").splitlines(), 1
    ):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pairs.append((rec["query"], rec["answer"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            logger.warning("dataset line %d skipped: %s", lineno, exc)
    if not pairs:
        raise ConfigMismatch(f"no usable pairs in {dataset_path}")
    return pairs


def _batch_tensors(
    examples: list[tuple[list[int], int]], mask_query: bool
) -> tuple[torch.Tensor, torch.Tensor]:
    """Pad to a common length; targets are -100 where the loss is masked."""
    width = max(len(ids) for ids, _ in examples)
    inputs = torch.zeros(len(examples), width, dtype=torch.long)
    targets = torch.full((len(examples), width), -100, dtype=torch.long)
    for row, (ids, answer_start) in enumerate(examples):
        inputs[row, : len(ids)] = torch.tensor(ids)
        # position i predicts token i+1
        first = answer_start if mask_query else 0
        for i in range(first, len(ids) - 1):
            targets[row, i] = ids[i + 1]
    return inputs, targets


def dataset_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def smoothed(losses: list[float], window: int = 10) -> list[float]:
    """Trailing-window moving average of the per-step losses."""
    out = []
    for i in range(len(losses)):
        lo = max(0, i - window + 1)
        out.append(sum(losses[lo : i + 1]) / (i + 1 - lo))
    return out


def train_adapter(
    dataset_path: str | Path,
    train_config_path: str | Path,
    out_dir: str | Path,
    max_steps_override: Optional[int] = None,
    overrides: Optional[dict] = None,
    mask_query: bool = True,
    batch_size: int = 8,
    seed: int = 0,
) -> AdapterArtifact:
    """Fine-tune the tiny base model's adapters on the dataset.

    The full-scale base model named in the config is a documented
    configuration only; desk-scale runs substitute the built-in byte-level
    model and record both names in the manifest.

    Raises:
        ConfigMismatch: invalid config, bad override, or unusable dataset.
        OutOfMemory: the training step exhausted memory.
    """
    dataset_path = Path(dataset_path)
    config = load_train_config(train_config_path)
    for key, value in (overrides or {}).items():
        if key not in config:
            raise ConfigMismatch(f"unknown train config key: {key}")
        config[key] = value
    _validate(config)
    if max_steps_override is not None and max_steps_override < 1:
        raise ConfigMismatch("max_steps_override must be >= 1")

    pairs = _load_pairs(dataset_path)
    model_config = ModelConfig(adapter_rank=config["adapter_rank"], seed=seed)
    model = ByteLM(model_config)
    examples = [
        encode_example(query, answer, model_config.max_seq_len)
        for query, answer in pairs
    ]

    batches = [
        examples[i : i + batch_size] for i in range(0, len(examples), batch_size)
    ]
    total_steps = config["epochs"] * len(batches)
    if max_steps_override is not None:
        total_steps = min(total_steps, max_steps_override)

    trainable = [p for p in model.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config["learning_rate"])
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer, T_max=max(total_steps, 1)
    )
    loss_fn = nn.CrossEntropyLoss(ignore_index=-100)

    torch.manual_seed(seed)
    losses: list[float] = []
    step = 0
    try:
        for _epoch in range(config["epochs"]):
            for batch in batches:
                if step >= total_steps:
                    break
                inputs, targets = _batch_tensors(batch, mask_query)
                logits = model(inputs)
                loss = loss_fn(
                    logits.reshape(-1, logits.shape[-1]), targets.reshape(-1)
                )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                scheduler.step()
                losses.append(float(loss.item()))
                step += 1
            if step >= total_steps:
                break
    except (torch.cuda.OutOfMemoryError, MemoryError) as exc:
        raise OutOfMemory(
            "training ran out of memory; use a smaller base model "
            "(d_model / n_layers) or reduce batch_size"
        ) from exc
    except RuntimeError as exc:
        if "out of memory" in str(exc).lower():
            raise OutOfMemory(
                "training ran out of memory; use a smaller base model "
                "(d_model / n_layers) or reduce batch_size"
            ) from exc
        raise

    if not losses or not all(math.isfinite(l) for l in losses):
        raise ConfigMismatch("training produced no finite loss values")

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.save(model.adapter_state(), out_dir / ADAPTER_FILE)
    manifest = {
        "dataset_sha256": dataset_sha256(dataset_path),
        "train_config": config,
        "model_config": model_config.to_dict(),
        "base_model_name": config["base_model_name"],
        "actual_base_model": "byte-lm-tiny",
        "mask_query": mask_query,
        "seed": seed,
        "steps": len(losses),
        "final_loss": smoothed(losses)[-1],
        "losses": losses,
    }
    (out_dir / MANIFEST_FILE).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(
        "trained %d steps, final smoothed loss %.4f", len(losses), manifest["final_loss"]
    )
    return AdapterArtifact(
        path=out_dir, base_model_name=config["base_model_name"], manifest=manifest
    )
