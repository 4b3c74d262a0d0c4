"""Command-line entry points: train an adapter, answer queries with it."""

from __future__ import annotations

import json
import logging
import sys
from typing import Optional

import click

from .errors import FinetuneError
from .inference import answer_queries, load_adapter
from .training import train_adapter

logger = logging.getLogger(__name__)


def _fail(error: Exception) -> None:
    record = {"error": type(error).__name__, "detail": str(error)}
    click.echo(json.dumps(record), err=True)
    sys.exit(1)


@click.group()
def main() -> None:
    """LoRA fine-tuning glue for SFT query-answer datasets."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")


@main.command("train")
@click.option("--dataset", required=True, type=click.Path(exists=True),
              help="dataset.jsonl with query/answer records.")
@click.option("--train-config", "train_config", required=True,
              type=click.Path(exists=True), help="Flat key=value training config.")
@click.option("--out", required=True, help="Adapter output directory.")
@click.option("--max-steps", type=int, default=None, help="Cap total training steps.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--train-on-query", is_flag=True, default=False,
              help="Include query tokens in the loss (default: answer-only).")
def cmd_train(dataset: str, train_config: str, out: str,
              max_steps: Optional[int], seed: int, train_on_query: bool) -> None:
    """Fine-tune adapter weights on a dataset."""
    try:
        artifact = train_adapter(
            dataset, train_config, out,
            max_steps_override=max_steps,
            mask_query=not train_on_query,
            seed=seed,
        )
        click.echo(
            f"adapter written to {artifact.path} "
            f"(steps={artifact.manifest['steps']}, "
            f"final_loss={artifact.manifest['final_loss']:.4f})"
        )
    except FinetuneError as exc:
        _fail(exc)


@main.command("answer")
@click.option("--adapter", required=True, type=click.Path(exists=True),
              help="Trained adapter directory.")
@click.option("--queries", required=True, type=click.Path(exists=True),
              help="queries.jsonl with query_id/query records.")
@click.option("--out", required=True, help="Where to write answers.jsonl.")
@click.option("--max-new-tokens", type=int, default=48, show_default=True)
def cmd_answer(adapter: str, queries: str, out: str, max_new_tokens: int) -> None:
    """Greedy-decode an answer for every query."""
    try:
        artifact = load_adapter(adapter)
        count = answer_queries(artifact, queries, out, max_new_tokens)
        click.echo(f"answered {count} queries into {out}")
    except FinetuneError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
