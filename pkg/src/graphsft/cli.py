"""Command-line pipeline: ingest -> graph -> communities -> synthesize,
plus standalone stats and judge commands.

Stages hand off through flat files in the output directory and never
recompute upstream work. Every artifact is recorded in manifest.json with
the config hash that produced it; a command refuses to consume an upstream
artifact written under a different config.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import click

from . import community as community_mod
from . import corpus as corpus_mod
from . import dataset as dataset_mod
from . import extraction, judge, synthesis
from .config import PipelineConfig, load_config, with_overrides
from .errors import (
    ConfigMismatch,
    ExtractionParseError,
    MissingArtifact,
    PipelineError,
)

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


def _fail(error: Exception) -> None:
    record = {"error": type(error).__name__, "detail": str(error)}
    click.echo(json.dumps(record), err=True)
    sys.exit(1)


def _dump_jsonl(path: Path, records: list[dict]) -> None:
    lines = [json.dumps(r, ensure_ascii=False, sort_keys=True) for r in records]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def _read_jsonl(path: Path) -> list[dict]:
    return [
        json.loads(line)
        for line in path.read_text("utf-8").splitlines()
        if line.strip()
    ]


def _load_manifest(out: Path) -> dict:
    path = out / MANIFEST
    if path.exists():
        return json.loads(path.read_text("utf-8"))
    return {"artifacts": {}}


def _record_artifacts(out: Path, config_hash: str, *names: str) -> None:
    manifest = _load_manifest(out)
    for name in names:
        manifest["artifacts"][name] = config_hash
    manifest["artifacts"] = dict(sorted(manifest["artifacts"].items()))
    (out / MANIFEST).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _require_artifact(out: Path, config_hash: str, name: str) -> Path:
    path = out / name
    if not path.exists():
        raise MissingArtifact(name)
    recorded = _load_manifest(out)["artifacts"].get(name)
    if recorded is not None and recorded != config_hash:
        raise ConfigMismatch(
            f"{name} was produced under config {recorded}, current is {config_hash}"
        )
    return path


def _resolve_config(
    config_path: Optional[str], out: Optional[str], seed: Optional[int]
) -> PipelineConfig:
    config = load_config(config_path) if config_path else PipelineConfig()
    return with_overrides(config, out_dir=out, seed=seed)


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="Flat key=value pipeline config file.")
@click.option("--out", default=None, help="Output directory (overrides config).")
@click.option("--seed", type=int, default=None, help="Seed (overrides config).")
@click.pass_context
def main(ctx: click.Context, config_path: Optional[str], out: Optional[str],
         seed: Optional[int]) -> None:
    """Graph-grounded SFT data synthesis and evaluation pipeline."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = _resolve_config(config_path, out, seed)
    except (PipelineError, ValueError, OSError) as exc:
        _fail(exc)


def _out_dir(config: PipelineConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


@main.command("ingest")
@click.pass_context
def cmd_ingest(ctx: click.Context) -> None:
    """Read the corpus and write docs.jsonl + units.jsonl."""
    config: PipelineConfig = ctx.obj["config"]
    out = _out_dir(config)
    try:
        documents, errors = corpus_mod.ingest_documents(
            config.corpus_root, config.corpus_glob
        )
        for err in errors:
            logger.warning("ingest: %s", err)
        units = []
        for doc in documents:
            units.extend(
                corpus_mod.chunk_document(
                    doc, config.chunk_tokens, config.overlap_tokens
                )
            )
        _dump_jsonl(out / "docs.jsonl", [asdict(d) for d in documents])
        _dump_jsonl(out / "units.jsonl", [asdict(u) for u in units])
        _record_artifacts(out, config.config_hash(), "docs.jsonl", "units.jsonl")
        click.echo(f"ingested {len(documents)} documents into {len(units)} units")
    except PipelineError as exc:
        _fail(exc)


@main.command("graph")
@click.pass_context
def cmd_graph(ctx: click.Context) -> None:
    """Extract and merge the knowledge graph from units.jsonl."""
    config: PipelineConfig = ctx.obj["config"]
    out = _out_dir(config)
    try:
        units_path = _require_artifact(out, config.config_hash(), "units.jsonl")
        units = [corpus_mod.TextUnit(**rec) for rec in _read_jsonl(units_path)]
        profile = config.backend_profile()
        partials = []
        barren = 0
        for unit in units:
            try:
                partials.append(extraction.extract_from_unit(unit, profile))
            except ExtractionParseError:
                barren += 1
        graph = extraction.merge_graph(partials)
        _dump_jsonl(
            out / "entities.jsonl",
            [
                extraction.entity_to_record(graph.entities[eid])
                for eid in sorted(graph.entities)
            ],
        )
        _dump_jsonl(
            out / "relations.jsonl",
            [
                extraction.relation_to_record(graph.relations[rid])
                for rid in sorted(graph.relations)
            ],
        )
        _record_artifacts(
            out, config.config_hash(), "entities.jsonl", "relations.jsonl"
        )
        click.echo(
            f"graph: {len(graph.entities)} entities, {len(graph.relations)} "
            f"relations ({barren} barren units)"
        )
    except PipelineError as exc:
        _fail(exc)


def _load_graph(out: Path, config_hash: str) -> extraction.KnowledgeGraph:
    entities = _read_jsonl(_require_artifact(out, config_hash, "entities.jsonl"))
    relations = _read_jsonl(_require_artifact(out, config_hash, "relations.jsonl"))
    return extraction.graph_from_records(entities, relations)


@main.command("communities")
@click.option("--levels", type=int, default=None, help="Hierarchy levels (default 4).")
@click.pass_context
def cmd_communities(ctx: click.Context, levels: Optional[int]) -> None:
    """Detect and summarize the community hierarchy."""
    config: PipelineConfig = ctx.obj["config"]
    if levels is not None:
        config = with_overrides(config, levels=levels)
    out = _out_dir(config)
    try:
        graph = _load_graph(out, config.config_hash())
        hierarchy = community_mod.detect_communities(
            graph, max_levels=config.levels, seed=config.seed
        )
        profile = config.backend_profile()
        for cid in sorted(hierarchy.communities):
            com = hierarchy.communities[cid]
            com.summary = community_mod.summarize_community(
                com, graph, profile, config.summary_budget
            )
        _dump_jsonl(
            out / "communities.jsonl",
            [
                community_mod.community_to_record(hierarchy.communities[cid])
                for cid in sorted(hierarchy.communities)
            ],
        )
        _record_artifacts(out, config.config_hash(), "communities.jsonl")
        click.echo(
            f"communities: {len(hierarchy.communities)} across "
            f"{len(hierarchy.levels)} levels"
        )
    except PipelineError as exc:
        _fail(exc)


@main.command("synthesize")
@click.option("--mode", type=click.Choice(synthesis.MODES), default=None)
@click.option("--pairs-per-entity", type=int, default=None)
@click.option("--pairs-per-relation", type=int, default=None)
@click.option("--pairs-per-unit", type=int, default=None)
@click.pass_context
def cmd_synthesize(
    ctx: click.Context,
    mode: Optional[str],
    pairs_per_entity: Optional[int],
    pairs_per_relation: Optional[int],
    pairs_per_unit: Optional[int],
) -> None:
    """Generate the SFT dataset, its stats, and the training config."""
    config: PipelineConfig = ctx.obj["config"]
    config = with_overrides(
        config,
        mode=mode,
        pairs_per_entity=pairs_per_entity,
        pairs_per_relation=pairs_per_relation,
        pairs_per_unit=pairs_per_unit,
    )
    out = _out_dir(config)
    try:
        config_hash = config.config_hash()
        graph = _load_graph(out, config_hash)
        units = [
            corpus_mod.TextUnit(**rec)
            for rec in _read_jsonl(_require_artifact(out, config_hash, "units.jsonl"))
        ]
        hierarchy = community_mod.hierarchy_from_records(
            _read_jsonl(_require_artifact(out, config_hash, "communities.jsonl"))
        )
        counters = synthesis.SynthesisCounters()
        pairs = synthesis.run_synthesis(
            graph,
            hierarchy,
            units,
            config.backend_profile(),
            mode=config.mode,
            pairs_per_entity=config.pairs_per_entity,
            pairs_per_relation=config.pairs_per_relation,
            pairs_per_unit=config.pairs_per_unit,
            context_budget=config.context_budget,
            counters=counters,
        )
        sft = dataset_mod.assemble(pairs, config_hash)
        if config.holdout_fraction > 0:
            dataset_mod.tag_holdout(sft, config.holdout_fraction, config.seed)
        dataset_mod.emit_jsonl(sft, out / "dataset.jsonl")
        stats = dataset_mod.stats(sft)
        (out / "stats.json").write_text(
            json.dumps(asdict(stats), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        dataset_mod.export_train_config(out / "train_config")
        _record_artifacts(
            out, config_hash, "dataset.jsonl", "stats.json", "train_config"
        )
        click.echo(
            f"dataset: {stats.query_count} pairs "
            f"(skipped {counters.skipped}, duplicates {counters.duplicate_queries})"
        )
    except PipelineError as exc:
        _fail(exc)


@main.command("stats")
@click.pass_context
def cmd_stats(ctx: click.Context) -> None:
    """Print graph and dataset statistics from existing artifacts."""
    config: PipelineConfig = ctx.obj["config"]
    out = _out_dir(config)
    try:
        config_hash = config.config_hash()
        graph = _load_graph(out, config_hash)
        hierarchy = None
        if (out / "communities.jsonl").exists():
            hierarchy = community_mod.hierarchy_from_records(
                _read_jsonl(_require_artifact(out, config_hash, "communities.jsonl"))
            )
        gstats = extraction.graph_stats(graph, hierarchy)
        payload: dict = {"graph": asdict(gstats)}
        if (out / "dataset.jsonl").exists():
            sft = dataset_mod.load_jsonl(
                _require_artifact(out, config_hash, "dataset.jsonl")
            )
            payload["dataset"] = asdict(dataset_mod.stats(sft))
        click.echo(json.dumps(payload, indent=2, sort_keys=True))
    except PipelineError as exc:
        _fail(exc)


@main.command("judge")
@click.option("--queries", "queries_path", required=True, type=click.Path(exists=True),
              help="queries.jsonl: query_id, scope, query, reference.")
@click.option("--a", "a_path", required=True, type=click.Path(exists=True),
              help="answers_a.jsonl: query_id, answer.")
@click.option("--b", "b_path", required=True, type=click.Path(exists=True),
              help="answers_b.jsonl: query_id, answer.")
@click.option("--trials", type=int, default=1, show_default=True)
@click.option("--report", "report_path", default=None,
              help="Where to write report.json (default: out dir).")
@click.pass_context
def cmd_judge(
    ctx: click.Context,
    queries_path: str,
    a_path: str,
    b_path: str,
    trials: int,
    report_path: Optional[str],
) -> None:
    """Pairwise-judge answers A vs B and print the win-rate table."""
    config: PipelineConfig = ctx.obj["config"]
    try:
        answers_a = {r["query_id"]: r["answer"] for r in _read_jsonl(Path(a_path))}
        answers_b = {r["query_id"]: r["answer"] for r in _read_jsonl(Path(b_path))}
        items = []
        for rec in _read_jsonl(Path(queries_path)):
            qid = rec["query_id"]
            if qid not in answers_a or qid not in answers_b:
                logger.warning("judge: no answers for %s; skipping", qid)
                continue
            items.append(
                judge.EvalItem(
                    query_id=qid,
                    scope=rec["scope"],
                    query=rec["query"],
                    reference=rec["reference"],
                    answer_a=answers_a[qid],
                    answer_b=answers_b[qid],
                )
            )
        if not items:
            raise MissingArtifact("no judgeable items (check query_id alignment)")
        profile = config.backend_profile()
        verdicts = []
        for item in items:
            for metric in judge.METRICS:
                verdicts.extend(judge.judge_pair(item, metric, trials, profile))
        report = judge.aggregate(verdicts, items)
        target = Path(report_path) if report_path else _out_dir(config) / "report.json"
        target.write_text(judge.report_to_json(report) + "\n", encoding="utf-8")
        click.echo(judge.render_report(report))
    except PipelineError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
