"""Knowledge-graph extraction over text units.

Per-unit extraction produces partial (entity, relation) lists which are then
merged into one deduplicated, undirected-simple graph. Entities merge by
case-folded whitespace-normalized name; relations merge by unordered endpoint
pair with weights summed. The merge is order-insensitive and idempotent.

The mock backend path is rule based: entities are maximal runs of capitalized
tokens (stopwords excluded, name length >= 2), relations are sentence-level
co-occurrences. The remote path prompts for a line-oriented tab-separated
tuple format and parses it leniently.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .backend import BackendProfile, PromptRequest, complete, mock_override
from .corpus import TextUnit
from .errors import ExtractionParseError
from .templates import load_prompt

logger = logging.getLogger(__name__)

ENTITY_TYPES = ("person", "organization", "event", "object", "concept", "other")
MAX_DESCRIPTION_FRAGMENTS = 10
_DESC_SEP = " | "

# words that never start or continue a capitalized entity run
_STOPWORDS = frozenset(
    """the a an and or but nor in on at of to for with by from as is was are
    were be been it its this that these those he she they we you i me him her
    his their our your my mine yours theirs what when where which who whom
    how why not no yes if then than so such""".split()
)

_SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+")
_WORD = re.compile(r"[^\W_]+(?:['’-][^\W_]+)*", re.UNICODE)


@dataclass
class Entity:
    entity_id: str
    name: str
    entity_type: str
    description: str
    aliases: set[str] = field(default_factory=set)
    source_units: set[str] = field(default_factory=set)
    degree: int = 0


@dataclass
class Relation:
    relation_id: str
    source: str  # entity_id
    target: str  # entity_id
    description: str
    weight: float = 1.0
    source_units: set[str] = field(default_factory=set)


@dataclass
class KnowledgeGraph:
    entities: dict[str, Entity] = field(default_factory=dict)
    relations: dict[str, Relation] = field(default_factory=dict)
    unit_index: dict[str, tuple[set[str], set[str]]] = field(default_factory=dict)


@dataclass(frozen=True)
class GraphStats:
    entity_count: int
    relation_count: int
    community_count: int


def canonical_name(name: str) -> str:
    return " ".join(name.split()).casefold()


def entity_id_for(name: str) -> str:
    canon = canonical_name(name)
    return "e" + hashlib.sha1(canon.encode("utf-8")).hexdigest()[:12]


def relation_id_for(entity_a: str, entity_b: str) -> str:
    lo, hi = sorted((entity_a, entity_b))
    return "r" + hashlib.sha1(f"{lo}|{hi}".encode("utf-8")).hexdigest()[:12]


# --- per-unit extraction ---------------------------------------------------

def _capitalized_runs(sentence: str) -> list[str]:
    """Maximal runs of capitalized non-stopword tokens, joined with spaces."""
    runs: list[str] = []
    current: list[str] = []
    for word in _WORD.findall(sentence):
        if word[0].isupper() and word.lower() not in _STOPWORDS:
            current.append(word)
        else:
            if current:
                runs.append(" ".join(current))
            current = []
    if current:
        runs.append(" ".join(current))
    return [run for run in runs if len(run) >= 2]


def _rule_based_extract(unit: TextUnit) -> tuple[list[Entity], list[Relation]]:
    entities: dict[str, Entity] = {}
    pair_sentences: dict[tuple[str, str], list[str]] = {}

    for sentence in _SENTENCE_SPLIT.split(unit.text):
        sentence = sentence.strip()
        if not sentence:
            continue
        names = []
        seen_in_sentence = set()
        for name in _capitalized_runs(sentence):
            eid = entity_id_for(name)
            if eid not in entities:
                entities[eid] = Entity(
                    entity_id=eid,
                    name=name,
                    entity_type="other",
                    description=sentence,
                    source_units={unit.unit_id},
                )
            if eid not in seen_in_sentence:
                seen_in_sentence.add(eid)
                names.append(eid)
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                key = tuple(sorted((names[i], names[j])))
                pair_sentences.setdefault(key, []).append(sentence)

    relations = [
        Relation(
            relation_id=relation_id_for(a, b),
            source=a,
            target=b,
            description=sentences[0],
            weight=float(len(sentences)),
            source_units={unit.unit_id},
        )
        for (a, b), sentences in pair_sentences.items()
    ]
    return list(entities.values()), relations


def parse_extraction_reply(
    reply: str, unit_id: str
) -> tuple[list[Entity], list[Relation], int]:
    """Parse ENTITY/RELATION tab-separated lines; unknown lines are skipped.

    Returns (entities, relations, skipped_line_count).
    """
    entities: dict[str, Entity] = {}
    relations: dict[str, Relation] = {}
    skipped = 0
    for line in reply.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if parts[0] == "ENTITY" and len(parts) >= 4 and parts[1].strip():
            name = parts[1].strip()
            etype = parts[2].strip().lower()
            if etype not in ENTITY_TYPES:
                etype = "other"
            eid = entity_id_for(name)
            entities[eid] = Entity(
                entity_id=eid,
                name=name,
                entity_type=etype,
                description=parts[3].strip(),
                source_units={unit_id},
            )
        elif parts[0] == "RELATION" and len(parts) >= 4:
            src, tgt = parts[1].strip(), parts[2].strip()
            if not src or not tgt or canonical_name(src) == canonical_name(tgt):
                skipped += 1
                continue
            a, b = entity_id_for(src), entity_id_for(tgt)
            rid = relation_id_for(a, b)
            if rid in relations:
                relations[rid].weight += 1.0
            else:
                relations[rid] = Relation(
                    relation_id=rid,
                    source=a,
                    target=b,
                    description=parts[3].strip(),
                    source_units={unit_id},
                )
            # endpoints mentioned only in relations still become entities
            for name, eid in ((src, a), (tgt, b)):
                entities.setdefault(
                    eid,
                    Entity(
                        entity_id=eid,
                        name=name,
                        entity_type="other",
                        description=parts[3].strip(),
                        source_units={unit_id},
                    ),
                )
        else:
            skipped += 1
    return list(entities.values()), list(relations.values()), skipped


def extract_from_unit(
    unit: TextUnit, profile: BackendProfile
) -> tuple[list[Entity], list[Relation]]:
    """Extract typed entities and weighted relations from one text unit.

    Raises:
        ExtractionParseError: a remote/canned reply had zero parsable tuples.
            The rule-based mock path never raises; a unit without capitalized
            runs is legitimately barren and yields ([], []).
    """
    if profile.kind == "mock":
        req = PromptRequest(
            system_text="extract", user_text=unit.text, tag=f"extract:{unit.unit_id}"
        )
        override = mock_override(profile, req)
        if override is None:
            return _rule_based_extract(unit)
        reply = override
    else:
        prompt = load_prompt("extract_prompt").format(text=unit.text)
        req = PromptRequest(
            system_text="You extract knowledge-graph tuples from text.",
            user_text=prompt,
            temperature=0.0,
            max_output_tokens=2048,
            tag=f"extract:{unit.unit_id}",
        )
        reply = complete(profile, req).text

    entities, relations, skipped = parse_extraction_reply(reply, unit.unit_id)
    if skipped:
        logger.warning(
            "extraction: skipped %d unparsable line(s) for unit %s",
            skipped, unit.unit_id,
        )
    if not entities and not relations:
        raise ExtractionParseError(
            f"no parsable extraction tuples for unit {unit.unit_id}"
        )
    return entities, relations


# --- merge -----------------------------------------------------------------

def _merge_fragments(fragments: Iterable[str]) -> str:
    pieces: set[str] = set()
    for frag in fragments:
        for piece in frag.split(_DESC_SEP):
            piece = piece.strip()
            if piece:
                pieces.add(piece)
    kept = sorted(pieces)[:MAX_DESCRIPTION_FRAGMENTS]
    return _DESC_SEP.join(kept)


def merge_graph(
    partials: Sequence[tuple[list[Entity], list[Relation]]]
) -> KnowledgeGraph:
    """Merge partial extractions into one deduplicated graph.

    The result is independent of partial ordering: the canonical surface form
    is the lexicographically smallest observed form, descriptions are a
    sorted deduplicated fragment list, types are chosen by frequency with a
    lexicographic tiebreak, and relation weights are summed.
    """
    forms: dict[str, set[str]] = {}
    type_counts: dict[str, dict[str, int]] = {}
    ent_fragments: dict[str, set[str]] = {}
    ent_units: dict[str, set[str]] = {}

    rel_fragments: dict[str, set[str]] = {}
    rel_units: dict[str, set[str]] = {}
    rel_weight: dict[str, float] = {}
    rel_endpoints: dict[str, tuple[str, str]] = {}

    for entities, relations in partials:
        for ent in entities:
            eid = ent.entity_id or entity_id_for(ent.name)
            forms.setdefault(eid, set()).update({ent.name} | set(ent.aliases))
            counts = type_counts.setdefault(eid, {})
            counts[ent.entity_type] = counts.get(ent.entity_type, 0) + 1
            ent_fragments.setdefault(eid, set()).update(
                piece.strip()
                for piece in ent.description.split(_DESC_SEP)
                if piece.strip()
            )
            ent_units.setdefault(eid, set()).update(ent.source_units)
        for rel in relations:
            if rel.source == rel.target:
                continue
            lo, hi = sorted((rel.source, rel.target))
            rid = relation_id_for(lo, hi)
            rel_endpoints[rid] = (lo, hi)
            rel_weight[rid] = rel_weight.get(rid, 0.0) + rel.weight
            rel_fragments.setdefault(rid, set()).update(
                piece.strip()
                for piece in rel.description.split(_DESC_SEP)
                if piece.strip()
            )
            rel_units.setdefault(rid, set()).update(rel.source_units)

    graph = KnowledgeGraph()
    for eid, surface_forms in forms.items():
        name = min(surface_forms)
        counts = type_counts[eid]
        etype = min(counts, key=lambda t: (-counts[t], t))
        graph.entities[eid] = Entity(
            entity_id=eid,
            name=name,
            entity_type=etype,
            description=_merge_fragments(ent_fragments[eid]),
            aliases=surface_forms - {name},
            source_units=set(ent_units[eid]),
        )

    for rid, (lo, hi) in rel_endpoints.items():
        if lo not in graph.entities or hi not in graph.entities:
            # relations with unobserved endpoints are dropped; parse path
            # always emits endpoint entities so this is defensive only
            logger.warning("merge: dropping relation %s with missing endpoint", rid)
            continue
        graph.relations[rid] = Relation(
            relation_id=rid,
            source=lo,
            target=hi,
            description=_merge_fragments(rel_fragments[rid]),
            weight=rel_weight[rid],
            source_units=set(rel_units[rid]),
        )

    for rel in graph.relations.values():
        graph.entities[rel.source].degree += 1
        graph.entities[rel.target].degree += 1

    for ent in graph.entities.values():
        for unit_id in ent.source_units:
            graph.unit_index.setdefault(unit_id, (set(), set()))[0].add(ent.entity_id)
    for rel in graph.relations.values():
        for unit_id in rel.source_units:
            graph.unit_index.setdefault(unit_id, (set(), set()))[1].add(rel.relation_id)

    return graph


def graph_stats(graph: KnowledgeGraph, hierarchy: Optional[object]) -> GraphStats:
    """Entity/relation counts plus communities across all hierarchy levels."""
    community_count = 0
    if hierarchy is not None:
        community_count = len(hierarchy.communities)  # type: ignore[attr-defined]
    return GraphStats(
        entity_count=len(graph.entities),
        relation_count=len(graph.relations),
        community_count=community_count,
    )


# --- serialization ---------------------------------------------------------

def entity_to_record(ent: Entity) -> dict:
    return {
        "entity_id": ent.entity_id,
        "name": ent.name,
        "entity_type": ent.entity_type,
        "description": ent.description,
        "aliases": sorted(ent.aliases),
        "source_units": sorted(ent.source_units),
        "degree": ent.degree,
    }


def entity_from_record(rec: dict) -> Entity:
    return Entity(
        entity_id=rec["entity_id"],
        name=rec["name"],
        entity_type=rec["entity_type"],
        description=rec["description"],
        aliases=set(rec["aliases"]),
        source_units=set(rec["source_units"]),
        degree=rec["degree"],
    )


def relation_to_record(rel: Relation) -> dict:
    return {
        "relation_id": rel.relation_id,
        "source": rel.source,
        "target": rel.target,
        "description": rel.description,
        "weight": rel.weight,
        "source_units": sorted(rel.source_units),
    }


def relation_from_record(rec: dict) -> Relation:
    return Relation(
        relation_id=rec["relation_id"],
        source=rec["source"],
        target=rec["target"],
        description=rec["description"],
        weight=rec["weight"],
        source_units=set(rec["source_units"]),
    )


def graph_from_records(
    entity_records: Iterable[dict], relation_records: Iterable[dict]
) -> KnowledgeGraph:
    graph = KnowledgeGraph()
    for rec in entity_records:
        ent = entity_from_record(rec)
        graph.entities[ent.entity_id] = ent
    for rec in relation_records:
        rel = relation_from_record(rec)
        graph.relations[rel.relation_id] = rel
    for ent in graph.entities.values():
        for unit_id in ent.source_units:
            graph.unit_index.setdefault(unit_id, (set(), set()))[0].add(ent.entity_id)
    for rel in graph.relations.values():
        for unit_id in rel.source_units:
            graph.unit_index.setdefault(unit_id, (set(), set()))[1].add(rel.relation_id)
    return graph
