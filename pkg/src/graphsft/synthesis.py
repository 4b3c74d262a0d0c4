"""Query-answer pair synthesis.

Global pairs come from entities and relations: a type-specific query template
is expanded deterministically and the answer is built with a three-step
scaffold (restate the context, integrate the subject description, construct a
detailed 300-500 word answer with subheadings and bullets). Local pairs come
from text units enriched with their indexed entities and relations, asking
concrete detail-seeking questions answerable from the unit alone.

With the mock backend everything is deterministic, so yields obey
pairs_per_entity * |E| + pairs_per_relation * |R| global pairs and
pairs_per_unit * |U| local pairs, minus explicit skip counters.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .backend import BackendProfile, PromptRequest, complete, mock_override
from .community import CommunityHierarchy
from .corpus import TextUnit, count_tokens, tokenize
from .errors import BackendError
from .extraction import Entity, KnowledgeGraph, Relation
from .templates import load_patterns, load_prompt

logger = logging.getLogger(__name__)

SCOPE_LOCAL = "local"
SCOPE_GLOBAL = "global"
KIND_ENTITY = "entity"
KIND_RELATIONSHIP = "relationship"
KIND_TEXT_UNIT = "text_unit"

SCOPE_FOR_KIND = {
    KIND_ENTITY: SCOPE_GLOBAL,
    KIND_RELATIONSHIP: SCOPE_GLOBAL,
    KIND_TEXT_UNIT: SCOPE_LOCAL,
}

DEFAULT_PAIRS_PER_ENTITY = 3
DEFAULT_PAIRS_PER_RELATION = 2
DEFAULT_PAIRS_PER_UNIT = 2
DEFAULT_CONTEXT_BUDGET = 2000
MIN_ANSWER_WORDS = 50

_TYPED_ENTITY_TEMPLATES = {
    "person": "qt_entity_person",
    "organization": "qt_entity_organization",
    "event": "qt_entity_event",
    "object": "qt_entity_object",
    "concept": "qt_entity_concept",
}


@dataclass(frozen=True)
class QueryTemplate:
    template_id: str
    applies_to: str  # entity type, "relation", or "unit"
    patterns: tuple[str, ...]


@dataclass
class QueryAnswerPair:
    pair_id: str
    scope: str
    kind: str
    query: str
    answer: str
    provenance: set[str]
    query_tokens: int
    answer_tokens: int
    flags: set[str] = field(default_factory=set)

    def __post_init__(self) -> None:
        if SCOPE_FOR_KIND[self.kind] != self.scope:
            raise ValueError(f"kind {self.kind} cannot have scope {self.scope}")
        if not self.query or not self.answer:
            raise ValueError("query and answer must be nonempty")
        if not self.provenance:
            raise ValueError("provenance must be nonempty")


@dataclass
class SynthesisCounters:
    skipped: int = 0
    duplicate_queries: int = 0


def select_template(kind: str, entity_type: Optional[str] = None) -> QueryTemplate:
    """Type-specific template when one exists, else the generic fallback."""
    if kind == KIND_ENTITY:
        asset = _TYPED_ENTITY_TEMPLATES.get(entity_type or "", "qt_entity_generic")
        return QueryTemplate(asset, entity_type or "generic", load_patterns(asset))
    if kind == KIND_RELATIONSHIP:
        return QueryTemplate("qt_relationship", "relation", load_patterns("qt_relationship"))
    if kind == KIND_TEXT_UNIT:
        return QueryTemplate("qt_local_entity", "unit", load_patterns("qt_local_entity"))
    raise ValueError(f"unknown synthesis kind: {kind}")


def _pair_id(kind: str, source_id: str, template_id: str, index: int) -> str:
    raw = f"{kind}|{source_id}|{template_id}|{index}"
    return hashlib.sha1(raw.encode("utf-8")).hexdigest()[:16]


def is_answer_too_short(answer: str) -> bool:
    return len(answer.split()) < MIN_ANSWER_WORDS


# --- answers ---------------------------------------------------------------

def cot_answer(
    query: str,
    subject_description: str,
    context: str,
    profile: BackendProfile,
) -> str:
    """Build a structured answer via the three-step scaffold.

    The mock backend emits a deterministic three-section answer embedding the
    query, description, and context.
    """
    if not query:
        raise ValueError("query must be nonempty")
    prompt = load_prompt("cot_prompt").format(
        query=query,
        description=subject_description or "(none)",
        context=context or "(none)",
    )
    request = PromptRequest(
        system_text="You write thorough, well-structured answers.",
        user_text=prompt,
        temperature=0.0,
        max_output_tokens=1024,
        tag="cot_answer",
    )

    if profile.kind == "mock":
        reply = mock_override(profile, request)
        if reply is not None:
            return reply
        restatement = context.strip() or query
        detail = subject_description.strip() or "No further description is available."
        return (
            "## Context\n"
            f'In response to "{query}", the situation can be restated as '
            f"follows: {restatement[:400]}\n"
            "## Key Details\n"
            f"{detail}\n"
            "- The description above is integrated with the surrounding context.\n"
            "## Assessment\n"
            f"Taken together, the material above addresses the question "
            f'"{query}" by combining the restated context with the subject '
            "details into a single account."
        )

    return complete(profile, request).text


def _entity_context(
    entity: Entity,
    graph: KnowledgeGraph,
    hierarchy: Optional[CommunityHierarchy],
    budget: int,
) -> tuple[str, list[str]]:
    """Entity description + community summary + neighbor relation lines.

    Relations are added highest-weight-first until the token budget is
    reached; returns the context and the relation ids actually used.
    """
    parts: list[str] = []
    used = 0

    def try_add(piece: str) -> bool:
        nonlocal used
        cost = count_tokens(piece)
        if piece and used + cost <= budget:
            parts.append(piece)
            used += cost
            return True
        return False

    try_add(entity.description)
    if hierarchy is not None:
        for level in sorted(hierarchy.levels, reverse=True):
            com = hierarchy.community_of(entity.entity_id, level)
            if com is not None and com.summary:
                try_add(com.summary)
                break

    used_relations: list[str] = []
    neighbors = sorted(
        (
            rel
            for rel in graph.relations.values()
            if entity.entity_id in (rel.source, rel.target)
        ),
        key=lambda r: (-r.weight, r.relation_id),
    )
    for rel in neighbors:
        other_id = rel.target if rel.source == entity.entity_id else rel.source
        other = graph.entities[other_id].name
        if try_add(f"{entity.name} -- {other}: {rel.description}"):
            used_relations.append(rel.relation_id)
    return "\n".join(parts), used_relations


# --- global synthesis ------------------------------------------------------

def synthesize_entity_qa(
    entity: Entity,
    graph: KnowledgeGraph,
    hierarchy: Optional[CommunityHierarchy],
    profile: BackendProfile,
    pairs_per_entity: int = DEFAULT_PAIRS_PER_ENTITY,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    counters: Optional[SynthesisCounters] = None,
) -> list[QueryAnswerPair]:
    template = select_template(KIND_ENTITY, entity.entity_type)
    context, used_relations = _entity_context(entity, graph, hierarchy, context_budget)
    pairs: list[QueryAnswerPair] = []
    for i in range(pairs_per_entity):
        pattern = template.patterns[i % len(template.patterns)]
        query = pattern.format(name=entity.name, type=entity.entity_type)
        try:
            answer = cot_answer(query, entity.description, context, profile)
        except BackendError as exc:
            logger.warning("entity synthesis skipped (%s): %s", entity.name, exc)
            if counters:
                counters.skipped += 1
            continue
        pair = QueryAnswerPair(
            pair_id=_pair_id(KIND_ENTITY, entity.entity_id, template.template_id, i),
            scope=SCOPE_GLOBAL,
            kind=KIND_ENTITY,
            query=query,
            answer=answer,
            provenance={entity.entity_id, *used_relations},
            query_tokens=count_tokens(query),
            answer_tokens=count_tokens(answer),
        )
        if is_answer_too_short(answer):
            pair.flags.add("answer_too_short")
        pairs.append(pair)
    return pairs


def synthesize_relation_qa(
    relation: Relation,
    graph: KnowledgeGraph,
    hierarchy: Optional[CommunityHierarchy],
    profile: BackendProfile,
    pairs_per_relation: int = DEFAULT_PAIRS_PER_RELATION,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    counters: Optional[SynthesisCounters] = None,
) -> list[QueryAnswerPair]:
    source = graph.entities[relation.source]
    target = graph.entities[relation.target]
    template = select_template(KIND_RELATIONSHIP)
    context = "\n".join(
        piece
        for piece in (relation.description, source.description, target.description)
        if piece
    )
    pairs: list[QueryAnswerPair] = []
    for i in range(pairs_per_relation):
        pattern = template.patterns[i % len(template.patterns)]
        query = pattern.format(name=source.name, other=target.name)
        try:
            answer = cot_answer(query, relation.description, context, profile)
        except BackendError as exc:
            logger.warning(
                "relation synthesis skipped (%s): %s", relation.relation_id, exc
            )
            if counters:
                counters.skipped += 1
            continue
        pair = QueryAnswerPair(
            pair_id=_pair_id(
                KIND_RELATIONSHIP, relation.relation_id, template.template_id, i
            ),
            scope=SCOPE_GLOBAL,
            kind=KIND_RELATIONSHIP,
            query=query,
            answer=answer,
            provenance={relation.relation_id, relation.source, relation.target},
            query_tokens=count_tokens(query),
            answer_tokens=count_tokens(answer),
        )
        if is_answer_too_short(answer):
            pair.flags.add("answer_too_short")
        pairs.append(pair)
    return pairs


# --- local synthesis -------------------------------------------------------

def _unit_context(unit: TextUnit, graph: KnowledgeGraph, budget: int) -> str:
    entity_ids, relation_ids = graph.unit_index.get(unit.unit_id, (set(), set()))
    parts = [unit.text]
    used = count_tokens(unit.text)
    for eid in sorted(entity_ids):
        ent = graph.entities[eid]
        line = f"- {ent.name} ({ent.entity_type}): {ent.description}"
        cost = count_tokens(line)
        if used + cost > budget:
            break
        parts.append(line)
        used += cost
    for rid in sorted(relation_ids):
        rel = graph.relations[rid]
        line = (
            f"- {graph.entities[rel.source].name} -- "
            f"{graph.entities[rel.target].name}: {rel.description}"
        )
        cost = count_tokens(line)
        if used + cost > budget:
            break
        parts.append(line)
        used += cost
    return "\n".join(parts)


def _mock_local_queries(
    unit: TextUnit, graph: KnowledgeGraph, count: int
) -> list[str]:
    entity_ids, _ = graph.unit_index.get(unit.unit_id, (set(), set()))
    names = sorted(graph.entities[eid].name for eid in entity_ids)
    queries: list[str] = []
    if names:
        patterns = load_patterns("qt_local_entity")
        for i in range(count):
            name = names[i % len(names)]
            pattern = patterns[(i // len(names)) % len(patterns)]
            queries.append(pattern.format(name=name))
    else:
        # barren unit: derive queries from the raw text
        snippet = " ".join(t.text for t in tokenize(unit.text)[:8])
        patterns = load_patterns("qt_local_generic")
        for i in range(count):
            pattern = patterns[i % len(patterns)]
            queries.append(pattern.format(context=snippet))
    return queries


def _parse_query_lines(reply: str) -> list[str]:
    queries = []
    for line in reply.splitlines():
        line = line.strip()
        if line.startswith("Q:"):
            question = line[2:].strip()
            if question:
                queries.append(question)
    return queries


def synthesize_local_qa(
    unit: TextUnit,
    graph: KnowledgeGraph,
    profile: BackendProfile,
    pairs_per_unit: int = DEFAULT_PAIRS_PER_UNIT,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    counters: Optional[SynthesisCounters] = None,
) -> list[QueryAnswerPair]:
    """Detail-seeking pairs answerable from one enriched text unit."""
    context = _unit_context(unit, graph, context_budget)
    prompt = load_prompt("local_queries_prompt").format(
        count=pairs_per_unit, context=context
    )
    request = PromptRequest(
        system_text="You write concrete questions about a passage.",
        user_text=prompt,
        temperature=0.0,
        max_output_tokens=256,
        tag=f"local_queries:{unit.unit_id}",
    )

    queries: list[str]
    if profile.kind == "mock":
        reply = mock_override(profile, request)
        if reply is None:
            queries = _mock_local_queries(unit, graph, pairs_per_unit)
        else:
            queries = _parse_query_lines(reply)
    else:
        try:
            queries = _parse_query_lines(complete(profile, request).text)
        except BackendError as exc:
            logger.warning("local query generation failed (%s): %s", unit.unit_id, exc)
            if counters:
                counters.skipped += pairs_per_unit
            return []

    deduped: list[str] = []
    seen: set[str] = set()
    for query in queries:
        key = query.casefold()
        if key in seen:
            if counters:
                counters.duplicate_queries += 1
            continue
        seen.add(key)
        deduped.append(query)
    deduped = deduped[:pairs_per_unit]

    pairs: list[QueryAnswerPair] = []
    for i, query in enumerate(deduped):
        try:
            answer = cot_answer(query, "", context, profile)
        except BackendError as exc:
            logger.warning("local synthesis skipped (%s): %s", unit.unit_id, exc)
            if counters:
                counters.skipped += 1
            continue
        pair = QueryAnswerPair(
            pair_id=_pair_id(KIND_TEXT_UNIT, unit.unit_id, "local", i),
            scope=SCOPE_LOCAL,
            kind=KIND_TEXT_UNIT,
            query=query,
            answer=answer,
            provenance={unit.unit_id},
            query_tokens=count_tokens(query),
            answer_tokens=count_tokens(answer),
        )
        if is_answer_too_short(answer):
            pair.flags.add("answer_too_short")
        pairs.append(pair)
    return pairs


# --- orchestration ---------------------------------------------------------

MODES = ("local_only", "global_only", "both")


def run_synthesis(
    graph: KnowledgeGraph,
    hierarchy: Optional[CommunityHierarchy],
    units: Sequence[TextUnit],
    profile: BackendProfile,
    mode: str = "both",
    pairs_per_entity: int = DEFAULT_PAIRS_PER_ENTITY,
    pairs_per_relation: int = DEFAULT_PAIRS_PER_RELATION,
    pairs_per_unit: int = DEFAULT_PAIRS_PER_UNIT,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
    counters: Optional[SynthesisCounters] = None,
) -> list[QueryAnswerPair]:
    """Dispatch synthesis by mode with a stable output order.

    Entities, relations, and units are processed in id order; ``both`` is the
    concatenation of the global and local splits.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    pairs: list[QueryAnswerPair] = []
    if mode in ("global_only", "both"):
        if not graph.entities:
            logger.warning("global synthesis requested on an empty graph")
        for eid in sorted(graph.entities):
            pairs.extend(
                synthesize_entity_qa(
                    graph.entities[eid], graph, hierarchy, profile,
                    pairs_per_entity, context_budget, counters,
                )
            )
        for rid in sorted(graph.relations):
            pairs.extend(
                synthesize_relation_qa(
                    graph.relations[rid], graph, hierarchy, profile,
                    pairs_per_relation, context_budget, counters,
                )
            )
    if mode in ("local_only", "both"):
        for unit in sorted(units, key=lambda u: u.unit_id):
            pairs.extend(
                synthesize_local_qa(
                    unit, graph, profile, pairs_per_unit, context_budget, counters
                )
            )
    return pairs
