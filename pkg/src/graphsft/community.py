"""Hierarchical community detection and summarization over the entity graph.

The hierarchy has four addressable levels: level 0 is the root (coarsest)
partition found by greedy modularity optimization on the whole graph, and
each deeper level re-runs the optimizer inside every community of the level
above. A community that cannot split repeats itself on the next level, so
all four levels are always populated and properly nested.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Mapping, Optional

import networkx as nx

from .backend import BackendProfile, PromptRequest, complete, mock_override
from .corpus import count_tokens
from .errors import BackendError, EmptyGraph
from .extraction import KnowledgeGraph
from .templates import load_prompt

logger = logging.getLogger(__name__)

DEFAULT_LEVELS = 4
DEFAULT_SUMMARY_BUDGET = 1000


@dataclass
class Community:
    community_id: str
    level: int  # 0 = root/coarsest
    members: set[str]
    parent: Optional[str] = None
    children: set[str] = field(default_factory=set)
    summary: Optional[str] = None


@dataclass
class CommunityHierarchy:
    communities: dict[str, Community] = field(default_factory=dict)
    levels: dict[int, set[str]] = field(default_factory=dict)

    def finest_level(self) -> int:
        return max(self.levels)

    def community_of(self, entity_id: str, level: int) -> Optional[Community]:
        for cid in self.levels.get(level, ()):
            if entity_id in self.communities[cid].members:
                return self.communities[cid]
        return None


def modularity(graph: KnowledgeGraph, partition: Mapping[str, object]) -> float:
    """Newman modularity of a labelled partition of the entity graph.

    Q = sum over blocks of (e_b / m - (d_b / 2m)^2), where m is the total
    edge weight, e_b the intra-block weight, and d_b the block degree sum.

    Raises:
        EmptyGraph: total edge weight is zero (except for the all-singleton
            partition of an edgeless graph, which is 0 by convention).
    """
    missing = set(graph.entities) - set(partition)
    if missing:
        raise ValueError(f"partition does not cover entities: {sorted(missing)[:3]}")

    m = sum(rel.weight for rel in graph.relations.values())
    if m == 0:
        blocks: dict[object, int] = {}
        for label in partition.values():
            blocks[label] = blocks.get(label, 0) + 1
        if all(size == 1 for size in blocks.values()):
            return 0.0
        raise EmptyGraph("graph has zero total edge weight")

    intra: dict[object, float] = {}
    degree: dict[object, float] = {}
    for rel in graph.relations.values():
        src_block = partition[rel.source]
        tgt_block = partition[rel.target]
        if src_block == tgt_block:
            intra[src_block] = intra.get(src_block, 0.0) + rel.weight
        degree[src_block] = degree.get(src_block, 0.0) + rel.weight
        degree[tgt_block] = degree.get(tgt_block, 0.0) + rel.weight

    q = 0.0
    for block in set(partition.values()):
        e_b = intra.get(block, 0.0)
        d_b = degree.get(block, 0.0)
        q += e_b / m - (d_b / (2 * m)) ** 2
    return q


def _to_nx(graph: KnowledgeGraph) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(sorted(graph.entities))
    for rel in sorted(graph.relations.values(), key=lambda r: r.relation_id):
        g.add_edge(rel.source, rel.target, weight=rel.weight)
    return g


_RESTARTS = 16


def _louvain_blocks(g: nx.Graph, seed: int) -> list[set[str]]:
    """Greedy modularity blocks, best of several deterministic restarts.

    Louvain's local moves can stall in mediocre optima on small graphs; a
    handful of restarts with seeds derived from the caller's seed keeps the
    result both near-optimal and reproducible. Blocks are ordered by their
    smallest member.
    """
    if g.number_of_nodes() == 0:
        return []
    if g.number_of_edges() == 0:
        return [{node} for node in sorted(g.nodes)]
    best_blocks: list[set[str]] | None = None
    best_score = float("-inf")
    for restart in range(_RESTARTS):
        blocks = nx.community.louvain_communities(
            g, weight="weight", seed=seed * _RESTARTS + restart
        )
        score = nx.community.modularity(g, blocks, weight="weight")
        ordered = sorted((set(b) for b in blocks), key=lambda b: min(b))
        # strictly-better keeps the first (lowest restart) among ties
        if score > best_score + 1e-12:
            best_score = score
            best_blocks = ordered
    assert best_blocks is not None
    return best_blocks


def _community_id(level: int, members: set[str]) -> str:
    digest = hashlib.sha1("|".join(sorted(members)).encode("utf-8")).hexdigest()
    return f"c{level}-{digest[:10]}"


def detect_communities(
    graph: KnowledgeGraph, max_levels: int = DEFAULT_LEVELS, seed: int = 0
) -> CommunityHierarchy:
    """Build a nested hierarchy of up to ``max_levels`` partition levels.

    Deterministic for a fixed (graph, seed); isolated entities become
    singleton communities at every level.
    """
    if not graph.entities:
        raise EmptyGraph("cannot detect communities on an empty graph")
    if max_levels < 1:
        raise ValueError("max_levels must be >= 1")

    g = _to_nx(graph)
    hierarchy = CommunityHierarchy()

    def add_community(level: int, members: set[str], parent: Optional[str]) -> str:
        cid = _community_id(level, members)
        hierarchy.communities[cid] = Community(
            community_id=cid, level=level, members=set(members), parent=parent
        )
        hierarchy.levels.setdefault(level, set()).add(cid)
        if parent is not None:
            hierarchy.communities[parent].children.add(cid)
        return cid

    frontier = [
        add_community(0, block, None) for block in _louvain_blocks(g, seed)
    ]
    for level in range(1, max_levels):
        next_frontier: list[str] = []
        for cid in frontier:
            members = hierarchy.communities[cid].members
            if len(members) == 1:
                next_frontier.append(add_community(level, members, cid))
                continue
            sub = nx.Graph(g.subgraph(members))
            blocks = _louvain_blocks(sub, seed)
            if len(blocks) <= 1:
                # cannot split: the level repeats its parent partition
                next_frontier.append(add_community(level, members, cid))
            else:
                for block in blocks:
                    next_frontier.append(add_community(level, block, cid))
        frontier = next_frontier
    return hierarchy


def partition_at_level(
    hierarchy: CommunityHierarchy, level: int
) -> dict[str, str]:
    """Entity id -> community id map for one level."""
    out: dict[str, str] = {}
    for cid in hierarchy.levels.get(level, ()):
        for eid in hierarchy.communities[cid].members:
            out[eid] = cid
    return out


# --- summarization ---------------------------------------------------------

def build_summary_context(
    community: Community, graph: KnowledgeGraph, token_budget: int
) -> str:
    """Assemble member and relation lines, largest-degree-first, within budget."""
    members = sorted(
        (graph.entities[eid] for eid in community.members),
        key=lambda e: (-e.degree, e.name),
    )
    intra = sorted(
        (
            rel
            for rel in graph.relations.values()
            if rel.source in community.members and rel.target in community.members
        ),
        key=lambda r: (-r.weight, r.relation_id),
    )

    lines: list[str] = []
    used = 0
    for ent in members:
        line = f"- {ent.name} ({ent.entity_type}): {ent.description}".rstrip(": ")
        cost = count_tokens(line)
        if used + cost > token_budget:
            break
        lines.append(line)
        used += cost
    for rel in intra:
        src = graph.entities[rel.source].name
        tgt = graph.entities[rel.target].name
        line = f"- {src} -- {tgt}: {rel.description}"
        cost = count_tokens(line)
        if used + cost > token_budget:
            break
        lines.append(line)
        used += cost
    return "\n".join(lines)


def summarize_community(
    community: Community,
    graph: KnowledgeGraph,
    profile: BackendProfile,
    token_budget: int = DEFAULT_SUMMARY_BUDGET,
) -> str:
    """Summarize one community; empty string on backend failure.

    ``token_budget`` bounds the whole prompt, so the member/relation context
    gets the budget minus the scaffold overhead.
    """
    scaffold = load_prompt("summary_prompt")
    overhead = count_tokens(scaffold.format(context=""))
    context = build_summary_context(
        community, graph, max(token_budget - overhead, 0)
    )
    prompt = scaffold.format(context=context or "(no details)")
    request = PromptRequest(
        system_text="You summarize groups of related entities.",
        user_text=prompt,
        temperature=0.0,
        max_output_tokens=512,
        tag=f"summary:{community.community_id}",
    )

    if profile.kind == "mock":
        reply = mock_override(profile, request)
        if reply is not None:
            return reply
        names = sorted(graph.entities[eid].name for eid in community.members)
        return (
            f"Community of {len(names)} entities: " + ", ".join(names) + "."
        )

    try:
        return complete(profile, request).text
    except BackendError as exc:
        logger.warning(
            "summary failed for %s: %s", community.community_id, exc
        )
        return ""


# --- serialization ---------------------------------------------------------

def community_to_record(com: Community) -> dict:
    return {
        "community_id": com.community_id,
        "level": com.level,
        "members": sorted(com.members),
        "parent": com.parent,
        "children": sorted(com.children),
        "summary": com.summary,
    }


def hierarchy_from_records(records: list[dict]) -> CommunityHierarchy:
    hierarchy = CommunityHierarchy()
    for rec in records:
        com = Community(
            community_id=rec["community_id"],
            level=rec["level"],
            members=set(rec["members"]),
            parent=rec["parent"],
            children=set(rec["children"]),
            summary=rec["summary"],
        )
        hierarchy.communities[com.community_id] = com
        hierarchy.levels.setdefault(com.level, set()).add(com.community_id)
    return hierarchy
