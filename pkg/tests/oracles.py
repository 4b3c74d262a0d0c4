"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the stated rules, not
against the library code paths it checks.
"""

from __future__ import annotations

import itertools
import string
from typing import Iterable, Iterator

from graphsft.extraction import Entity, KnowledgeGraph, Relation


def ref_count_tokens(text: str) -> int:
    """Second implementation of the approximate token rule.

    Whitespace split; a leading punctuation run, the core, and a trailing
    punctuation run each count as one token.
    """
    total = 0
    for chunk in text.split():
        stripped = chunk.strip(string.punctuation)
        if not stripped:
            total += 1
            continue
        total += 1
        core_start = chunk.index(stripped)
        if core_start > 0:
            total += 1
        if core_start + len(stripped) < len(chunk):
            total += 1
    return total


def ref_chunk_spans(n_tokens: int, chunk: int, overlap: int) -> list[tuple[int, int]]:
    """Brute-force enumeration of window spans under the stride rule."""
    if n_tokens == 0:
        return []
    stride = chunk - overlap
    spans = []
    start = 0
    while start < n_tokens:
        spans.append((start, min(start + chunk, n_tokens)))
        start += stride
    return spans


def make_graph(
    nodes: Iterable[str], edges: Iterable[tuple[str, str]] | Iterable[tuple[str, str, float]]
) -> KnowledgeGraph:
    """Build a small KnowledgeGraph directly, node names as entity ids."""
    graph = KnowledgeGraph()
    for node in nodes:
        graph.entities[node] = Entity(
            entity_id=node,
            name=node,
            entity_type="other",
            description="",
            source_units={"u0"},
        )
    for edge in edges:
        a, b = edge[0], edge[1]
        weight = float(edge[2]) if len(edge) > 2 else 1.0
        rid = f"{min(a, b)}--{max(a, b)}"
        graph.relations[rid] = Relation(
            relation_id=rid,
            source=min(a, b),
            target=max(a, b),
            description="",
            weight=weight,
            source_units={"u0"},
        )
        graph.entities[a].degree += 1
        graph.entities[b].degree += 1
    return graph


def ref_modularity(graph: KnowledgeGraph, partition: dict[str, object]) -> float:
    """Pairwise-form modularity: (1/2m) sum_ij (A_ij - k_i k_j / 2m) delta."""
    nodes = sorted(graph.entities)
    adj = {node: dict.fromkeys(nodes, 0.0) for node in nodes}
    for rel in graph.relations.values():
        adj[rel.source][rel.target] += rel.weight
        adj[rel.target][rel.source] += rel.weight
    two_m = sum(sum(row.values()) for row in adj.values())
    if two_m == 0:
        return 0.0
    strength = {node: sum(adj[node].values()) for node in nodes}
    q = 0.0
    for i in nodes:
        for j in nodes:
            if partition[i] == partition[j]:
                q += adj[i][j] - strength[i] * strength[j] / two_m
    return q / two_m


def all_partitions(items: list[str]) -> Iterator[list[list[str]]]:
    """Every set partition of ``items`` (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for partial in all_partitions(rest):
        for i in range(len(partial)):
            yield partial[:i] + [[first] + partial[i]] + partial[i + 1 :]
        yield [[first]] + partial


def best_partition_modularity(graph: KnowledgeGraph) -> float:
    """Exhaustive-search optimal modularity; only for tiny graphs (<= ~10 nodes).

    Strengths and edges are precomputed once so each candidate partition is
    scored in O(n + m) rather than O(n^2); the formula is still evaluated
    from first principles, independent of the library code.
    """
    nodes = sorted(graph.entities)
    edges = [
        (rel.source, rel.target, rel.weight) for rel in graph.relations.values()
    ]
    m = sum(w for _, _, w in edges)
    strength = dict.fromkeys(nodes, 0.0)
    for a, b, w in edges:
        strength[a] += w
        strength[b] += w
    if m == 0:
        return 0.0
    best = float("-inf")
    for blocks in all_partitions(nodes):
        labels = {
            node: idx for idx, block in enumerate(blocks) for node in block
        }
        intra = dict.fromkeys(range(len(blocks)), 0.0)
        for a, b, w in edges:
            if labels[a] == labels[b]:
                intra[labels[a]] += w
        q = 0.0
        for idx, block in enumerate(blocks):
            d_b = sum(strength[node] for node in block)
            q += intra[idx] / m - (d_b / (2 * m)) ** 2
        best = max(best, q)
    return best


def two_triangles_bridge() -> KnowledgeGraph:
    """Two triangles {a,b,c} and {d,e,f} joined by the bridge c-d."""
    return make_graph(
        "abcdef",
        [("a", "b"), ("b", "c"), ("a", "c"), ("d", "e"), ("e", "f"), ("d", "f"),
         ("c", "d")],
    )


def disjoint_cliques(sizes: list[int]) -> KnowledgeGraph:
    nodes = []
    edges = []
    counter = 0
    for size in sizes:
        block = [f"n{counter + i}" for i in range(size)]
        counter += size
        nodes.extend(block)
        edges.extend(itertools.combinations(block, 2))
    return make_graph(nodes, edges)
