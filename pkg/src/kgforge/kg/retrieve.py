"""Question-driven triple retrieval and verbalization."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .._text import TfidfStats, sparse_cosine
from .store import Node, ResultTriple, TripleGraph

DEFAULT_TEMPLATES: dict[str, str] = {
    "RELATED_POLICY": "{src} is governed by {dst}.",
}


@dataclass
class RetrievalResult:
    triples: list[ResultTriple] = field(default_factory=list)
    anchors: list[str] = field(default_factory=list)  # anchor node ids
    no_anchor: bool = False


def _node_doc(node: Node) -> str:
    parts = [node.id, node.label] + [v for _, v in node.props]
    return " ".join(parts)


def retrieve_triples(graph: TripleGraph, question: str, k: int) -> RetrievalResult:
    """Score nodes by tf-idf overlap with the question; anchor on the top
    scorer(s) and return their 1-hop edges, deduplicated, truncated to k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    nodes = graph.nodes()
    if not nodes:
        return RetrievalResult(no_anchor=True)
    stats = TfidfStats([_node_doc(n) for n in nodes])
    qvec = stats.vector(question)
    scores = [sparse_cosine(qvec, stats.vector(_node_doc(n))) for n in nodes]
    best = max(scores, default=0.0)
    if best <= 0.0:
        return RetrievalResult(no_anchor=True)
    anchors = [n.id for n, s in zip(nodes, scores) if s == best]
    seen: set[tuple[str, str, str]] = set()
    triples: list[ResultTriple] = []
    for anchor in anchors:
        for edge in graph.out_edges(anchor) + graph.in_edges(anchor):
            key = (edge.src, edge.rel, edge.dst)
            if key in seen:
                continue
            seen.add(key)
            triples.append(ResultTriple(graph.node(edge.src), edge.rel, graph.node(edge.dst)))
    triples.sort(key=ResultTriple.key)
    return RetrievalResult(triples[:k], anchors, no_anchor=False)


def verbalize(
    triples: Sequence[ResultTriple],
    template_table: Mapping[str, str] | None = None,
) -> str:
    """Render triples as sentences, joined by single spaces.

    Known relations use their template; unknown ones fall back to
    "<src> <relation words> <dst>.". Underscores in names become spaces.
    """
    templates = DEFAULT_TEMPLATES if template_table is None else template_table
    sentences: list[str] = []
    for t in triples:
        src = t.src.display_name
        if t.rel is None or t.dst is None:
            sentences.append(f"{src}.")
            continue
        dst = t.dst.display_name
        template = templates.get(t.rel)
        if template is None:
            rel_words = t.rel.lower().replace("_", " ")
            sentences.append(f"{src} {rel_words} {dst}.")
        else:
            sentences.append(template.format(src=src, dst=dst))
    return " ".join(sentences)
