"""In-memory triple store with canonical JSONL snapshots.

Nodes are typed by label (Intent, Policy, Course, ...) and addressed by a
globally unique id; edges are (src, rel, dst) with string properties.
Duplicate insertions are rejected deterministically: the first write wins
and a warning is logged.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..errors import DanglingEndpoint, FormatError

log = logging.getLogger(__name__)

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


@dataclass(frozen=True)
class Node:
    label: str
    id: str
    props: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not _IDENT_RE.match(self.label):
            raise ValueError(f"bad node label {self.label!r}")
        if not self.id:
            raise ValueError("node id must be non-empty")

    @staticmethod
    def make(label: str, node_id: str, props: dict[str, str] | None = None) -> "Node":
        return Node(label, node_id, tuple(sorted((props or {}).items())))

    def prop(self, key: str, default: str = "") -> str:
        for k, v in self.props:
            if k == key:
                return v
        return default

    @property
    def display_name(self) -> str:
        return (self.prop("name") or self.id).replace("_", " ")


@dataclass(frozen=True)
class Edge:
    src: str
    rel: str
    dst: str
    props: tuple[tuple[str, str], ...] = ()

    def __post_init__(self):
        if not _IDENT_RE.match(self.rel):
            raise ValueError(f"bad relation {self.rel!r}")

    @staticmethod
    def make(src: str, rel: str, dst: str, props: dict[str, str] | None = None) -> "Edge":
        return Edge(src, rel, dst, tuple(sorted((props or {}).items())))


@dataclass
class ResultTriple:
    """A query/retrieval result; node-only results carry src alone."""

    src: Node
    rel: str | None = None
    dst: Node | None = None

    def key(self) -> tuple[str, str, str]:
        return (self.src.id, self.rel or "", self.dst.id if self.dst else "")


class TripleGraph:
    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._edges: dict[tuple[str, str, str], Edge] = {}
        self._out: dict[str, list[Edge]] = {}
        self._in: dict[str, list[Edge]] = {}
        self._by_label: dict[str, list[str]] = {}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TripleGraph)
            and self._nodes == other._nodes
            and self._edges == other._edges
        )

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def n_edges(self) -> int:
        return len(self._edges)

    def add_node(self, node: Node) -> bool:
        """Insert a node; duplicate ids keep the first node and warn."""
        if node.id in self._nodes:
            log.warning("duplicate node %r ignored (first wins)", node.id)
            return False
        self._nodes[node.id] = node
        self._by_label.setdefault(node.label, []).append(node.id)
        return True

    def add_edge(self, edge: Edge) -> bool:
        """Insert an edge; both endpoints must exist, duplicates warn."""
        if edge.src not in self._nodes:
            raise DanglingEndpoint(f"edge source {edge.src!r} not in graph")
        if edge.dst not in self._nodes:
            raise DanglingEndpoint(f"edge target {edge.dst!r} not in graph")
        key = (edge.src, edge.rel, edge.dst)
        if key in self._edges:
            log.warning("duplicate edge %r ignored (first wins)", key)
            return False
        self._edges[key] = edge
        self._out.setdefault(edge.src, []).append(edge)
        self._in.setdefault(edge.dst, []).append(edge)
        return True

    def node(self, node_id: str) -> Node | None:
        return self._nodes.get(node_id)

    def nodes(self, label: str | None = None) -> list[Node]:
        if label is None:
            return [self._nodes[i] for i in sorted(self._nodes)]
        return [self._nodes[i] for i in sorted(self._by_label.get(label, []))]

    def edges(self) -> list[Edge]:
        return [self._edges[k] for k in sorted(self._edges)]

    def out_edges(self, node_id: str) -> list[Edge]:
        return sorted(self._out.get(node_id, []), key=lambda e: (e.src, e.rel, e.dst))

    def in_edges(self, node_id: str) -> list[Edge]:
        return sorted(self._in.get(node_id, []), key=lambda e: (e.src, e.rel, e.dst))

    def triples(self) -> list[ResultTriple]:
        return [
            ResultTriple(self._nodes[e.src], e.rel, self._nodes[e.dst]) for e in self.edges()
        ]


def build_graph(
    intents: Sequence = (),
    policies: Sequence = (),
    relations: Sequence = (),
    extra_nodes: Iterable[Node] = (),
    extra_edges: Iterable[Edge] = (),
) -> TripleGraph:
    """Assemble the graph: one node per entity, one RELATED_POLICY edge per
    relation (carrying the stage-1 cosine), plus handcrafted extras."""
    graph = TripleGraph()
    for intent in intents:
        graph.add_node(
            Node.make(
                "Intent",
                intent.id,
                {"name": intent.label, "support": str(intent.support)},
            )
        )
    for policy in policies:
        graph.add_node(Node.make("Policy", policy.id, {"name": policy.title}))
    for node in extra_nodes:
        graph.add_node(node)
    for rel in relations:
        graph.add_edge(
            Edge.make(
                rel.intent_id,
                "RELATED_POLICY",
                rel.policy_id,
                {"score": repr(rel.embed_score), "rank": str(rel.rank)},
            )
        )
    for edge in extra_edges:
        graph.add_edge(edge)
    return graph


def _node_line(node: Node) -> str:
    return json.dumps(
        {"t": "n", "label": node.label, "id": node.id, "props": dict(node.props)},
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    )


def _edge_line(edge: Edge) -> str:
    return json.dumps(
        {"t": "e", "src": edge.src, "rel": edge.rel, "dst": edge.dst, "props": dict(edge.props)},
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
    )


def save_snapshot(graph: TripleGraph, path: str | Path) -> None:
    """Canonical JSONL: node lines sorted by (label, id), then edge lines
    sorted by (src, rel, dst). Saving the same graph always produces the
    same bytes."""
    with open(path, "w", encoding="utf-8") as fh:
        for node in sorted(graph.nodes(), key=lambda n: (n.label, n.id)):
            fh.write(_node_line(node) + "\n")
        for edge in graph.edges():
            fh.write(_edge_line(edge) + "\n")


def load_snapshot(path: str | Path) -> TripleGraph:
    graph = TripleGraph()
    pending_edges: list[tuple[int, Edge]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            kind = obj.get("t")
            try:
                if kind == "n":
                    graph.add_node(Node.make(obj["label"], obj["id"], obj.get("props", {})))
                elif kind == "e":
                    pending_edges.append(
                        (lineno, Edge.make(obj["src"], obj["rel"], obj["dst"], obj.get("props", {})))
                    )
                else:
                    raise FormatError(f"unknown record type {kind!r}", line=lineno)
            except (KeyError, ValueError) as exc:
                raise FormatError(f"bad record: {exc}", line=lineno) from exc
    for lineno, edge in pending_edges:
        try:
            graph.add_edge(edge)
        except DanglingEndpoint as exc:
            raise FormatError(str(exc), line=lineno) from exc
    return graph
