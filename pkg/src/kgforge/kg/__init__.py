"""Typed property-graph store with a pattern-query language, question-driven
triple retrieval, verbalization and snapshot persistence."""

from .query import NodePattern, PatternQuery, execute_query, parse_query, print_query
from .retrieve import RetrievalResult, retrieve_triples, verbalize
from .store import (
    Edge,
    Node,
    ResultTriple,
    TripleGraph,
    build_graph,
    load_snapshot,
    save_snapshot,
)

__all__ = [
    "Edge",
    "Node",
    "NodePattern",
    "PatternQuery",
    "ResultTriple",
    "RetrievalResult",
    "TripleGraph",
    "build_graph",
    "execute_query",
    "load_snapshot",
    "parse_query",
    "print_query",
    "retrieve_triples",
    "save_snapshot",
    "verbalize",
]
