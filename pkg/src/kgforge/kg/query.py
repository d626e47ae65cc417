"""Pattern-query language over the triple store.

Grammar (keywords case-insensitive; string literals single- or double-quoted):

    query := MATCH node [ -[:REL]-> node ] RETURN var (, var)*
    node  := ( var [:Label] [{ key:"value" (, key:"value")* }] )

Hand-rolled tokenizer and recursive-descent parser; errors carry the exact
character offset of the unexpected input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from ..errors import ParseError
from .store import ResultTriple, TripleGraph

_PUNCT = {
    "(": "LPAREN",
    ")": "RPAREN",
    ":": "COLON",
    ",": "COMMA",
    "{": "LBRACE",
    "}": "RBRACE",
    "-": "MINUS",
    "[": "LBRACKET",
    "]": "RBRACKET",
    ">": "GT",
}


class Token(NamedTuple):
    kind: str  # IDENT | STRING | punctuation kind | EOF
    value: str
    offset: int


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, i))
            i += 1
            continue
        if ch in "'\"":
            quote, start = ch, i
            i += 1
            chars: list[str] = []
            while i < n:
                c = text[i]
                if c == "\\" and i + 1 < n and text[i + 1] in ("\\", "'", '"'):
                    chars.append(text[i + 1])
                    i += 2
                    continue
                if c == quote:
                    break
                chars.append(c)
                i += 1
            if i >= n:
                raise ParseError(start, "a closing quote")
            tokens.append(Token("STRING", "".join(chars), start))
            i += 1
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(Token("IDENT", text[start:i], start))
            continue
        raise ParseError(i, "a valid token", ch)
    tokens.append(Token("EOF", "", n))
    return tokens


@dataclass
class NodePattern:
    var: str
    label: str | None = None
    props: tuple[tuple[str, str], ...] = ()


@dataclass
class PatternQuery:
    nodes: list[NodePattern]
    rel: str | None = None  # set when the query has an edge pattern
    returns: list[str] = field(default_factory=list)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _fail(self, expected: str):
        tok = self.current
        raise ParseError(tok.offset, expected, tok.value or "end of input")

    def expect(self, kind: str, expected: str) -> Token:
        tok = self.current
        if tok.kind != kind:
            self._fail(expected)
        self.pos += 1
        return tok

    def keyword(self, word: str):
        tok = self.current
        if tok.kind != "IDENT" or tok.value.upper() != word:
            self._fail(word)
        self.pos += 1

    def at_keyword(self, word: str) -> bool:
        tok = self.current
        return tok.kind == "IDENT" and tok.value.upper() == word

    def ident(self, expected: str) -> Token:
        tok = self.current
        if tok.kind != "IDENT" or tok.value.upper() in ("MATCH", "RETURN"):
            self._fail(expected)
        self.pos += 1
        return tok

    def node_pattern(self) -> NodePattern:
        self.expect("LPAREN", "'('")
        var = self.ident("a variable name").value
        label = None
        if self.current.kind == "COLON":
            self.pos += 1
            label = self.ident("a label").value
        props: list[tuple[str, str]] = []
        if self.current.kind == "LBRACE":
            self.pos += 1
            while True:
                key = self.ident("a property key").value
                self.expect("COLON", "':'")
                value = self.expect("STRING", "a string literal").value
                props.append((key, value))
                if self.current.kind == "COMMA":
                    self.pos += 1
                    continue
                break
            self.expect("RBRACE", "'}'")
        self.expect("RPAREN", "')'")
        return NodePattern(var, label, tuple(props))

    def parse(self) -> PatternQuery:
        self.keyword("MATCH")
        nodes = [self.node_pattern()]
        rel = None
        if self.current.kind == "MINUS":
            self.pos += 1
            self.expect("LBRACKET", "'['")
            self.expect("COLON", "':'")
            rel = self.ident("a relation name").value
            self.expect("RBRACKET", "']'")
            self.expect("MINUS", "'-'")
            self.expect("GT", "'>'")
            nodes.append(self.node_pattern())
        self.keyword("RETURN")
        returns = []
        bound = {n.var for n in nodes}
        while True:
            tok = self.ident("a variable name")
            if tok.value not in bound:
                raise ParseError(tok.offset, "a bound variable", tok.value)
            returns.append(tok.value)
            if self.current.kind == "COMMA":
                self.pos += 1
                continue
            break
        self.expect("EOF", "end of query")
        return PatternQuery(nodes, rel, returns)


def parse_query(text: str) -> PatternQuery:
    return _Parser(text).parse()


def _quote(value: str) -> str:
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _print_node(node: NodePattern) -> str:
    out = node.var
    if node.label:
        out += f":{node.label}"
    if node.props:
        inner = ", ".join(f"{k}:{_quote(v)}" for k, v in node.props)
        out += f" {{{inner}}}"
    return f"({out})"


def print_query(ast: PatternQuery) -> str:
    """Canonical text form; parse(print_query(ast)) is a fixed point."""
    out = f"MATCH {_print_node(ast.nodes[0])}"
    if ast.rel is not None:
        out += f"-[:{ast.rel}]->{_print_node(ast.nodes[1])}"
    out += " RETURN " + ", ".join(ast.returns)
    return out


def _node_matches(node, pattern: NodePattern) -> bool:
    if pattern.label is not None and node.label != pattern.label:
        return False
    for key, value in pattern.props:
        if node.prop(key).casefold() != value.casefold():
            return False
    return True


def execute_query(graph: TripleGraph, ast: PatternQuery) -> list[ResultTriple]:
    """Exhaustive matching: label filter, Unicode-casefolded property
    equality, and edge direction. Results are ordered by (src id, rel,
    dst id); node-only queries yield degenerate triples."""
    first = ast.nodes[0]
    if ast.rel is None:
        hits = [ResultTriple(n) for n in graph.nodes() if _node_matches(n, first)]
        hits.sort(key=ResultTriple.key)
        return hits
    second = ast.nodes[1]
    hits = []
    for edge in graph.edges():
        if edge.rel != ast.rel:
            continue
        src = graph.node(edge.src)
        dst = graph.node(edge.dst)
        if _node_matches(src, first) and _node_matches(dst, second):
            hits.append(ResultTriple(src, edge.rel, dst))
    hits.sort(key=ResultTriple.key)
    return hits
