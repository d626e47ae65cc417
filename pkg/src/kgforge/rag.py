"""KG-augmented question answering.

A question is turned into a structured pattern query by the LLM (with a
keyword-retrieval fallback), matching triples are verbalized into facts, and
the final prompt grounds the LLM's answer in those facts. When retrieval
yields nothing the pipeline answers with a fixed refusal and never calls the
LLM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import requests

from .errors import LlmError, ParseError
from .kg import TripleGraph, execute_query, parse_query, retrieve_triples, verbalize

NO_FACTS_ANSWER = "insufficient information in knowledge graph"
RETRIEVE_PREFIX = "RETRIEVE "
_QUERY_ATTEMPTS = 2


def load_template(name: str) -> str:
    """Read a versioned prompt template bundled with the package."""
    return resources.files("kgforge.templates").joinpath(name).read_text(encoding="utf-8")


@dataclass
class QaTrace:
    question: str
    generated_query: str = ""
    triples: list[tuple[str, str, str]] = field(default_factory=list)
    facts_text: str = ""
    prompt: str = ""
    answer: str = ""

    def to_json(self) -> str:
        return json.dumps(
            {
                "question": self.question,
                "generated_query": self.generated_query,
                "triples": self.triples,
                "facts_text": self.facts_text,
                "prompt": self.prompt,
                "answer": self.answer,
            },
            ensure_ascii=False,
        )


class MockLlm:
    """Deterministic stand-in: echoes the facts block of an answer prompt."""

    kind = "mock"

    def __init__(self):
        self.calls = 0

    def complete(self, prompt: str, max_tokens: int = 256) -> str:
        self.calls += 1
        if "Facts:\n" in prompt:
            facts = prompt.split("Facts:\n", 1)[1]
            return facts.split("\n\nQuestion:", 1)[0]
        return ""


class HttpLlm:
    """POST /complete {"prompt", "max_tokens"} -> {"text"}."""

    kind = "http"

    def __init__(self, endpoint: str, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout

    def complete(self, prompt: str, max_tokens: int = 256) -> str:
        try:
            resp = requests.post(
                f"{self.endpoint}/complete",
                json={"prompt": prompt, "max_tokens": max_tokens},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise LlmError(f"llm unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise LlmError(f"llm returned {resp.status_code}")
        return resp.json()["text"]


def llm_from_spec(spec: str):
    if spec == "mock":
        return MockLlm()
    if spec.startswith("http:") or spec.startswith("https:"):
        return HttpLlm(spec)
    raise ValueError(f"unknown llm spec {spec!r}")


def generate_query(question: str, llm) -> str:
    """Ask the LLM for a pattern query; fall back to a keyword-retrieval
    directive ("RETRIEVE <question>") for mock clients or unparseable output."""
    if not question:
        raise ValueError("question must be non-empty")
    if llm.kind == "mock":
        return RETRIEVE_PREFIX + question
    template = load_template("query_prompt_v1.txt")
    prompt = template.format(question=question)
    for _ in range(_QUERY_ATTEMPTS):
        completion = llm.complete(prompt)
        first_line = completion.strip().splitlines()[0].strip() if completion.strip() else ""
        if first_line:
            try:
                parse_query(first_line)
            except ParseError:
                continue
            return first_line
    return RETRIEVE_PREFIX + question


def answer(question: str, graph: TripleGraph, llm, k: int = 8) -> QaTrace:
    """generate_query -> (execute_query | retrieve_triples) -> verbalize ->
    grounded prompt -> LLM completion; the full trace is returned."""
    trace = QaTrace(question=question)
    try:
        trace.generated_query = generate_query(question, llm)
    except LlmError as exc:
        raise LlmError(str(exc), trace=trace) from exc

    if trace.generated_query.startswith(RETRIEVE_PREFIX):
        result = retrieve_triples(graph, trace.generated_query[len(RETRIEVE_PREFIX) :], k)
        triples = result.triples
    else:
        triples = execute_query(graph, parse_query(trace.generated_query))[:k]
    trace.triples = [t.key() for t in triples]
    trace.facts_text = verbalize(triples)
    template = load_template("answer_prompt_v1.txt")
    trace.prompt = template.format(facts=trace.facts_text, question=question)
    if not triples:
        trace.answer = NO_FACTS_ANSWER
        return trace
    try:
        trace.answer = llm.complete(trace.prompt)
    except LlmError as exc:
        raise LlmError(str(exc), trace=trace) from exc
    return trace
