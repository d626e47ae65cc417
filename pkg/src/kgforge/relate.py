"""Relation discovery between intent and policy entities.

Two-stage retriever: embedding cosine with an inclusive acceptance threshold
selects candidates, then a tf-idf blend reranks them. Reranking reorders the
survivors but never resurrects pairs below the threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from ._text import TfidfStats, sparse_cosine
from .embed import embed_batch
from .errors import FormatError, UnknownId
from .label import IntentEntity

EMBED_TOKEN_LIMIT = 512  # whitespace tokens of policy text fed to the encoder


@dataclass
class PolicyEntity:
    id: str
    title: str
    body: str

    def __post_init__(self):
        if not self.title:
            raise ValueError("policy title must be non-empty")


@dataclass
class Relation:
    intent_id: str
    policy_id: str
    embed_score: float
    rerank_score: float
    rank: int


@dataclass
class RelationReport:
    n_intents: int
    n_policies: int
    n_relations: int
    n_non_associative: int
    n_overlooked: int | None = None

    def to_table(self) -> dict:
        """Field layout mirroring the relation-discovery result table."""
        table = {
            "entity_pair": ["Intent", "Policy"],
            "no_of_entities": [self.n_intents, self.n_policies],
            "discovered_relationships": self.n_relations,
            "non_associative_intents": self.n_non_associative,
        }
        if self.n_overlooked is not None:
            table["overlooked_intents"] = self.n_overlooked
        return table


def load_policies(path: str | Path) -> list[PolicyEntity]:
    policies: list[PolicyEntity] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not {"id", "title", "body"} <= obj.keys():
                raise FormatError("policy needs id, title and body", line=lineno)
            if obj["id"] in seen:
                raise FormatError(f"duplicate policy id {obj['id']!r}", line=lineno)
            seen.add(obj["id"])
            policies.append(PolicyEntity(obj["id"], obj["title"], obj["body"]))
    return policies


def load_gold(path: str | Path) -> list[tuple[str, str]]:
    """Gold mapping TSV: intent_id <tab> policy_id."""
    pairs: list[tuple[str, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise FormatError("expected intent_id<TAB>policy_id", lineno)
            pairs.append((parts[0], parts[1]))
    return pairs


def _policy_embed_text(policy: PolicyEntity) -> str:
    tokens = policy.body.split()[:EMBED_TOKEN_LIMIT]
    return f"{policy.title} {' '.join(tokens)}".strip()


def _policy_full_text(policy: PolicyEntity) -> str:
    return f"{policy.title} {policy.body}".strip()


def tfidf_cosine(query: str, doc: str, corpus_stats: TfidfStats) -> float:
    """Cosine between tf-idf vectors (raw tf, idf = ln((1+N)/(1+df)) + 1,
    L2-normalized); 0 when the texts share no corpus vocabulary."""
    return sparse_cosine(corpus_stats.vector(query), corpus_stats.vector(doc))


def build_policy_stats(policies: Sequence[PolicyEntity]) -> TfidfStats:
    return TfidfStats([_policy_full_text(p) for p in policies])


def discover_relations(
    intents: Sequence[IntentEntity],
    policies: Sequence[PolicyEntity],
    provider,
    threshold: float = 0.32,
    top_k: int = 10,
    alpha: float = 0.5,
) -> list[Relation]:
    """Stage 1 keeps, per intent, the top_k policies with cosine >= threshold
    (inclusive). Stage 2 assigns ranks by alpha*cosine + (1-alpha)*tf-idf
    cosine; acceptance is decided by stage-1 cosine only.
    """
    if not intents or not policies:
        raise ValueError("intents and policies must be non-empty")
    if not -1.0 < threshold < 1.0:
        raise ValueError("threshold must be in (-1, 1)")
    intent_vecs = embed_batch(provider, [i.label for i in intents])
    policy_vecs = embed_batch(provider, [_policy_embed_text(p) for p in policies])
    sims = intent_vecs @ policy_vecs.T  # rows are unit-norm, so this is cosine

    stats = build_policy_stats(policies)
    policy_texts = [_policy_full_text(p) for p in policies]

    relations: list[Relation] = []
    for ii, intent in enumerate(intents):
        candidates = [
            (float(sims[ii, pi]), policies[pi].id, pi)
            for pi in range(len(policies))
            if sims[ii, pi] >= threshold
        ]
        candidates.sort(key=lambda t: (-t[0], t[1]))
        survivors = candidates[:top_k]
        reranked = []
        for cos_score, pid, pi in survivors:
            rr = alpha * cos_score + (1.0 - alpha) * tfidf_cosine(
                intent.label, policy_texts[pi], stats
            )
            reranked.append((rr, pid, cos_score))
        reranked.sort(key=lambda t: (-t[0], t[1]))
        for rank, (rr, pid, cos_score) in enumerate(reranked, start=1):
            relations.append(Relation(intent.id, pid, cos_score, rr, rank))
    return relations


def relation_metrics(
    relations: Sequence[Relation],
    intents: Sequence[IntentEntity],
    policies: Sequence[PolicyEntity],
    gold: Sequence[tuple[str, str]] | None = None,
) -> RelationReport:
    intent_ids = {i.id for i in intents}
    policy_ids = {p.id for p in policies}
    for r in relations:
        if r.intent_id not in intent_ids:
            raise UnknownId(f"relation references unknown intent {r.intent_id!r}")
        if r.policy_id not in policy_ids:
            raise UnknownId(f"relation references unknown policy {r.policy_id!r}")
    linked = {r.intent_id for r in relations}
    n_non_associative = sum(1 for i in intents if i.id not in linked)
    n_overlooked = None
    if gold:
        for iid, pid in gold:
            if iid not in intent_ids:
                raise UnknownId(f"gold references unknown intent {iid!r}")
            if pid not in policy_ids:
                raise UnknownId(f"gold references unknown policy {pid!r}")
        n_overlooked = sum(1 for iid, _ in set(gold) if iid not in linked)
    return RelationReport(
        n_intents=len(intents),
        n_policies=len(policies),
        n_relations=len(relations),
        n_non_associative=n_non_associative,
        n_overlooked=n_overlooked,
    )
