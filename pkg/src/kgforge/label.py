"""Turn clusters into named intent entities.

Keywords per cluster come from class-based TF-IDF; the most representative
sentences are scored against those keywords; a rule walk over POS/dependency
tags extracts verbs, direct objects and verb modifiers; labels are the most
frequent extracted tokens. One cluster can yield several intents when
distinct (verb, object) pairs recur.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import requests

from .corpus import Utterance
from .errors import (
    EmptyCluster,
    EmptyCorpus,
    FormatError,
    MultipleRoots,
    NoExtractableElements,
    NoRoot,
    ProviderError,
)

# Dependency relations that extend the relevant-position closure from the
# root, and the auxiliary relations collected into `others`. The tagset
# never enumerates the auxiliary list, so both are configurable.
DEFAULT_CLOSURE_DEPRELS = frozenset({"dob", "prp", "vmod", "nmod", "pob", "det"})
DEFAULT_AUX_DEPRELS = frozenset({"nmod", "pob", "det"})


@dataclass
class TaggedToken:
    form: str
    pos: str
    head: int  # 1-based position of the head token; 0 is the synthetic root
    deprel: str


@dataclass
class SentenceElements:
    verbs: list[str] = field(default_factory=list)
    direct_objects: list[str] = field(default_factory=list)
    verb_modifiers: list[str] = field(default_factory=list)
    others: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not (self.verbs or self.direct_objects or self.verb_modifiers or self.others)


@dataclass
class IntentEntity:
    id: str
    label: str
    cluster_ids: list[int]
    support: int


def read_tagged_tsv(path: str | Path) -> list[list[TaggedToken]]:
    """CoNLL-like TSV (form, pos, head, deprel); blank line separates
    sentences, '#' lines are comments."""
    sentences: list[list[TaggedToken]] = []
    current: list[TaggedToken] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                continue
            if not line.strip():
                if current:
                    sentences.append(current)
                    current = []
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FormatError(f"expected 4 tab-separated fields, got {len(parts)}", lineno)
            form, pos, head, deprel = parts
            if not head.isdigit():
                raise FormatError(f"head must be a non-negative integer, got {head!r}", lineno)
            current.append(TaggedToken(form, pos, int(head), deprel))
    if current:
        sentences.append(current)
    return sentences


def write_tagged_tsv(path: str | Path, sentences: Sequence[Sequence[TaggedToken]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tokens in sentences:
            for t in tokens:
                fh.write(f"{t.form}\t{t.pos}\t{t.head}\t{t.deprel}\n")
            fh.write("\n")


class GatewayTagger:
    """POST /tag {"sentences": [...]} -> {"sentences": [[token, ...], ...]}."""

    def __init__(self, endpoint: str, max_batch: int = 64, timeout: float = 60.0):
        self.endpoint = endpoint.rstrip("/")
        self.max_batch = max_batch
        self.timeout = timeout

    def tag(self, sentences: Sequence[str]) -> list[list[TaggedToken]]:
        out: list[list[TaggedToken]] = []
        for start in range(0, len(sentences), self.max_batch):
            chunk = list(sentences[start : start + self.max_batch])
            try:
                resp = requests.post(
                    f"{self.endpoint}/tag", json={"sentences": chunk}, timeout=self.timeout
                )
            except requests.RequestException as exc:
                raise ProviderError(f"tagger gateway unreachable: {exc}") from exc
            if resp.status_code != 200:
                raise ProviderError(f"tagger gateway returned {resp.status_code}")
            for tokens in resp.json()["sentences"]:
                out.append(
                    [TaggedToken(t["form"], t["pos"], int(t["head"]), t["deprel"]) for t in tokens]
                )
        return out


def person_name_tagger(tagger: GatewayTagger):
    """Adapt the POS gateway into a person-name span finder for censoring:
    maximal runs of tokens tagged Np become full_name spans."""

    def find(sentence: str) -> list[tuple[int, int]]:
        (tokens,) = tagger.tag([sentence])
        spans: list[tuple[int, int]] = []
        cursor = 0
        positions: list[tuple[int, int]] = []
        for t in tokens:
            start = sentence.find(t.form, cursor)
            if start < 0:
                return []  # tokenization disagrees with the raw sentence
            positions.append((start, start + len(t.form)))
            cursor = start + len(t.form)
        run_start = None
        for (start, end), t in zip(positions, tokens):
            if t.pos == "Np":
                if run_start is None:
                    run_start = start
                run_end = end
            elif run_start is not None:
                spans.append((run_start, run_end))
                run_start = None
        if run_start is not None:
            spans.append((run_start, run_end))
        return spans

    return find


def _ngrams(tokens: Sequence[str], lo: int, hi: int) -> Iterable[str]:
    for n in range(lo, hi + 1):
        for i in range(len(tokens) - n + 1):
            yield " ".join(tokens[i : i + n])


def ctfidf(
    cluster_docs: Mapping[int, Sequence[str]],
    ngram_range: tuple[int, int] = (1, 1),
) -> dict[int, list[tuple[str, float]]]:
    """Class-based TF-IDF keyword tables.

    score(t, c) = tf(t, c) * ln(1 + A / f(t)) with A the mean token count
    per class and f(t) the total count of term t across all classes. Terms
    are word n-grams with length in ngram_range.
    """
    lo, hi = ngram_range
    if lo > hi or lo < 1:
        raise ValueError(f"bad ngram range {ngram_range}")
    if not cluster_docs:
        raise EmptyCorpus("no clusters to score")
    tf: dict[int, Counter[str]] = {
        c: Counter(_ngrams(tokens, lo, hi)) for c, tokens in cluster_docs.items()
    }
    total = Counter()
    for counts in tf.values():
        total.update(counts)
    mean_tokens = sum(len(tokens) for tokens in cluster_docs.values()) / len(cluster_docs)
    tables: dict[int, list[tuple[str, float]]] = {}
    for c, counts in tf.items():
        scored = [
            (term, count * math.log(1.0 + mean_tokens / total[term]))
            for term, count in counts.items()
        ]
        scored.sort(key=lambda kv: (-kv[1], kv[0]))
        tables[c] = scored
    return tables


def _underscore_norm(text: str) -> str:
    return text.replace("_", " ")


def representative_sentences(
    cluster_members: Sequence[Utterance],
    keywords: Sequence[tuple[str, float]],
    m: int = 7,
) -> list[Utterance]:
    """Top-m member sentences by summed scores of the keywords they contain
    (substring match on underscore-normalized text); ties by lower id."""
    if not cluster_members:
        raise EmptyCluster("cluster has no members")
    scored = []
    for utt in cluster_members:
        text = _underscore_norm(utt.text)
        score = sum(s for term, s in keywords if _underscore_norm(term) in text)
        scored.append((-score, utt.id, utt))
    scored.sort(key=lambda t: (t[0], t[1]))
    return [utt for _, _, utt in scored[:m]]


def relevant_positions(
    tokens: Sequence[TaggedToken],
    closure_deprels: frozenset[str] = DEFAULT_CLOSURE_DEPRELS,
) -> set[int]:
    """Fixed point of the relevant-position closure: seed with the root,
    then add any token whose head is in the set and whose deprel is in the
    closure list, until nothing changes. Positions are 1-based."""
    roots = [i + 1 for i, t in enumerate(tokens) if t.deprel == "root"]
    if not roots:
        raise NoRoot("sentence has no root token")
    if len(roots) > 1:
        raise MultipleRoots(f"sentence has {len(roots)} root tokens")
    n = len(tokens)
    for t in tokens:
        if not 0 <= t.head <= n:
            raise FormatError(f"head {t.head} out of range 0..{n}")
    relevant = {roots[0]}
    changed = True
    while changed:
        changed = False
        for i, t in enumerate(tokens):
            pos = i + 1
            if pos not in relevant and t.head in relevant and t.deprel in closure_deprels:
                relevant.add(pos)
                changed = True
    return relevant


def extract_sentence_elements(
    tokens: Sequence[TaggedToken],
    closure_deprels: frozenset[str] = DEFAULT_CLOSURE_DEPRELS,
    aux_deprels: frozenset[str] = DEFAULT_AUX_DEPRELS,
) -> SentenceElements:
    """Rule walk over one dependency-tagged sentence.

    The relevant-position set is seeded with the root and closed over
    tokens whose head is already in the set and whose deprel is in the
    closure list. Collection: root -> verbs; dob, and prp inside the set ->
    direct objects; vmod headed by the root or another prp/vmod -> verb
    modifiers; nmod headed by a direct object, plus auxiliary deprels
    touching the set -> others.
    """
    relevant = relevant_positions(tokens, closure_deprels)
    root_pos = next(i + 1 for i, t in enumerate(tokens) if t.deprel == "root")

    # Position sets are computed before collection so head references may
    # point forward in the sentence.
    prp_positions = {
        i + 1 for i, t in enumerate(tokens) if t.deprel == "prp" and i + 1 in relevant
    }
    vmod_positions: set[int] = set()
    changed = True
    while changed:
        changed = False
        for i, t in enumerate(tokens):
            pos = i + 1
            if (
                pos not in vmod_positions
                and t.deprel == "vmod"
                and t.head in ({root_pos} | prp_positions | vmod_positions)
            ):
                vmod_positions.add(pos)
                changed = True
    dob_positions = {i + 1 for i, t in enumerate(tokens) if t.deprel == "dob"} | prp_positions

    elements = SentenceElements()
    for i, t in enumerate(tokens):
        pos = i + 1
        if t.deprel == "root":
            elements.verbs.append(t.form)
        elif t.deprel == "dob":
            elements.direct_objects.append(t.form)
        elif t.deprel == "prp" and pos in relevant:
            elements.direct_objects.append(t.form)
        elif pos in vmod_positions:
            elements.verb_modifiers.append(t.form)
        elif t.deprel == "nmod" and t.head in dob_positions:
            elements.others.append(t.form)
        elif t.deprel in aux_deprels and (pos in relevant or t.head in relevant):
            elements.others.append(t.form)
    return elements


def _mode(forms: Sequence[str]) -> str | None:
    if not forms:
        return None
    counts = Counter(forms)
    return min(counts, key=lambda f: (-counts[f], f))


def label_cluster(reps: Sequence[Sequence[TaggedToken]], **extract_kwargs) -> list[str]:
    """Candidate labels for one cluster from its representative sentences.

    The primary label joins the top verb modifier (falling back to the top
    root verb) with the top direct object. Every (verb, object) pair seen in
    at least two representative sentences emits an additional label, which is
    how one cluster can yield multiple intents.
    """
    if not reps:
        raise NoExtractableElements("no representative sentences")
    per_sentence: list[SentenceElements] = []
    for tokens in reps:
        try:
            per_sentence.append(extract_sentence_elements(tokens, **extract_kwargs))
        except (NoRoot, MultipleRoots):
            per_sentence.append(SentenceElements())
    if all(e.is_empty() for e in per_sentence):
        raise NoExtractableElements("no elements extracted from any representative")

    verbs = [f for e in per_sentence for f in e.verbs]
    objects = [f for e in per_sentence for f in e.direct_objects]
    modifiers = [f for e in per_sentence for f in e.verb_modifiers]
    others = [f for e in per_sentence for f in e.others]

    action = _mode(modifiers) or _mode(verbs)
    obj = _mode(objects)
    if action and obj:
        primary = f"{action} {obj}"
    else:
        primary = action or obj or _mode(others)
    if primary is None:
        raise NoExtractableElements("no labelable elements")

    pair_counts: Counter[tuple[str, str]] = Counter()
    for e in per_sentence:
        s_action = (e.verb_modifiers or e.verbs or [None])[0]
        s_obj = (e.direct_objects or [None])[0]
        if s_action and s_obj:
            pair_counts[(s_action, s_obj)] += 1
    extras = [
        f"{a} {o}"
        for (a, o), c in sorted(pair_counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if c >= 2
    ]
    labels = [primary] + [x for x in extras if x != primary]
    return labels


def _normalize_label(label: str) -> str:
    return " ".join(label.lower().split())


def dedup_intents(
    labeled_clusters: Iterable[tuple[str, int, int]],
) -> list[IntentEntity]:
    """Merge exact-match normalized labels across clusters.

    Input triples are (label, cluster_id, support). Cluster ids are unioned
    and supports summed; output is ordered by (support desc, label).
    """
    merged: dict[str, dict] = {}
    for label, cluster_id, support in labeled_clusters:
        norm = _normalize_label(label)
        if not norm:
            continue
        entry = merged.setdefault(norm, {"clusters": set(), "support": 0})
        entry["clusters"].add(cluster_id)
        entry["support"] += support
    ordered = sorted(merged.items(), key=lambda kv: (-kv[1]["support"], kv[0]))
    return [
        IntentEntity(f"intent_{i:04d}", norm, sorted(entry["clusters"]), entry["support"])
        for i, (norm, entry) in enumerate(ordered)
    ]
