"""Corpus ingestion: sentence splitting, word segmentation, PII censoring.

Raw documents come from several university systems (help desk, portals, LMS)
as free text. This module turns them into clean, anonymized, word-segmented
utterances that the rest of the pipeline consumes.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .errors import FormatError, TaggerUnavailable

SOURCES = ("faq_helpdesk", "portal_web", "lms", "other")

# Titles and honorifics that end with a period but do not end a sentence.
DEFAULT_ABBREVIATIONS = frozenset(
    {"TS.", "ThS.", "GS.", "PGS.", "BS.", "KS.", "CN.", "Tr.", "Mr.", "Mrs.", "Dr.", "St."}
)

_TERMINALS = ".!?…"

# A callable mapping a sentence to character spans of person names.
NameTagger = Callable[[str], Sequence[tuple[int, int]]]


@dataclass
class RawDocument:
    id: str
    source: str
    text: str


@dataclass
class Redaction:
    kind: str
    start: int  # byte offset into the original sentence (UTF-8)
    end: int


@dataclass
class Utterance:
    id: str
    doc_id: str
    index_in_doc: int
    text: str
    redactions: list[Redaction] = field(default_factory=list)


@dataclass
class CensorRule:
    kind: str  # full_name | student_id | phone_number | email
    method: str  # regex | tagger
    pattern: str
    replacement: str

    def __post_init__(self):
        allowed = {"[full_name]", "[student_id]", "[phone_number]", "[email]"}
        if self.replacement not in allowed:
            raise ValueError(f"replacement must be one of {sorted(allowed)}")


# Phone numbers are matched before student ids: a 10-digit run contains
# 7-digit substrings, so the lookaround guards alone are not enough.
def default_rules(include_ner: bool = True) -> list[CensorRule]:
    rules = [
        CensorRule("phone_number", "regex", r"(?<!\d)\d{10}(?!\d)", "[phone_number]"),
        CensorRule("student_id", "regex", r"(?<!\d)\d{7}(?!\d)", "[student_id]"),
        CensorRule(
            "email",
            "regex",
            r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}",
            "[email]",
        ),
    ]
    if include_ner:
        rules.append(CensorRule("full_name", "tagger", "", "[full_name]"))
    return rules


def split_sentences(text: str, abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS) -> list[str]:
    """Split text into sentences at terminal punctuation (. ! ? …) or newlines.

    Decimal points and known abbreviations do not split. Whitespace-only
    fragments are dropped; sentence text keeps its terminal punctuation.
    """
    sentences: list[str] = []
    buf: list[str] = []
    i, n = 0, len(text)

    def flush():
        s = "".join(buf).strip()
        buf.clear()
        if s:
            sentences.append(s)

    while i < n:
        ch = text[i]
        if ch == "\n":
            flush()
            i += 1
            continue
        buf.append(ch)
        if ch in _TERMINALS:
            nxt = text[i + 1] if i + 1 < n else ""
            if ch == "." and i > 0 and text[i - 1].isdigit() and nxt.isdigit():
                i += 1
                continue
            if ch == ".":
                last_token = "".join(buf).rsplit(None, 1)[-1] if "".join(buf).strip() else ""
                if last_token in abbreviations:
                    i += 1
                    continue
            # Consume the whole punctuation run ("?!", "...") before deciding.
            while i + 1 < n and text[i + 1] in _TERMINALS:
                i += 1
                buf.append(text[i])
            nxt = text[i + 1] if i + 1 < n else ""
            # Only a boundary when followed by whitespace or end of text;
            # dots inside tokens (emails, URLs) never split.
            if nxt == "" or nxt.isspace():
                flush()
        i += 1
    flush()
    return sentences


_STRIP_CHARS = "".join(
    c for c in "!\"#$%&'()*+,-./:;<=>?@[\\]^`{|}~…“”‘’«»" if c != "_"
)


def _token_core(token: str) -> str:
    return token.strip(_STRIP_CHARS).casefold()


def segment_words(sentence: str, lexicon: Iterable[str]) -> str:
    """Join multi-syllable lexicon words with underscores, leftmost-longest.

    Lexicon entries are space-separated syllable sequences of length >= 2;
    matching is case-insensitive and ignores punctuation glued to token
    edges, but the original characters are preserved in the output.
    """
    index: dict[tuple[str, ...], None] = {}
    max_len = 0
    for entry in lexicon:
        syllables = tuple(s.casefold() for s in entry.split())
        if len(syllables) < 2:
            raise ValueError(f"lexicon entry {entry!r} has fewer than 2 syllables")
        index[syllables] = None
        max_len = max(max_len, len(syllables))
    if not index:
        return sentence

    tokens = sentence.split(" ")
    cores = [_token_core(t) for t in tokens]
    out: list[str] = []
    i = 0
    while i < len(tokens):
        matched = False
        for length in range(min(max_len, len(tokens) - i), 1, -1):
            if tuple(cores[i : i + length]) in index:
                out.append("_".join(tokens[i : i + length]))
                i += length
                matched = True
                break
        if not matched:
            out.append(tokens[i])
            i += 1
    return " ".join(out)


def anonymize(
    sentence: str,
    rules: Sequence[CensorRule] | None = None,
    tagger: NameTagger | None = None,
) -> tuple[str, list[Redaction]]:
    """Replace PII matches with their rule's replacement term.

    Rules are applied in list order against the original sentence; a span
    claimed by an earlier rule is skipped by later ones. Redaction spans are
    byte offsets into the original (UTF-8) sentence.
    """
    if rules is None:
        rules = default_rules(include_ner=tagger is not None)

    claimed: list[tuple[int, int, str, str]] = []  # (start, end, kind, replacement)

    def overlaps(a: int, b: int) -> bool:
        return any(not (b <= s or e <= a) for s, e, _, _ in claimed)

    for rule in rules:
        if rule.method == "regex":
            for m in re.finditer(rule.pattern, sentence):
                if not overlaps(m.start(), m.end()):
                    claimed.append((m.start(), m.end(), rule.kind, rule.replacement))
        elif rule.method == "tagger":
            if tagger is None:
                raise TaggerUnavailable(f"rule {rule.kind!r} needs a tagger")
            for start, end in tagger(sentence):
                if start < end and not overlaps(start, end):
                    claimed.append((start, end, rule.kind, rule.replacement))
        else:
            raise ValueError(f"unknown censor method {rule.method!r}")

    claimed.sort()
    out: list[str] = []
    redactions: list[Redaction] = []
    pos = 0
    for start, end, kind, replacement in claimed:
        out.append(sentence[pos:start])
        out.append(replacement)
        b_start = len(sentence[:start].encode("utf-8"))
        b_end = b_start + len(sentence[start:end].encode("utf-8"))
        redactions.append(Redaction(kind, b_start, b_end))
        pos = end
    out.append(sentence[pos:])
    return "".join(out), redactions


def is_noise(sentence: str, min_tokens: int = 2, min_alpha_ratio: float = 0.4) -> bool:
    """Noise filter: too few tokens, or too few alphabetic characters."""
    tokens = sentence.split()
    if len(tokens) < min_tokens:
        return True
    visible = [c for c in sentence if not c.isspace()]
    if not visible:
        return True
    alpha = sum(1 for c in visible if c.isalpha())
    return alpha / len(visible) < min_alpha_ratio


def load_documents(path: str | Path) -> list[RawDocument]:
    """Read the JSONL document format: {"id", "source", "text"} per line."""
    docs: list[RawDocument] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            if not isinstance(obj, dict) or not {"id", "source", "text"} <= obj.keys():
                raise FormatError("document needs id, source and text fields", line=lineno)
            if not obj["id"]:
                raise FormatError("document id is empty", line=lineno)
            if obj["id"] in seen:
                raise FormatError(f"duplicate document id {obj['id']!r}", line=lineno)
            if obj["source"] not in SOURCES:
                raise FormatError(f"unknown source {obj['source']!r}", line=lineno)
            seen.add(obj["id"])
            docs.append(RawDocument(obj["id"], obj["source"], unicodedata.normalize("NFC", obj["text"])))
    return docs


def read_lexicon(path: str | Path) -> set[str]:
    words: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            entry = line.strip()
            if entry and not entry.startswith("#") and " " in entry:
                words.add(entry)
    return words


def preprocess_documents(
    docs: Sequence[RawDocument],
    lexicon: Iterable[str] = (),
    rules: Sequence[CensorRule] | None = None,
    tagger: NameTagger | None = None,
    min_tokens: int = 2,
    min_alpha_ratio: float = 0.4,
    abbreviations: frozenset[str] = DEFAULT_ABBREVIATIONS,
) -> list[Utterance]:
    """split -> noise filter -> segment -> anonymize, for every document.

    Utterance ids are "<doc_id>#<index>" with indices assigned after noise
    filtering; output is ordered by (doc_id, index).
    """
    lexicon = set(lexicon)
    utterances: list[Utterance] = []
    for doc in sorted(docs, key=lambda d: d.id):
        idx = 0
        for sentence in split_sentences(doc.text, abbreviations):
            if is_noise(sentence, min_tokens, min_alpha_ratio):
                continue
            segmented = segment_words(sentence, lexicon)
            clean, redactions = anonymize(segmented, rules, tagger)
            utterances.append(Utterance(f"{doc.id}#{idx}", doc.id, idx, clean, redactions))
            idx += 1
    return utterances


def load_corpus(
    docs_path: str | Path,
    lexicon_path: str | Path | None = None,
    rules: Sequence[CensorRule] | None = None,
    tagger: NameTagger | None = None,
    min_tokens: int = 2,
    min_alpha_ratio: float = 0.4,
) -> list[Utterance]:
    docs = load_documents(docs_path)
    lexicon = read_lexicon(lexicon_path) if lexicon_path else set()
    return preprocess_documents(
        docs, lexicon, rules, tagger, min_tokens=min_tokens, min_alpha_ratio=min_alpha_ratio
    )


def utterance_to_json(utt: Utterance) -> str:
    return json.dumps(
        {
            "id": utt.id,
            "doc_id": utt.doc_id,
            "text": utt.text,
            "redactions": [
                {"kind": r.kind, "start": r.start, "end": r.end} for r in utt.redactions
            ],
        },
        ensure_ascii=False,
    )


def utterance_from_json(line: str, lineno: int | None = None) -> Utterance:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", line=lineno) from exc
    doc_id, _, idx = obj["id"].rpartition("#")
    return Utterance(
        obj["id"],
        obj.get("doc_id", doc_id),
        int(idx) if idx.isdigit() else 0,
        obj["text"],
        [Redaction(r["kind"], r["start"], r["end"]) for r in obj.get("redactions", [])],
    )
