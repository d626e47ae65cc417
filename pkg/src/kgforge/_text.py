"""Small shared text helpers: tokenization and tf-idf vectors.

Both relation reranking and graph retrieval score text pairs with the same
tf-idf flavour (raw tf, smoothed log idf, L2-normalised), so the vectoriser
lives here rather than in either module.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Iterable, Mapping

_WORD_RE = re.compile(r"\w+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; underscores are treated as spaces first so
    segmented compounds match their unsegmented forms."""
    return _WORD_RE.findall(text.replace("_", " ").lower())


class TfidfStats:
    """Document-frequency statistics over a fixed corpus.

    idf(t) = ln((1 + N) / (1 + df(t))) + 1; terms outside the corpus
    vocabulary are dropped from query vectors.
    """

    def __init__(self, docs: Iterable[str]):
        token_lists = [tokenize(d) for d in docs]
        self.n_docs = len(token_lists)
        df: Counter[str] = Counter()
        for tokens in token_lists:
            df.update(set(tokens))
        self.idf: dict[str, float] = {
            t: math.log((1 + self.n_docs) / (1 + c)) + 1.0 for t, c in df.items()
        }

    def vector(self, text: str) -> dict[str, float]:
        """L2-normalised tf-idf vector; empty dict when nothing is in vocabulary."""
        counts = Counter(t for t in tokenize(text) if t in self.idf)
        if not counts:
            return {}
        vec = {t: c * self.idf[t] for t, c in counts.items()}
        norm = math.sqrt(sum(v * v for v in vec.values()))
        return {t: v / norm for t, v in vec.items()}


def sparse_cosine(u: Mapping[str, float], v: Mapping[str, float]) -> float:
    if len(u) > len(v):
        u, v = v, u
    return sum(w * v[t] for t, w in u.items() if t in v)
