"""Encoder and tagger backends.

The stub backends are deterministic and dependency-free so the gateway can
run (and record fixtures) without model weights; the transformers-based
encoder is loaded only when requested.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np


class Encoder(Protocol):
    dim: int

    def load(self) -> None: ...

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class Tagger(Protocol):
    def load(self) -> None: ...

    def tag(self, sentences: Sequence[str]) -> list[list[dict]]: ...


class HashEncoder:
    """Deterministic stand-in encoder: seeded blake2b buckets over token
    character 2-4-grams, L2-normalized."""

    def __init__(self, dim: int = 384, seed: int = 0):
        if dim < 8:
            raise ValueError("dim must be >= 8")
        self.dim = dim
        self.seed = seed

    def load(self) -> None:
        pass

    def _bucket(self, gram: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            gram.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
        ).digest()
        value = int.from_bytes(digest, "big")
        return value % self.dim, 1.0 if (value >> 63) & 1 else -1.0

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for row, text in enumerate(texts):
            grams = []
            for token in text.split() or [""]:
                for n in (2, 3, 4):
                    grams.extend(token[i : i + n] for i in range(max(len(token) - n + 1, 0)))
                if len(token) < 2:
                    grams.append(token)
            if not grams:
                grams = ["\x00"]
            for gram in grams:
                bucket, sign = self._bucket(gram)
                out[row, bucket] += sign
            norm = np.linalg.norm(out[row])
            if norm == 0.0:
                out[row, self._bucket("\x00")[0]] = 1.0
                norm = 1.0
            out[row] /= norm
        return out


class HfEncoder:
    """Mean-pooled sentence embeddings from a Hugging Face checkpoint."""

    def __init__(self, model_id: str):
        self.model_id = model_id
        self.dim = 0
        self._model = None
        self._tokenizer = None

    def load(self) -> None:
        import torch  # noqa: F401
        from transformers import AutoModel, AutoTokenizer

        self._tokenizer = AutoTokenizer.from_pretrained(self.model_id)
        self._model = AutoModel.from_pretrained(self.model_id)
        self._model.eval()
        self.dim = int(self._model.config.hidden_size)

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        import torch

        batch = self._tokenizer(
            list(texts), padding=True, truncation=True, max_length=256, return_tensors="pt"
        )
        with torch.no_grad():
            hidden = self._model(**batch).last_hidden_state
        mask = batch["attention_mask"].unsqueeze(-1).float()
        pooled = (hidden * mask).sum(1) / mask.sum(1).clamp(min=1e-9)
        return pooled.numpy().astype(np.float64)


_PRONOUNS = {"em", "mình", "anh", "chị", "bạn", "thầy", "cô", "tôi", "trường"}
_VERBS = {
    "muốn", "cần", "xin", "hỏi", "hủy", "đăng_ký", "cấp", "gia_hạn", "chuyển",
    "nộp", "rút", "nhận", "báo", "gửi", "gọi", "đóng", "trả_lời", "mượn",
    "ghi_danh", "liên_hệ", "là", "có",
}
_PUNCT_STRIP = ".,!?…:;\"'()"


class RuleTagger:
    """Deterministic heuristic tagger: one root per sentence, heads always
    in range. A structural stand-in, not a linguistic model."""

    def load(self) -> None:
        pass

    def _pos(self, core: str) -> str:
        if core in _PRONOUNS:
            return "P"
        if core in _VERBS:
            return "V"
        if core.replace("_", "").isdigit():
            return "M"
        return "N"

    def tag(self, sentences: Sequence[str]) -> list[list[dict]]:
        tagged = []
        for sentence in sentences:
            forms = sentence.split() or [sentence]
            cores = [f.strip(_PUNCT_STRIP).lower() for f in forms]
            pos = [self._pos(c) for c in cores]
            root = next((i for i, p in enumerate(pos) if p == "V"), 0)
            tokens = []
            last_verb = root
            prev_was_verb = False
            for i, form in enumerate(forms):
                if i == root:
                    tokens.append({"form": form, "pos": pos[i], "head": 0, "deprel": "root"})
                    prev_was_verb = True
                    continue
                if i < root:
                    deprel, head = ("sub", root + 1) if pos[i] == "P" else ("adv", root + 1)
                elif pos[i] == "V":
                    deprel, head = "vmod", last_verb + 1
                    last_verb = i
                elif prev_was_verb:
                    deprel, head = "dob", last_verb + 1
                else:
                    deprel, head = "nmod", i  # previous token, 1-based
                prev_was_verb = pos[i] == "V"
                tokens.append({"form": form, "pos": pos[i], "head": head, "deprel": deprel})
            tagged.append(tokens)
        return tagged


def encoder_from_spec(spec: str) -> Encoder:
    """"stub[:dim[:seed]]" or "hf:<model id>"."""
    if spec == "stub" or spec.startswith("stub:"):
        parts = spec.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else 384
        seed = int(parts[2]) if len(parts) > 2 else 0
        return HashEncoder(dim=dim, seed=seed)
    if spec.startswith("hf:"):
        return HfEncoder(spec[len("hf:") :])
    raise ValueError(f"unknown encoder spec {spec!r}")


def tagger_from_spec(spec: str) -> Tagger:
    if spec == "rule":
        return RuleTagger()
    raise ValueError(f"unknown tagger spec {spec!r}")
