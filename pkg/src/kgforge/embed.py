"""Sentence embeddings: interchangeable providers plus the vector math used
by every downstream module.

Three providers: a deterministic hashing fallback (no model needed), a file
provider replaying precomputed vectors, and an HTTP gateway speaking the
/embed protocol of the model server.
"""

from __future__ import annotations

import json
import time
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import DimensionMismatch, ProviderError, ZeroVector

_MASK64 = (1 << 64) - 1
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_NORM_TOL = 1e-6


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity u·v / (‖u‖‖v‖); exact symmetry by construction."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"{u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("cosine undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))


def pairwise_euclidean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance matrix between rows of a and rows of b.

    Computed from explicit differences (not the expanded dot-product form)
    for numerical robustness; row blocks keep the intermediate small.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n, d = a.shape
    m = b.shape[0]
    out = np.empty((n, m), dtype=np.float64)
    block = max(1, (1 << 22) // max(1, m * d))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.sqrt(np.maximum((diff * diff).sum(axis=-1), 0.0))
    return out


def _fnv1a(data: bytes, seed: int) -> int:
    h = (_FNV_OFFSET ^ ((seed * 0x9E3779B97F4A7C15) & _MASK64)) & _MASK64
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def fallback_embed(text: str, dim: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic feature-hashed embedding (test substitute for the encoder).

    Character 1-3-grams of each whitespace token are hashed into `dim`
    buckets with a seeded 64-bit FNV-1a; a second hash picks the sign.
    """
    if dim < 8:
        raise ValueError("dim must be >= 8")
    vec = np.zeros(dim, dtype=np.float64)
    tokens = text.split() or [""]
    grams: list[str] = []
    for token in tokens:
        for n in (1, 2, 3):
            grams.extend(token[i : i + n] for i in range(len(token) - n + 1))
    if not grams:
        grams = ["\x00"]
    for gram in grams:
        data = gram.encode("utf-8")
        bucket = _fnv1a(data, seed) % dim
        sign = 1.0 if _fnv1a(data, seed + 0x51C6) & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[_fnv1a(b"\x00", seed) % dim] = 1.0
        norm = 1.0
    return vec / norm


class FallbackProvider:
    kind = "fallback"

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dim = dim
        self.seed = seed

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        return np.stack([fallback_embed(t, self.dim, self.seed) for t in texts])


class FileProvider:
    """Replays vectors recorded as JSON Lines {"text": ..., "vector": [...]}."""

    kind = "file"

    def __init__(self, path: str | Path):
        self.path = str(path)
        self._table: dict[str, np.ndarray] = {}
        self.dim: int | None = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ProviderError(f"{path}: line {lineno}: {exc.msg}") from exc
                vec = np.asarray(obj["vector"], dtype=np.float64)
                if self.dim is None:
                    self.dim = vec.shape[0]
                elif vec.shape[0] != self.dim:
                    raise DimensionMismatch(
                        f"{path}: line {lineno}: dim {vec.shape[0]} != {self.dim}"
                    )
                self._table[obj["text"]] = vec

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        rows = []
        for t in texts:
            if t not in self._table:
                raise ProviderError(f"missing_key: {t!r} not in {self.path}")
            rows.append(self._table[t])
        return np.stack(rows)


class GatewayProvider:
    """HTTP provider: POST /embed {"texts": [...]} -> {"dim": D, "vectors": [...]}."""

    kind = "gateway"

    def __init__(self, endpoint: str, max_batch: int = 64, retries: int = 3, timeout: float = 30.0):
        self.endpoint = endpoint.rstrip("/")
        self.max_batch = max_batch
        self.retries = retries
        self.timeout = timeout
        self.dim: int | None = None

    def _post(self, texts: Sequence[str]) -> np.ndarray:
        last_err: object = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(0.05 * 2**attempt)
            try:
                resp = requests.post(
                    f"{self.endpoint}/embed", json={"texts": list(texts)}, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_err = exc
                continue
            if resp.status_code != 200:
                last_err = f"status {resp.status_code}: {resp.text[:200]}"
                continue
            try:
                payload = resp.json()
                dim = int(payload["dim"])
                vectors = np.asarray(payload["vectors"], dtype=np.float64)
            except (KeyError, ValueError) as exc:
                last_err = exc
                continue
            if self.dim is None:
                self.dim = dim
            elif dim != self.dim:
                raise DimensionMismatch(f"gateway dim changed {self.dim} -> {dim}")
            if vectors.shape != (len(texts), dim):
                raise ProviderError(f"bad vector shape {vectors.shape}", attempt + 1)
            return vectors
        raise ProviderError(
            f"gateway failed after {self.retries} tries: {last_err}", self.retries
        )

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        chunks = [
            self._post(texts[i : i + self.max_batch]) for i in range(0, len(texts), self.max_batch)
        ]
        return np.concatenate(chunks, axis=0)


def embed_batch(provider, texts: Sequence[str]) -> np.ndarray:
    """Embed texts in order, L2-normalising any row that is not unit norm."""
    if not texts:
        raise ValueError("texts must be non-empty")
    vectors = np.asarray(provider.embed(texts), dtype=np.float64)
    if vectors.shape[0] != len(texts):
        raise ProviderError(f"provider returned {vectors.shape[0]} vectors for {len(texts)} texts")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0.0):
        raise ProviderError("provider returned a zero vector")
    off = np.abs(norms - 1.0) > _NORM_TOL
    if np.any(off):
        vectors = vectors / norms[:, None]
    return vectors


def provider_from_spec(spec: str, default_dim: int = 256, default_seed: int = 0):
    """Parse "fallback[:dim[:seed]]", "file:<path>" or "gateway:<url>"."""
    if spec == "fallback" or spec.startswith("fallback:"):
        parts = spec.split(":")
        dim = int(parts[1]) if len(parts) > 1 and parts[1] else default_dim
        seed = int(parts[2]) if len(parts) > 2 else default_seed
        return FallbackProvider(dim=dim, seed=seed)
    if spec.startswith("file:"):
        return FileProvider(spec[len("file:") :])
    if spec.startswith("gateway:"):
        return GatewayProvider(spec[len("gateway:") :])
    raise ValueError(f"unknown provider spec {spec!r}")
