"""The gateway application: /health, /info, /embed, /tag.

Model execution is serialized behind a lock, responses preserve request
order, and embeddings are normalized server-side so clients never have to
special-case encoders. With a record directory set, every request/response
pair is appended to replayable fixture files (embedding JSONL and tagged
TSV in the exact formats the pipeline's file providers read).
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .backends import Encoder, Tagger


@dataclass
class GatewayConfig:
    encoder_spec: str = "stub:384:0"
    tagger_spec: str = "rule"
    port: int = 8600
    max_batch: int = 64
    record_dir: str | None = None

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")


class _Recorder:
    def __init__(self, directory: str | Path):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.embed_path = self.dir / "embed_fixture.jsonl"
        self.tag_path = self.dir / "tag_fixture.tsv"
        self._lock = threading.Lock()

    def record_embed(self, texts, vectors) -> None:
        with self._lock, open(self.embed_path, "a", encoding="utf-8") as fh:
            for text, vec in zip(texts, vectors):
                fh.write(
                    json.dumps({"text": text, "vector": [float(x) for x in vec]},
                               ensure_ascii=False) + "\n"
                )

    def record_tags(self, tagged) -> None:
        with self._lock, open(self.tag_path, "a", encoding="utf-8") as fh:
            for tokens in tagged:
                for t in tokens:
                    fh.write(f"{t['form']}\t{t['pos']}\t{t['head']}\t{t['deprel']}\n")
                fh.write("\n")


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse({"error": message}, status_code=status)


def create_app(
    config: GatewayConfig,
    encoder: Encoder | None = None,
    tagger: Tagger | None = None,
    defer_load: bool = False,
) -> FastAPI:
    from .backends import encoder_from_spec, tagger_from_spec

    encoder = encoder or encoder_from_spec(config.encoder_spec)
    tagger = tagger or tagger_from_spec(config.tagger_spec)
    recorder = _Recorder(config.record_dir) if config.record_dir else None

    app = FastAPI(title="modelserver")
    app.state.ready = False
    app.state.encoder = encoder
    app.state.tagger = tagger
    lock = threading.Lock()  # single-request model execution

    def load_models() -> None:
        encoder.load()
        tagger.load()
        app.state.ready = True

    app.state.load_models = load_models
    if not defer_load:
        load_models()

    async def _json_body(request: Request, key: str):
        try:
            body = await request.json()
        except Exception:
            return None, _error(400, "malformed JSON body")
        if not isinstance(body, dict) or key not in body:
            return None, _error(400, f"missing {key!r} field")
        items = body[key]
        if not isinstance(items, list) or not all(isinstance(x, str) for x in items):
            return None, _error(400, f"{key!r} must be a list of strings")
        if len(items) > config.max_batch:
            return None, _error(413, f"batch of {len(items)} exceeds max_batch {config.max_batch}")
        return items, None

    @app.get("/health")
    async def health():
        if not app.state.ready:
            return _error(503, "models loading")
        return {"status": "ok"}

    @app.get("/info")
    async def info():
        if not app.state.ready:
            return _error(503, "models loading")
        return {"dim": encoder.dim}

    @app.post("/embed")
    async def embed(request: Request):
        if not app.state.ready:
            return _error(503, "models loading")
        texts, err = await _json_body(request, "texts")
        if err is not None:
            return err
        with lock:
            vectors = np.asarray(encoder.encode(texts), dtype=np.float64)
        if vectors.ndim != 2 or vectors.shape[0] != len(texts):
            return _error(500, "encoder returned a bad shape")
        norms = np.linalg.norm(vectors, axis=1)
        norms[norms == 0.0] = 1.0
        vectors = vectors / norms[:, None]
        payload = {"dim": int(vectors.shape[1]), "vectors": [list(map(float, v)) for v in vectors]}
        if recorder:
            recorder.record_embed(texts, vectors)
        return payload

    @app.post("/tag")
    async def tag(request: Request):
        if not app.state.ready:
            return _error(503, "models loading")
        sentences, err = await _json_body(request, "sentences")
        if err is not None:
            return err
        with lock:
            tagged = tagger.tag(sentences)
        for tokens in tagged:
            roots = [t for t in tokens if t["deprel"] == "root"]
            if len(roots) != 1:
                return _error(500, "tagger violated the single-root contract")
        if recorder:
            recorder.record_tags(tagged)
        return {"sentences": tagged}

    return app
