"""End-to-end orchestration: the discover pipeline and the experiment grid.

Every artifact is JSON Lines with a leading meta record carrying the config
hash; artifacts from different configurations refuse to compose. All
randomness funnels through the single seed in the configuration, so a rerun
with the same config produces byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import corpus as corpus_mod
from . import label as label_mod
from .cluster import ClusterParams, hdbscan
from .embed import embed_batch, provider_from_spec
from .errors import ConfigMismatch, ForgeError, FormatError, StageError
from .reduce import ReduceParams, umap

REPORT_SCHEMA = "runreport/v1"

# Stand-ins for the two encoder choices of the published experiment grid
# (generic multilingual model vs Vietnamese-tuned model).
_ENCODER_A = "fallback:256:1"
_ENCODER_B = "fallback:256:2"

APPENDIX_PRESETS: dict[str, dict] = {
    "1": {"provider": _ENCODER_A, "n_neighbors": 20, "n_components": 4,
          "min_cluster_size": 20, "ngram": [5, 7]},
    "2.1": {"provider": _ENCODER_A, "n_neighbors": 20, "n_components": 4,
            "min_cluster_size": 20, "ngram": [5, 7]},
    "2.2": {"provider": _ENCODER_A, "n_neighbors": 15, "n_components": 9,
            "min_cluster_size": 15, "ngram": [4, 11]},
    "3.1": {"provider": _ENCODER_B, "n_neighbors": 20, "n_components": 4,
            "min_cluster_size": 20, "ngram": [5, 7]},
    "3.2": {"provider": _ENCODER_B, "n_neighbors": 15, "n_components": 9,
            "min_cluster_size": 15, "ngram": [4, 11]},
}


@dataclass
class PipelineConfig:
    corpus_path: str
    tags_source: str  # "file:<tsv>" or "gateway:<url>"
    lexicon_path: str | None = None
    provider: str = "fallback:256:0"
    use_ner: bool = False
    min_tokens: int = 2
    min_alpha_ratio: float = 0.4
    n_neighbors: int = 15
    n_components: int = 2
    min_dist: float = 0.1
    n_epochs: int = 200
    min_cluster_size: int = 15
    min_samples: int | None = None
    allow_single_cluster: bool = False
    ngram: tuple[int, int] = (1, 1)
    top_keywords: int = 10
    reps_m: int = 7
    seed: int = 0

    def canonical(self) -> dict:
        out = {k: list(v) if isinstance(v, tuple) else v for k, v in vars(self).items()}
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid config JSON: {exc.msg}") from exc
        return PipelineConfig.from_dict(obj, base_dir=Path(path).parent)

    @staticmethod
    def from_dict(obj: dict, base_dir: Path | None = None) -> "PipelineConfig":
        known = set(PipelineConfig.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        if "ngram" in obj:
            obj = dict(obj, ngram=tuple(obj["ngram"]))
        cfg = PipelineConfig(**obj)
        if base_dir is not None:
            cfg.corpus_path = str((base_dir / cfg.corpus_path).resolve())
            if cfg.lexicon_path:
                cfg.lexicon_path = str((base_dir / cfg.lexicon_path).resolve())
            if cfg.tags_source.startswith("file:"):
                rel = cfg.tags_source[len("file:"):]
                cfg.tags_source = "file:" + str((base_dir / rel).resolve())
        return cfg


@dataclass
class RunReport:
    config_hash: str
    n_clusters: int
    n_intents: int
    stage_seconds: dict[str, float]
    config: dict
    artifacts: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema": REPORT_SCHEMA,
                "config_hash": self.config_hash,
                "n_clusters": self.n_clusters,
                "n_intents": self.n_intents,
                "stage_seconds": self.stage_seconds,
                "config": self.config,
                "artifacts": self.artifacts,
            },
            ensure_ascii=False,
            indent=2,
        )


def write_artifact(path: str | Path, stage: str, config_hash: str, lines: Sequence[str]) -> None:
    meta = json.dumps({"_meta": {"schema": f"{stage}/v1", "config_hash": config_hash}})
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(meta + "\n")
        for line in lines:
            fh.write(line + "\n")


def read_artifact(path: str | Path, expected_hash: str | None = None) -> tuple[dict, list[str]]:
    """Return (meta, payload lines); a hash mismatch refuses to compose."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise FormatError("empty artifact", line=1)
    try:
        meta = json.loads(lines[0]).get("_meta")
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid meta line: {exc.msg}", line=1) from exc
    if meta is None:
        # Plain JSONL without a meta header is accepted for external inputs.
        return {}, lines
    if expected_hash is not None and meta.get("config_hash") != expected_hash:
        raise ConfigMismatch(
            f"{path}: artifact built under config {meta.get('config_hash')}, "
            f"expected {expected_hash}"
        )
    return meta, lines[1:]


def _load_tags(source: str, utterances) -> list[list[label_mod.TaggedToken]]:
    if source.startswith("file:"):
        tagged = label_mod.read_tagged_tsv(source[len("file:"):])
        if len(tagged) != len(utterances):
            raise FormatError(
                f"tag file has {len(tagged)} sentences for {len(utterances)} utterances"
            )
        return tagged
    if source.startswith("gateway:"):
        tagger = label_mod.GatewayTagger(source[len("gateway:"):])
        return tagger.tag([u.text for u in utterances])
    raise ValueError(f"unknown tags source {source!r}")


def label_clusters(
    utterances,
    labels,
    tagged,
    ngram: tuple[int, int],
    top_keywords: int,
    reps_m: int,
) -> tuple[list[label_mod.IntentEntity], int]:
    """Keyword, representative-sentence and tag-extraction labeling for every
    non-noise cluster; returns (deduplicated intents, n unlabeled clusters)."""
    index_of = {u.id: i for i, u in enumerate(utterances)}
    members: dict[int, list] = {}
    for utt, cl in zip(utterances, labels):
        if cl >= 0:
            members.setdefault(int(cl), []).append(utt)
    cluster_docs = {c: [t for u in us for t in u.text.split()] for c, us in members.items()}
    labeled: list[tuple[str, int, int]] = []
    unlabeled = 0
    if cluster_docs:
        tables = label_mod.ctfidf(cluster_docs, ngram)
        for c in sorted(members):
            reps = label_mod.representative_sentences(
                members[c], tables[c][:top_keywords], reps_m
            )
            rep_tags = [tagged[index_of[u.id]] for u in reps]
            try:
                for lab in label_mod.label_cluster(rep_tags):
                    labeled.append((lab, c, len(members[c])))
            except label_mod.NoExtractableElements:
                unlabeled += 1
    return label_mod.dedup_intents(labeled), unlabeled


def run_discover(config: PipelineConfig, out_dir: str | Path) -> RunReport:
    """ingest -> embed -> reduce -> cluster -> label, writing every
    intermediate artifact under out_dir."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h = config.config_hash
    stage_seconds: dict[str, float] = {}
    artifacts: dict[str, str] = {}

    def stage(name: str, fn: Callable):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            raise StageError(name, exc) from exc
        stage_seconds[name] = time.perf_counter() - start
        return result

    def _ingest():
        utts = corpus_mod.load_corpus(
            config.corpus_path,
            config.lexicon_path,
            rules=corpus_mod.default_rules(include_ner=config.use_ner),
            min_tokens=config.min_tokens,
            min_alpha_ratio=config.min_alpha_ratio,
        )
        write_artifact(
            out / "utterances.jsonl", "utterances", h,
            [corpus_mod.utterance_to_json(u) for u in utts],
        )
        artifacts["utterances"] = str(out / "utterances.jsonl")
        return utts

    utterances = stage("ingest", _ingest)
    if not utterances:
        raise StageError("ingest", ForgeError("corpus produced no utterances"))

    def _embed():
        provider = provider_from_spec(config.provider, default_seed=config.seed)
        vecs = embed_batch(provider, [u.text for u in utterances])
        write_artifact(
            out / "embeddings.jsonl", "embeddings", h,
            [
                json.dumps({"id": u.id, "vector": [float(x) for x in v]})
                for u, v in zip(utterances, vecs)
            ],
        )
        artifacts["embeddings"] = str(out / "embeddings.jsonl")
        return vecs

    vectors = stage("embed", _embed)

    def _reduce():
        params = ReduceParams(
            n_neighbors=config.n_neighbors,
            n_components=config.n_components,
            min_dist=config.min_dist,
            n_epochs=config.n_epochs,
            seed=config.seed,
        )
        pts = umap(vectors, params)
        write_artifact(
            out / "points.jsonl", "points", h,
            [
                json.dumps({"id": u.id, "point": [float(x) for x in p]})
                for u, p in zip(utterances, pts)
            ],
        )
        artifacts["points"] = str(out / "points.jsonl")
        return pts

    points = stage("reduce", _reduce)

    def _cluster():
        params = ClusterParams(
            min_cluster_size=config.min_cluster_size,
            min_samples=config.min_samples,
            allow_single_cluster=config.allow_single_cluster,
        )
        assignment = hdbscan(points, params)
        write_artifact(
            out / "clusters.jsonl", "clusters", h,
            [
                json.dumps({"id": u.id, "cluster": int(c), "prob": float(p)})
                for u, c, p in zip(utterances, assignment.labels, assignment.probabilities)
            ],
        )
        artifacts["clusters"] = str(out / "clusters.jsonl")
        return assignment

    assignment = stage("cluster", _cluster)

    def _label():
        tagged = _load_tags(config.tags_source, utterances)
        intents, _ = label_clusters(
            utterances, assignment.labels, tagged,
            config.ngram, config.top_keywords, config.reps_m,
        )
        write_artifact(
            out / "intents.jsonl", "intents", h,
            [
                json.dumps(
                    {"id": i.id, "label": i.label, "cluster_ids": i.cluster_ids,
                     "support": i.support},
                    ensure_ascii=False,
                )
                for i in intents
            ],
        )
        artifacts["intents"] = str(out / "intents.jsonl")
        return intents

    intents = stage("label", _label)

    report = RunReport(
        config_hash=h,
        n_clusters=assignment.n_clusters,
        n_intents=len(intents),
        stage_seconds=stage_seconds,
        config=config.canonical(),
        artifacts=artifacts,
    )
    (out / "report.json").write_text(report.to_json(), encoding="utf-8")
    return report


def _grid_cell(base: PipelineConfig, cell: dict, out_dir: Path) -> dict:
    cell_id = str(cell["id"])
    overrides = {k: v for k, v in cell.items() if k != "id"}
    if "ngram" in overrides:
        overrides["ngram"] = tuple(overrides["ngram"])
    config = replace(base, **overrides)
    try:
        report = run_discover(config, out_dir / cell_id.replace(".", "_"))
        return {"experiment": cell_id, "n_intents": report.n_intents,
                "n_clusters": report.n_clusters}
    except Exception as exc:  # grid keeps going on per-cell failure
        return {"experiment": cell_id, "error": str(exc)}


def run_experiment_grid(
    base: PipelineConfig,
    experiments: Sequence[str | dict],
    out_dir: str | Path,
    jobs: int = 1,
) -> list[dict]:
    """One run_discover per cell; preset ids ("1", "2.1", ...) come from the
    built-in appendix table, dicts are explicit overrides."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells: list[dict] = []
    for exp in experiments:
        if isinstance(exp, str):
            if exp not in APPENDIX_PRESETS:
                raise ValueError(f"unknown experiment preset {exp!r}")
            cells.append({"id": exp, **APPENDIX_PRESETS[exp]})
        else:
            cells.append(dict(exp))
    if jobs <= 1:
        rows = [_grid_cell(base, cell, out) for cell in cells]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda c: _grid_cell(base, c, out), cells))
    (out / "grid.json").write_text(
        json.dumps(rows, ensure_ascii=False, indent=2), encoding="utf-8"
    )
    return rows


def load_embeddings_artifact(path: str | Path, expected_hash: str | None = None):
    """Read an embeddings artifact back as (ids, matrix)."""
    _, lines = read_artifact(path, expected_hash)
    ids, rows = [], []
    for lineno, line in enumerate(lines, start=2):
        if not line.strip():
            continue
        obj = json.loads(line)
        ids.append(obj["id"])
        rows.append(obj["vector"])
    return ids, np.asarray(rows, dtype=np.float64)


def load_points_artifact(path: str | Path, expected_hash: str | None = None):
    _, lines = read_artifact(path, expected_hash)
    ids, rows = [], []
    for line in lines:
        if not line.strip():
            continue
        obj = json.loads(line)
        ids.append(obj["id"])
        rows.append(obj["point"])
    return ids, np.asarray(rows, dtype=np.float64)
