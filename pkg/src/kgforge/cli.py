"""The `forge` command line: pipeline stages, graph tools, QA and the
experiment grid.

Exit codes: 0 ok, 2 configuration/usage error, 3 stage error.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import corpus as corpus_mod
from . import label as label_mod
from . import relate as relate_mod
from .cluster import ClusterParams, hdbscan
from .embed import embed_batch, provider_from_spec
from .errors import ForgeError, StageError
from .kg import (
    build_graph,
    execute_query,
    load_snapshot,
    parse_query,
    retrieve_triples,
    save_snapshot,
)
from .kg.store import Edge, Node
from .pipeline import (
    PipelineConfig,
    load_embeddings_artifact,
    load_points_artifact,
    read_artifact,
    run_discover,
    run_experiment_grid,
    write_artifact,
)
from .rag import answer, llm_from_spec
from .reduce import ReduceParams, umap

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE = 3


def _args_hash(args: dict) -> str:
    import hashlib

    blob = json.dumps(args, sort_keys=True, ensure_ascii=False, default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _cmd_ingest(args) -> int:
    tagger = None
    if args.ner_gateway and not args.no_ner:
        tagger = label_mod.person_name_tagger(label_mod.GatewayTagger(args.ner_gateway))
    rules = corpus_mod.default_rules(include_ner=tagger is not None)
    utts = corpus_mod.load_corpus(
        args.infile, args.lexicon, rules=rules, tagger=tagger,
        min_tokens=args.min_tokens, min_alpha_ratio=args.min_alpha,
    )
    h = _args_hash({"cmd": "ingest", "in": args.infile, "lexicon": args.lexicon,
                    "no_ner": args.no_ner, "ner_gateway": args.ner_gateway,
                    "min_tokens": args.min_tokens, "min_alpha": args.min_alpha})
    write_artifact(args.out, "utterances", h, [corpus_mod.utterance_to_json(u) for u in utts])
    print(f"wrote {len(utts)} utterances to {args.out}")
    return EXIT_OK


def _read_utterances(path: str) -> list[corpus_mod.Utterance]:
    _, lines = read_artifact(path)
    return [corpus_mod.utterance_from_json(line) for line in lines if line.strip()]


def _cmd_embed(args) -> int:
    utts = _read_utterances(args.infile)
    seed = getattr(args, "seed", None) or 0
    provider = provider_from_spec(args.provider, default_seed=seed)
    vecs = embed_batch(provider, [u.text for u in utts])
    h = _args_hash({"cmd": "embed", "in": args.infile, "provider": args.provider,
                    "seed": args.seed})
    write_artifact(
        args.out, "embeddings", h,
        [json.dumps({"id": u.id, "vector": [float(x) for x in v]})
         for u, v in zip(utts, vecs)],
    )
    print(f"wrote {len(utts)} vectors (dim {vecs.shape[1]}) to {args.out}")
    return EXIT_OK


def _cmd_reduce(args) -> int:
    ids, vectors = load_embeddings_artifact(args.infile)
    params = ReduceParams(
        n_neighbors=args.n_neighbors, n_components=args.n_components,
        min_dist=args.min_dist, n_epochs=args.epochs, seed=getattr(args, "seed", None) or 0,
    )
    points = umap(vectors, params)
    h = _args_hash({"cmd": "reduce", "in": args.infile, **vars(params).copy()})
    write_artifact(
        args.out, "points", h,
        [json.dumps({"id": i, "point": [float(x) for x in p]})
         for i, p in zip(ids, points)],
    )
    print(f"wrote {len(ids)} points (dim {args.n_components}) to {args.out}")
    return EXIT_OK


def _cmd_cluster(args) -> int:
    ids, points = load_points_artifact(args.infile)
    params = ClusterParams(
        min_cluster_size=args.min_cluster_size, min_samples=args.min_samples,
        allow_single_cluster=args.allow_single_cluster,
    )
    assignment = hdbscan(points, params)
    h = _args_hash({"cmd": "cluster", "in": args.infile,
                    "min_cluster_size": args.min_cluster_size,
                    "min_samples": args.min_samples,
                    "allow_single_cluster": args.allow_single_cluster})
    write_artifact(
        args.out, "clusters", h,
        [json.dumps({"id": i, "cluster": int(c), "prob": float(p)})
         for i, c, p in zip(ids, assignment.labels, assignment.probabilities)],
    )
    print(f"wrote {assignment.n_clusters} clusters over {len(ids)} points to {args.out}")
    return EXIT_OK


def _parse_ngram(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return (int(lo), int(hi or lo))


def _cmd_label(args) -> int:
    from .pipeline import _load_tags, label_clusters

    utts = _read_utterances(args.utterances)
    _, lines = read_artifact(args.clusters)
    cluster_of = {}
    for line in lines:
        if line.strip():
            obj = json.loads(line)
            cluster_of[obj["id"]] = obj["cluster"]
    labels = [cluster_of.get(u.id, -1) for u in utts]
    tags_source = args.tags if ":" in args.tags.split("/")[0] else f"file:{args.tags}"
    tagged = _load_tags(tags_source, utts)
    ngram = _parse_ngram(args.ngram)
    intents, unlabeled = label_clusters(utts, labels, tagged, ngram,
                                        args.top_keywords, args.reps)
    h = _args_hash({"cmd": "label", "utterances": args.utterances,
                    "clusters": args.clusters, "tags": args.tags,
                    "ngram": list(ngram), "reps": args.reps,
                    "top_keywords": args.top_keywords})
    write_artifact(
        args.out, "intents", h,
        [json.dumps({"id": i.id, "label": i.label, "cluster_ids": i.cluster_ids,
                     "support": i.support}, ensure_ascii=False) for i in intents],
    )
    print(f"wrote {len(intents)} intents to {args.out} ({unlabeled} clusters unlabeled)")
    return EXIT_OK


def _read_intents(path: str) -> list[label_mod.IntentEntity]:
    _, lines = read_artifact(path)
    out = []
    for line in lines:
        if line.strip():
            obj = json.loads(line)
            out.append(label_mod.IntentEntity(obj["id"], obj["label"],
                                              obj.get("cluster_ids", []),
                                              obj.get("support", 1)))
    return out


def _cmd_relate(args) -> int:
    intents = _read_intents(args.intents)
    policies = relate_mod.load_policies(args.policies)
    provider = provider_from_spec(args.provider, default_seed=getattr(args, "seed", None) or 0)
    relations = relate_mod.discover_relations(
        intents, policies, provider,
        threshold=args.threshold, top_k=args.top_k, alpha=args.alpha,
    )
    gold = relate_mod.load_gold(args.gold) if args.gold else None
    report = relate_mod.relation_metrics(relations, intents, policies, gold)
    h = _args_hash({"cmd": "relate", "intents": args.intents, "policies": args.policies,
                    "threshold": args.threshold, "top_k": args.top_k,
                    "alpha": args.alpha, "provider": args.provider})
    write_artifact(
        args.out, "relations", h,
        [json.dumps({"intent_id": r.intent_id, "policy_id": r.policy_id,
                     "embed_score": r.embed_score, "rerank_score": r.rerank_score,
                     "rank": r.rank}, ensure_ascii=False) for r in relations],
    )
    print(json.dumps(report.to_table(), ensure_ascii=False))
    return EXIT_OK


def _read_relations(path: str) -> list[relate_mod.Relation]:
    _, lines = read_artifact(path)
    out = []
    for line in lines:
        if line.strip():
            obj = json.loads(line)
            out.append(relate_mod.Relation(obj["intent_id"], obj["policy_id"],
                                           obj["embed_score"], obj["rerank_score"],
                                           obj["rank"]))
    return out


def _read_extra(path: str) -> tuple[list[Node], list[Edge]]:
    nodes, edges = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if obj.get("t") == "n":
                nodes.append(Node.make(obj["label"], obj["id"], obj.get("props", {})))
            elif obj.get("t") == "e":
                edges.append(Edge.make(obj["src"], obj["rel"], obj["dst"],
                                       obj.get("props", {})))
    return nodes, edges


def _cmd_graph(args) -> int:
    if args.graph_cmd == "build":
        intents = _read_intents(args.intents) if args.intents else []
        policies = relate_mod.load_policies(args.policies) if args.policies else []
        relations = _read_relations(args.relations) if args.relations else []
        extra_nodes, extra_edges = _read_extra(args.extra) if args.extra else ([], [])
        graph = build_graph(intents, policies, relations, extra_nodes, extra_edges)
        save_snapshot(graph, args.out)
        print(f"wrote graph with {len(graph)} nodes / {graph.n_edges} edges to {args.out}")
        return EXIT_OK
    graph = load_snapshot(args.graph)
    if args.graph_cmd == "query":
        ast = parse_query(args.q)
        for triple in execute_query(graph, ast):
            print(json.dumps(triple.key(), ensure_ascii=False))
        return EXIT_OK
    if args.graph_cmd == "retrieve":
        result = retrieve_triples(graph, args.question, args.k)
        if result.no_anchor:
            print("no-anchor", file=sys.stderr)
        for triple in result.triples:
            print(json.dumps(triple.key(), ensure_ascii=False))
        return EXIT_OK
    raise ValueError(f"unknown graph subcommand {args.graph_cmd!r}")


def _cmd_ask(args) -> int:
    graph = load_snapshot(args.graph)
    llm = llm_from_spec(args.llm)

    def one(question: str):
        trace = answer(question, graph, llm, k=args.k)
        if args.trace:
            print(trace.to_json())
        else:
            print(trace.answer)

    if args.question:
        one(args.question)
        return EXIT_OK
    # REPL mode
    try:
        while True:
            line = input("? ").strip()
            if not line or line in {"quit", "exit"}:
                break
            one(line)
    except EOFError:
        pass
    return EXIT_OK


def _cmd_discover(args) -> int:
    if getattr(args, "config", None) is None:
        raise ValueError("discover needs --config")
    config = PipelineConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    report = run_discover(config, args.out)
    print(report.to_json())
    return EXIT_OK


def _cmd_grid(args) -> int:
    if getattr(args, "config", None) is None:
        raise ValueError("grid needs --config")
    config = PipelineConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    with open(args.grid, encoding="utf-8") as fh:
        grid_spec = json.load(fh)
    rows = run_experiment_grid(config, grid_spec["experiments"], args.out, jobs=args.jobs)
    for row in rows:
        print(json.dumps(row, ensure_ascii=False))
    return EXIT_OK


def _add_seed(p):
    # also accepted after the subcommand; SUPPRESS keeps a global --seed intact
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="forge", description=__doc__)
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--jobs", type=int, default=1, help="parallel grid cells")
    parser.add_argument("--config", default=None, help="pipeline config file")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", help="documents -> utterances")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-ner", action="store_true")
    p.add_argument("--ner-gateway", default=None, help="tagger gateway for person names")
    p.add_argument("--min-tokens", type=int, default=2)
    p.add_argument("--min-alpha", type=float, default=0.4)
    p.set_defaults(fn=_cmd_ingest)

    p = sub.add_parser("embed", help="utterances -> embeddings")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--provider", default="fallback")
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_embed)

    p = sub.add_parser("reduce", help="embeddings -> low-dimensional points")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--n-neighbors", type=int, default=15)
    p.add_argument("--n-components", type=int, default=2)
    p.add_argument("--min-dist", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_reduce)

    p = sub.add_parser("cluster", help="points -> cluster assignment")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--min-cluster-size", type=int, required=True)
    p.add_argument("--min-samples", type=int, default=None)
    p.add_argument("--allow-single-cluster", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_cluster)

    p = sub.add_parser("label", help="clusters -> intent entities")
    p.add_argument("--utterances", required=True)
    p.add_argument("--clusters", required=True)
    p.add_argument("--tags", required=True, help="tagged TSV path or gateway:<url>")
    p.add_argument("--ngram", default="1:1", help="lo:hi word n-gram range")
    p.add_argument("--reps", type=int, default=7)
    p.add_argument("--top-keywords", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_label)

    p = sub.add_parser("relate", help="intents + policies -> relations")
    p.add_argument("--intents", required=True)
    p.add_argument("--policies", required=True)
    p.add_argument("--threshold", type=float, default=0.32)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--provider", default="fallback")
    p.add_argument("--gold", default=None)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_relate)

    p = sub.add_parser("graph", help="graph build / query / retrieve")
    gsub = p.add_subparsers(dest="graph_cmd", required=True)
    b = gsub.add_parser("build")
    b.add_argument("--intents", default=None)
    b.add_argument("--policies", default=None)
    b.add_argument("--relations", default=None)
    b.add_argument("--extra", default=None, help="extra nodes/edges JSONL")
    b.add_argument("--out", required=True)
    q = gsub.add_parser("query")
    q.add_argument("--graph", required=True)
    q.add_argument("--q", required=True)
    r = gsub.add_parser("retrieve")
    r.add_argument("--graph", required=True)
    r.add_argument("--question", required=True)
    r.add_argument("-k", type=int, default=8)
    p.set_defaults(fn=_cmd_graph)

    p = sub.add_parser("ask", help="question answering over a graph snapshot")
    p.add_argument("--graph", required=True)
    p.add_argument("--llm", default="mock", help="mock or http(s)://...")
    p.add_argument("question", nargs="?", default=None)
    p.add_argument("-k", type=int, default=8)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(fn=_cmd_ask)

    p = sub.add_parser("discover", help="full pipeline from a config file")
    p.add_argument("--config", default=argparse.SUPPRESS)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_discover)

    p = sub.add_parser("grid", help="experiment grid from a config + grid file")
    p.add_argument("--config", default=argparse.SUPPRESS)
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    _add_seed(p)
    p.set_defaults(fn=_cmd_grid)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (FileNotFoundError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
