import json
from pathlib import Path

import pytest

from kgforge.cli import main
from kgforge.errors import ConfigMismatch, StageError
from kgforge.pipeline import (
    APPENDIX_PRESETS,
    PipelineConfig,
    read_artifact,
    run_discover,
    run_experiment_grid,
    write_artifact,
)

PLANTED = ["đăng_ký môn_học", "hủy lớp_học", "cấp bảng_điểm", "gia_hạn học_phí"]


def read_intent_labels(path: Path) -> list[str]:
    _, lines = read_artifact(path)
    return [json.loads(l)["label"] for l in lines if l.strip()]


class TestConfig:
    def test_hash_stable_and_seed_sensitive(self, data_dir):
        a = PipelineConfig.from_file(data_dir / "discover_config.json")
        b = PipelineConfig.from_file(data_dir / "discover_config.json")
        assert a.config_hash == b.config_hash
        b.seed += 1
        assert a.config_hash != b.config_hash

    def test_unknown_field_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"corpus_path": "x", "tags_source": "file:y", "frob": 1}))
        with pytest.raises(ValueError, match="frob"):
            PipelineConfig.from_file(cfg)


class TestDiscover:
    def test_counts_and_planted_labels(self, discover_runs):
        _, out1, report1, _, _ = discover_runs
        assert report1.n_clusters >= 4
        labels = read_intent_labels(out1 / "intents.jsonl")
        for planted in PLANTED:
            assert planted in labels

    def test_byte_determinism(self, discover_runs):
        _, out1, _, out2, _ = discover_runs
        for name in ("utterances.jsonl", "embeddings.jsonl", "points.jsonl",
                     "clusters.jsonl", "intents.jsonl"):
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name

    def test_reports_agree_modulo_timing(self, discover_runs):
        _, _, report1, _, report2 = discover_runs
        a, b = json.loads(report1.to_json()), json.loads(report2.to_json())
        a.pop("stage_seconds"), b.pop("stage_seconds")
        a.pop("artifacts"), b.pop("artifacts")  # differ by output directory
        assert a == b

    def test_artifacts_embed_config_hash(self, discover_runs):
        config, out1, _, _, _ = discover_runs
        for name in ("utterances.jsonl", "embeddings.jsonl", "points.jsonl",
                     "clusters.jsonl", "intents.jsonl"):
            meta, _ = read_artifact(out1 / name, expected_hash=config.config_hash)
            assert meta["config_hash"] == config.config_hash

    def test_mismatched_hash_refuses_to_compose(self, discover_runs):
        _, out1, _, _, _ = discover_runs
        with pytest.raises(ConfigMismatch):
            read_artifact(out1 / "points.jsonl", expected_hash="deadbeef0000")

    def test_missing_tags_file_fails_in_label_stage(self, data_dir, tmp_path):
        config = PipelineConfig.from_file(data_dir / "discover_config.json")
        config.tags_source = "file:" + str(tmp_path / "missing.tsv")
        with pytest.raises(StageError) as err:
            run_discover(config, tmp_path / "out")
        assert err.value.stage == "label"

    def test_report_schema_versioned(self, discover_runs):
        _, _, report1, _, _ = discover_runs
        assert json.loads(report1.to_json())["schema"] == "runreport/v1"


class TestGrid:
    def test_five_appendix_presets_give_five_rows(self, data_dir, tmp_path):
        config = PipelineConfig.from_file(data_dir / "discover_config.json")
        rows = run_experiment_grid(config, list(APPENDIX_PRESETS), tmp_path, jobs=1)
        assert [r["experiment"] for r in rows] == ["1", "2.1", "2.2", "3.1", "3.2"]
        for row in rows:
            assert "n_intents" in row or "error" in row

    def test_empty_grid(self, data_dir, tmp_path):
        config = PipelineConfig.from_file(data_dir / "discover_config.json")
        assert run_experiment_grid(config, [], tmp_path) == []

    def test_seed_only_cells_both_recorded_parallel(self, data_dir, tmp_path):
        config = PipelineConfig.from_file(data_dir / "discover_config.json")
        cells = [{"id": "s1", "seed": 1}, {"id": "s2", "seed": 2}]
        rows = run_experiment_grid(config, cells, tmp_path, jobs=2)
        assert [r["experiment"] for r in rows] == ["s1", "s2"]
        assert all("n_intents" in r or "error" in r for r in rows)

    def test_cell_failure_reported_grid_continues(self, data_dir, tmp_path):
        config = PipelineConfig.from_file(data_dir / "discover_config.json")
        cells = [{"id": "bad", "provider": "no-such:provider"}, {"id": "ok"}]
        rows = run_experiment_grid(config, cells, tmp_path)
        assert "error" in rows[0]
        assert "n_intents" in rows[1]


class TestCli:
    def test_missing_config_is_exit_2(self, tmp_path):
        code = main(["discover", "--config", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")])
        assert code == 2

    def test_stage_error_is_exit_3(self, data_dir, tmp_path):
        cfg = json.loads((data_dir / "discover_config.json").read_text())
        cfg["corpus_path"] = str(data_dir / "docs.jsonl")
        cfg["lexicon_path"] = str(data_dir / "lexicon.txt")
        cfg["tags_source"] = "file:" + str(tmp_path / "missing.tsv")
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(cfg))
        code = main(["discover", "--config", str(bad), "--out", str(tmp_path / "o")])
        assert code == 3

    def test_bad_subcommand_is_exit_2(self, capsys):
        assert main(["frobnicate"]) == 2

    def test_stagewise_pipeline_and_qa(self, data_dir, tmp_path, capsys):
        docs = str(data_dir / "docs.jsonl")
        lex = str(data_dir / "lexicon.txt")
        tags = str(data_dir / "tagged.tsv")
        pol = str(data_dir / "policies.jsonl")
        utt = str(tmp_path / "utterances.jsonl")
        emb = str(tmp_path / "emb.jsonl")
        pts = str(tmp_path / "pts.jsonl")
        clu = str(tmp_path / "clusters.jsonl")
        intents = str(tmp_path / "intents.jsonl")
        rels = str(tmp_path / "relations.jsonl")
        snap = str(tmp_path / "snap.jsonl")

        assert main(["ingest", "--in", docs, "--lexicon", lex, "--out", utt,
                     "--no-ner"]) == 0
        assert main(["embed", "--in", utt, "--provider", "fallback:256:7",
                     "--out", emb]) == 0
        assert main(["reduce", "--in", emb, "--n-neighbors", "8",
                     "--n-components", "2", "--seed", "7", "--out", pts]) == 0
        assert main(["cluster", "--in", pts, "--min-cluster-size", "6",
                     "--min-samples", "3", "--out", clu]) == 0
        assert main(["label", "--utterances", utt, "--clusters", clu,
                     "--tags", tags, "--ngram", "1:2", "--reps", "7",
                     "--out", intents]) == 0
        assert main(["relate", "--intents", intents, "--policies", pol,
                     "--threshold", "0.32", "--top-k", "10",
                     "--provider", "fallback:256:7", "--out", rels,
                     "--gold", str(data_dir / "gold.tsv")]) == 0
        assert main(["graph", "build", "--intents", intents, "--policies", pol,
                     "--relations", rels, "--out", snap]) == 0
        capsys.readouterr()

        # snapshot of the relate-built graph round-trips byte-identically
        from kgforge.kg import load_snapshot, save_snapshot

        snap2 = str(tmp_path / "snap2.jsonl")
        save_snapshot(load_snapshot(snap), snap2)
        assert Path(snap).read_bytes() == Path(snap2).read_bytes()

        assert main(["graph", "query", "--graph", snap,
                     "--q", "MATCH (i:Intent)-[:RELATED_POLICY]->(p:Policy) RETURN i, p"]) == 0
        query_out = capsys.readouterr().out
        assert main(["graph", "retrieve", "--graph", snap,
                     "--question", "đăng_ký môn_học thế nào", "-k", "3"]) == 0
        retrieve_out = capsys.readouterr().out
        assert retrieve_out.strip()

        assert main(["ask", "--graph", str(data_dir / "withdrawal_graph.jsonl"),
                     "--llm", "mock", "Em muốn hủy lớp_học thì làm sao?"]) == 0
        ask_out = capsys.readouterr().out
        assert "quy định rút môn học" in ask_out

        assert main(["ask", "--graph", str(data_dir / "withdrawal_graph.jsonl"),
                     "--llm", "mock", "--trace", "Em muốn hủy lớp_học?"]) == 0
        trace = json.loads(capsys.readouterr().out)
        assert trace["generated_query"].startswith("RETRIEVE ")
        assert trace["prompt"]

    def test_ask_repl(self, data_dir, monkeypatch, capsys):
        answers = iter(["Em muốn hủy lớp_học?", "quit"])
        monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
        code = main(["ask", "--graph", str(data_dir / "withdrawal_graph.jsonl"),
                     "--llm", "mock"])
        assert code == 0
        assert "quy định rút môn học" in capsys.readouterr().out

    def test_global_config_flag(self, data_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["--config", str(data_dir / "discover_config.json"),
                     "discover", "--out", str(out)])
        assert code == 0
        assert (out / "report.json").exists()

    def test_reduce_bad_params_exit_2(self, data_dir, tmp_path):
        emb = tmp_path / "emb.jsonl"
        write_artifact(emb, "embeddings", "abc",
                       [json.dumps({"id": "a", "vector": [1.0, 0.0]})])
        code = main(["reduce", "--in", str(emb), "--n-neighbors", "1",
                     "--out", str(tmp_path / "o.jsonl")])
        assert code == 2

    def test_discover_cli_round_trip(self, data_dir, tmp_path, capsys):
        out = tmp_path / "run"
        code = main(["discover", "--config", str(data_dir / "discover_config.json"),
                     "--out", str(out)])
        assert code == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_clusters"] >= 4
        assert (out / "intents.jsonl").exists()

    def test_grid_cli(self, data_dir, tmp_path, capsys):
        grid = tmp_path / "grid.json"
        grid.write_text(json.dumps({"experiments": [{"id": "tiny", "n_epochs": 30}]}))
        code = main(["grid", "--config", str(data_dir / "discover_config.json"),
                     "--grid", str(grid), "--out", str(tmp_path / "g")])
        assert code == 0
        row = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert row["experiment"] == "tiny"
