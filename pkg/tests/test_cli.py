"""CLI tests: argument handling, command output, and the full pipeline."""

from __future__ import annotations

import json
import subprocess
import sys
from pathlib import Path

import pytest
from conftest import FIXTURES, make_dialogue

from dialogue_kt.cli import main
from dialogue_kt.corpus import NA, load_canonical, save_canonical


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture
def labeled_corpus_file(tmp_path):
    specs = [
        [(1, ["kc-a"]), (0, ["kc-a"]), (1, ["kc-b"])],
        [(0, ["kc-b"]), (1, ["kc-a"]), (NA, [])],
        [(1, ["kc-a"]), (1, ["kc-a"])],
        [(0, ["kc-b"]), (0, ["kc-a"]), (1, ["kc-b"])],
    ]
    dialogues = [make_dialogue(f"d{i}", spec) for i, spec in enumerate(specs)]
    path = tmp_path / "corpus.json"
    save_canonical(dialogues, path)
    return path


class TestParser:
    def test_help_exits_zero(self, capsys):
        code, out, _ = run(capsys, "--help")
        assert code == 0
        assert "dialogue-kt" in out

    def test_subcommand_help(self, capsys):
        code, out, _ = run(capsys, "eval", "--help")
        assert code == 0
        assert "irr" in out

    def test_missing_subcommand_is_usage_error(self, capsys):
        code, _, err = run(capsys)
        assert code == 2
        assert "usage" in err.lower()

    def test_unknown_command(self, capsys):
        code, _, _ = run(capsys, "frobnicate")
        assert code == 2

    def test_missing_required_flag(self, capsys):
        code, _, _ = run(capsys, "eval", "irr")
        assert code == 2

    def test_installed_script_matches_module(self):
        proc = subprocess.run(
            [sys.executable, "-m", "dialogue_kt.cli", "--help"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0
        assert "dialogue-kt" in proc.stdout


class TestFailureSurface:
    def test_runtime_failure_is_one_stderr_line(self, capsys, tmp_path):
        code, out, err = run(capsys, "eval", "irr", "--ratings",
                             str(tmp_path / "missing.json"))
        assert code == 1
        assert out == ""
        lines = [l for l in err.splitlines() if l]
        assert len(lines) == 1
        assert lines[0].startswith("error: ")

    def test_annotate_without_client_source(self, capsys, labeled_corpus_file, tmp_path):
        code, _, err = run(capsys, "annotate", "--corpus", str(labeled_corpus_file),
                           "--out", str(tmp_path / "anno"))
        assert code == 1
        assert "error:" in err and "--endpoint" in err


class TestIrrCommand:
    def test_golden_ratings(self, capsys):
        code, out, _ = run(capsys, "eval", "irr", "--ratings",
                           str(FIXTURES / "ratings.json"))
        assert code == 0
        doc = json.loads(out)
        assert doc["overlap"] == 0.75
        assert doc["alpha"] == pytest.approx(16 / 30, abs=1e-12)
        assert doc["level"] == "nominal"

    def test_ordinal_level_flag(self, capsys):
        code, out, _ = run(capsys, "eval", "irr", "--ratings",
                           str(FIXTURES / "ratings.csv"), "--level", "ordinal")
        assert code == 0
        assert json.loads(out)["level"] == "ordinal"

    def test_top_level_shortcut(self, capsys):
        code, out, _ = run(capsys, "irr", "--ratings", str(FIXTURES / "ratings.json"))
        assert code == 0
        long_code, long_out, _ = run(capsys, "eval", "irr", "--ratings",
                                     str(FIXTURES / "ratings.json"))
        assert (code, out) == (long_code, long_out)


class TestTaxonomyCommands:
    def test_validate(self, capsys):
        code, out, _ = run(capsys, "taxonomy", "validate", "--in",
                           str(FIXTURES / "taxonomy.json"))
        assert code == 0
        doc = json.loads(out)
        assert doc == {"valid": True, "domain": 2, "cluster": 3, "standard": 5}

    def test_import_produces_loadable_taxonomy(self, capsys, tmp_path):
        out_path = tmp_path / "tax.json"
        code, out, _ = run(capsys, "taxonomy", "import", "--in",
                           str(FIXTURES / "coherence_map.json"), "--out", str(out_path))
        assert code == 0
        assert "imported" in out
        code, out, _ = run(capsys, "taxonomy", "validate", "--in", str(out_path))
        assert code == 0
        assert json.loads(out)["standard"] == 5

    def test_validate_rejects_broken_file(self, capsys, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps([{"level": "cluster", "id": "c", "description": "x",
                                    "parent": "missing-domain"}]))
        code, _, err = run(capsys, "taxonomy", "validate", "--in", str(bad))
        assert code == 1
        assert err.startswith("error:")


class TestCorpusCommands:
    def test_ingest_stats_split(self, capsys, tmp_path):
        corpus_path = tmp_path / "corpus.json"
        code, out, _ = run(capsys, "corpus", "ingest", "--format", "comta",
                           "--in", str(FIXTURES / "comta_sample.json"),
                           "--out", str(corpus_path))
        assert code == 0
        assert "ingested 2/4 dialogues (2 dropped)" in out

        code, out, _ = run(capsys, "corpus", "stats", "--in", str(corpus_path))
        assert code == 0
        assert json.loads(out)["n_dialogues"] == 2

        # Freshly ingested dialogues carry no labels yet, so they cannot
        # be split for evaluation.
        plan_path = tmp_path / "splits.json"
        code, _, err = run(capsys, "corpus", "split", "--in", str(corpus_path),
                           "--out", str(plan_path), "--folds", "2")
        assert code == 1
        assert err.startswith("error:")

    def test_split_labeled_corpus(self, capsys, labeled_corpus_file, tmp_path):
        plan_path = tmp_path / "splits.json"
        code, out, _ = run(capsys, "corpus", "split", "--in", str(labeled_corpus_file),
                           "--out", str(plan_path), "--folds", "2")
        assert code == 0
        assert "2-fold" in out
        plan = json.loads(plan_path.read_text())
        assert plan["fold_count"] == 2

    def test_ingest_split_tag(self, capsys, tmp_path):
        corpus_path = tmp_path / "corpus.json"
        run(capsys, "corpus", "ingest", "--format", "comta",
            "--in", str(FIXTURES / "comta_sample.json"),
            "--out", str(corpus_path), "--split", "test")
        dialogues = load_canonical(corpus_path)
        assert all(d.meta["split"] == "test" for d in dialogues)


class TestTrainCommand:
    def make_plan(self, capsys, corpus_path, tmp_path, folds=2):
        plan_path = tmp_path / "splits.json"
        code, _, _ = run(capsys, "corpus", "split", "--in", str(corpus_path),
                         "--out", str(plan_path), "--folds", str(folds))
        assert code == 0
        return plan_path

    def test_train_bkt_writes_params(self, capsys, labeled_corpus_file, tmp_path):
        plan = self.make_plan(capsys, labeled_corpus_file, tmp_path)
        out_dir = tmp_path / "bkt"
        code, out, _ = run(capsys, "train", "bkt", "--corpus", str(labeled_corpus_file),
                           "--splits", str(plan), "--out", str(out_dir),
                           "--set", "restarts=1")
        assert code == 0
        assert "parameter sets" in out
        params = json.loads((out_dir / "params.json").read_text())
        assert params
        config = json.loads((out_dir / "config.json").read_text())
        assert config["command"] == "train bkt"
        assert config["config"] == {"restarts": 1}

    def test_train_dkt_sem_writes_checkpoint(self, capsys, labeled_corpus_file, tmp_path):
        plan = self.make_plan(capsys, labeled_corpus_file, tmp_path)
        out_dir = tmp_path / "dkt"
        code, _, _ = run(capsys, "train", "dkt-sem",
                         "--corpus", str(labeled_corpus_file),
                         "--splits", str(plan), "--out", str(out_dir),
                         "--set", "epochs=1", "--set", "embed_dim=8",
                         "--set", "hidden_size=8")
        assert code == 0
        assert (out_dir / "checkpoint.pt").exists()
        assert (out_dir / "kc_index.json").exists()
        log = json.loads((out_dir / "training_log.json").read_text())
        assert len(log) == 1


class TestEvalRunCommand:
    def test_majority_end_to_end(self, capsys, labeled_corpus_file, tmp_path):
        plan_path = tmp_path / "splits.json"
        run(capsys, "corpus", "split", "--in", str(labeled_corpus_file),
            "--out", str(plan_path), "--folds", "2")
        out_dir = tmp_path / "run"
        code, out, _ = run(capsys, "eval", "run", "--method", "majority",
                           "--corpus", str(labeled_corpus_file),
                           "--splits", str(plan_path), "--out", str(out_dir))
        assert code == 0
        summary = json.loads(out)
        assert summary["method"] == "majority"
        assert summary["folds"] == 2
        on_disk = json.loads((out_dir / "metrics.json").read_text())
        assert on_disk == summary
        assert (out_dir / "records.fold0.jsonl").exists()

    def test_config_overrides_reach_the_method(self, capsys, labeled_corpus_file, tmp_path):
        plan_path = tmp_path / "splits.json"
        run(capsys, "corpus", "split", "--in", str(labeled_corpus_file),
            "--out", str(plan_path), "--folds", "2")
        config_path = tmp_path / "conf.json"
        config_path.write_text(json.dumps({"restarts": 2, "max_iter": 5}))
        out_dir = tmp_path / "bkt-run"
        code, out, _ = run(capsys, "eval", "bkt",
                           "--corpus", str(labeled_corpus_file),
                           "--splits", str(plan_path), "--out", str(out_dir),
                           "--config", str(config_path), "--set", "max_iter=3")
        assert code == 0
        stored = json.loads((out_dir / "config.json").read_text())
        # --set beats the config file
        assert stored["config"]["max_iter"] == 3
        assert stored["config"]["restarts"] == 2


class TestCurvesCommand:
    def test_plots_from_records(self, capsys, tmp_path):
        from dialogue_kt.kt_core import PredictionRecord, save_records

        records = [
            PredictionRecord("d0", 1, 1, 0.4, (0.4,), ("kc-a",), excluded=True),
            PredictionRecord("d0", 2, 1, 0.6, (0.6,), ("kc-a",)),
            PredictionRecord("d0", 3, 0, 0.7, (0.7,), ("kc-a",)),
        ]
        records_path = tmp_path / "records.jsonl"
        save_records(records, records_path)
        out_dir = tmp_path / "curves"
        code, out, _ = run(capsys, "eval", "curves", "--records", str(records_path),
                           "--out", str(out_dir))
        assert code == 0
        assert "1 KCs" in out
        assert len(list(out_dir.glob("*.svg"))) == 1
        assert len(list(out_dir.glob("*.png"))) == 1


PIPELINE_RESPONSES = [
    # First ingested dialogue: three turn pairs.
    json.dumps({"pairs": [
        {"index": 1, "summary": "ok", "label": "correct"},
        {"index": 2, "summary": "ok", "label": "incorrect"},
        {"index": 3, "summary": "ok", "label": "na"},
    ]}),
    json.dumps({"selected": ["NF"]}),
    json.dumps({"summaries": ["a", "b", "c"], "selected": ["NF.B"]}),
    json.dumps({"pairs": [
        {"index": 1, "standards": ["NF.B.3"]},
        {"index": 2, "standards": ["NF.B.3"]},
        {"index": 3, "standards": []},
    ]}),
    # Second ingested dialogue: two turn pairs.
    json.dumps({"pairs": [
        {"index": 1, "summary": "ok", "label": "correct"},
        {"index": 2, "summary": "ok", "label": "correct"},
    ]}),
    json.dumps({"selected": ["EE"]}),
    json.dumps({"summaries": ["a", "b"], "selected": ["EE.A"]}),
    json.dumps({"pairs": [
        {"index": 1, "standards": ["EE.A.1"]},
        {"index": 2, "standards": ["EE.A.2"]},
    ]}),
]


class TestFullPipeline:
    def test_ingest_annotate_export_eval(self, capsys, tmp_path):
        corpus = tmp_path / "raw.json"
        code, _, _ = run(capsys, "corpus", "ingest", "--format", "comta",
                         "--in", str(FIXTURES / "comta_sample.json"), "--out", str(corpus))
        assert code == 0

        taxonomy = tmp_path / "taxonomy.json"
        code, _, _ = run(capsys, "taxonomy", "import",
                         "--in", str(FIXTURES / "coherence_map.json"),
                         "--out", str(taxonomy))
        assert code == 0

        responses = tmp_path / "responses.json"
        responses.write_text(json.dumps(PIPELINE_RESPONSES))
        anno_dir = tmp_path / "anno"
        code, out, _ = run(capsys, "annotate", "--corpus", str(corpus),
                           "--taxonomy", str(taxonomy),
                           "--fake-responses", str(responses),
                           "--cache-dir", str(tmp_path / "cache"),
                           "--out", str(anno_dir))
        assert code == 0
        assert "annotated 2/2 dialogues" in out
        summary = json.loads((anno_dir / "summary.json").read_text())
        assert summary["failed"] == 0

        labeled = tmp_path / "labeled.json"
        code, out, _ = run(capsys, "annotate", "export", "--corpus", str(corpus),
                           "--results", str(anno_dir / "results.jsonl"),
                           "--taxonomy", str(taxonomy), "--out", str(labeled))
        assert code == 0
        assert "exported 2/2" in out

        dialogues = load_canonical(labeled)
        first = dialogues[0].turn_pairs
        assert [p.correctness for p in first] == [1, 0, NA]
        assert first[0].kcs == ("NF.B.3",)
        assert first[2].kcs == ()
        assert [p.kcs for p in dialogues[1].turn_pairs] == [("EE.A.1",), ("EE.A.2",)]

        plan = tmp_path / "splits.json"
        code, _, _ = run(capsys, "corpus", "split", "--in", str(labeled),
                         "--out", str(plan), "--folds", "2")
        assert code == 0

        run_dir = tmp_path / "bkt-run"
        code, out, _ = run(capsys, "eval", "run", "--method", "bkt",
                           "--corpus", str(labeled), "--splits", str(plan),
                           "--out", str(run_dir), "--set", "restarts=1")
        assert code == 0
        metrics = json.loads((run_dir / "metrics.json").read_text())
        assert metrics["folds"] == 2
        assert metrics["incomplete_folds"] == []

        curves_dir = tmp_path / "curves"
        code, out, _ = run(capsys, "eval", "curves",
                           "--records", str(run_dir / "records.fold0.jsonl"),
                           "--out", str(curves_dir))
        assert code == 0

    def test_warm_cache_second_annotate_run(self, capsys, tmp_path):
        corpus = tmp_path / "raw.json"
        run(capsys, "corpus", "ingest", "--format", "comta",
            "--in", str(FIXTURES / "comta_sample.json"), "--out", str(corpus))
        taxonomy = tmp_path / "taxonomy.json"
        run(capsys, "taxonomy", "import", "--in", str(FIXTURES / "coherence_map.json"),
            "--out", str(taxonomy))
        responses = tmp_path / "responses.json"
        responses.write_text(json.dumps(PIPELINE_RESPONSES))

        base = ["annotate", "--corpus", str(corpus), "--taxonomy", str(taxonomy),
                "--fake-responses", str(responses),
                "--cache-dir", str(tmp_path / "cache")]
        code, _, _ = run(capsys, *base, "--out", str(tmp_path / "a1"))
        assert code == 0
        # The canned responses are spent, so only the cache can satisfy a rerun.
        code, out, _ = run(capsys, *base, "--out", str(tmp_path / "a2"))
        assert code == 0
        assert "2 cache hits" in out
        assert ((tmp_path / "a1" / "results.jsonl").read_text()
                == (tmp_path / "a2" / "results.jsonl").read_text())
