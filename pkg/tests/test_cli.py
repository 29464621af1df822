"""Command-line surface tests: config resolution, exit codes, outputs."""

import json
import os

import numpy as np
import pytest

from bioie.cli import (
    ConfigError,
    RunConfig,
    config_text,
    main,
    parse_config_file,
    resolve_config,
)

FAST = {
    "dataset": "synthetic",
    "synth_counts": "Size=12",
    "d_w": "16",
    "d_p": "6",
    "hidden": "8",
    "heads": "2",
    "gcn_layers": "1",
    "epochs": "2",
    "batch_size": "8",
    "folds": "3",
    "patience": "1",
    "window": "4",
    "seed": "1",
}


def flags(outdir, extra=None, base=FAST):
    merged = dict(base)
    merged["outdir"] = str(outdir)
    if extra:
        merged.update(extra)
    out = []
    for key, value in merged.items():
        out.extend([f"--{key}", value])
    return out


class TestResolveConfig:
    def test_empty_file_pure_defaults(self, tmp_path):
        path = tmp_path / "empty.cfg"
        path.write_text("# nothing but a comment\n\n")
        assert resolve_config(path, {}, env={}) == RunConfig()

    def test_flag_beats_file(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("hidden = 64\n")
        cfg = resolve_config(path, {"hidden": "32"}, env={})
        assert cfg.hidden == 32

    def test_resolved_round_trip(self, tmp_path):
        cfg = resolve_config(None, {"hidden": "48", "dataset": "cdr",
                                    "lr": "0.0003"}, env={})
        path = tmp_path / "resolved.cfg"
        path.write_text(config_text(cfg))
        again = resolve_config(path, {}, env={})
        assert again == cfg

    def test_unknown_key_names_nearest(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("hiddne = 64\n")
        with pytest.raises(ConfigError, match="hidden"):
            parse_config_file(path)

    def test_env_seed_lowest_precedence(self, tmp_path):
        env = {"BIOIE_SEED": "77"}
        assert resolve_config(None, {}, env=env).seed == 77
        assert resolve_config(None, {"seed": "5"}, env=env).seed == 5
        path = tmp_path / "c.cfg"
        path.write_text("seed = 9\n")
        assert resolve_config(path, {}, env=env).seed == 9

    def test_bad_boolean(self):
        with pytest.raises(ConfigError, match="boolean"):
            resolve_config(None, {"use_gcn": "maybe"}, env={})


class TestExitCodes:
    def test_unknown_flag_exits_2(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as err:
            main(["cv", "--bogus", "1"])
        assert err.value.code == 2

    def test_unknown_command_exits_2(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_data_error_exits_1(self, tmp_path, capsys):
        code = main(["ingest", "--dataset", "pathology", "--data",
                     str(tmp_path / "missing.jsonl"),
                     "--outdir", str(tmp_path / "out")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_config_error_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("no_such_key = 1\n")
        code = main(["cv", "--config", str(bad)])
        assert code == 1


class TestCommands:
    def test_synth_then_cv_happy_path(self, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["cv"] + flags(out)) == 0
        assert (out / "cv_metrics.txt").exists()
        assert (out / "resolved.cfg").exists()
        text = (out / "cv_metrics.txt").read_text()
        assert "fold 0" in text and "task pathology:Size" in text

    def test_synth_writes_records_and_counts(self, tmp_path):
        out = tmp_path / "synth"
        assert main(["synth"] + flags(out)) == 0
        records = (out / "records.jsonl").read_text().splitlines()
        assert len(records) == 12
        counts = json.loads((out / "counts.json").read_text())
        assert counts == {"Size": 12}

    def test_ingest_reports_counts(self, tmp_path, capsys):
        out = tmp_path / "ing"
        assert main(["ingest"] + flags(out)) == 0
        stats = json.loads((out / "ingest.json").read_text())
        assert stats["documents"] == 12
        assert stats["positives"] == 12

    def test_build_graphs_writes_edge_list(self, tmp_path):
        out = tmp_path / "graphs"
        assert main(["build-graphs"] + flags(out)) == 0
        lines = (out / "graphs.tsv").read_text().splitlines()
        assert lines == sorted(lines) and lines

    def test_train_eval_predict_pipeline(self, tmp_path, capsys):
        out = tmp_path / "train"
        assert main(["train"] + flags(out)) == 0
        ckpt = out / "model.ckpt"
        assert ckpt.exists()
        assert (out / "metrics.tsv").read_text().count("\ttrain\t") == 2

        out2 = tmp_path / "eval"
        assert main(["eval"] + flags(out2, {"checkpoint": str(ckpt)})) == 0
        assert (out2 / "eval.tsv").exists()

        out3 = tmp_path / "pred"
        assert main(["predict"] + flags(out3, {"checkpoint": str(ckpt)})) == 0
        lines = (out3 / "predictions.tsv").read_text().splitlines()
        assert len(lines) == 24  # 12 reports x (1 positive + 1 distractor)
        keys = []
        for line in lines:
            fields = line.split("\t")
            assert len(fields) == 5
            prob = float(fields[4])
            assert 0.0 <= prob <= 1.0
            keys.append((fields[0], fields[1], fields[2]))
        assert keys == sorted(keys)

    def test_ablate_emits_seven_variant_rows(self, tmp_path):
        out = tmp_path / "ablate"
        assert main(["ablate"] + flags(out, {"epochs": "1"})) == 0
        rows = (out / "ablation.tsv").read_text().splitlines()[1:]
        assert len(rows) == 7
        from bioie.pipeline import ABLATION_VARIANTS
        assert [r.split("\t")[0] for r in rows] == list(ABLATION_VARIANTS)
        params = [int(r.split("\t")[1]) for r in rows]
        assert len(set(params)) == 7

    def test_transfer_both_directions(self, tmp_path):
        src = tmp_path / "a"
        dst = tmp_path / "b"
        assert main(["synth"] + flags(src)) == 0
        assert main(["synth"] + flags(dst, {"seed": "2",
                                            "synth_style": "b"})) == 0
        out = tmp_path / "xfer"
        extra = {
            "data": str(src / "records.jsonl"),
            "target_data": str(dst / "records.jsonl"),
            "epochs": "1",
        }
        assert main(["transfer"] + flags(out, extra)) == 0
        text = (out / "transfer.txt").read_text()
        assert "source->target" in text and "target->source" in text

    def test_cv_driven_by_config_file(self, tmp_path):
        cfg_file = tmp_path / "c.cfg"
        lines = [f"{k} = {v}" for k, v in FAST.items()]
        lines.append(f"outdir = {tmp_path / 'run'}")
        lines.append("# trailing comment")
        cfg_file.write_text("\n".join(lines) + "\n")
        assert main(["cv", "--config", str(cfg_file)]) == 0
        assert (tmp_path / "run" / "cv_metrics.txt").exists()

    def test_train_with_grid_search(self, tmp_path):
        out = tmp_path / "grid"
        extra = {"grid": "lr=0.001|0.0003", "epochs": "1"}
        assert main(["train"] + flags(out, extra)) == 0
        grid = json.loads((out / "grid.json").read_text())
        assert len(grid["leaderboard"]) == 2
        assert set(grid["best"]) == {"lr"}

    def test_task_filter_restricts_output(self, tmp_path):
        out = tmp_path / "filtered"
        extra = {"synth_counts": "Size=8,Grade=8", "folds": "2",
                 "epochs": "1", "task": "pathology:Grade"}
        assert main(["cv"] + flags(out, extra)) == 0
        text = (out / "cv_metrics.txt").read_text()
        assert "pathology:Grade" in text and "pathology:Size" not in text

    def test_unknown_task_filter_lists_available(self, tmp_path, capsys):
        out = tmp_path / "missing"
        extra = {"task": "pathology:TNM"}
        assert main(["cv"] + flags(out, extra)) == 1
        assert "pathology:Size" in capsys.readouterr().err

    def test_multi_task_cv_reports_overall_aggregates(self, tmp_path):
        out = tmp_path / "multi"
        extra = {"synth_counts": "Size=8,Grade=8", "folds": "2", "epochs": "1"}
        assert main(["cv"] + flags(out, extra)) == 0
        text = (out / "cv_metrics.txt").read_text()
        assert "task pathology:Size" in text
        assert "task pathology:Grade" in text
        assert "overall (unweighted macro over tasks)" in text
        assert "overall (instance-weighted)" in text

    def test_end_to_end_determinism(self, tmp_path):
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert main(["cv"] + flags(out1)) == 0
        assert main(["cv"] + flags(out2)) == 0
        m1 = (out1 / "cv_metrics.txt").read_bytes()
        m2 = (out2 / "cv_metrics.txt").read_bytes()
        assert m1 == m2
