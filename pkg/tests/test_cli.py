import json
import subprocess
import sys

import pytest

from conftest import MUTAG_DIR, toy_bundle
from topogcl.cli import main
from topogcl.config import ConfigError, load_config, parse_config
from topogcl.graph import save_tudataset

TINY = {
    "schema_version": 1,
    "epochs": 1,
    "batch_size": 4,
    "hidden_dim": 8,
    "embed_dim": 8,
    "iso_hidden": 4,
    "subiso_width": 4,
    "outer_hidden": 3,
    "record_wallclock": False,
    "folds": 2,
    "repeats": 1,
}


@pytest.fixture
def toy_dir(tmp_path):
    d = tmp_path / "TOY"
    save_tudataset(toy_bundle(10), d, "TOY")
    return d


@pytest.fixture
def config_file(tmp_path, toy_dir):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({**TINY, "dataset": str(toy_dir)}))
    return path


class TestConfig:
    def test_parse(self):
        cfg, run = parse_config({**TINY, "alpha": 1, "augment": [{"kind": "subgraph", "ratio": 0.2}] * 2})
        assert cfg.alpha == 1 and cfg.augment[0].kind == "subgraph"
        assert run["folds"] == 2 and run["alpha_grid"][-1] == 10000.0

    @pytest.mark.parametrize(
        "doc,message",
        [
            ({}, "schema_version"),
            ({"schema_version": 2}, "schema_version"),
            ({"schema_version": 1, "alhpa": 1}, "alhpa"),
            ({"schema_version": 1, "tau": -1}, "tau"),
            ({"schema_version": 1, "augment": [{"kind": "node_drop", "rate": 0.1}]}, "rate"),
        ],
    )
    def test_rejections(self, doc, message):
        with pytest.raises(ConfigError, match=message):
            parse_config(doc)

    def test_file_errors(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.json")
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError, match="invalid JSON"):
            load_config(tmp_path / "bad.json")


class TestIngest:
    def test_valid(self, toy_dir, capsys):
        assert main(["ingest", "--dataset", str(toy_dir)]) == 0
        assert "10 graphs, 0 violations" in capsys.readouterr().out

    def test_mutag(self, mutag, capsys):
        assert main(["ingest", "--dataset", str(MUTAG_DIR)]) == 0
        assert "188 graphs, 0 violations" in capsys.readouterr().out

    def test_missing_file(self, toy_dir, capsys):
        (toy_dir / "TOY_A.txt").unlink()
        assert main(["ingest", "--dataset", str(toy_dir)]) != 0
        err = capsys.readouterr()
        assert "TOY_A.txt" in err.err and err.out == ""

    def test_empty_dir(self, tmp_path):
        assert main(["ingest", "--dataset", str(tmp_path)]) != 0


class TestExpertise:
    def test_iso_self_pair(self, toy_dir, capsys):
        assert main(["expertise", "--dataset", str(toy_dir), "--mode", "iso", "--pairs", "3:3", "--iterations", "3"]) == 0
        header, line = capsys.readouterr().out.splitlines()
        assert "iterations=3" in header
        assert line == "3\t3\t1.0"

    def test_subiso_triangle(self, tmp_path, capsys):
        from topogcl.graph import DatasetBundle
        from conftest import triangle

        d = tmp_path / "TRI"
        save_tudataset(DatasetBundle((triangle().replace(graph_label=0),), 1, 1, "TRI"), d, "TRI")
        out = tmp_path / "out"
        assert main(["expertise", "--dataset", str(d), "--mode", "subiso", "--lambda", "1", "--out", str(out)]) == 0
        lines = (out / "expertise_subiso.tsv").read_text().splitlines()
        assert "lambda=1.0" in lines[0]
        assert len(lines[1:]) == 6
        assert all(line.split("\t")[3] == "0.5" for line in lines[1:])

    def test_bad_pair_is_usage_error(self, toy_dir, capsys):
        assert main(["expertise", "--dataset", str(toy_dir), "--mode", "iso", "--pairs", "0:99"]) == 2
        assert "0:99" in capsys.readouterr().err

    def test_unknown_mode(self, toy_dir):
        with pytest.raises(SystemExit) as exc:
            main(["expertise", "--dataset", str(toy_dir), "--mode", "kernel"])
        assert exc.value.code == 2


class TestTrainProbe:
    def test_train_outputs_and_replay(self, config_file, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
        assert {p.name for p in out.iterdir()} == {"checkpoint.json", "metrics.jsonl", "resolved_config.json"}
        rec = json.loads((out / "metrics.jsonl").read_text())
        assert set(rec) == {"epoch", "l_c", "l_iso", "l_subiso", "total", "seconds"}
        # the resolved copy reproduces the run byte for byte
        again = tmp_path / "again"
        assert main(["train", "--config", str(out / "resolved_config.json"), "--out", str(again)]) == 0
        assert (again / "metrics.jsonl").read_bytes() == (out / "metrics.jsonl").read_bytes()
        assert (again / "checkpoint.json").read_bytes() == (out / "checkpoint.json").read_bytes()

    def test_zero_weights_keep_monitor_columns(self, config_file, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
        doc = json.loads(config_file.read_text())
        doc.update(alpha=0, beta=0)
        config_file.write_text(json.dumps(doc))
        assert main(["train", "--config", str(config_file), "--out", str(out)]) == 0
        rec = json.loads((out / "metrics.jsonl").read_text())
        assert rec["l_iso"] > 0 and rec["l_subiso"] > 0 and rec["total"] == rec["l_c"]

    def test_schema_error_before_compute(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"schema_version": 1, "epochz": 3}))
        out = tmp_path / "run"
        assert main(["train", "--config", str(bad), "--out", str(out)]) == 2
        assert "epochz" in capsys.readouterr().err
        assert not out.exists()

    def test_probe(self, config_file, toy_dir, tmp_path, capsys):
        out = tmp_path / "run"
        main(["train", "--config", str(config_file), "--out", str(out)])
        code = main(
            ["probe", "--checkpoint", str(out / "checkpoint.json"), "--dataset", str(toy_dir),
             "--folds", "2", "--repeats", "3", "--out", str(out)]
        )
        assert code == 0
        summary = json.loads((out / "probe.json").read_text())
        assert len(summary["fold_accuracies"]) == 6
        assert summary["mean"] == pytest.approx(sum(summary["fold_accuracies"]) / 6, abs=1e-12)

    def test_probe_dimension_mismatch(self, config_file, tmp_path, capsys, mutag):
        out = tmp_path / "run"
        main(["train", "--config", str(config_file), "--out", str(out)])
        code = main(["probe", "--checkpoint", str(out / "checkpoint.json"), "--dataset", str(MUTAG_DIR)])
        assert code == 1
        assert "DimensionError" in capsys.readouterr().err


class TestSweepGradcheck:
    def test_sweep(self, config_file, tmp_path, capsys):
        out = tmp_path / "sw"
        code = main(["sweep", "--config", str(config_file), "--alpha-grid", "1,10", "--beta-grid", "100", "--out", str(out)])
        assert code == 0
        doc = json.loads((out / "sweep.json").read_text())
        assert [(c["alpha"], c["beta"]) for c in doc["cells"]] == [(1.0, 100.0), (10.0, 100.0)]
        assert all(len(c["fold_accuracies"]) == 2 for c in doc["cells"])
        resolved = json.loads((out / "resolved_config.json").read_text())
        assert resolved["alpha_grid"] == [1.0, 10.0]

    def test_gradcheck_toy(self, tmp_path, capsys):
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps(TINY))
        assert main(["gradcheck", "--config", str(cfg)]) == 0
        assert capsys.readouterr().out.splitlines()[-1].startswith("PASS")

    def test_gradcheck_fails_on_corrupted_rule(self, tmp_path, capsys, monkeypatch):
        from topogcl import autodiff as ad

        monkeypatch.setattr(ad.Sigmoid, "backward", lambda self, grad: (grad * 0.0,))
        cfg = tmp_path / "g.json"
        cfg.write_text(json.dumps(TINY))
        assert main(["gradcheck", "--config", str(cfg)]) == 1
        assert "FAIL" in capsys.readouterr().out


def test_console_entry_point(toy_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "topogcl.cli", "ingest", "--dataset", str(toy_dir)],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert proc.stdout.startswith("TOY: 10 graphs, 0 violations")
