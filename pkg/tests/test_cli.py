"""Command-line interface: subcommands, exit codes, environment handling."""

import json

import pytest

from multibc.cli import EXIT_NUMERIC, EXIT_OK, EXIT_SCHEMA, main
from multibc.config import KINDS
from multibc.experiments import KIND_RUNNERS


@pytest.fixture
def write_cfg(tmp_path, minimal_doc):
    def make(kind: str, mutate=None, stem: str = "cfg") -> str:
        doc = minimal_doc(kind)
        if mutate is not None:
            mutate(doc)
        p = tmp_path / f"{stem}.json"
        p.write_text(json.dumps(doc))
        return str(p)

    return make


class TestValidate:
    def test_ok(self, write_cfg, capsys):
        code = main(["validate", "--config", write_cfg("kg-scan")])
        assert code == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["ok"] is True
        assert out["kind"] == "kg-scan"
        assert len(out["config_hash"]) == 64

    def test_schema_error_exits_2(self, write_cfg, capsys):
        def bad(doc):
            doc["run"]["typo"] = 1

        code = main(["validate", "--config", write_cfg("kg-scan", bad)])
        assert code == EXIT_SCHEMA
        err = capsys.readouterr().err
        assert "config error" in err
        assert "run.typo" in err

    def test_missing_seed_exits_2(self, write_cfg, capsys):
        def bad(doc):
            del doc["seed"]

        code = main(["validate", "--config", write_cfg("kg-scan", bad)])
        assert code == EXIT_SCHEMA
        assert "seed" in capsys.readouterr().err

    def test_unreadable_file_exits_2(self, tmp_path, capsys):
        code = main(["validate", "--config", str(tmp_path / "absent.json")])
        assert code == EXIT_SCHEMA

    def test_seed_override_changes_hash(self, write_cfg, capsys):
        cfg = write_cfg("kg-scan")
        main(["validate", "--config", cfg])
        base = json.loads(capsys.readouterr().out)["config_hash"]
        main(["validate", "--config", cfg, "--seed-override", "99"])
        assert json.loads(capsys.readouterr().out)["config_hash"] != base


class TestRun:
    def test_run_writes_results_and_prints_manifest(self, write_cfg, tmp_path, capsys):
        out = tmp_path / "res"
        code = main(["run", "--config", write_cfg("kg-scan"), "--out", str(out)])
        assert code == EXIT_OK
        manifest = json.loads(capsys.readouterr().out)
        assert manifest["kind"] == "kg-scan"
        assert (out / "manifest.json").is_file()
        assert (out / "summary.csv").is_file()

    def test_numeric_failure_exits_3(self, write_cfg, tmp_path, capsys, monkeypatch):
        def boom(cfg, pool):
            raise FloatingPointError("overflow in reduction")

        monkeypatch.setitem(KIND_RUNNERS, "kg-scan", boom)
        code = main(
            ["run", "--config", write_cfg("kg-scan"), "--out", str(tmp_path / "r")]
        )
        assert code == EXIT_NUMERIC
        assert "overflow" in capsys.readouterr().err

    def test_interrupt_exits_130(self, write_cfg, tmp_path, monkeypatch, capsys):
        def boom(cfg, pool):
            raise KeyboardInterrupt

        monkeypatch.setitem(KIND_RUNNERS, "kg-scan", boom)
        code = main(
            ["run", "--config", write_cfg("kg-scan"), "--out", str(tmp_path / "r")]
        )
        assert code == 130

    def test_workers_env(self, write_cfg, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("MULTIBC_WORKERS", "2")
        code = main(
            ["run", "--config", write_cfg("rogers-audit"), "--out", str(tmp_path / "r")]
        )
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["workers"] == 2

    def test_workers_flag_beats_env(self, write_cfg, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("MULTIBC_WORKERS", "2")
        code = main(
            [
                "run",
                "--config",
                write_cfg("rogers-audit"),
                "--out",
                str(tmp_path / "r"),
                "--workers",
                "1",
            ]
        )
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["workers"] == 1

    def test_bad_workers_env_exits_2(self, write_cfg, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("MULTIBC_WORKERS", "many")
        code = main(
            ["run", "--config", write_cfg("kg-scan"), "--out", str(tmp_path / "r")]
        )
        assert code == EXIT_SCHEMA
        assert "MULTIBC_WORKERS" in capsys.readouterr().err

    def test_seed_override_reaches_manifest(self, write_cfg, tmp_path, capsys):
        code = main(
            [
                "run",
                "--config",
                write_cfg("kg-scan"),
                "--out",
                str(tmp_path / "r"),
                "--seed-override",
                "424242",
            ]
        )
        assert code == EXIT_OK
        assert json.loads(capsys.readouterr().out)["seed"] == 424242


class TestEmitPlotdata:
    def _run_then_emit(self, write_cfg, tmp_path, capsys, kind="poisson-hit"):
        cfg = write_cfg(kind)
        out = tmp_path / "res"
        assert main(["run", "--config", cfg, "--out", str(out)]) == EXIT_OK
        capsys.readouterr()
        code = main(["emit-plotdata", "--config", cfg, "--out", str(out)])
        return code, out, capsys.readouterr().out

    def test_plot_files_written(self, write_cfg, tmp_path, capsys):
        code, out, stdout = self._run_then_emit(write_cfg, tmp_path, capsys)
        assert code == EXIT_OK
        reply = json.loads(stdout)
        assert reply["files"]
        for name in reply["files"]:
            text = (out / name).read_text()
            assert name.startswith("plot_")
            assert "# config_hash: " in text
            data = [l for l in text.splitlines() if not l.startswith("#")]
            assert all(len(l.split()) == 3 for l in data)

    def test_missing_manifest_exits_2(self, write_cfg, tmp_path, capsys):
        out = tmp_path / "never-ran"
        out.mkdir()
        code = main(["emit-plotdata", "--config", write_cfg("kg-scan"), "--out", str(out)])
        assert code == EXIT_SCHEMA
        assert "run the config first" in capsys.readouterr().err

    def test_kind_mismatch_exits_2(self, write_cfg, tmp_path, capsys):
        out = tmp_path / "res"
        assert main(["run", "--config", write_cfg("kg-scan"), "--out", str(out)]) == EXIT_OK
        other = write_cfg("rogers-audit", stem="other")
        code = main(["emit-plotdata", "--config", other, "--out", str(out)])
        assert code == EXIT_SCHEMA
        assert "kind" in capsys.readouterr().err

    def test_hash_mismatch_exits_2(self, write_cfg, tmp_path, capsys):
        out = tmp_path / "res"
        assert main(["run", "--config", write_cfg("kg-scan"), "--out", str(out)]) == EXIT_OK

        def reseed(doc):
            doc["seed"] += 1

        other = write_cfg("kg-scan", reseed, stem="other")
        code = main(["emit-plotdata", "--config", other, "--out", str(out)])
        assert code == EXIT_SCHEMA
        assert "different effective config" in capsys.readouterr().err


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(KINDS)
    listed = {l.split("\t")[0] for l in lines}
    assert listed == set(KINDS)
    assert all("\t" in l and l.split("\t")[1] for l in lines)
