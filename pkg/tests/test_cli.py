from __future__ import annotations

import csv
import json

import pytest

from fdi.archive import save_archive
from fdi.cli import main
from fdi.harness import sample_replica
from fdi.ingestion import SynthSpec, synth_generate


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture()
def tsv(tmp_path):
    path = tmp_path / "edges.tsv"
    path.write_text("# user feature weight\nalice\tx\t2\nalice\ty\nbob\ty\t1\ncarol\tz\t0.5\n")
    return path


@pytest.fixture(scope="module")
def planted(tmp_path_factory):
    root = tmp_path_factory.mktemp("planted")
    d = synth_generate(SynthSpec(6, 400, 0.5, seed=1, gamma_separation=120))
    save_archive(d, root / "train")
    return d, root / "train"


class TestIngest:
    def test_deterministic(self, tsv, tmp_path, capsys):
        assert main(["ingest", str(tsv), "--format", "tsv", "--out", str(tmp_path / "a")]) == 0
        assert main(["ingest", str(tsv), "--format", "tsv", "--out", str(tmp_path / "b")]) == 0
        assert "n=3 N=3 relationships=4" in capsys.readouterr().out
        for name in ("features.tsv", "users.tsv", "profiles.tsv", "dataset.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
        assert manifest["command"] == "ingest"
        assert str(tsv) in manifest["inputs"]

    def test_strict_rejects_bad_line(self, tsv, tmp_path, capsys):
        tsv.write_text(tsv.read_text() + "dave\n")
        assert main(["ingest", str(tsv), "--format", "tsv", "--out", str(tmp_path / "s"), "--strict"]) == 2
        assert "error" in capsys.readouterr().err
        assert main(["ingest", str(tsv), "--format", "tsv", "--out", str(tmp_path / "l")]) == 0

    def test_missing_input_is_runtime_error(self, tmp_path):
        assert main(["ingest", str(tmp_path / "nope.tsv"), "--format", "tsv", "--out", str(tmp_path)]) == 1

    def test_bad_flag(self, tsv, tmp_path):
        assert main(["ingest", str(tsv), "--format", "xml", "--out", str(tmp_path)]) == 2


class TestQuantify:
    def test_binary_rejects_half(self, planted, capsys):
        _, train = planted
        assert main(["quantify", str(train), "--model", "binary", "--p", "0.5"]) == 2
        assert "1/2" in capsys.readouterr().err

    def test_delta_zero_is_vacuous(self, planted, capsys):
        _, train = planted
        assert main(["quantify", str(train), "--model", "binary", "--delta", "0"]) == 0
        assert json.loads(capsys.readouterr().out)["inferable"] is True

    def test_planted_separation_inferable(self, planted, tmp_path, capsys):
        _, train = planted
        out = tmp_path / "q"
        assert main(["quantify", str(train), "--model", "binary", "--p", "0.99", "--out", str(out)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["inferable"] is True
        rows = _read_csv(out / "report.csv")
        assert len(rows) == summary["m_tilde"] == 6
        assert json.loads((out / "manifest.json").read_text())["config"]["seed"] == 0

    @pytest.mark.parametrize("model", ["distance", "distribution"])
    def test_other_models_run(self, planted, model, capsys):
        _, train = planted
        assert main(["quantify", str(train), "--model", model, "--k", "2", "--p", "0.9"]) == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["m_tilde"] == 6

    def test_seed_from_env(self, planted, monkeypatch, capsys):
        _, train = planted
        monkeypatch.setenv("SEED", "17")
        assert main(["quantify", str(train), "--model", "distance"]) == 0
        assert json.loads(capsys.readouterr().out)["params"]["seed"] == 17
        monkeypatch.setenv("SEED", "x")
        assert main(["quantify", str(train), "--model", "distance"]) == 2


class TestSweep:
    def test_single_cell_and_rerun(self, planted, tmp_path):
        _, train = planted
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        args = ["sweep", str(train), "--model", "distance", "--p", "0.8", "--k", "1", "--reps", "3"]
        assert main(args + ["--out", str(out1)]) == 0
        rows = _read_csv(out1 / "sweep.csv")
        assert len(rows) == 1
        assert rows[0]["reps_used"] == "3"
        assert main(["sweep", str(train), "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == 0
        assert (out1 / "sweep.csv").read_bytes() == (out2 / "sweep.csv").read_bytes()

    def test_key_value_config(self, planted, tmp_path):
        _, train = planted
        conf = tmp_path / "sweep.conf"
        conf.write_text("# grid\nmodel = distribution\np = 0.5, 0.9\nk = 1,2\nreps = 2\n")
        assert main(["sweep", str(train), "--config", str(conf), "--out", str(tmp_path / "o")]) == 0
        rows = _read_csv(tmp_path / "o" / "sweep.csv")
        assert [(r["p"], r["K"]) for r in rows] == [("0.5", "1"), ("0.5", "2"), ("0.9", "1"), ("0.9", "2")]

    def test_unknown_key(self, planted, tmp_path):
        _, train = planted
        conf = tmp_path / "bad.conf"
        conf.write_text("colour = red\n")
        assert main(["sweep", str(train), "--config", str(conf)]) == 2


class TestDetectAndStats:
    def test_detect(self, planted, tmp_path):
        d, train = planted
        stranger = synth_generate(SynthSpec(3, 400, 0.5, seed=42))
        save_archive(stranger, tmp_path / "target")
        out = tmp_path / "det"
        assert main(["detect", str(train), str(tmp_path / "target"), "--out", str(out)]) == 0
        rows = _read_csv(out / "detection.csv")
        assert len(rows) == 3
        assert set(rows[0]) == {"user", "mode", "statistic", "threshold", "verdict", "confidence"}
        th = json.loads((out / "thresholds.json").read_text())
        assert th["mu_star_d"] > 0

    def test_detect_known_users(self, planted, tmp_path):
        d, train = planted
        save_archive(sample_replica(d, 0.8, 3), tmp_path / "known")
        out = tmp_path / "det"
        assert main(["detect", str(train), str(tmp_path / "known"), "--mode", "distribution",
                     "--out", str(out)]) == 0
        assert all(r["verdict"] == "known" for r in _read_csv(out / "detection.csv"))

    def test_stats(self, tsv, tmp_path):
        main(["ingest", str(tsv), "--format", "tsv", "--out", str(tmp_path / "a")])
        assert main(["stats", str(tmp_path / "a"), "--out", str(tmp_path / "st")]) == 0
        rows = _read_csv(tmp_path / "st" / "user_degree.csv")
        assert {r["degree"]: r["count"] for r in rows} == {"1": "2", "2": "1"}
