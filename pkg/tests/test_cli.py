import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from epp import MixingScheme, laplace_ehmm, partition_prior
from epp import io as fio
from epp.cli import main
from epp.distributions import PredictionTable
from epp.experiments import blocks
from epp.oracles import Partition


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.fixture
def ab_preds(tmp_path):
    t = PredictionTable.constant({"a": {"0": 0.1, "1": 0.9}, "b": {"0": 0.9, "1": 0.1}}, 4)
    path = tmp_path / "preds.csv"
    fio.write_predictions(t, path)
    return path


def write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestGen:
    def test_blocks(self, tmp_path):
        out = tmp_path / "d.txt"
        assert main(["gen", "blocks", "--lengths", "3,2", "--symbols", "1,0", "--output", str(out)]) == 0
        assert fio.read_outcomes(out) == list("11100")

    def test_blocks_default_is_three_blocks(self, capsys):
        assert main(["gen", "blocks"]) == 0
        assert fio.parse_outcomes(capsys.readouterr().out) == blocks([50, 50, 50], [1, 0, 1])

    def test_hmm_is_seeded(self, tmp_path):
        paths = [tmp_path / f"d{k}.txt" for k in range(3)]
        for p, seed in zip(paths, ("7", "7", "8")):
            assert main(["gen", "hmm", "--model", "slotmachine", "--T", "300", "--seed", seed, "--output", str(p)]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes()
        assert paths[0].read_bytes() != paths[2].read_bytes()

    def test_seed_from_environment(self, tmp_path, monkeypatch):
        monkeypatch.setenv("EPP_SEED", "7")
        a, b = tmp_path / "a", tmp_path / "b"
        main(["gen", "hmm", "--T", "100", "--output", str(a)])
        main(["gen", "hmm", "--T", "100", "--seed", "7", "--output", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_bad_params(self):
        assert main(["gen", "blocks", "--lengths", "3,x"]) == 2
        assert main(["gen", "blocks", "--lengths", "3,2", "--symbols", "1"]) == 2
        assert main(["gen", "hmm"]) == 2


class TestRun:
    def test_forward_equals_sleep_yesterday(self, tmp_path, capsys):
        data = tmp_path / "d.txt"
        main(["gen", "hmm", "--T", "200", "--seed", "3", "--output", str(data)])
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(["run", "--algorithm", "forward", "--ehmm", "slotmachine", "--data", str(data), "--output", str(a)]) == 0
        first = capsys.readouterr().out
        assert main(["run", "--algorithm", "epp-sleep", "--scheme", "yesterday", "--ehmm", "slotmachine",
                     "--data", str(data), "--output", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        assert capsys.readouterr().out == first

    def test_mpp_round_two(self, tmp_path, ab_preds, capsys):
        data = write(tmp_path, "d.txt", "1 1\n")
        assert main(["run", "--algorithm", "mpp", "--scheme", "fixedshare:0.0", "--preds", str(ab_preds), "--data", data]) == 0
        out = capsys.readouterr().out
        table = rows(out[: out.index("cumloss=")])
        assert float(table[1]["pred:1"]) == pytest.approx(0.82, abs=1e-15)
        assert float(table[1]["w:a"]) == pytest.approx(0.9)

    def test_laplace_blocks_bound(self, tmp_path, capsys):
        data = write(tmp_path, "d.txt", fio.format_outcomes(blocks([50, 50, 50], [1, 0, 1])))
        part = Partition.from_cells([list(range(1, 51)) + list(range(101, 151)), range(51, 101)])
        ppath = write(tmp_path, "p.txt", str(part))
        rc = main(["run", "--algorithm", "epp-freeze", "--ehmm", "laplace", "--scheme", "uniformpast:0.05",
                   "--data", data, "--partition", ppath, "--output", str(tmp_path / "t.csv")])
        out = dict(line.split("=", 1) for line in capsys.readouterr().out.split() if "=" in line)
        expected = -math.log(partition_prior(MixingScheme.uniform_past(0.05), part)) + math.log(101) + math.log(51)
        assert rc == 0 and out["ok"] == "1"
        assert float(out["bound"]) == pytest.approx(expected, rel=1e-12)
        assert float(out["cumloss"]) <= expected

    def test_bayes_subset(self, tmp_path, ab_preds, capsys):
        data = write(tmp_path, "d.txt", "1 0 1\n")
        assert main(["run", "--algorithm", "forward", "--ehmm", "bayes:1", "--preds", str(ab_preds), "--data", data]) == 0
        out = capsys.readouterr().out
        assert float(out.split("cumloss=")[1]) == pytest.approx(-math.log(0.9 * 0.1 * 0.9))

    def test_eps_floor_rescues_zero(self, tmp_path, capsys):
        data = write(tmp_path, "d.txt", "0 10\n")
        assert main(["run", "--algorithm", "forward", "--ehmm", "slotmachine", "--data", data]) == 3
        assert "round 2" in capsys.readouterr().err
        assert main(["run", "--algorithm", "forward", "--ehmm", "slotmachine", "--data", data, "--eps-floor", "1e-6"]) == 0

    def test_parse_errors(self, tmp_path, ab_preds):
        data = write(tmp_path, "d.txt", "1 1\n")
        base = ["run", "--preds", str(ab_preds), "--data", data]
        assert main(base + ["--scheme", "fixedshare:2"]) == 2
        assert main(base + ["--scheme", "wobble"]) == 2
        assert main(base + ["--algorithm", "guess"]) == 2
        assert main(["run", "--data", data]) == 2
        assert main(base + ["--ehmm", str(tmp_path / "missing.ehmm")]) == 2
        assert main(["run", "--preds", str(ab_preds), "--data", write(tmp_path, "x.txt", "1 7\n")]) == 2

    def test_ehmm_file(self, tmp_path, ab_preds, capsys):
        text = "experts: a b\nstates: s t\ninit: s 1\ntrans: s t 1\ntrans: t t 1\nprod: s a 1\nprod: t b 1\n"
        model = write(tmp_path, "chain.ehmm", text)
        data = write(tmp_path, "d.txt", "1 0\n")
        assert main(["run", "--algorithm", "forward", "--ehmm", model, "--preds", str(ab_preds), "--data", data]) == 0
        out = capsys.readouterr().out
        assert float(out.split("cumloss=")[1]) == pytest.approx(-2 * math.log(0.9))

    def test_partition_report(self, tmp_path, ab_preds, capsys):
        data = write(tmp_path, "d.txt", "1 0 0\n")
        rep = tmp_path / "r.csv"
        assert main(["run", "--algorithm", "epp-sleep", "--scheme", "fixedshare:0.2", "--preds", str(ab_preds),
                     "--data", data, "--partition-report", str(rep), "--output", str(tmp_path / "t.csv")]) == 0
        table = rows(rep.read_text())
        assert len(table) == 5
        assert all(r["bound_ok"] == "1" for r in table)

    def test_derived_square(self, tmp_path, capsys):
        acts = np.array([[0.2, 0.8]] * 4)
        apath = write(tmp_path, "a.csv", fio.format_actions(acts, ["a", "b"]))
        data = write(tmp_path, "d.txt", "1 1 0 1\n")
        assert main(["run", "--algorithm", "derived:square", "--scheme", "fixedshare:0.1", "--actions", apath,
                     "--data", data, "--output", str(tmp_path / "o.csv")]) == 0
        table = rows((tmp_path / "o.csv").read_text())
        assert [r["t"] for r in table] == ["1", "2", "3", "4"]
        assert float(table[0]["action"]) == pytest.approx(0.5)
        assert all(float(r["loss"]) <= float(r["bound"]) + 1e-9 for r in table)

    def test_derived_needs_actions(self, tmp_path):
        data = write(tmp_path, "d.txt", "1\n")
        assert main(["run", "--algorithm", "derived:hellinger", "--data", data]) == 2


class TestOracle:
    def test_bayes_reduction(self, capsys):
        assert main(["oracle", "thm3", "--instances", "20", "--T", "50"]) == 0
        assert "pass" in capsys.readouterr().out.lower()

    def test_mixture_bound(self, tmp_path):
        out = tmp_path / "r.csv"
        rc = main(["oracle", "thm4", "--instances", "20", "--T", "6", "--scheme", "uniformpast:0.2",
                   "--variant", "both", "--output", str(out)])
        assert rc == 0
        table = rows(out.read_text())
        assert len(table) >= 20
        assert min(float(r["slack"]) for r in table) >= -1e-9

    def test_adversarial(self):
        assert main(["oracle", "adversarial", "--T", "5", "--eps", "1e-6"]) == 0

    def test_capacity(self, capsys):
        assert main(["oracle", "thm4", "--instances", "1", "--T", "12"]) == 4
        assert "error" in capsys.readouterr().err

    def test_reports_are_deterministic(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            main(["oracle", "cor3", "--instances", "3", "--T", "5", "--seed", "11", "--output", str(p)])
        assert a.read_bytes() == b.read_bytes()


class TestExperiment:
    def test_figure1(self, tmp_path, capsys):
        out, svg = tmp_path / "f.csv", tmp_path / "f.svg"
        assert main(["experiment", "figure1", "--output", str(out), "--svg", str(svg)]) == 0
        table = rows(out.read_text())
        assert len(table) == 150
        assert float(table[50]["in_context"]) == pytest.approx(51 / 52)
        assert float(table[50]["frozen"]) == pytest.approx(0.5)
        assert float(table[100]["in_context"]) == pytest.approx(51 / 102)
        assert float(table[100]["frozen"]) == pytest.approx(51 / 52)
        info = dict(line.split("=", 1) for line in capsys.readouterr().out.split())
        assert float(info["epp_cumloss"]) <= float(info["bound"])
        assert svg.read_text().startswith("<svg")

    def test_counterexample(self, capsys):
        assert main(["experiment", "counterexample"]) == 0
        table = rows(capsys.readouterr().out)
        assert table[0]["fixedshare:0.1"] == table[0]["fixedshare:0.5"]
        assert table[1]["fixedshare:0.1"] != table[1]["fixedshare:0.5"]

    def test_relearn_demo(self, capsys):
        assert main(["experiment", "relearn-demo"]) == 0
        table = rows(capsys.readouterr().out)
        assert set(table[0]) == {"t", "outcome", "forward", "fixedshare:0.05", "uniformpast:0.05"}


def test_console_script(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "epp.cli", "gen", "blocks", "--lengths", "2,1", "--symbols", "a,b"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.split() == ["a", "a", "b"]
