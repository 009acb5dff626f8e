import csv
import hashlib
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from crelgd import __version__
from crelgd.cli import main

from conftest import PUBLIC

SIM_CFG = """\
seed = 11
generator.n_loans = 4000
generator.intercept = 0.1
generator.noise_sigma = 0.25
generator.sensitivity.CPI.LDIFF6M = 2.40
generator.sensitivity.HPI.LDIFF6M = -2.23
simulate.stress_quarter = 2008Q2
data.loans = sim/loans.csv
data.mev_dir = sim/mev
model.champion = CPI.LDIFF6M, HPI.LDIFF6M
model.hpi_only = HPI.LDIFF6M
fit.target_quarter = 2008Q2
cv.model = champion
cv.k = 10
mars.predictors = CPI.LDIFF6M, HPI.LDIFF6M
predict.report = sim/fit.json
predict.model = champion
predict.x = 0.01, -0.02
"""


def run(tmp_path, command, cfg_text, *extra, name="run.cfg"):
    cfg = tmp_path / name
    cfg.write_text(cfg_text)
    return main([command, "--config", str(cfg), *extra])


@pytest.fixture
def public_dir(tmp_path):
    d = tmp_path / "public"
    d.mkdir()
    shutil.copy(PUBLIC / "CPIAUCSL.csv", d)
    return d


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    (root / "run.cfg").write_text(SIM_CFG)
    assert main(["simulate", "--config", str(root / "run.cfg"), "--out", str(root / "sim")]) == 0
    return root


class TestIngest:
    def test_empty_directory(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        assert run(tmp_path, "ingest", "data.mev_dir = empty\n", "--out", str(tmp_path / "o")) == 0
        assert "0 series" in capsys.readouterr().out

    def test_bad_month(self, tmp_path, capsys):
        d = tmp_path / "mev"
        d.mkdir()
        (d / "X.csv").write_text("date,X\n2020-12-01,1\n2020-13-01,2\n")
        assert run(tmp_path, "ingest", "data.mev_dir = mev\n", "--out", str(tmp_path / "o")) == 3
        assert "X.csv:3" in capsys.readouterr().err

    def test_public_cpi(self, tmp_path, public_dir):
        assert run(tmp_path, "ingest", f"data.mev_dir = {public_dir}\n", "--out", str(tmp_path / "o")) == 0
        rows = [r for r in (tmp_path / "o" / "ingest.csv").read_text().splitlines() if not r.startswith("#")]
        assert rows[1] == "CPIAUCSL,1947-01,2024-12,936,936,0"


class TestScreen:
    def grid(self, public_dir, extra="", leads="12"):
        return (f"data.mev_dir = {public_dir}\nscreen.pairs = CPIAUCSL.RDIFF12M:CPIAUCSL.RDIFF12M\n"
                f"screen.leads = {leads}\nscreen.windows = 1952-01:2022-12\n{extra}")

    def rows(self, path):
        return list(csv.DictReader(line for line in path.read_text().splitlines() if not line.startswith("#")))

    def test_single_cell(self, tmp_path, public_dir):
        assert run(tmp_path, "screen", self.grid(public_dir), "--out", str(tmp_path / "o")) == 0
        (row,) = self.rows(tmp_path / "o" / "screening.csv")
        assert row["lead_months"] == "12" and abs(float(row["pearson_r"]) - 0.7254) < 0.03

    def test_buckets(self, tmp_path, public_dir):
        cfg = self.grid(public_dir, "screen.buckets = 0.02, 0.04\n", leads="0, 12")
        assert run(tmp_path, "screen", cfg, "--out", str(tmp_path / "o")) == 0
        rows = self.rows(tmp_path / "o" / "screening.csv")
        assert len(rows) == 1 * 2 * 1 * (1 + 3)
        assert sum(r["bucket"] != "all" for r in rows) == 6

    def test_unknown_series(self, tmp_path, public_dir, capsys):
        cfg = f"data.mev_dir = {public_dir}\nscreen.pairs = CPIAUCSL.RDIFF12M:NOPE\n"
        assert run(tmp_path, "screen", cfg, "--out", str(tmp_path / "o")) == 2
        assert "NOPE" in capsys.readouterr().err
        assert not (tmp_path / "o" / "screening.csv").exists()

    def test_jobs_do_not_change_output(self, tmp_path, public_dir):
        cfg = self.grid(public_dir, "screen.buckets = 0.03\n", leads="0, 3, 6, 12")
        run(tmp_path, "screen", cfg, "--out", str(tmp_path / "a"))
        run(tmp_path, "screen", cfg, "--out", str(tmp_path / "b"), "--jobs", "4")
        assert (tmp_path / "a" / "screening.csv").read_bytes() == (tmp_path / "b" / "screening.csv").read_bytes()


class TestAdf:
    def test_cpi_yoy(self, tmp_path, public_dir):
        cfg = f"data.mev_dir = {public_dir}\nadf.series = CPIAUCSL.RDIFF12M\nadf.windows = 1952-01:2022-12\n"
        assert run(tmp_path, "adf", cfg, "--out", str(tmp_path / "o")) == 0
        rows = list(csv.DictReader(l for l in (tmp_path / "o" / "adf.csv").read_text().splitlines()
                                   if not l.startswith("#")))
        assert abs(float(rows[0]["p_value"]) - 0.015) < 0.02


class TestModelCommands:
    def test_simulate_then_fit_recovers(self, simulated):
        out = simulated / "sim"
        assert main(["fit", "--config", str(simulated / "run.cfg"), "--out", str(out)]) == 0
        report = json.loads((out / "fit.json").read_text())
        champ = next(m for m in report["models"] if m["name"] == "champion")
        truth = {"(Intercept)": 0.1, "CPI.LDIFF6M": 2.40, "HPI.LDIFF6M": -2.23}
        for row in champ["coefficients"]:
            assert abs(row["Estimate"] - truth[row["name"]]) <= 2 * row["Standard Error"]
        assert report["downturn_rank"][0]["model"] == "champion"

    def test_predict_and_width(self, simulated, capsys):
        out = simulated / "sim"
        main(["fit", "--config", str(simulated / "run.cfg"), "--out", str(out)])
        assert main(["predict", "--config", str(simulated / "run.cfg"), "--out", str(out)]) == 0
        pred = json.loads((out / "predict.json").read_text())["prediction"]
        assert pred > 0
        bad = simulated / "bad.cfg"
        bad.write_text(SIM_CFG.replace("predict.x = 0.01, -0.02", "predict.x = 0.01"))
        assert main(["predict", "--config", str(bad), "--out", str(out)]) == 3
        assert "expects 2" in capsys.readouterr().err

    def test_cv_rejects_one_fold(self, simulated):
        bad = simulated / "k1.cfg"
        bad.write_text(SIM_CFG.replace("cv.k = 10", "cv.k = 1"))
        assert main(["cv", "--config", str(bad), "--out", str(simulated / "sim")]) == 2

    def test_cv_and_mars(self, simulated):
        out = simulated / "sim"
        assert main(["cv", "--config", str(simulated / "run.cfg"), "--out", str(out)]) == 0
        d = json.loads((out / "cv.json").read_text())
        assert len(d["folds"]) == 10 and d["threshold_se"] == 1.0
        assert main(["mars", "--config", str(simulated / "run.cfg"), "--out", str(out)]) == 0
        terms = json.loads((out / "mars.json").read_text())["model"]["terms"]
        assert terms[0]["formula"] == "(Intercept)"

    def test_stochastic_commands_need_seed(self, tmp_path):
        assert run(tmp_path, "simulate", "generator.n_loans = 10\n", "--out", str(tmp_path / "o")) == 2
        assert run(tmp_path, "simulate", "generator.n_loans = 10\n", "--out", str(tmp_path / "o"), "--seed", "1") == 0

    def test_reports_name_command_hash_and_version(self, simulated):
        cfg_hash = hashlib.sha256((simulated / "run.cfg").read_bytes()).hexdigest()
        out = simulated / "sim"
        meta = json.loads((out / "simulate.json").read_text())["meta"]
        assert meta == {"command": "simulate", "config_sha256": cfg_hash, "seed": 11, "version": __version__}
        head = (out / "loans.csv").read_text().splitlines()[:4]
        assert head == ["# command=simulate", f"# config_sha256={cfg_hash}", "# seed=11", f"# version={__version__}"]

    def test_missing_config_file(self, tmp_path):
        assert main(["fit", "--config", str(tmp_path / "nope.cfg")]) == 2


def test_console_script(tmp_path):
    out = subprocess.run([sys.executable, "-m", "crelgd.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and __version__ in out.stdout


def test_bad_generator_value_is_config_error(tmp_path, capsys):
    assert run(tmp_path, "simulate", "seed = 1\ngenerator.n_loans = lots\n", "--out", str(tmp_path / "o")) == 2
    assert "n_loans" in capsys.readouterr().err
