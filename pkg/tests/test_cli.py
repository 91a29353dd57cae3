import csv
import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from pujoint.cli import SchemaError, main, predict_csv
from pujoint.data import Dataset, PUDataset, load_csv, standardize
from pujoint.estimators import classify, fit_naive, fit_oracle, predict_posterior
from pujoint.evaluation import accuracy


def simulate(tmp_path, name, *extra):
    out = tmp_path / name
    assert main(["simulate", "--out", str(out), *extra]) == 0
    return out


class TestSimulate:
    def test_columns(self, tmp_path):
        f = simulate(tmp_path, "d.csv", "--n", "50", "--p", "3", "--scenario", "2", "--g", "0.4", "--with-truth")
        frame = pd.read_csv(f)
        assert list(frame.columns) == ["x1", "x2", "x3", "s", "y"]
        assert np.all(frame.s <= frame.y)

    def test_seeded(self, tmp_path):
        a = simulate(tmp_path, "a.csv", "--n", "40", "--p", "2", "--seed", "5").read_text()
        b = simulate(tmp_path, "b.csv", "--n", "40", "--p", "2", "--seed", "5").read_text()
        c = simulate(tmp_path, "c.csv", "--n", "40", "--p", "2", "--seed", "6").read_text()
        assert a == b and a != c


class TestFitPredict:
    def test_naive_round_trip(self, tmp_path):
        data = simulate(tmp_path, "d.csv", "--n", "300", "--p", "4", "--c", "0.4")
        model = tmp_path / "m.json"
        probs = tmp_path / "p.csv"
        assert main(["fit", "--method", "naive", "--data", str(data), "--label", "s", "--out", str(model)]) == 0
        assert main(["predict", "--model", str(model), "--data", str(data), "--out", str(probs)]) == 0
        ds = load_csv(data, "s")
        z, _ = standardize(ds)
        in_memory = predict_posterior(fit_naive(PUDataset(z.X, z.Y)), z.X)
        out = pd.read_csv(probs)
        assert list(out.columns) == ["y_hat"]
        assert np.max(np.abs(out.y_hat.to_numpy() - in_memory)) <= 1e-12

    def test_propensity_column(self, tmp_path):
        data = simulate(tmp_path, "d.csv", "--n", "300", "--p", "3")
        model = tmp_path / "m.json"
        main(["fit", "--method", "lbe", "--data", str(data), "--label", "s", "--out", str(model)])
        payload = json.loads(model.read_text())
        assert payload["schema_version"] == 1
        assert payload["scaling"]["feature_names"] == ["x1", "x2", "x3"]
        out = predict_csv(payload, data)
        assert list(out.columns) == ["y_hat", "e_hat"]

    def test_schema_mismatch(self, tmp_path, capsys):
        data = simulate(tmp_path, "d.csv", "--n", "100", "--p", "3")
        other = simulate(tmp_path, "o.csv", "--n", "100", "--p", "4")
        model = tmp_path / "m.json"
        main(["fit", "--method", "naive", "--data", str(data), "--label", "s", "--out", str(model)])
        with pytest.raises(SchemaError):
            predict_csv(json.loads(model.read_text()), other)
        code = main(["predict", "--model", str(model), "--data", str(other), "--out", str(tmp_path / "p.csv")])
        assert code == 2
        assert "feature columns" in capsys.readouterr().err

    def test_renamed_column(self, tmp_path):
        data = simulate(tmp_path, "d.csv", "--n", "100", "--p", "2")
        model = tmp_path / "m.json"
        main(["fit", "--method", "naive", "--data", str(data), "--label", "s", "--out", str(model)])
        renamed = tmp_path / "r.csv"
        renamed.write_text(data.read_text().replace("x2", "zz", 1))
        with pytest.raises(SchemaError):
            predict_csv(json.loads(model.read_text()), renamed)

    def test_unknown_method(self, tmp_path):
        data = simulate(tmp_path, "d.csv", "--n", "50", "--p", "2")
        with pytest.raises(SystemExit):
            main(["fit", "--method", "svm", "--data", str(data), "--label", "s", "--out", str(tmp_path / "m")])

    def test_tm_full_labelling_close_to_oracle(self, tmp_path):
        common = ["--n", "2000", "--p", "5", "--c", "1.0", "--with-truth"]
        train = simulate(tmp_path, "train.csv", *common, "--seed", "1")
        test = simulate(tmp_path, "test.csv", *common, "--seed", "2")
        model = tmp_path / "m.json"
        probs = tmp_path / "p.csv"
        assert main(["fit", "--method", "tm", "--data", str(train), "--label", "s", "--drop", "y",
                     "--out", str(model)]) == 0
        assert main(["predict", "--model", str(model), "--data", str(test), "--drop", "s", "y",
                     "--out", str(probs)]) == 0
        y_test = pd.read_csv(test).y.to_numpy()
        acc_tm = accuracy(classify(pd.read_csv(probs).y_hat), y_test)

        tr = load_csv(train, "y")
        te = load_csv(test, "y")
        keep = [i for i, n in enumerate(tr.feature_names) if n != "s"]
        z, sc = standardize(Dataset(tr.X[:, keep], tr.Y))
        oracle = fit_oracle(z)
        acc_oracle = accuracy(classify(predict_posterior(oracle, sc.apply(te.X[:, keep]))), te.Y)
        assert abs(acc_tm - acc_oracle) <= 0.02


class TestExperimentAndTable:
    def test_experiment_and_table(self, tmp_path, capsys):
        cfg = {
            "data_source": {"kind": "artif", "artif": 1, "n": 200, "p": 3},
            "scenario": {"kind": "scar_constant", "c": 0.5},
            "sweep": [0.4, 0.8],
            "methods": ["naive", "tm_simple", "oracle"],
            "replications": 2,
            "base_seed": 3,
        }
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps(cfg))
        out = tmp_path / "res"
        assert main(["experiment", "--config", str(cfg_file), "--output-dir", str(out)]) == 0
        assert "tm_simple" in capsys.readouterr().out
        assert (out / "report.json").exists()
        assert main(["table", str(out / "report.json"), "--metric", "ae", "--out", str(tmp_path / "t.csv")]) == 0
        rows = list(csv.reader((tmp_path / "t.csv").open()))
        assert rows[0] == ["dataset", "naive", "tm_simple", "oracle", "p-value"]
        assert rows[-1][0] == "avg. rank"

    def test_module_entry_point(self):
        res = subprocess.run([sys.executable, "-m", "pujoint", "--help"], capture_output=True, text=True)
        assert res.returncode == 0
        assert "simulate" in res.stdout
