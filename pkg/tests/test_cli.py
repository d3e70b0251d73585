import json

import numpy as np
import pytest

from near.cli import main
from near.data import write_idx
from near.netdef import Conv2D, Dense, Flatten, InitScheme, ModelSpec, mlp
from near.scoring import near_score


def strip_timestamp(path):
    report = json.loads(path.read_text())
    report.pop("timestamp")
    return json.dumps(report, sort_keys=True)


@pytest.fixture
def files(tmp_path):
    rng = np.random.default_rng(0)
    feats = rng.standard_normal((80, 6))
    csv = tmp_path / "feats.csv"
    np.savetxt(csv, feats, delimiter=",")
    model = tmp_path / "mlp.json"
    model.write_text(mlp([6, 10, 3], activation="Tanh").to_json())
    template = tmp_path / "template.json"
    template.write_text(mlp([6, 8, 1], activation="Tanh").to_json())
    ranks = tmp_path / "ranks.csv"
    ranks.write_text("id,score,accuracy\n" + "".join(f"n{i},{i},{0.1 * i}\n" for i in range(10)))
    return {"csv": csv, "model": model, "template": template, "ranks": ranks, "dir": tmp_path, "feats": feats}


class TestScore:
    def test_report(self, files):
        out = files["dir"] / "r.json"
        code = main(["score", "--model", str(files["model"]), "--data", str(files["csv"]),
                     "--reps", "4", "--seed", "7", "--out", str(out)])
        assert code == 0
        rep = json.loads(out.read_text())
        assert rep["schema"] == "near.report/v1" and rep["command"] == "score"
        assert rep["data"]["standardized"] is True
        res = rep["result"]
        assert res["repetitions"] == 4 and res["seed"] == 7 and len(res["scores"]) == 4
        assert [layer["width"] for layer in res["layers"]] == [10, 3]

    def test_matches_library(self, files):
        out = files["dir"] / "r.json"
        main(["score", "--model", str(files["model"]), "--data", str(files["csv"]),
              "--reps", "3", "--standardize", "off", "--out", str(out)])
        lib = near_score(mlp([6, 10, 3], activation="Tanh"), files["feats"], 3, 0)
        assert json.loads(out.read_text())["result"]["mean"] == lib.mean_score

    def test_stdout(self, files, capsys):
        assert main(["score", "--model", str(files["model"]), "--data", str(files["csv"]), "--reps", "2"]) == 0
        assert json.loads(capsys.readouterr().out)["command"] == "score"

    def test_missing_data(self, files, capsys):
        out = files["dir"] / "r.json"
        code = main(["score", "--model", str(files["model"]), "--data", str(files["dir"] / "nope.idx"),
                     "--out", str(out)])
        assert code != 0
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["error"] == "FileNotFound"
        assert not out.exists()

    def test_bad_reps(self, files, capsys):
        assert main(["score", "--model", str(files["model"]), "--data", str(files["csv"]), "--reps", "0"]) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_insufficient_samples(self, files, capsys):
        model = files["dir"] / "wide.json"
        model.write_text(mlp([6, 500, 1]).to_json())
        assert main(["score", "--model", str(model), "--data", str(files["csv"])]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "InsufficientSamples"

    def test_idx_conv_model(self, files):
        imgs = files["dir"] / "imgs.idx"
        write_idx(imgs, np.random.default_rng(1).integers(0, 256, (20, 6, 6), dtype=np.uint8))
        spec = ModelSpec((Conv2D(1, 4, 3), Flatten(), Dense(64, 2)), "ReLU", "Identity",
                         InitScheme("KaimingUniform"), 0)
        model = files["dir"] / "cnn.json"
        model.write_text(spec.to_json())
        out = files["dir"] / "r.json"
        assert main(["score", "--model", str(model), "--data", str(imgs), "--reps", "2", "--out", str(out)]) == 0
        rep = json.loads(out.read_text())
        assert rep["data"]["standardized"] is False
        assert rep["model"]["input_shape"] == [6, 6, 1]

    def test_config_file(self, files):
        cfg = files["dir"] / "cfg.json"
        out = files["dir"] / "r.json"
        cfg.write_text(json.dumps({"model": str(files["model"]), "data": str(files["csv"]), "reps": 2,
                                   "out": str(out)}))
        assert main(["--config", str(cfg), "score"]) == 0
        assert json.loads(out.read_text())["result"]["repetitions"] == 2


class TestEstimateSizes:
    def args(self, files, out, *extra):
        return ["estimate-sizes", "--model", str(files["template"]), "--data", str(files["csv"]),
                "--reps", "2", "--candidate-sizes", "4,8,16,32,64", "--out", str(out), *extra]

    def test_report(self, files):
        out = files["dir"] / "s.json"
        assert main(self.args(files, out)) == 0
        rep = json.loads(out.read_text())
        assert len(rep["result"]["sizes"]) == 1
        assert [p["size"] for p in rep["result"]["layers"][0]["points"]] == [4, 8, 16, 32, 64]

    def test_fraction_monotone(self, files):
        a, b = files["dir"] / "a.json", files["dir"] / "b.json"
        assert main(self.args(files, a, "--fraction", "0.5")) == 0
        assert main(self.args(files, b, "--fraction", "0.005")) == 0
        sa = json.loads(a.read_text())["result"]["sizes"]
        sb = json.loads(b.read_text())["result"]["sizes"]
        assert all(x <= y for x, y in zip(sa, sb))

    @pytest.mark.parametrize("fraction", ["1.5", "0", "-0.2"])
    def test_invalid_fraction(self, files, capsys, fraction):
        assert main(self.args(files, files["dir"] / "x.json", "--fraction", fraction)) == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_bad_candidates(self, files, capsys):
        assert main(self.args(files, files["dir"] / "x.json", "--candidate-sizes", "8,x")) == 2


class TestRank:
    def test_concordant(self, files):
        out = files["dir"] / "k.json"
        assert main(["rank", str(files["ranks"]), "--pairs", "1000", "--out", str(out)]) == 0
        row = json.loads(out.read_text())["results"][0]
        assert row["kendall_tau"] == 1.0 and row["spearman_rho"] == 1.0 and row["pairwise_win"] == 1.0

    def test_constant_accuracy(self, files, capsys):
        p = files["dir"] / "flat.csv"
        p.write_text("id,score,accuracy\na,1,0.5\nb,2,0.5\nc,3,0.5\n")
        assert main(["rank", str(p)]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "DegenerateSample"

    def test_average_rank_table(self, files):
        rng = np.random.default_rng(3)
        inputs = []
        for ds in ("a", "b", "c"):
            accs = rng.random(30)
            for proxy, noise in (("good", 0.05), ("bad", 1.0)):
                p = files["dir"] / f"{proxy}_{ds}.csv"
                scores = accs + rng.normal(0, noise, 30)
                p.write_text("id,score,accuracy\n" + "".join(f"{i},{s},{a}\n" for i, (s, a)
                                                              in enumerate(zip(scores, accs))))
                inputs.append(f"{proxy}@{ds}={p}")
        out = files["dir"] / "avg.json"
        assert main(["rank", *inputs, "--pairs", "2000", "--out", str(out)]) == 0
        avg = json.loads(out.read_text())["average_rank"]
        assert avg == {"good": 1.0, "bad": 2.0}

    def test_missing_file(self, files, capsys):
        assert main(["rank", str(files["dir"] / "none.csv")]) == 1
        assert json.loads(capsys.readouterr().err)["error"] == "FileNotFound"


class TestCompareHparams:
    def test_table(self, files):
        out = files["dir"] / "h.json"
        code = main(["compare-hparams", "--model", str(files["model"]), "--data", str(files["csv"]),
                     "--reps", "2", "--activations", "SiLU,ReLU", "--inits", "XavierUniform,Uniform01",
                     "--out", str(out)])
        assert code == 0
        table = json.loads(out.read_text())["table"]
        assert len(table) == 4
        means = [r["mean"] for r in table]
        assert means == sorted(means, reverse=True)

    def test_single_combination_equals_score(self, files):
        h, s = files["dir"] / "h.json", files["dir"] / "s.json"
        common = ["--model", str(files["model"]), "--data", str(files["csv"]), "--reps", "3", "--seed", "4"]
        main(["compare-hparams", *common, "--activations", "Tanh", "--inits", "XavierUniform", "--out", str(h)])
        main(["score", *common, "--out", str(s)])
        row = json.loads(h.read_text())["table"][0]
        assert row["result"] == json.loads(s.read_text())["result"]

    @pytest.mark.parametrize("flag", ["--activations", "--inits"])
    def test_empty_list(self, files, capsys, flag):
        code = main(["compare-hparams", "--model", str(files["model"]), "--data", str(files["csv"]), flag, ""])
        assert code == 2
        assert json.loads(capsys.readouterr().err)["error"] == "ConfigError"

    def test_unknown_activation(self, files):
        assert main(["compare-hparams", "--model", str(files["model"]), "--data", str(files["csv"]),
                     "--activations", "Swish"]) == 2


class TestDeterminism:
    def commands(self, files, out, seed):
        common = ["--model", str(files["model"]), "--data", str(files["csv"]), "--reps", "2", "--seed", str(seed)]
        return [
            ["score", *common, "--out", str(out)],
            ["estimate-sizes", "--model", str(files["template"]), "--data", str(files["csv"]), "--reps", "2",
             "--seed", str(seed), "--candidate-sizes", "4,8,16,32", "--out", str(out)],
            ["rank", str(files["ranks"]), "--pairs", "500", "--seed", str(seed), "--out", str(out)],
            ["compare-hparams", *common, "--activations", "ReLU,Tanh", "--inits", "XavierUniform",
             "--out", str(out)],
        ]

    def test_same_seed_same_report(self, files):
        out = files["dir"] / "d.json"
        for first, second, other in zip(self.commands(files, out, 5), self.commands(files, out, 5),
                                        self.commands(files, out, 6)):
            assert main(first) == 0
            a = strip_timestamp(out)
            assert main(second) == 0
            assert strip_timestamp(out) == a
            assert main(other) == 0
            assert strip_timestamp(out) != a
