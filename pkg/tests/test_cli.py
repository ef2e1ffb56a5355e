import json

import pytest

from app.cli import build_parser, main
from app.net.checkpoint import load_checkpoint

TINY_CHF = """
name = "tiny_brownian_chf"
route = "chf"

[model]
dim = 1
drift = [[]]
gwn_diffusion = [[[{ exp = [0], coef = 1.0 }]]]

[initial]
kind = "gaussian"
mean = [0.0]
cov = [[1.0]]

[domain]
lower = [-4.0]
upper = [4.0]
horizon = 0.5

[architecture]
hidden_widths = [8]

[collocation]
op_sampler = "lhs"
n_op = 200
ic_sampler = "uniform"
n_ic = 20
n_origin = 10
seed = 1

[train]
optimizer = "adam"
adam_steps = 30
report_every = 10
seed = 2

[oracle]
n_paths = 400
dt = 0.01
seed = 3
estimators = ["chf", "kde"]

[compare]
grid_counts = [33]

[compare.inversion]
u = { lower = -4.0, upper = 4.0, count = 81 }
x = { lower = -3.0, upper = 3.0, count = 31 }

[outputs]
times = [0.0, 0.5]
"""


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(TINY_CHF)
    return path


class TestParser:
    def test_subcommands(self):
        args = build_parser().parse_args(["train", "--config", "brownian_fp", "--paper-scale", "--seed", "5"])
        assert args.command == "train"
        assert args.paper_scale
        assert args.seed == 5

    def test_config_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["derive"])


class TestDerive:
    def test_writes_residual(self, tmp_path, capsys):
        assert main(["derive", "--config", "brownian_chf", "--out", str(tmp_path)]) == 0
        text = (tmp_path / "residual.txt").read_text()
        assert text.startswith("Q[phi]")
        assert json.loads((tmp_path / "residual.json").read_text())
        assert "Q[phi]" in capsys.readouterr().out

    def test_unknown_config_exits_2(self, tmp_path, capsys):
        assert main(["derive", "--config", "no_such_config", "--out", str(tmp_path)]) == 2
        assert "error:" in capsys.readouterr().err

    def test_invalid_config_exits_2(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text(TINY_CHF.replace("seed = 2\n", ""))
        assert main(["derive", "--config", str(path), "--out", str(tmp_path)]) == 2

    def test_compare_without_checkpoint_exits_2(self, tiny_config, tmp_path):
        assert main(["compare", "--config", str(tiny_config), "--out", str(tmp_path / "run")]) == 2

    def test_peer_config_without_checkpoint_exits_2(self, tiny_config, tmp_path, capsys):
        argv = ["compare", "--config", str(tiny_config), "--out", str(tmp_path / "run"), "--peer-config", "brownian_fp"]
        assert main(argv) == 2
        assert "--peer-checkpoint" in capsys.readouterr().err


class TestTrain:
    def test_train_writes_checkpoint_and_trace(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        loaded = load_checkpoint(out / "checkpoint.json")
        assert loaded.metadata["config"] == "tiny_brownian_chf"
        assert (out / "loss_trace.csv").read_text().startswith("step,phase,total")
        metrics = json.loads((out / "train_metrics.json").read_text())
        assert metrics["steps"] == 30

    def test_compare_without_ensemble_exits_2(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "run"
        assert main(["train", "--config", str(tiny_config), "--out", str(out)]) == 0
        capsys.readouterr()
        assert main(["compare", "--config", str(tiny_config), "--out", str(out)]) == 2
        assert "run simulate first" in capsys.readouterr().err


@pytest.mark.slow
class TestPipeline:
    def test_train_simulate_compare(self, tiny_config, tmp_path):
        out = tmp_path / "run"
        for command in ("train", "simulate", "compare"):
            assert main([command, "--config", str(tiny_config), "--out", str(out)]) == 0
        metrics = json.loads((out / "compare_metrics.json").read_text())
        assert [s["time"] for s in metrics["slices"]] == [0.0, 0.5]
        assert "mc_sup_error" in metrics["slices"][0]
        assert "inversion_mc_sup_error" in metrics["slices"][-1]
        assert (out / "inverted_x1_t0p5000.csv").is_file()

    def test_csv_ensemble_feeds_compare(self, tiny_config, tmp_path):
        tiny_config.write_text(TINY_CHF.replace("seed = 3\n", 'seed = 3\nensemble_format = "csv"\n'))
        out = tmp_path / "run"
        for command in ("train", "simulate", "compare"):
            assert main([command, "--config", str(tiny_config), "--out", str(out)]) == 0
        assert (out / "ensemble.csv").is_file()
        assert not (out / "ensemble.npz").exists()
        metrics = json.loads((out / "compare_metrics.json").read_text())
        assert all("mc_sup_error" in s for s in metrics["slices"])
