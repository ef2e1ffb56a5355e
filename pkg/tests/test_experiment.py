try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import pytest
from pydantic import ValidationError

from app.config import PROJECT_ROOT
from app.exceptions import ConfigurationError
from app.experiment import (
    build_experiment,
    deep_merge,
    list_bundled_configs,
    load_experiment,
    parse_experiment,
    resolve_config_path,
)

CONFIG_DIR = PROJECT_ROOT / "configs"
BUNDLED = list_bundled_configs(CONFIG_DIR)


def _document(name):
    return tomllib.loads((CONFIG_DIR / f"{name}.toml").read_text())


class TestBundledConfigs:
    def test_all_present(self):
        assert len(BUNDLED) == 9
        assert "oscillator3d_chf" in BUNDLED

    @pytest.mark.parametrize("name", BUNDLED)
    @pytest.mark.parametrize("paper_scale", [False, True])
    def test_validates(self, name, paper_scale):
        config = load_experiment(CONFIG_DIR / f"{name}.toml", paper_scale=paper_scale)
        assert config.name == name
        assert config.mlp_architecture().input_dim == config.model.dim + 1

    def test_paper_scale_overrides(self):
        desk = load_experiment(CONFIG_DIR / "brownian_fp.toml")
        paper = load_experiment(CONFIG_DIR / "brownian_fp.toml", paper_scale=True)
        assert paper.architecture.hidden_widths == (100, 100, 100, 100)
        assert paper.train.adam_steps == 20000
        assert desk.domain == paper.domain

    @pytest.mark.parametrize(
        "name, output_dim",
        [("brownian_chf", 1), ("verhulst_pwn_chf", 2), ("duffing_gwn_fp", 1), ("oscillator3d_chf", 1)],
    )
    def test_inferred_output_dim(self, name, output_dim):
        assert load_experiment(CONFIG_DIR / f"{name}.toml").mlp_architecture().output_dim == output_dim

    def test_grid_axes(self):
        axes = load_experiment(CONFIG_DIR / "duffing_gwn_fp.toml").grid_axes()
        assert [a.size for a in axes] == [41, 61]
        assert axes[1][0] == -8.0 and axes[1][-1] == 8.0


class TestBuildExperiment:
    def test_seed_override(self):
        config = build_experiment(_document("brownian_chf"), seed=99)
        assert config.collocation.seed == config.train.seed == config.oracle.seed == 99

    def test_missing_seed_rejected(self):
        document = _document("brownian_chf")
        del document["train"]["seed"]
        with pytest.raises(ValidationError, match="train.seed"):
            build_experiment(document)

    def test_unknown_key_rejected(self):
        document = _document("brownian_chf")
        document["train"]["learning_rate"] = 0.1
        with pytest.raises(ValidationError):
            build_experiment(document)

    def test_fp_with_jumps_rejected(self):
        document = _document("verhulst_pwn_chf")
        document["route"] = "fokker_planck"
        document["collocation"]["op_sampler"] = "grid"
        document["quadrature"] = {"counts": [101]}
        document["architecture"].pop("output_dim", None)
        with pytest.raises(ValidationError, match="jump"):
            build_experiment(document)

    def test_fp_rejects_lhs_points(self):
        document = _document("brownian_fp")
        document["collocation"]["op_sampler"] = "lhs"
        document["collocation"]["n_op"] = 100
        with pytest.raises(ValidationError, match="grid or lhs_product"):
            build_experiment(document)

    def test_chf_kde_needs_inversion(self):
        document = _document("brownian_chf")
        document["oracle"]["estimators"] = ["chf", "kde"]
        del document["compare"]["inversion"]
        with pytest.raises(ValidationError, match="compare.inversion"):
            build_experiment(document)

    def test_output_times_within_horizon(self):
        document = _document("brownian_chf")
        document["outputs"]["times"] = [0.5, 2.0]
        with pytest.raises(ValidationError, match="outputs.times"):
            build_experiment(document)

    def test_dimension_mismatch(self):
        document = _document("brownian_chf")
        document["domain"]["lower"] = [-7.0, -7.0]
        document["domain"]["upper"] = [7.0, 7.0]
        with pytest.raises(ValidationError, match="domain"):
            build_experiment(document)

    def test_paper_scale_table_required(self):
        document = _document("brownian_chf")
        del document["paper_scale"]
        with pytest.raises(ConfigurationError):
            build_experiment(document, paper_scale=True)


class TestParsing:
    def test_invalid_toml(self):
        with pytest.raises(ConfigurationError, match="invalid TOML"):
            parse_experiment("name = ")

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_experiment(tmp_path / "missing.toml")

    def test_deep_merge(self):
        base = {"a": {"b": 1, "c": 2}, "d": [1]}
        merged = deep_merge(base, {"a": {"c": 3}, "d": [2]})
        assert merged == {"a": {"b": 1, "c": 3}, "d": [2]}
        assert base["a"]["c"] == 2

    def test_resolve_bundled_name(self):
        assert resolve_config_path("brownian_fp", CONFIG_DIR) == CONFIG_DIR / "brownian_fp.toml"

    def test_resolve_explicit_path(self, tmp_path):
        path = tmp_path / "mine.toml"
        path.write_text("")
        assert resolve_config_path(path, CONFIG_DIR) == path

    def test_resolve_unknown(self):
        with pytest.raises(ConfigurationError):
            resolve_config_path("no_such_config", CONFIG_DIR)

    def test_list_missing_dir(self, tmp_path):
        assert list_bundled_configs(tmp_path / "nowhere") == []
