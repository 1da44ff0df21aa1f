"""Experiment configs: presets, field-path errors, serialization and assembly."""

import numpy as np
import pytest

from conftest import small_config
from src import experiment
from src.errors import ConfigError
from src.resolvent import CONSTANT, POWER


class TestPresets:
    @pytest.mark.parametrize("name,alpha", [("heat", 1.0), ("wave", 2.0), ("fractional", 0.5)])
    def test_power_presets(self, name, alpha):
        cfg = experiment.load_preset(name)
        assert cfg.name == name
        assert cfg.operator.kernel == "power"
        assert cfg.operator.alpha == alpha
        assert cfg.noise.K == 8

    def test_ou_preset(self):
        cfg = experiment.load_preset("ou")
        setup = experiment.build(cfg)
        assert setup.kernel.kind == CONSTANT
        np.testing.assert_array_equal(setup.model.mu, [-1.0])
        np.testing.assert_array_equal(setup.model.lam, [1.0])
        assert setup.grid.n == 512

    def test_resolve(self, tmp_path):
        assert experiment.resolve("heat").name == "heat"
        path = tmp_path / "mine.toml"
        path.write_text(experiment.dumps(small_config()))
        assert experiment.resolve(str(path)).name == "small"
        with pytest.raises(ConfigError) as exc:
            experiment.resolve(str(tmp_path / "missing.toml"))
        assert exc.value.field == "--config"

    def test_env_defaults(self, tmp_path, monkeypatch):
        monkeypatch.setenv("FVSIM_SEED", "99")
        monkeypatch.setenv("FVSIM_OUTPUT_DIR", str(tmp_path))
        cfg = experiment.parse({"name": "bare"})
        assert cfg.monte_carlo.seed == 99
        assert cfg.output_dir == tmp_path / "bare"


class TestValidation:
    def test_unknown_field(self):
        with pytest.raises(ConfigError) as exc:
            experiment.parse({"noise": {"hurts": 0.5}})
        assert exc.value.field == "noise.hurts"

    def test_unknown_section(self):
        with pytest.raises(ConfigError) as exc:
            experiment.parse({"solver": {}})
        assert exc.value.field == "solver"

    def test_wrong_type(self):
        with pytest.raises(ConfigError) as exc:
            experiment.parse({"grid": {"n": "many"}})
        assert str(exc.value).startswith("grid.n:")

    @pytest.mark.parametrize("section,values,field", [
        ("noise", {"hurst": 1.0}, "noise.hurst"),
        ("noise", {"p": 1.0}, "noise.p"),
        ("operator", {"alpha": 0.0}, "operator.alpha"),
        ("operator", {"spectrum": "explicit", "values": [-1.0]}, "operator.values"),
        ("integrand", {"kind": "diagonal_constant", "values": [1.0]}, "integrand.values"),
        ("integrand", {"kind": "csv"}, "integrand.path"),
        ("monte_carlo", {"route": "euler"}, "monte_carlo.route"),
        ("monte_carlo", {"times": [0.3]}, "monte_carlo.times"),
    ])
    def test_field_paths(self, section, values, field):
        with pytest.raises(ConfigError) as exc:
            small_config(**{section: values})
        assert exc.value.field == field

    def test_overrides_revalidate(self):
        cfg = small_config()
        assert experiment.with_overrides(cfg, seed=5, replicas=10).monte_carlo.seed == 5
        with pytest.raises(ConfigError) as exc:
            experiment.with_overrides(cfg, hurst=1.2)
        assert exc.value.field == "noise.hurst"

    def test_check_times_default_to_horizon(self):
        assert small_config().check_times == (1.0,)
        assert small_config(monte_carlo={"times": [0.5, 1.0]}).check_times == (0.5, 1.0)


class TestSerialization:
    def test_round_trip(self):
        cfg = small_config(monte_carlo={"times": [0.5]}, integrand={"x0": [1.0, 0.0, 0.0]})
        assert experiment.loads(experiment.dumps(cfg)) == cfg

    def test_hash(self):
        cfg = small_config()
        assert experiment.config_hash(cfg) == experiment.config_hash(experiment.loads(experiment.dumps(cfg)))
        assert experiment.config_hash(cfg) != experiment.config_hash(experiment.with_overrides(cfg, seed=12))

    def test_invalid_toml(self):
        with pytest.raises(ConfigError):
            experiment.loads("[grid\nT = 1")


class TestBuild:
    def test_setup(self):
        setup = experiment.build(small_config())
        assert setup.kernel.kind == POWER
        assert setup.table.K == 3
        assert setup.F.K == 3
        np.testing.assert_array_equal(setup.x0, np.zeros(3))
        np.testing.assert_allclose(setup.model.mu, [-1.0, -4.0, -9.0])
        assert setup.H == 0.5

    def test_csv_integrand(self, tmp_path):
        path = tmp_path / "F.csv"
        rows = ["node,i,j,value"] + [f"{m},{k},{k},1.0" for m in range(65) for k in range(3)]
        path.write_text("\n".join(rows) + "\n")
        setup = experiment.build(small_config(integrand={"kind": "csv", "path": str(path)}))
        np.testing.assert_array_equal(setup.F.matrices[10], np.eye(3))

    def test_missing_csv(self, tmp_path):
        cfg = small_config(integrand={"kind": "csv", "path": str(tmp_path / "none.csv")})
        with pytest.raises(ConfigError) as exc:
            experiment.build(cfg)
        assert exc.value.field == "integrand.path"
