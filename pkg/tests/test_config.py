import pytest
import yaml

from src.config import config_from_dict, parse_config, write_config
from src.errors import ConfigError


def flat(**overrides):
    document = {"seed": 7, "scenario": "anticonc", "family": "identity", "p": 4, "k": 2, "n": 100_000,
                "epsilon": 0.1}
    document.update(overrides)
    return document


def full(*scenarios, **globals_):
    return {"seed": 42, "out": "reports", **globals_, "scenarios": list(scenarios)}


KFWER = {"id": "fwer", "kind": "kfwer", "family": "equicorrelated", "rho": 0.5, "p": 4, "k": 2, "n": 50,
         "alpha": 0.1, "b": 200, "n_sim": 20}


class TestParse:
    def test_minimal_flat_form(self):
        config = config_from_dict(flat())
        assert config.seed == 7
        assert config.workers == 1
        assert config.out == "reports"
        assert [s.id for s in config.scenarios] == ["anticonc"]
        assert config.scenarios[0].epsilon == 0.1

    def test_full_form(self):
        coupling = {"id": "a", "kind": "coupling", "family": "ar1", "rho": 0.7, "p": 5, "k": 2, "n": 5000}
        config = config_from_dict(full(KFWER, coupling))
        assert [s.kind for s in config.scenarios] == ["kfwer", "coupling"]
        assert config.scenarios[0].build_model().p == 4

    def test_from_file(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump(flat(seed=5)))
        assert parse_config(path).seed == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            parse_config(tmp_path / "nope.yaml")

    def test_overrides_win(self):
        config = config_from_dict(flat(), overrides={"seed": 9, "out": None, "workers": 3})
        assert config.seed == 9
        assert config.out == "reports"
        assert config.workers == 3


class TestValidation:
    def test_k_above_p_names_scenario_and_key(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(dict(KFWER, k=5)))
        assert info.value.scenario_id == "fwer"
        assert info.value.key == "k"
        assert "fwer" in str(info.value) and "'k'" in str(info.value)

    def test_duplicate_ids(self):
        with pytest.raises(ConfigError, match="duplicate"):
            config_from_dict(full(KFWER, KFWER))

    def test_unknown_scenario_key(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(dict(KFWER, colour="red")))
        assert info.value.key == "colour"

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError):
            config_from_dict(full(KFWER, verbose=True))

    def test_missing_seed(self):
        document = flat()
        del document["seed"]
        with pytest.raises(ConfigError) as info:
            config_from_dict(document)
        assert info.value.key == "seed"

    def test_seed_range(self):
        with pytest.raises(ConfigError):
            config_from_dict(flat(seed=-1))
        with pytest.raises(ConfigError):
            config_from_dict(flat(seed=2 ** 64))

    def test_grid_too_narrow(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(flat(p=4, grid={"y_min": -1.0, "y_max": 1.0, "step": 0.01}))
        assert info.value.key == "grid"

    def test_kfwer_needs_alpha(self):
        scenario = dict(KFWER)
        del scenario["alpha"]
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(scenario))
        assert info.value.key == "alpha"

    def test_mu_length(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(dict(KFWER, mu=[0.0, 1.0])))
        assert info.value.key == "mu"

    def test_bound_needs_enough_true_nulls(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(dict(KFWER, mu=[0.0, 1.0, 1.0, 1.0], estimate_bound=True)))
        assert info.value.key == "estimate_bound"

    def test_bad_correlation(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(flat(family="equicorrelated", rho=-0.9, p=4))
        assert info.value.key == "rho"

    def test_family_needs_rho(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(flat(family="ar1"))
        assert info.value.key == "rho"

    def test_too_few_draws(self):
        with pytest.raises(ConfigError) as info:
            config_from_dict(flat(n=100))
        assert info.value.key == "n"

    def test_type_checked(self):
        with pytest.raises(ConfigError, match="integer"):
            config_from_dict(flat(p="two"))
        with pytest.raises(ConfigError, match="number"):
            config_from_dict(flat(epsilon="wide"))

    def test_every_scenario_validated_before_running(self):
        bad = {"id": "late", "kind": "coupling", "family": "identity", "p": 2, "k": 3, "n": 5000}
        with pytest.raises(ConfigError) as info:
            config_from_dict(full(KFWER, bad))
        assert info.value.scenario_id == "late"


def test_write_then_parse_is_identity(tmp_path):
    config = config_from_dict(full(
        KFWER,
        {"id": "wide", "kind": "anticonc", "family": "block", "rho": 0.4, "block_size": 2, "p": 4, "k": 2,
         "n": 20_000, "epsilon": 0.05, "reference": 0.1},
        workers=2,
    ))
    path = write_config(config, tmp_path / "expanded.yaml")
    assert parse_config(path) == config
