from pathlib import Path

import pytest
import yaml

from config import PRESETS, build_config, load_config, preset_configs
from errors import ConfigError

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def minimal(**overrides):
    raw = {
        "strategies": ["standard", "ondat"],
        "datasets": [{"name": "toy", "synthetic": {"n_series": 4, "length": 60},
                      "period": 12, "horizon": 6, "input_size": 12}],
    }
    raw.update(overrides)
    return raw


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("SEED", "JOBS", "PRESET", "OUTPUT_DIR"):
        monkeypatch.delenv(f"ONDAT_{name}", raising=False)


class TestPresets:
    def test_desk_is_default(self):
        config = build_config(minimal())
        assert config.preset == "desk"
        assert config.model_config(12, 6).hidden_units == 64
        assert config.train.max_steps == 300

    def test_paper_preset(self):
        config = build_config(minimal(preset="paper"))
        assert config.model_config(12, 6).hidden_units == 512
        assert config.train.max_steps == 1500
        assert config.train.patience == 50

    def test_file_values_override_preset(self):
        config = build_config(minimal(model={"hidden_units": 32}, train={"max_steps": 10}))
        assert config.model_config(12, 6).hidden_units == 32
        assert config.model_config(12, 6).n_stacks == PRESETS["desk"]["model"]["n_stacks"]
        assert config.train.max_steps == 10

    def test_preset_configs(self):
        model_config, train_config = preset_configs("desk", 24, 18, max_steps=7, seed=None)
        assert (model_config.input_size, model_config.horizon) == (24, 18)
        assert train_config.max_steps == 7
        assert train_config.seed == 0

    def test_preset_configs_unknown(self):
        with pytest.raises(ConfigError):
            preset_configs("laptop", 24, 18)


class TestOverrides:
    def test_environment_beats_file(self, monkeypatch):
        monkeypatch.setenv("ONDAT_SEED", "9")
        monkeypatch.setenv("ONDAT_JOBS", "3")
        config = build_config(minimal(seeds=[1, 2], jobs=1))
        assert config.seeds == (9,)
        assert config.jobs == 3

    def test_cli_beats_environment(self, monkeypatch):
        monkeypatch.setenv("ONDAT_PRESET", "paper")
        config = build_config(minimal(), {"preset": "desk", "jobs": None})
        assert config.preset == "desk"
        assert config.jobs == 1

    def test_malformed_environment_value(self, monkeypatch):
        monkeypatch.setenv("ONDAT_JOBS", "many")
        with pytest.raises(ValueError, match="ONDAT_JOBS"):
            build_config(minimal())


class TestValidation:
    def test_problems_are_collected(self):
        raw = minimal(strategies=["standard", "boosting"], seeds=[-1], jobs=0, colour="red",
                      model={"hidden_units": 0}, augment={"block_size": 1})
        with pytest.raises(ConfigError) as e:
            build_config(raw)
        problems = e.value.problems
        assert "config: unknown key 'colour'" in problems
        assert any(p.startswith("strategies: unknown strategy 'boosting'") for p in problems)
        assert any(p.startswith("seeds:") for p in problems)
        assert any(p.startswith("jobs:") for p in problems)
        assert any(p.startswith("model:") for p in problems)
        assert any(p.startswith("augment.block_size") for p in problems)

    def test_empty_strategies(self):
        with pytest.raises(ConfigError) as e:
            build_config(minimal(strategies=[]))
        assert e.value.problems == ["strategies: at least one strategy is required"]

    def test_dataset_needs_exactly_one_source(self):
        dataset = {"name": "x", "period": 12, "horizon": 6, "input_size": 12}
        with pytest.raises(ConfigError, match="exactly one of 'path' or 'synthetic'"):
            build_config(minimal(datasets=[dataset]))

    def test_missing_dataset_file(self, tmp_path):
        dataset = {"path": str(tmp_path / "absent.csv"), "period": 12, "horizon": 6, "input_size": 12}
        with pytest.raises(ConfigError, match="file not found"):
            build_config(minimal(datasets=[dataset]))

    def test_unknown_train_key(self):
        with pytest.raises(ConfigError, match="train: unknown key 'epochs'"):
            build_config(minimal(train={"epochs": 3}))


class TestLoadConfig:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.yaml")

    def test_not_a_mapping(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_dataset_path_and_strategies(self, tmp_path, corpus_csv):
        path = tmp_path / "experiment.yaml"
        raw = minimal(datasets=[{"path": str(corpus_csv), "period": 12, "horizon": 6, "input_size": 12}],
                      strategies=["ondat_fixed"], augment={"block_size": 6, "stl": {"seasonal_window": 7}})
        path.write_text(yaml.safe_dump(raw))
        config = load_config(path)
        corpus = config.load_corpora()[0]
        assert corpus.name == "corpus"
        assert len(corpus) == 6
        strategy = config.build_strategies()[0]
        assert strategy.augmenter.method == "fixed_bootstrap"
        assert strategy.augmenter.block_size == 6
        assert strategy.augmenter.stl_params.seasonal_window == 7

    def test_shipped_synthetic_config(self):
        config = load_config(CONFIGS / "desk_synthetic.yaml")
        assert config.strategies == ("standard", "ondat")
        assert len(config.seeds) == 10
        corpus = config.load_corpora()[0]
        assert (len(corpus), corpus.horizon, corpus.input_size) == (50, 18, 24)
