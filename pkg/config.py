"""Experiment configuration: YAML file + preset + ONDAT_* environment + CLI flags.

Precedence, highest first: CLI flag, environment variable, config file, preset.
Relative dataset paths are resolved against the current working directory.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from decomp import StlParams
from errors import ConfigError
from model import ModelConfig
from train import Strategy, StrategyKind, TrainConfig
from tsdata import Corpus, load_corpus, make_synthetic_corpus
from utils import env_setting

logger = logging.getLogger(__name__)

PRESETS = {
    "paper": {
        "model": {"n_stacks": 3, "blocks_per_stack": 1, "hidden_layers": 2, "hidden_units": 512,
                  "pooling_kernels": [1, 1, 1], "loss": "mae", "window_scaling": "mean"},
        "train": {"max_steps": 1500, "batch_size": 32, "val_check_every": 50, "patience": 50,
                  "learning_rate": 1e-3},
    },
    "desk": {
        "model": {"n_stacks": 3, "blocks_per_stack": 1, "hidden_layers": 2, "hidden_units": 64,
                  "pooling_kernels": [1, 1, 1], "loss": "mae", "window_scaling": "mean"},
        "train": {"max_steps": 300, "batch_size": 32, "val_check_every": 50, "patience": 50,
                  "learning_rate": 1e-3},
    },
}
DEFAULT_PRESET = "desk"
TOP_LEVEL_KEYS = {"preset", "datasets", "model", "train", "augment", "strategies", "seeds",
                  "output_dir", "jobs", "reference"}
AUGMENT_KEYS = {"block_size", "stl", "cache_decompositions"}
SYNTHETIC_KEYS = {"n_series", "length", "seed", "ar_coef", "noise_scale"}
MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"input_size", "horizon"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)} - {"seed"}


@dataclass(frozen=True)
class DatasetSpec:
    name: str
    period: int
    horizon: int
    input_size: int
    path: Path | None = None
    synthetic: dict | None = None

    def load(self) -> Corpus:
        if self.path is not None:
            return load_corpus(self.path, self.period, self.horizon, self.input_size, name=self.name)
        return make_synthetic_corpus(period=self.period, horizon=self.horizon,
                                     input_size=self.input_size, name=self.name, **self.synthetic)


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple[DatasetSpec, ...]
    model: dict
    train: TrainConfig
    strategies: tuple[str, ...]
    seeds: tuple[int, ...]
    output_dir: Path
    preset: str = DEFAULT_PRESET
    jobs: int = 1
    reference: str = "standard"
    augment: dict = field(default_factory=dict)

    def model_config(self, input_size: int, horizon: int) -> ModelConfig:
        return ModelConfig(input_size=input_size, horizon=horizon, **self.model)

    def stl_params(self) -> StlParams:
        return StlParams.from_dict(self.augment.get("stl"))

    def build_strategies(self) -> list[Strategy]:
        return [
            Strategy.build(kind, block_size=self.augment.get("block_size"), stl_params=self.stl_params(),
                           cache_decompositions=bool(self.augment.get("cache_decompositions", False)))
            for kind in self.strategies
        ]

    def load_corpora(self) -> list[Corpus]:
        return [spec.load() for spec in self.datasets]


def _merge(base: dict, override: dict | None) -> dict:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _env_overrides() -> dict:
    overrides = {}
    for key, name, cast in (("seeds", "SEED", int), ("jobs", "JOBS", int), ("preset", "PRESET", str),
                            ("output_dir", "OUTPUT_DIR", str)):
        value = env_setting(name, cast=cast)
        if value is not None:
            overrides[key] = [value] if key == "seeds" else value
    return overrides


def _check_keys(section: dict, allowed: set, where: str, problems: list[str]) -> None:
    for key in sorted(set(section) - allowed):
        problems.append(f"{where}: unknown key {key!r}")


def _parse_dataset(index: int, raw, problems: list[str]) -> DatasetSpec | None:
    where = f"datasets[{index}]"
    if not isinstance(raw, dict):
        problems.append(f"{where}: expected a mapping")
        return None
    _check_keys(raw, {"name", "path", "synthetic", "period", "horizon", "input_size"}, where, problems)
    ints = {}
    for key in ("period", "horizon", "input_size"):
        value = raw.get(key)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            problems.append(f"{where}.{key}: expected a positive integer, got {value!r}")
        ints[key] = value
    has_path, has_synthetic = "path" in raw, "synthetic" in raw
    if has_path == has_synthetic:
        problems.append(f"{where}: give exactly one of 'path' or 'synthetic'")
        return None

    path = synthetic = None
    if has_path:
        path = Path(str(raw["path"]))
        if not path.is_file():
            problems.append(f"{where}.path: file not found: {path}")
        default_name = path.stem
    else:
        synthetic = raw["synthetic"] or {}
        if not isinstance(synthetic, dict):
            problems.append(f"{where}.synthetic: expected a mapping")
            return None
        _check_keys(synthetic, SYNTHETIC_KEYS, f"{where}.synthetic", problems)
        default_name = "synthetic"
    if any(not isinstance(v, int) or v < 1 for v in ints.values()):
        return None
    return DatasetSpec(str(raw.get("name") or default_name), path=path, synthetic=synthetic, **ints)


def build_config(raw: dict | None, cli_overrides: dict | None = None) -> ExperimentConfig:
    """Validate a raw mapping and turn it into an ExperimentConfig; every problem is reported at once."""
    raw = dict(raw or {})
    file_and_env = _merge(raw, _env_overrides())
    settings = _merge(file_and_env, {k: v for k, v in (cli_overrides or {}).items() if v is not None})
    problems: list[str] = []
    _check_keys(raw, TOP_LEVEL_KEYS, "config", problems)

    preset_name = settings.get("preset") or DEFAULT_PRESET
    if preset_name not in PRESETS:
        problems.append(f"preset: expected one of {sorted(PRESETS)}, got {preset_name!r}")
        preset_name = DEFAULT_PRESET
    preset = PRESETS[preset_name]

    model_settings = _merge(preset["model"], settings.get("model"))
    _check_keys(model_settings, MODEL_KEYS, "model", problems)
    train_settings = _merge(preset["train"], settings.get("train"))
    _check_keys(train_settings, TRAIN_KEYS, "train", problems)
    augment = settings.get("augment") or {}
    _check_keys(augment, AUGMENT_KEYS, "augment", problems)

    datasets = []
    raw_datasets = settings.get("datasets") or []
    if not raw_datasets:
        problems.append("datasets: at least one dataset is required")
    for i, item in enumerate(raw_datasets):
        spec = _parse_dataset(i, item, problems)
        if spec is not None:
            datasets.append(spec)

    strategies = [str(s) for s in settings.get("strategies") or []]
    if not strategies:
        problems.append("strategies: at least one strategy is required")
    valid_kinds = [k.value for k in StrategyKind]
    for s in strategies:
        if s not in valid_kinds:
            problems.append(f"strategies: unknown strategy {s!r}; expected one of {valid_kinds}")
    if len(set(strategies)) != len(strategies):
        problems.append("strategies: duplicates are not allowed")

    seeds = settings.get("seeds", [0])
    seeds = [seeds] if isinstance(seeds, int) else list(seeds or [])
    if not seeds:
        problems.append("seeds: at least one seed is required")
    for s in seeds:
        if not isinstance(s, int) or isinstance(s, bool) or not 0 <= s < 2 ** 64:
            problems.append(f"seeds: {s!r} is not a 64-bit unsigned integer")

    jobs = settings.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        problems.append(f"jobs: expected a positive integer, got {jobs!r}")

    # constructing the configs surfaces their own range checks
    if not any(p.startswith("model") for p in problems):
        try:
            ModelConfig(input_size=1, horizon=1, **model_settings)
        except (TypeError, ValueError) as e:
            problems.append(f"model: {e}")
    train_config = None
    if not any(p.startswith("train") for p in problems):
        try:
            train_config = TrainConfig(**train_settings)
        except (TypeError, ValueError) as e:
            problems.append(f"train: {e}")
    try:
        StlParams.from_dict(augment.get("stl"))
    except (TypeError, ValueError) as e:
        problems.append(f"augment.stl: {e}")
    block_size = augment.get("block_size")
    if block_size is not None and (not isinstance(block_size, int) or block_size < 2):
        problems.append(f"augment.block_size: expected an integer >= 2, got {block_size!r}")

    reference = settings.get("reference", "standard")
    if strategies and reference not in strategies:
        logger.warning("Timing reference %r is not among the strategies; timing table will be empty", reference)

    if problems:
        raise ConfigError(problems)

    if "pooling_kernels" in model_settings:
        model_settings["pooling_kernels"] = tuple(model_settings["pooling_kernels"])
    return ExperimentConfig(
        datasets=tuple(datasets),
        model=model_settings,
        train=train_config,
        strategies=tuple(strategies),
        seeds=tuple(seeds),
        output_dir=Path(str(settings.get("output_dir") or "results")),
        preset=preset_name,
        jobs=jobs,
        reference=reference,
        augment=augment,
    )


def load_config(path, cli_overrides: dict | None = None) -> ExperimentConfig:
    """Read a YAML experiment file and validate it."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise ConfigError([f"{path}: invalid YAML ({e})"]) from e
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return build_config(raw, cli_overrides)


def preset_configs(preset: str, input_size: int, horizon: int, **train_overrides) -> tuple[ModelConfig, TrainConfig]:
    """Model and train configs straight from a preset, for single-run commands."""
    if preset not in PRESETS:
        raise ConfigError([f"preset: expected one of {sorted(PRESETS)}, got {preset!r}"])
    settings = dict(PRESETS[preset]["model"])
    settings["pooling_kernels"] = tuple(settings["pooling_kernels"])
    train_settings = _merge(PRESETS[preset]["train"], {k: v for k, v in train_overrides.items() if v is not None})
    try:
        return ModelConfig(input_size=input_size, horizon=horizon, **settings), TrainConfig(**train_settings)
    except (TypeError, ValueError) as e:
        raise ConfigError([str(e)]) from e
