import json
from collections import Counter

import numpy as np
import pytest

import train
from augment import AugmenterConfig
from errors import TrainingError
from model import ForecastModel, ModelConfig, OptimizerState, init_model, parameter_shapes
from train import Strategy, StrategyKind, TrainConfig, TrainLog, fit, make_batch, train_step, validate
from tsdata import Corpus, Series, make_synthetic_corpus, split


def tiny_model_config(q=12, h=6, **overrides):
    settings = dict(input_size=q, horizon=h, n_stacks=1, hidden_layers=2, hidden_units=16,
                    pooling_kernels=(1,))
    settings.update(overrides)
    return ModelConfig(**settings)


def naive_model(q, h):
    """Forecast = last input value repeated (inputs must be positive)"""
    config = tiny_model_config(q, h, hidden_layers=1, hidden_units=q, window_scaling="none")
    params = {k: np.zeros(s) for k, s in parameter_shapes(config).items()}
    params["stack0.block0.hidden0.weight"] = np.eye(q)
    params["stack0.block0.forecast.weight"][q - 1, :] = 1.0
    return ForecastModel(config, params)


def constant_corpus(n=5, value=5.0):
    series = tuple(Series(f"C{i}", 12, np.full(40, value + i)) for i in range(n))
    return Corpus(series, horizon=6, input_size=12)


IDENTITY_ONDAT = Strategy(StrategyKind.ONDAT, AugmenterConfig.identity())


class TestStrategy:
    def test_build_picks_augmenter(self):
        assert Strategy.build("standard").augmenter.method == "identity"
        assert Strategy.build("ondat").augmenter.method == "mbb"
        assert Strategy.build("ondat_fixed").augmenter.method == "fixed_bootstrap"

    def test_standard_must_not_augment(self):
        with pytest.raises(ValueError):
            Strategy(StrategyKind.STANDARD, AugmenterConfig())

    @pytest.mark.parametrize("kind, training, validation", [
        ("standard", False, False),
        ("da_apriori", False, False),
        ("ondat", True, True),
        ("ondat_train_only", True, False),
        ("ondat_val_only", False, True),
        ("ondat_fixed", True, True),
    ])
    def test_augmentation_stages(self, kind, training, validation):
        strategy = Strategy.build(kind)
        assert (strategy.augments_training, strategy.augments_validation) == (training, validation)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Strategy.build("boosting")


class TestTrainConfig:
    def test_rejects_non_positive(self):
        with pytest.raises(ValueError):
            TrainConfig(patience=0)

    def test_rejects_negative_seed(self):
        with pytest.raises(ValueError):
            TrainConfig(seed=-1)


class TestMakeBatch:
    def test_clamped_to_pool(self, small_corpus):
        views = split(small_corpus).train_views()[:1]
        assert len(make_batch(views, 32, np.random.default_rng(0))) == 1

    def test_no_duplicates_within_batch(self, small_corpus):
        batch = make_batch(split(small_corpus), 4, np.random.default_rng(0))
        assert len({s.id for s in batch}) == 4

    def test_seeded_sequence_repeats(self, small_corpus):
        views = split(small_corpus).train_views()
        a, b = np.random.default_rng(3), np.random.default_rng(3)
        for _ in range(10):
            assert [s.id for s in make_batch(views, 2, a)] == [s.id for s in make_batch(views, 2, b)]

    def test_uniform_sampling(self):
        views = [Series(k, 1, np.ones(5)) for k in "ABC"]
        rng = np.random.default_rng(0)
        counts = Counter(make_batch(views, 1, rng)[0].id for _ in range(10_000))
        sigma = np.sqrt(10_000 * (1 / 3) * (2 / 3))
        assert all(abs(c - 10_000 / 3) <= 3 * sigma for c in counts.values())

    def test_empty_pool(self):
        with pytest.raises(TrainingError):
            make_batch([], 4, np.random.default_rng(0))


class TestTrainStep:
    def test_identity_ondat_matches_standard(self, small_corpus):
        batch = split(small_corpus).train_views()[:3]
        a = init_model(tiny_model_config(), 0)
        b = a.copy()
        _, loss_a = train_step(a, batch, Strategy.build("standard"), np.random.default_rng(0), OptimizerState())
        _, loss_b = train_step(b, batch, IDENTITY_ONDAT, np.random.default_rng(0), OptimizerState())
        assert loss_a == pytest.approx(loss_b, abs=1e-12)
        for name in a.params:
            np.testing.assert_allclose(a.params[name], b.params[name], rtol=0, atol=1e-12)

    def test_ondat_doubles_the_batch(self, small_corpus, monkeypatch):
        seen = []
        original = train.embed_many

        def spy(series_views, q, h):
            seen.append(len(series_views))
            return original(series_views, q, h)

        monkeypatch.setattr(train, "embed_many", spy)
        batch = split(small_corpus).train_views()[:3]
        train_step(init_model(tiny_model_config(), 0), batch, Strategy.build("ondat"),
                   np.random.default_rng(0), OptimizerState())
        assert seen == [6]

    def test_step_is_bitwise_reproducible(self, small_corpus):
        batch = split(small_corpus).train_views()[:3]
        results = []
        for _ in range(2):
            model = init_model(tiny_model_config(), 1)
            _, loss = train_step(model, batch, Strategy.build("ondat"), np.random.default_rng(9), OptimizerState())
            results.append((loss, model.params))
        assert results[0][0] == results[1][0]
        for name in results[0][1]:
            assert np.array_equal(results[0][1][name], results[1][1][name])

    def test_timer_records_phases(self, small_corpus):
        timer = train.PhaseTimer()
        train_step(init_model(tiny_model_config(), 0), split(small_corpus).train_views()[:2],
                   Strategy.build("ondat"), np.random.default_rng(0), OptimizerState(), timer)
        assert set(timer.as_dict()) == {"augment", "forward_backward"}


class TestValidate:
    def test_perfect_model_scores_zero(self):
        s = split(constant_corpus())
        assert validate(naive_model(12, 6), s, Strategy.build("standard"), np.random.default_rng(0)) == 0.0

    @pytest.mark.parametrize("kind, rows", [("standard", 5), ("ondat", 10), ("ondat_val_only", 10),
                                            ("ondat_train_only", 5)])
    def test_window_count(self, kind, rows, monkeypatch):
        shapes = []
        original = train.smape

        def spy(forecast, actual):
            shapes.append(actual.shape)
            return original(forecast, actual)

        monkeypatch.setattr(train, "smape", spy)
        s = split(make_synthetic_corpus(n_series=5, length=60, horizon=6, input_size=12))
        validate(init_model(tiny_model_config(), 0), s, Strategy.build(kind), np.random.default_rng(0))
        assert shapes == [(rows, 6)]

    def test_augmented_validation_of_constant_series_stays_perfect(self):
        s = split(constant_corpus())
        assert validate(naive_model(12, 6), s, Strategy.build("ondat"), np.random.default_rng(0)) == pytest.approx(0.0, abs=1e-9)


class TestFit:
    def test_zero_steps_returns_initial_model(self, small_corpus):
        config = tiny_model_config()
        model, log = fit(split(small_corpus), Strategy.build("standard"), config, TrainConfig(max_steps=0, seed=4))
        assert log.stop_reason == "max_steps"
        assert log.steps_run == 0
        assert log.checkpoint_step == 0
        assert len(log.validation_scores) == 1
        assert model.validation_score == log.validation_scores[0]

    def test_frozen_validation_stops_after_patience(self, small_corpus):
        config = TrainConfig(max_steps=300, batch_size=4, val_check_every=10, patience=50, learning_rate=0.0)
        model, log = fit(split(small_corpus), Strategy.build("standard"), tiny_model_config(), config)
        assert log.stop_reason == "early_stop"
        assert log.steps_run == 50
        assert log.checkpoint_step == 0
        assert model.validation_score == min(log.validation_scores)

    def test_checkpoint_is_best_score(self, small_corpus):
        config = TrainConfig(max_steps=60, batch_size=4, val_check_every=10, patience=100, learning_rate=1e-2)
        model, log = fit(split(small_corpus), Strategy.build("ondat"), tiny_model_config(), config)
        assert model.validation_score == min(log.validation_scores)
        assert log.validation_steps == [0, 10, 20, 30, 40, 50, 60]
        assert log.steps_run <= 60

    def test_identity_ondat_trajectory_matches_standard(self, small_corpus):
        config = TrainConfig(max_steps=100, batch_size=3, val_check_every=25, patience=100, seed=7)
        s = split(small_corpus)
        model_a, log_a = fit(s, Strategy.build("standard"), tiny_model_config(), config)
        model_b, log_b = fit(s, IDENTITY_ONDAT, tiny_model_config(), config)
        np.testing.assert_allclose(log_a.step_losses, log_b.step_losses, rtol=0, atol=1e-12)
        np.testing.assert_allclose(log_a.validation_scores, log_b.validation_scores, rtol=0, atol=1e-12)
        for name in model_a.params:
            np.testing.assert_allclose(model_a.params[name], model_b.params[name], rtol=0, atol=1e-12)

    def test_seeded_runs_repeat(self, small_corpus):
        config = TrainConfig(max_steps=20, batch_size=3, val_check_every=10, seed=2)
        s = split(small_corpus)
        _, log_a = fit(s, Strategy.build("ondat"), tiny_model_config(), config)
        _, log_b = fit(s, Strategy.build("ondat"), tiny_model_config(), config)
        assert log_a.step_losses == log_b.step_losses
        assert log_a.validation_scores == log_b.validation_scores

    def test_da_apriori_adds_one_synthetic_per_series(self, small_corpus, caplog):
        caplog.set_level("INFO")
        config = TrainConfig(max_steps=5, batch_size=3, val_check_every=5)
        fit(split(small_corpus), Strategy.build("da_apriori"), tiny_model_config(), config)
        assert "Apriori augmentation added 6 synthetic series" in caplog.text

    def test_mismatched_window_sizes(self, small_corpus):
        with pytest.raises(TrainingError):
            fit(split(small_corpus), Strategy.build("standard"), tiny_model_config(q=8), TrainConfig(max_steps=1))

    def test_minimum_length_series_cannot_train(self):
        series = tuple(Series(f"Q{i}", 4, np.tile([2.0, 3.0, 4.0, 3.0], 6) + i) for i in range(5))
        corpus = Corpus(series, horizon=8, input_size=8)
        with pytest.raises(TrainingError, match="input_size \\+ 3\\*horizon = 32"):
            fit(split(corpus), Strategy.build("standard"), tiny_model_config(q=8, h=8),
                TrainConfig(max_steps=1))

    def test_short_train_parts_are_counted(self, caplog):
        pattern = [2.0, 3.0, 4.0, 3.0]
        series = [Series(f"Q{i}", 4, np.tile(pattern, 6) + i) for i in range(4)]
        series += [Series(f"L{i}", 4, np.tile(pattern, 10) + i) for i in range(2)]
        corpus = Corpus(tuple(series), horizon=8, input_size=8)
        _, log = fit(split(corpus), Strategy.build("standard"), tiny_model_config(q=8, h=8),
                     TrainConfig(max_steps=2, batch_size=2, val_check_every=1))
        assert "Excluded 4 of 6 series from the training pool" in caplog.text
        assert log.steps_run == 2

    @pytest.mark.slow
    def test_desk_scale_checkpoint(self):
        corpus = make_synthetic_corpus(n_series=50, length=120, seed=0)
        config = TrainConfig(max_steps=300, seed=0)
        model_config = ModelConfig(input_size=24, horizon=18, hidden_units=64)
        model, log = fit(split(corpus), Strategy.build("ondat"), model_config, config)
        assert all(model.validation_score <= score for score in log.validation_scores)


class TestTrainLog:
    def test_jsonl(self, tmp_path):
        log = TrainLog("ondat", 3, step_losses=[0.5, 0.4], validation_steps=[0, 2],
                       validation_scores=[0.3, 0.2], checkpoint_step=2, stop_reason="max_steps",
                       phase_seconds={"validation": 0.1})
        lines = log.write_jsonl(tmp_path / "log.jsonl").read_text().splitlines()
        records = [json.loads(line) for line in lines]
        assert [r["type"] for r in records] == ["validation", "step", "step", "validation", "summary"]
        assert records[3]["checkpoint"] is True
        assert records[-1]["best_smape"] == 0.2
