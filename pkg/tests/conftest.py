import numpy as np
import pytest

from tsdata import Corpus, Series, make_synthetic_corpus, write_corpus


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False,
                     help="run acceptance-scale experiments")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def seasonal_values(length=60, period=12, level=100.0, slope=0.5, amplitude=10.0, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    values = level + slope * t + amplitude * np.sin(2 * np.pi * t / period)
    if noise:
        values = values + rng.normal(0.0, noise, size=length)
    return values


@pytest.fixture
def make_series():
    def factory(series_id="A", length=60, period=12, **kwargs):
        return Series(series_id, period, seasonal_values(length, period, **kwargs))
    return factory


@pytest.fixture
def small_corpus():
    """Six noisy monthly series long enough for q=12, h=6"""
    series = [
        Series(f"S{i}", 12, seasonal_values(60, 12, level=50.0 + 10 * i, noise=1.0, seed=i))
        for i in range(6)
    ]
    return Corpus(tuple(series), horizon=6, input_size=12, name="small")


@pytest.fixture
def synthetic_corpus():
    return make_synthetic_corpus(n_series=8, length=72, period=12, horizon=6, input_size=12, seed=3)


@pytest.fixture
def corpus_csv(tmp_path, small_corpus):
    return write_corpus(small_corpus, tmp_path / "corpus.csv")
