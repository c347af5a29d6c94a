"""Time-series containers, long-CSV ingestion, temporal partitioning and time-delay embedding.

Index ranges are 0-based and half-open. For a series of length t with horizon h:

    train      = [0, t - 2h)
    validation = [t - 2h, t - h)
    test       = [t - h, t)
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from errors import CorpusParseError, EmptyCorpusError, SeriesValidationError

logger = logging.getLogger(__name__)

REQUIRED_COLUMNS = ("unique_id", "ds", "y")
SUPPORTED_FORMATS = ("long_csv",)


def _readonly(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Series:
    """One univariate series: identifier, seasonal period and values."""

    id: str
    period: int
    values: np.ndarray

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        if values.ndim != 1:
            raise SeriesValidationError(f"series {self.id!r}: values must be one-dimensional")
        if values.size < 1:
            raise SeriesValidationError(f"series {self.id!r}: at least one observation is required")
        if not np.all(np.isfinite(values)):
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise SeriesValidationError(f"series {self.id!r}: non-finite value at index {bad}")
        if int(self.period) != self.period or self.period < 1:
            raise SeriesValidationError(f"series {self.id!r}: period must be a positive integer")
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "period", int(self.period))
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return int(self.values.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Series):
            return NotImplemented
        return (
            self.id == other.id
            and self.period == other.period
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def view(self, start: int, stop: int) -> "Series":
        """The same series restricted to positions [start, stop)."""
        return Series(self.id, self.period, self.values[start:stop])

    def with_values(self, values, series_id: str | None = None) -> "Series":
        return Series(self.id if series_id is None else series_id, self.period, values)


@dataclass(frozen=True)
class Corpus:
    """A collection of series sharing period, horizon and input size."""

    series: tuple[Series, ...]
    horizon: int
    input_size: int
    dropped: int = 0
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "series", tuple(self.series))
        if self.horizon < 1 or self.input_size < 1:
            raise SeriesValidationError("horizon and input_size must be positive")
        periods = {s.period for s in self.series}
        if len(periods) > 1:
            raise SeriesValidationError(f"corpus mixes seasonal periods {sorted(periods)}")
        short = [s.id for s in self.series if len(s) < self.min_length]
        if short:
            raise SeriesValidationError(
                f"{len(short)} series shorter than input_size + 2*horizon = {self.min_length} "
                f"(first: {short[0]!r})"
            )

    @property
    def min_length(self) -> int:
        return self.input_size + 2 * self.horizon

    @property
    def period(self) -> int:
        return self.series[0].period if self.series else 1

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.series]

    @property
    def n_observations(self) -> int:
        return sum(len(s) for s in self.series)

    def __len__(self) -> int:
        return len(self.series)

    def __iter__(self):
        return iter(self.series)


@dataclass(frozen=True)
class SeriesSplit:
    series_id: str
    train: range
    validation: range
    test: range


@dataclass(frozen=True)
class SplitCorpus:
    """Per-series train / validation / test ranges over a parent corpus."""

    corpus: Corpus
    ranges: tuple[SeriesSplit, ...]

    @property
    def horizon(self) -> int:
        return self.corpus.horizon

    @property
    def input_size(self) -> int:
        return self.corpus.input_size

    @property
    def period(self) -> int:
        return self.corpus.period

    @property
    def train(self) -> tuple[range, ...]:
        return tuple(r.train for r in self.ranges)

    @property
    def validation(self) -> tuple[range, ...]:
        return tuple(r.validation for r in self.ranges)

    @property
    def test(self) -> tuple[range, ...]:
        return tuple(r.test for r in self.ranges)

    def train_views(self) -> list[Series]:
        """Train range of every series."""
        return [s.view(r.train.start, r.train.stop) for s, r in zip(self.corpus, self.ranges)]

    def history_views(self) -> list[Series]:
        """Train plus validation range of every series (everything but the test block)."""
        return [s.view(r.train.start, r.validation.stop) for s, r in zip(self.corpus, self.ranges)]

    def full_series(self) -> list[Series]:
        return list(self.corpus.series)


@dataclass(frozen=True, eq=False)
class WindowSet:
    """Supervised (lags -> next h values) pairs built by sliding windows."""

    inputs: np.ndarray
    targets: np.ndarray
    series_ids: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "series_ids", tuple(self.series_ids))
        if self.inputs.shape[0] != self.targets.shape[0] or self.inputs.shape[0] != len(self.series_ids):
            raise SeriesValidationError("inputs, targets and series_ids must have the same number of rows")

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    @classmethod
    def empty(cls, q: int, h: int) -> "WindowSet":
        return cls(np.empty((0, q)), np.empty((0, h)), ())

    @classmethod
    def concat(cls, window_sets: Iterable["WindowSet"], q: int, h: int) -> "WindowSet":
        window_sets = [w for w in window_sets if len(w)]
        if not window_sets:
            return cls.empty(q, h)
        return cls(
            np.concatenate([w.inputs for w in window_sets]),
            np.concatenate([w.targets for w in window_sets]),
            tuple(sid for w in window_sets for sid in w.series_ids),
        )


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except (TypeError, ValueError):
        return float("nan")


def _line_from_parser_error(error: Exception) -> int | None:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def load_corpus(path, period: int, horizon: int, input_size: int,
                format: str = "long_csv", name: str | None = None) -> Corpus:
    """Load a long CSV (unique_id,ds,y) into a Corpus, dropping series that are too short."""
    if format not in SUPPORTED_FORMATS:
        raise ValueError(f"unsupported corpus format {format!r}; expected one of {SUPPORTED_FORMATS}")
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")

    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False,
                            encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise CorpusParseError("file is empty, header unique_id,ds,y is required", line=1) from e
    except pd.errors.ParserError as e:
        raise CorpusParseError(f"malformed row ({e})", line=_line_from_parser_error(e)) from e

    missing = [c for c in REQUIRED_COLUMNS if c not in frame.columns]
    if missing:
        raise CorpusParseError(f"header is missing column(s) {missing}", line=1)

    frame = frame.fillna("")
    # blank rows are dropped only after reading so the index still maps to file lines
    frame = frame[~frame.eq("").all(axis=1)]
    ids = frame["unique_id"].str.strip()
    ds = frame["ds"].str.strip()
    y = np.array([_parse_float(v) for v in frame["y"]], dtype=np.float64)

    bad = (~np.isfinite(y)) | ids.eq("").to_numpy() | ds.eq("").to_numpy()
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        # header occupies line 1
        raise CorpusParseError(
            f"malformed row {frame.iloc[row].tolist()!r}: expected an id, a ds key and a finite y",
            line=int(frame.index[row]) + 2,
        )

    # ds values are opaque sort keys: numeric when every key parses, lexical otherwise
    numeric_ds = pd.to_numeric(ds, errors="coerce")
    sort_keys = numeric_ds if not numeric_ds.isna().any() else ds
    id_codes, unique_ids = pd.factorize(ids)
    ds_codes, _ = pd.factorize(sort_keys, sort=True)
    order = np.lexsort((ds_codes, id_codes))
    y = y[order]
    id_codes = id_codes[order]

    boundaries = np.flatnonzero(np.diff(id_codes)) + 1
    min_length = input_size + 2 * horizon
    kept, dropped = [], []
    for chunk_ids, chunk_values in zip(np.split(id_codes, boundaries), np.split(y, boundaries)):
        series = Series(str(unique_ids[chunk_ids[0]]), period, chunk_values)
        if len(series) < min_length:
            dropped.append(series.id)
            continue
        kept.append(series)

    if dropped:
        logger.warning(
            "Dropped %d series shorter than input_size + 2*horizon = %d (e.g. %s)",
            len(dropped), min_length, ", ".join(dropped[:5]),
        )
    if not kept:
        raise EmptyCorpusError(f"no series in {path} has at least {min_length} observations")

    logger.info("Loaded %d series (%d observations) from %s", len(kept), sum(map(len, kept)), path)
    return Corpus(tuple(kept), horizon, input_size, dropped=len(dropped), name=name or path.stem)


def corpus_to_frame(series: Iterable[Series]) -> pd.DataFrame:
    """Long-format frame with ds = 1..t per series and y in round-trip repr."""
    rows = []
    for s in series:
        for i, value in enumerate(s.values, start=1):
            rows.append((s.id, i, repr(float(value))))
    return pd.DataFrame(rows, columns=list(REQUIRED_COLUMNS))


def write_corpus(series: Corpus | Iterable[Series], path) -> Path:
    """Write series to long CSV (UTF-8, LF line endings, header row)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    corpus_to_frame(series).to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path


def split(corpus: Corpus) -> SplitCorpus:
    """Last h observations for test, the h before them for validation, the rest for training."""
    h = corpus.horizon
    ranges = []
    for s in corpus:
        t = len(s)
        ranges.append(SeriesSplit(s.id, range(0, t - 2 * h), range(t - 2 * h, t - h), range(t - h, t)))
    return SplitCorpus(corpus, tuple(ranges))


def embed(series_view: Series, q: int, h: int) -> WindowSet:
    """Time-delay embedding: every run of q inputs followed by h targets."""
    values = series_view.values
    n_windows = len(values) - q - h + 1
    if n_windows <= 0:
        return WindowSet.empty(q, h)
    windows = sliding_window_view(values, q + h)
    return WindowSet(
        np.ascontiguousarray(windows[:, :q]),
        np.ascontiguousarray(windows[:, q:]),
        (series_view.id,) * n_windows,
    )


def embed_many(series_views: Sequence[Series], q: int, h: int) -> WindowSet:
    return WindowSet.concat((embed(s, q, h) for s in series_views), q, h)


def last_window(series_view: Series, q: int, h: int) -> WindowSet:
    """The final window of a view: its last q+h observations."""
    if len(series_view) < q + h:
        return WindowSet.empty(q, h)
    tail = series_view.values[-(q + h):]
    return WindowSet(tail[None, :q].copy(), tail[None, q:].copy(), (series_view.id,))


def validation_windows(history_views: Sequence[Series], q: int, h: int) -> WindowSet:
    """One window per series: last q train observations -> the h validation observations."""
    return WindowSet.concat((last_window(s, q, h) for s in history_views), q, h)


def holdout_windows(split_corpus: SplitCorpus) -> WindowSet:
    """One window per series: last q train+validation observations -> the h test observations."""
    q, h = split_corpus.input_size, split_corpus.horizon
    return WindowSet.concat((last_window(s, q, h) for s in split_corpus.full_series()), q, h)


def make_synthetic_corpus(n_series: int = 50, length: int = 120, period: int = 12,
                          horizon: int = 18, input_size: int = 24, seed: int = 0,
                          ar_coef: float = 0.5, noise_scale: float = 0.04,
                          name: str = "synthetic") -> Corpus:
    """Positive series built from an additive linear trend, a seasonal pattern and AR(1) noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    series = []
    for i in range(n_series):
        level = rng.uniform(50.0, 150.0)
        slope = rng.uniform(-0.15, 0.4) * level / length
        amplitude = rng.uniform(0.05, 0.2) * level
        phase = rng.uniform(0.0, 2 * np.pi)
        cycle = np.sin(2 * np.pi * np.arange(period) / period + phase)
        cycle += 0.3 * np.sin(4 * np.pi * np.arange(period) / period + 2 * phase)
        seasonal = amplitude * np.resize(cycle, length)

        shocks = rng.normal(0.0, noise_scale * level, size=length)
        noise = np.empty(length)
        noise[0] = shocks[0]
        for k in range(1, length):
            noise[k] = ar_coef * noise[k - 1] + shocks[k]

        values = level + slope * t + seasonal + noise
        values = np.maximum(values, 0.01 * level)
        series.append(Series(f"S{i + 1}", period, values))
    return Corpus(tuple(series), horizon, input_size, name=name)
