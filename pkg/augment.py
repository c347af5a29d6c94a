"""Synthetic series generation: moving-blocks bootstrap, fixed bootstrap and the STL pipeline.

Pipeline for one series: log transform -> STL -> resample the remainder ->
trend + seasonal + resampled remainder -> exp. Only the remainder is random.
"""

from __future__ import annotations

import hashlib
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from decomp import Decomposition, StlParams, decompose_series, inverse_log
from errors import BlockSizeError, DecompositionSkipped, InverseTransformError
from tsdata import Corpus, Series

logger = logging.getLogger(__name__)

METHODS = ("mbb", "fixed_bootstrap", "identity")
SYNTHETIC_SUFFIX = "#syn"


class DecompositionCache:
    """Thread-safe STL cache keyed by series id, view length, a digest of the values and the STL params.

    Trend and seasonal are deterministic for a given view, so caching them leaves
    the distribution of synthetic series unchanged.
    """

    def __init__(self):
        self._items = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, series: Series, params: StlParams) -> Decomposition:
        digest = hashlib.blake2b(series.values.tobytes(), digest_size=16).hexdigest()
        key = (series.id, len(series), digest, params)
        with self._lock:
            found = self._items.get(key)
            if found is not None:
                self.hits += 1
                return found
        decomposition = decompose_series(series, params)
        with self._lock:
            self.misses += 1
            return self._items.setdefault(key, decomposition)

    def __len__(self):
        return len(self._items)


@dataclass(frozen=True)
class AugmenterConfig:
    """How synthetic series are generated.

    block_size defaults to the seasonal period of each series. seed_stream is the
    generator used when a caller does not pass one explicitly.
    """

    method: str = "mbb"
    block_size: int | None = None
    stl_params: StlParams = field(default_factory=StlParams)
    seed_stream: np.random.Generator = field(
        default_factory=np.random.default_rng, compare=False, repr=False
    )
    multiplicity: int = 1
    cache_decompositions: bool = False
    max_workers: int = 1
    cache: DecompositionCache | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown augmentation method {self.method!r}; expected one of {METHODS}")
        if self.block_size is not None and self.method == "mbb" and self.block_size < 2:
            raise ValueError("block_size must be >= 2 for the moving-blocks bootstrap")
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be >= 1")
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        if self.cache_decompositions and self.cache is None:
            object.__setattr__(self, "cache", DecompositionCache())

    @classmethod
    def identity(cls) -> "AugmenterConfig":
        return cls(method="identity")

    def block_size_for(self, series: Series) -> int:
        return self.block_size or series.period


def mbb_resample(remainder, block_size: int, rng: np.random.Generator) -> np.ndarray:
    """Moving-blocks bootstrap: concatenate ceil(t/l) random overlapping blocks, keep the first t values."""
    remainder = np.asarray(remainder, dtype=np.float64)
    t, l = remainder.size, int(block_size)
    if l < 2:
        raise BlockSizeError("block size must be >= 2 for the moving-blocks bootstrap")
    if t < l:
        raise BlockSizeError(
            f"remainder of length {t} is shorter than block size {l}; "
            "fall back to identity augmentation for this series"
        )
    # all t - l + 1 windows of length l are candidate blocks
    starts = rng.integers(0, t - l + 1, size=math.ceil(t / l))
    idx = (starts[:, None] + np.arange(l)).ravel()[:t]
    return remainder[idx]


def fixed_bootstrap_resample(remainder, rng: np.random.Generator) -> np.ndarray:
    """Classic i.i.d. bootstrap of the remainder values, ignoring their order."""
    remainder = np.asarray(remainder, dtype=np.float64)
    if remainder.size < 1:
        raise ValueError("cannot bootstrap an empty remainder")
    return remainder[rng.integers(0, remainder.size, size=remainder.size)]


def _identity_copy(series: Series, synthetic_id: str) -> Series:
    return Series(synthetic_id, series.period, series.values.copy())


def synthesize(series: Series, config: AugmenterConfig, rng: np.random.Generator | None = None,
               synthetic_id: str | None = None) -> Series:
    """One bootstrapped version of `series`; degrades to an identity copy when STL cannot run."""
    rng = config.seed_stream if rng is None else rng
    synthetic_id = synthetic_id or series.id + SYNTHETIC_SUFFIX
    if config.method == "identity":
        return _identity_copy(series, synthetic_id)

    try:
        if config.cache is not None:
            decomposition = config.cache.get_or_compute(series, config.stl_params)
        else:
            decomposition = decompose_series(series, config.stl_params)
        if config.method == "mbb":
            remainder = mbb_resample(decomposition.remainder, config.block_size_for(series), rng)
        else:
            remainder = fixed_bootstrap_resample(decomposition.remainder, rng)
        values = inverse_log(
            decomposition.trend + decomposition.seasonal + remainder,
            decomposition.log_offset,
            series.id,
        )
    except (DecompositionSkipped, BlockSizeError, InverseTransformError) as e:
        logger.warning("Identity augmentation for series %r: %s", series.id, e)
        return _identity_copy(series, synthetic_id)

    return Series(synthetic_id, series.period, values)


def _synthetic_ids(batch: Sequence[Series], multiplicity: int) -> list[list[str]]:
    taken = {s.id for s in batch}
    rounds = []
    for copy in range(multiplicity):
        ids = []
        for s in batch:
            candidate = s.id + SYNTHETIC_SUFFIX + ("" if copy == 0 else str(copy + 1))
            while candidate in taken:
                candidate += SYNTHETIC_SUFFIX
            taken.add(candidate)
            ids.append(candidate)
        rounds.append(ids)
    return rounds


def augment_batch(batch: Sequence[Series], config: AugmenterConfig,
                  rng: np.random.Generator | None = None) -> list[Series]:
    """Originals in order followed by `multiplicity` rounds of one synthetic per original.

    Every synthetic gets its own child generator spawned before any work starts, so the
    result does not depend on how the worker pool schedules the series.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("augment_batch needs a nonempty batch")
    rng = config.seed_stream if rng is None else rng

    ids = _synthetic_ids(batch, config.multiplicity)
    jobs = [(s, rounds[i]) for rounds in ids for i, s in enumerate(batch)]
    entropy = int(rng.integers(0, 2 ** 63 - 1))
    children = [np.random.default_rng(c) for c in np.random.SeedSequence(entropy).spawn(len(jobs))]

    synthetics: list[Series | None] = [None] * len(jobs)
    if config.max_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=config.max_workers) as executor:
            future_to_index = {
                executor.submit(synthesize, series, config, child, synthetic_id): index
                for index, ((series, synthetic_id), child) in enumerate(zip(jobs, children))
            }
            for future in as_completed(future_to_index):
                synthetics[future_to_index[future]] = future.result()
    else:
        for index, ((series, synthetic_id), child) in enumerate(zip(jobs, children)):
            synthetics[index] = synthesize(series, config, child, synthetic_id)

    return batch + synthetics


def augment_corpus(corpus: Corpus, config: AugmenterConfig,
                   rng: np.random.Generator | None = None) -> Corpus:
    """Apriori augmentation: the corpus plus `multiplicity` synthetics per series."""
    return Corpus(
        tuple(augment_batch(corpus.series, config, rng)),
        corpus.horizon,
        corpus.input_size,
        dropped=corpus.dropped,
        name=corpus.name,
    )
