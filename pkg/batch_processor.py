"""Cross-product benchmark runner: every strategy and seed on every corpus, plus the baseline."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from model import ModelConfig, predict, seasonal_naive
from scoring_engine import BASELINE, RunReport, smape
from train import Strategy, TrainConfig, fit
from tsdata import Corpus, SplitCorpus, holdout_windows, split
from utils import calculate_completion_percentage, clean_filename

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[int, int, str], None]
Job = tuple[SplitCorpus, Strategy | None, int | None]


def baseline_scores(split_corpus: SplitCorpus) -> tuple[float, float]:
    """Seasonal-naive (validation SMAPE, test SMAPE) from the same histories the models see."""
    h, m = split_corpus.horizon, split_corpus.period
    val_forecasts, val_actuals, test_forecasts, test_actuals = [], [], [], []
    for series, ranges in zip(split_corpus.corpus, split_corpus.ranges):
        values = series.values
        val_forecasts.append(seasonal_naive(values[:ranges.train.stop], m, h))
        val_actuals.append(values[ranges.validation.start:ranges.validation.stop])
        test_forecasts.append(seasonal_naive(values[:ranges.validation.stop], m, h))
        test_actuals.append(values[ranges.test.start:ranges.test.stop])
    return (smape(np.vstack(val_forecasts), np.vstack(val_actuals)),
            smape(np.vstack(test_forecasts), np.vstack(test_actuals)))


class BenchmarkRunner:
    def __init__(self, model_config: ModelConfig, train_config: TrainConfig, max_workers: int = 1,
                 log_dir: str | Path | None = None, reference: str = "standard") -> None:
        """Benchmark over (corpus x strategy x seed) with configurable concurrency."""
        self.model_config = model_config
        self.train_config = train_config
        self.max_workers = max_workers
        self.log_dir = Path(log_dir) if log_dir else None
        self.reference = reference

    def _model_config_for(self, corpus: Corpus) -> ModelConfig:
        return replace(self.model_config, input_size=corpus.input_size, horizon=corpus.horizon)

    def _run_single(self, split_corpus: SplitCorpus, strategy: Strategy, seed: int) -> dict[str, Any]:
        """Fit one strategy on one corpus and score its test forecasts."""
        start = time.perf_counter()
        train_config = replace(self.train_config, seed=seed)
        model, log = fit(split_corpus, strategy, self._model_config_for(split_corpus.corpus), train_config)
        windows = holdout_windows(split_corpus)
        test_score = smape(predict(model, windows.inputs), windows.targets)
        seconds = time.perf_counter() - start

        if self.log_dir:
            name = clean_filename(f"{split_corpus.corpus.name}_{strategy.name}_{seed}")
            log.write_jsonl(self.log_dir / f"{name}.jsonl")
        return {
            'test_smape': test_score,
            'val_smape': model.validation_score,
            'seconds': seconds,
            'phase_seconds': log.phase_seconds,
        }

    def _run_baseline(self, split_corpus: SplitCorpus) -> dict[str, Any]:
        start = time.perf_counter()
        val_score, test_score = baseline_scores(split_corpus)
        return {'test_smape': test_score, 'val_smape': val_score, 'seconds': time.perf_counter() - start}

    def run(self, corpora: Sequence[Corpus], strategies: Sequence[Strategy], seeds: Sequence[int],
            progress_callback: ProgressCallback | None = None) -> RunReport:
        """Run every (corpus, strategy, seed) plus one baseline per corpus; failures are recorded, not raised."""
        splits = [split(corpus) for corpus in corpora]
        jobs: list[Job] = []
        for split_corpus in splits:
            jobs.append((split_corpus, None, None))
            for strategy in strategies:
                for seed in seeds:
                    jobs.append((split_corpus, strategy, seed))

        total_jobs = len(jobs)
        results: list[dict[str, Any]] = []
        with ThreadPoolExecutor(max_workers=self.max_workers) as executor:
            future_to_job = {}
            for i, (split_corpus, strategy, seed) in enumerate(jobs):
                if strategy is None:
                    future = executor.submit(self._run_baseline, split_corpus)
                else:
                    future = executor.submit(self._run_single, split_corpus, strategy, seed)
                future_to_job[future] = i

            completed = 0
            for future in as_completed(future_to_job):
                index = future_to_job[future]
                split_corpus, strategy, seed = jobs[index]
                label = f"{split_corpus.corpus.name}/{strategy.name if strategy else BASELINE}/{seed}"
                try:
                    results.append({'index': index, 'status': 'success', 'result': future.result()})
                except Exception as e:
                    logger.error("Run %s failed: %s", label, e)
                    results.append({'index': index, 'status': 'error', 'error': f"{type(e).__name__}: {e}"})

                completed += 1
                logger.info("Finished %s (%.0f%%)", label, calculate_completion_percentage(completed, total_jobs))
                if progress_callback:
                    progress_callback(completed, total_jobs, label)

        # Sort results by original index
        results.sort(key=lambda x: x['index'])

        report = RunReport(reference=self.reference)
        for item in results:
            split_corpus, strategy, seed = jobs[item['index']]
            name = strategy.name if strategy else BASELINE
            if item['status'] == 'success':
                report.add(split_corpus.corpus.name, name, seed, **item['result'])
            else:
                report.add(split_corpus.corpus.name, name, seed, status='error', error=item['error'])
        return report


def run_benchmark(corpora: Corpus | Iterable[Corpus], strategies: Iterable[Strategy | str],
                  seeds: Iterable[int], model_config: ModelConfig, train_config: TrainConfig,
                  max_workers: int = 1, log_dir: str | Path | None = None, reference: str = "standard",
                  progress_callback: ProgressCallback | None = None) -> RunReport:
    """Cross-product benchmark of strategies against the seasonal-naive baseline."""
    corpora = [corpora] if isinstance(corpora, Corpus) else list(corpora)
    strategies = [s if isinstance(s, Strategy) else Strategy.build(s) for s in strategies]
    if not isinstance(model_config, ModelConfig) or not isinstance(train_config, TrainConfig):
        raise TypeError("run_benchmark needs a ModelConfig template and a TrainConfig")
    runner = BenchmarkRunner(model_config, train_config, max_workers, log_dir, reference)
    return runner.run(corpora, strategies, list(seeds), progress_callback)
