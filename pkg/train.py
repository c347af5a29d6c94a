"""Training strategies, the mini-batch loop, early stopping and checkpointing.

Augmentation happens per mini-batch and per validation check for the on-the-fly
kinds, once before fitting for da_apriori, and never for standard.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from augment import AugmenterConfig, augment_batch
from decomp import StlParams
from errors import TrainingError
from model import (ForecastModel, ModelConfig, OptimizerState, adam_step, backward,
                   compute_loss, forward, init_model, predict)
from scoring_engine import smape
from tsdata import Series, SplitCorpus, embed_many, validation_windows
from utils import PhaseTimer

logger = logging.getLogger(__name__)


class StrategyKind(str, Enum):
    STANDARD = "standard"
    DA_APRIORI = "da_apriori"
    ONDAT = "ondat"
    ONDAT_TRAIN_ONLY = "ondat_train_only"
    ONDAT_VAL_ONLY = "ondat_val_only"
    ONDAT_FIXED = "ondat_fixed"


TRAIN_AUGMENTED = frozenset({StrategyKind.ONDAT, StrategyKind.ONDAT_TRAIN_ONLY, StrategyKind.ONDAT_FIXED})
VALIDATION_AUGMENTED = frozenset({StrategyKind.ONDAT, StrategyKind.ONDAT_VAL_ONLY, StrategyKind.ONDAT_FIXED})
STOP_MAX_STEPS = "max_steps"
STOP_EARLY = "early_stop"


@dataclass(frozen=True)
class Strategy:
    kind: StrategyKind
    augmenter: AugmenterConfig = field(default_factory=AugmenterConfig.identity)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", StrategyKind(self.kind))
        if self.kind is StrategyKind.STANDARD and self.augmenter.method != "identity":
            raise ValueError("the standard strategy does not augment; use an identity augmenter")
        if self.kind is StrategyKind.ONDAT_FIXED and self.augmenter.method != "fixed_bootstrap":
            raise ValueError("ondat_fixed requires the fixed_bootstrap augmenter")

    @classmethod
    def build(cls, kind: StrategyKind | str, block_size: int | None = None,
              stl_params: StlParams | None = None, max_workers: int = 1,
              cache_decompositions: bool = False) -> "Strategy":
        """Strategy with the augmenter its kind calls for."""
        kind = StrategyKind(kind)
        if kind is StrategyKind.STANDARD:
            return cls(kind)
        method = "fixed_bootstrap" if kind is StrategyKind.ONDAT_FIXED else "mbb"
        augmenter = AugmenterConfig(
            method=method,
            block_size=block_size,
            stl_params=stl_params or StlParams(),
            max_workers=max_workers,
            cache_decompositions=cache_decompositions,
        )
        return cls(kind, augmenter)

    @property
    def name(self) -> str:
        return self.kind.value

    @property
    def augments_training(self) -> bool:
        return self.kind in TRAIN_AUGMENTED

    @property
    def augments_validation(self) -> bool:
        return self.kind in VALIDATION_AUGMENTED


@dataclass(frozen=True)
class TrainConfig:
    max_steps: int = 1500
    batch_size: int = 32
    val_check_every: int = 50
    patience: int = 50
    seed: int = 0
    learning_rate: float = 1e-3

    def __post_init__(self) -> None:
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        for name in ("batch_size", "val_check_every", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be >= 0")


@dataclass
class TrainLog:
    """What happened during one fit: losses, validation checks, checkpoint and timings."""

    strategy: str
    seed: int
    step_losses: list[float] = field(default_factory=list)
    validation_steps: list[int] = field(default_factory=list)
    validation_scores: list[float] = field(default_factory=list)
    checkpoint_step: int | None = None
    stop_reason: str | None = None
    phase_seconds: dict[str, float] = field(default_factory=dict)

    @property
    def steps_run(self) -> int:
        return len(self.step_losses)

    @property
    def best_score(self) -> float:
        return min(self.validation_scores) if self.validation_scores else math.inf

    def record_validation(self, step: int, score: float) -> None:
        self.validation_steps.append(step)
        self.validation_scores.append(score)

    def records(self) -> list[dict]:
        """One JSON-ready record per step and per check, then a summary."""
        rows = [{"type": "step", "step": i, "loss": loss} for i, loss in enumerate(self.step_losses, start=1)]
        rows += [
            {"type": "validation", "step": step, "smape": score, "checkpoint": step == self.checkpoint_step}
            for step, score in zip(self.validation_steps, self.validation_scores)
        ]
        rows.sort(key=lambda r: (r["step"], r["type"] == "validation"))
        rows.append({
            "type": "summary",
            "strategy": self.strategy,
            "seed": self.seed,
            "steps_run": self.steps_run,
            "checkpoint_step": self.checkpoint_step,
            "best_smape": self.best_score,
            "stop_reason": self.stop_reason,
            "phase_seconds": self.phase_seconds,
        })
        return rows

    def write_jsonl(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as f:
            for row in self.records():
                f.write(json.dumps(row) + "\n")
        return path


def make_batch(train_views: SplitCorpus | Sequence[Series], batch_size: int,
               rng: np.random.Generator) -> list[Series]:
    """Sample up to batch_size distinct train views uniformly."""
    if isinstance(train_views, SplitCorpus):
        train_views = train_views.train_views()
    n = len(train_views)
    if n == 0:
        raise TrainingError("cannot sample a batch from an empty training pool")
    picks = rng.choice(n, size=min(batch_size, n), replace=False)
    return [train_views[i] for i in picks]


def train_step(model: ForecastModel, batch: Sequence[Series], strategy: Strategy,
               rng: np.random.Generator, opt: OptimizerState,
               timer: PhaseTimer | None = None) -> tuple[ForecastModel, float]:
    """Augment (when the strategy says so), embed, then one Adam update on the mean loss."""
    timer = timer or PhaseTimer()
    q, h = model.config.input_size, model.config.horizon
    batch = list(batch)
    if strategy.augments_training:
        with timer.phase("augment"):
            batch = augment_batch(batch, strategy.augmenter, rng)

    windows = embed_many(batch, q, h)
    if not len(windows):
        raise TrainingError(f"batch of {len(batch)} series produced no windows of length {q + h}")

    with timer.phase("forward_backward"):
        forecast, cache = forward(model, windows.inputs)
        loss = compute_loss(forecast, windows.targets, model.config.loss)
        gradients = backward(model, cache, windows.targets)
        adam_step(model, gradients, opt)
    return model, loss


def validate(model: ForecastModel, split_corpus: SplitCorpus, strategy: Strategy,
             rng: np.random.Generator, history_views: Sequence[Series] | None = None) -> float:
    """Mean SMAPE over one validation window per (original or synthetic) series."""
    q, h = model.config.input_size, model.config.horizon
    histories = list(split_corpus.history_views() if history_views is None else history_views)
    if strategy.augments_validation and histories:
        histories = augment_batch(histories, strategy.augmenter, rng)
    windows = validation_windows(histories, q, h)
    if not len(windows):
        raise TrainingError("no series is long enough to build a validation window")
    return smape(predict(model, windows.inputs), windows.targets)


def _pools(split_corpus: SplitCorpus, strategy: Strategy, rng: np.random.Generator,
           timer: PhaseTimer) -> tuple[list[Series], list[Series]]:
    """Training views and validation histories, with da_apriori synthetics merged in."""
    h = split_corpus.horizon
    train_pool = split_corpus.train_views()
    history_pool = split_corpus.history_views()
    if strategy.kind is StrategyKind.DA_APRIORI:
        with timer.phase("augment"):
            once = replace(strategy.augmenter, multiplicity=1)
            synthetics = augment_batch(history_pool, once, rng)[len(history_pool):]
        train_pool += [s.view(0, len(s) - h) for s in synthetics]
        history_pool += synthetics
        logger.info("Apriori augmentation added %d synthetic series", len(synthetics))
    return train_pool, history_pool


def fit(split_corpus: SplitCorpus, strategy: Strategy, model_config: ModelConfig,
        train_config: TrainConfig) -> tuple[ForecastModel, TrainLog]:
    """Train from a seeded init and return the best-validating checkpoint with its log.

    Validation runs at step 0, every val_check_every steps and at max_steps. Only a
    strict improvement refreshes the checkpoint; training stops once patience steps
    have passed since it.
    """
    q, h = model_config.input_size, model_config.horizon
    if (q, h) != (split_corpus.input_size, split_corpus.horizon):
        raise TrainingError(
            f"model expects q={q}, h={h} but the corpus was split for "
            f"q={split_corpus.input_size}, h={split_corpus.horizon}"
        )
    batch_rng, augment_rng, validation_rng, init_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(train_config.seed).spawn(4)
    )
    timer = PhaseTimer()
    log = TrainLog(strategy.name, train_config.seed)

    train_pool, history_pool = _pools(split_corpus, strategy, augment_rng, timer)
    usable = [s for s in train_pool if len(s) >= q + h]
    excluded = len(train_pool) - len(usable)
    if excluded:
        logger.warning(
            "Excluded %d of %d series from the training pool: their train part is shorter than "
            "input_size + horizon = %d (series need at least input_size + 3*horizon = %d observations)",
            excluded, len(train_pool), q + h, q + 3 * h,
        )
    if not usable:
        raise TrainingError(
            f"no training view has the {q + h} observations one window needs; "
            f"series need at least input_size + 3*horizon = {q + 3 * h} observations"
        )
    train_pool = usable

    model = init_model(model_config, init_rng)
    opt = OptimizerState(learning_rate=train_config.learning_rate, max_steps=train_config.max_steps)
    best: ForecastModel | None = None

    def check(step: int) -> None:
        nonlocal best
        with timer.phase("validation"):
            score = validate(model, split_corpus, strategy, validation_rng, history_pool)
        log.record_validation(step, score)
        if best is None or score < best.validation_score:
            best = model.copy()
            best.validation_score = score
            log.checkpoint_step = step
            logger.info("[%s seed=%d] checkpoint at step %d, validation SMAPE %.5f",
                        strategy.name, train_config.seed, step, score)

    check(0)
    log.stop_reason = STOP_MAX_STEPS
    step = 0
    while step < train_config.max_steps:
        batch = make_batch(train_pool, train_config.batch_size, batch_rng)
        model, loss = train_step(model, batch, strategy, augment_rng, opt, timer)
        step += 1
        log.step_losses.append(loss)
        if step % train_config.val_check_every == 0 or step == train_config.max_steps:
            check(step)
            if step < train_config.max_steps and step - log.checkpoint_step >= train_config.patience:
                log.stop_reason = STOP_EARLY
                logger.info("[%s seed=%d] early stop at step %d, no improvement since step %d",
                            strategy.name, train_config.seed, step, log.checkpoint_step)
                break

    if best is None:
        raise TrainingError("training never produced a successful validation")
    log.phase_seconds = timer.as_dict()
    logger.debug("[%s seed=%d] phase seconds %s", strategy.name, train_config.seed, log.phase_seconds)
    return best, log
