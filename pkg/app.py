"""The ondat command line: decompose, augment, train, benchmark and report."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np
import plotly.graph_objects as go
from plotly.subplots import make_subplots

from augment import AugmenterConfig, augment_corpus
from batch_processor import run_benchmark
from config import DEFAULT_PRESET, PRESETS, load_config, preset_configs
from decomp import Decomposition, StlParams, decompose_series
from errors import ConfigError, OndatError
from model import predict, save_checkpoint
from scoring_engine import RunReport, format_scores_table, scores_figure, smape, write_tables
from train import Strategy, StrategyKind, fit
from tsdata import Series, holdout_windows, load_corpus, split, write_corpus
from utils import clean_filename, configure_logging, env_setting, format_score

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
AUGMENT_METHODS = {"mbb": "mbb", "fixed": "fixed_bootstrap", "identity": "identity"}


def components_figure(series: Series, decomposition: Decomposition) -> go.Figure:
    """Log-scale input and its three components stacked vertically."""
    fig = make_subplots(rows=4, cols=1, shared_xaxes=True,
                        subplot_titles=("log input", "trend", "seasonal", "remainder"))
    x = np.arange(1, len(series) + 1)
    for row, values in enumerate((decomposition.reconstruct(), decomposition.trend,
                                  decomposition.seasonal, decomposition.remainder), start=1):
        fig.add_trace(go.Scatter(x=x, y=values, mode="lines", showlegend=False), row=row, col=1)
    fig.update_layout(title=f"Decomposition of {series.id}", height=900)
    return fig


def cmd_decompose(args: argparse.Namespace) -> int:
    """Write trend/seasonal/remainder CSV files for every series in a long CSV."""
    corpus = load_corpus(args.input, args.period, horizon=1, input_size=1)
    params = StlParams(seasonal_window=args.seasonal_window, outer_iterations=args.outer_iterations)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    failures = 0
    for series in corpus:
        try:
            decomposition = decompose_series(series, params)
        except OndatError as e:
            failures += 1
            print(f"{series.id}: {e}", file=sys.stderr)
            continue
        stem = clean_filename(series.id)
        decomposition.to_frame().to_csv(out_dir / f"{stem}.csv", index=False, lineterminator="\n",
                                        float_format="%.17g")
        if args.plot:
            components_figure(series, decomposition).write_html(out_dir / f"{stem}.html")

    print(f"Decomposed {len(corpus) - failures}/{len(corpus)} series into {out_dir}")
    return EXIT_FAILURE if failures == len(corpus) else EXIT_OK


def cmd_augment(args: argparse.Namespace) -> int:
    """Write the corpus followed by its synthetic series."""
    corpus = load_corpus(args.input, args.period, horizon=1, input_size=1)
    config = AugmenterConfig(
        method=AUGMENT_METHODS[args.method],
        block_size=args.block_size,
        multiplicity=args.multiplicity,
        max_workers=args.jobs or 1,
    )
    augmented = augment_corpus(corpus, config, np.random.default_rng(args.seed))
    write_corpus(augmented, args.output)
    print(f"Wrote {len(augmented)} series ({len(corpus)} original) to {args.output}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    """Fit one strategy on one corpus, save the checkpoint and print its scores."""
    corpus = load_corpus(args.input, args.period, args.horizon, args.input_size)
    model_config, train_config = preset_configs(
        args.preset, args.input_size, args.horizon,
        max_steps=args.max_steps, seed=args.seed, learning_rate=args.learning_rate,
    )
    strategy = Strategy.build(args.strategy, block_size=args.block_size, max_workers=args.jobs or 1)
    split_corpus = split(corpus)
    model, log = fit(split_corpus, strategy, model_config, train_config)
    windows = holdout_windows(split_corpus)
    test_score = smape(predict(model, windows.inputs), windows.targets)

    if args.checkpoint:
        save_checkpoint(args.checkpoint, model)
    if args.log:
        log.write_jsonl(args.log)
    print(f"strategy={strategy.name} steps={log.steps_run} stop={log.stop_reason} "
          f"checkpoint_step={log.checkpoint_step}")
    print(f"validation SMAPE {format_score(model.validation_score)} "
          f"test SMAPE {format_score(test_score)} ({test_score * 100:.3f}%)")
    return EXIT_OK


def _report_outputs(report: RunReport, out_dir: str | Path) -> dict[str, Path]:
    paths = write_tables(report, out_dir)
    fig = scores_figure(report)
    if fig is not None:
        fig.write_html(Path(out_dir) / "scores.html")
    print(format_scores_table(report))
    for entry in report.failed:
        print(f"FAILED {entry['dataset']}/{entry['strategy']}/{entry['seed']}: {entry['error']}",
              file=sys.stderr)
    return paths


def cmd_benchmark(args: argparse.Namespace) -> int:
    """Run the configured benchmark and write its tables."""
    overrides = {"preset": args.preset, "jobs": args.jobs,
                 "seeds": [args.seed] if args.seed is not None else None,
                 "output_dir": args.output_dir}
    config = load_config(args.config, overrides)
    corpora = config.load_corpora()
    first = corpora[0]
    report = run_benchmark(
        corpora,
        config.build_strategies(),
        config.seeds,
        config.model_config(first.input_size, first.horizon),
        config.train,
        max_workers=config.jobs,
        log_dir=config.output_dir / "logs",
        reference=config.reference,
    )
    paths = _report_outputs(report, config.output_dir)
    logger.info("Wrote %s", ", ".join(str(p) for p in paths.values()))
    if not report.successful:
        return EXIT_FAILURE
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    """Rebuild the tables from a saved report.json."""
    path = Path(args.report)
    if not path.is_file():
        raise FileNotFoundError(f"report file not found: {path}")
    report = RunReport.read_json(path)
    if args.reference:
        report.reference = args.reference
    _report_outputs(report, args.out_dir or path.parent)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ondat",
        description="On-the-fly time series augmentation for global forecasting models",
    )
    parser.add_argument("--seed", type=int, default=env_setting("SEED", cast=int),
                        help="random seed (env ONDAT_SEED)")
    parser.add_argument("--jobs", type=int, default=env_setting("JOBS", cast=int),
                        help="worker threads for augmentation and benchmark runs (env ONDAT_JOBS)")
    parser.add_argument("--preset", choices=sorted(PRESETS), default=env_setting("PRESET"),
                        help=f"hyperparameter preset, default {DEFAULT_PRESET} (env ONDAT_PRESET)")
    parser.add_argument("--log-level", default=env_setting("LOG_LEVEL", "INFO"),
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"], type=str.upper,
                        help="logging level (env ONDAT_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="STL components of every series")
    p.add_argument("input", help="long CSV with unique_id,ds,y")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--out-dir", default="components")
    p.add_argument("--seasonal-window", type=lambda v: v if v == "periodic" else int(v), default="periodic")
    p.add_argument("--outer-iterations", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also write an HTML figure per series")
    p.set_defaults(handler=cmd_decompose)

    p = sub.add_parser("augment", help="append synthetic series to a corpus")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--method", choices=sorted(AUGMENT_METHODS), default="mbb")
    p.add_argument("--block-size", type=int)
    p.add_argument("--multiplicity", type=int, default=1)
    p.set_defaults(handler=cmd_augment)

    p = sub.add_parser("train", help="fit one strategy on one corpus")
    p.add_argument("input")
    p.add_argument("--period", type=int, required=True)
    p.add_argument("--horizon", type=int, required=True)
    p.add_argument("--input-size", type=int, required=True)
    p.add_argument("--strategy", choices=[k.value for k in StrategyKind], default="ondat")
    p.add_argument("--block-size", type=int)
    p.add_argument("--max-steps", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--checkpoint", help="where to save the best model (JSON)")
    p.add_argument("--log", help="where to write the training log (JSON lines)")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("benchmark", help="run a YAML-configured benchmark")
    p.add_argument("config")
    p.add_argument("--output-dir", default=env_setting("OUTPUT_DIR"))
    p.set_defaults(handler=cmd_benchmark)

    p = sub.add_parser("report", help="rebuild tables from report.json")
    p.add_argument("report")
    p.add_argument("--out-dir")
    p.add_argument("--reference", help="strategy the timing table compares against")
    p.set_defaults(handler=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ValueError as e:
        # raised by env_setting for a malformed ONDAT_* value
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    configure_logging(args.log_level)
    if args.seed is None:
        args.seed = 0 if args.command in ("augment", "train") else None
    if args.preset is None and args.command == "train":
        args.preset = DEFAULT_PRESET

    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OndatError, ValueError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
