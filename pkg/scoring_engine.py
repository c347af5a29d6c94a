"""SMAPE scoring, benchmark reports and the summary tables written from them."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
import pandas as pd
import plotly.express as px
import plotly.graph_objects as go
from numpy.typing import ArrayLike

from errors import ShapeMismatchError
from utils import format_percent, format_score

logger = logging.getLogger(__name__)

SMAPE_EPS = 1e-8
BASELINE = "seasonal_naive"
TABLES = ("table_scores", "table_ranks", "table_gap", "table_timing")

Scores = dict[str, dict[str, float]]


def smape(forecast: ArrayLike, actual: ArrayLike) -> float:
    """Symmetric MAPE as a fraction in [0, 2], averaged over every cell."""
    forecast = np.asarray(forecast, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if forecast.shape != actual.shape:
        raise ShapeMismatchError(f"forecast {forecast.shape} and actual {actual.shape} differ")
    if forecast.size == 0:
        raise ShapeMismatchError("smape needs at least one cell")
    if not (np.all(np.isfinite(forecast)) and np.all(np.isfinite(actual))):
        raise ValueError("smape needs finite values")
    denom = np.maximum((np.abs(forecast) + np.abs(actual)) / 2.0, SMAPE_EPS)
    return float(np.clip(np.mean(np.abs(forecast - actual) / denom), 0.0, 2.0))


def rank_table(scores: Scores) -> dict[str, float]:
    """Average rank per strategy; scores maps dataset -> {strategy: smape}, rank 1 is best."""
    frame = pd.DataFrame(scores).T
    if frame.empty:
        return {}
    ranks = frame.rank(axis=1, method="average")
    return {strategy: float(value) for strategy, value in ranks.mean(axis=0).items()}


def _per_dataset(frame: pd.DataFrame, column: str) -> pd.DataFrame:
    return frame.groupby(["dataset", "strategy"], sort=False)[column].mean().unstack("strategy")


@dataclass
class RunReport:
    """Raw benchmark entries, one per (dataset, strategy, seed), plus derived summaries."""

    entries: list[dict[str, Any]] = field(default_factory=list)
    reference: str = "standard"

    def add(self, dataset: str, strategy: str, seed: int, test_smape: float | None = None,
            val_smape: float | None = None, seconds: float = 0.0,
            phase_seconds: dict[str, float] | None = None, status: str = "success",
            error: str | None = None) -> None:
        self.entries.append({
            "dataset": dataset,
            "strategy": strategy,
            "seed": seed,
            "status": status,
            "test_smape": test_smape,
            "val_smape": val_smape,
            "seconds": seconds,
            "phase_seconds": dict(phase_seconds or {}),
            "error": error,
        })

    @property
    def successful(self) -> list[dict[str, Any]]:
        return [e for e in self.entries if e["status"] == "success"]

    @property
    def failed(self) -> list[dict[str, Any]]:
        return [e for e in self.entries if e["status"] == "error"]

    @property
    def strategies(self) -> list[str]:
        return list(dict.fromkeys(e["strategy"] for e in self.entries))

    def frame(self) -> pd.DataFrame:
        columns = ["dataset", "strategy", "seed", "status", "test_smape", "val_smape", "seconds"]
        frame = pd.DataFrame(self.successful, columns=columns + ["phase_seconds", "error"])
        return frame[columns]

    def scores(self, column: str = "test_smape") -> Scores:
        """dataset -> {strategy: mean over seeds}"""
        frame = self.frame()
        if frame.empty:
            return {}
        table = _per_dataset(frame, column)
        return {dataset: row.dropna().to_dict() for dataset, row in table.iterrows()}

    def average_scores(self) -> dict[str, float]:
        table = pd.DataFrame(self.scores()).T
        return {strategy: float(value) for strategy, value in table.mean(axis=0).items()}

    def summary(self) -> dict[str, Any]:
        return {
            "average_smape": self.average_scores(),
            "average_rank": rank_table(self.scores()),
            "validation_gap": validation_gap(self),
            "timing": timing_report(self, self.reference),
            "successful": len(self.successful),
            "failed": len(self.failed),
        }

    def to_dict(self) -> dict[str, Any]:
        return {"reference": self.reference, "entries": self.entries, "summary": self.summary()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunReport":
        return cls(entries=list(data["entries"]), reference=data.get("reference", "standard"))

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2), encoding="utf-8")
        return path

    @classmethod
    def read_json(cls, path: str | Path) -> "RunReport":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def gap_table(report: RunReport) -> pd.DataFrame:
    """Per-dataset validation minus test SMAPE, averaged over seeds."""
    frame = report.frame().dropna(subset=["val_smape", "test_smape"])
    if frame.empty:
        return pd.DataFrame()
    frame = frame.assign(gap=frame["val_smape"] - frame["test_smape"])
    return _per_dataset(frame, "gap")


def validation_gap(report: RunReport) -> dict[str, float]:
    """Median over datasets of (validation SMAPE - test SMAPE) per strategy; positive means pessimistic validation."""
    table = gap_table(report)
    return {strategy: float(value) for strategy, value in table.median(axis=0).items()}


def timing_table(report: RunReport, reference: str) -> pd.DataFrame:
    """Per-dataset percent difference in total seconds against the reference strategy."""
    frame = report.frame()
    if frame.empty:
        return pd.DataFrame()
    seconds = _per_dataset(frame, "seconds")
    if reference not in seconds.columns:
        logger.warning("Timing reference %r has no successful runs", reference)
        return pd.DataFrame()
    base = seconds[reference]
    usable = base > 0
    return seconds[usable].sub(base[usable], axis=0).div(base[usable], axis=0) * 100.0


def timing_report(report: RunReport, reference: str = "standard") -> dict[str, float]:
    """Average over datasets of 100 * (t_strategy - t_reference) / t_reference."""
    table = timing_table(report, reference)
    return {strategy: float(value) for strategy, value in table.mean(axis=0).items()}


def _with_average(table: pd.DataFrame, label: str = "Average") -> pd.DataFrame:
    return pd.concat([table, table.mean(axis=0).to_frame(label).T])


def _write_table(table: pd.DataFrame, out_dir: Path, name: str,
                 formatter: Callable[[float], str]) -> Path:
    csv_path = out_dir / f"{name}.csv"
    txt_path = out_dir / f"{name}.txt"
    table.to_csv(csv_path, index_label="dataset", lineterminator="\n", float_format="%.12g")
    txt_path.write_text(table.to_string(float_format=formatter, na_rep="-") + "\n", encoding="utf-8")
    return csv_path


def write_tables(report: RunReport, out_dir: str | Path) -> dict[str, Path]:
    """Write the score, rank, gap and timing tables (CSV + aligned text) and report.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores = pd.DataFrame(report.scores()).T
    paths: dict[str, Path] = {}
    if scores.empty:
        logger.warning("No successful runs; only report.json is written")
    else:
        paths["table_scores"] = _write_table(_with_average(scores), out_dir, "table_scores", format_score)
        ranks = scores.rank(axis=1, method="average")
        paths["table_ranks"] = _write_table(_with_average(ranks), out_dir, "table_ranks",
                                            lambda v: f"{v:.2f}")
        paths["table_gap"] = _write_table(gap_table(report).pipe(
            lambda t: pd.concat([t, t.median(axis=0).to_frame("Median").T])),
            out_dir, "table_gap", format_score)
        timing = timing_table(report, report.reference)
        if timing.empty:
            # no usable reference: keep the table with every cell missing
            timing = pd.DataFrame(np.nan, index=scores.index, columns=scores.columns)
        paths["table_timing"] = _write_table(_with_average(timing), out_dir, "table_timing", format_percent)
    paths["report"] = report.write_json(out_dir / "report.json")
    return paths


def scores_figure(report: RunReport, title: str = "Test SMAPE by dataset and strategy") -> go.Figure | None:
    """Grouped bar chart of mean test SMAPE."""
    frame = report.frame()
    if frame.empty:
        return None
    data = frame.groupby(["dataset", "strategy"], sort=False, as_index=False)["test_smape"].mean()
    fig = px.bar(data, x="dataset", y="test_smape", color="strategy", barmode="group", title=title)
    fig.update_layout(yaxis=dict(title="SMAPE (fraction)"))
    return fig


def format_scores_table(report: RunReport) -> str:
    """Aligned text of mean test SMAPE per dataset with its summary rows.

    The "Average (%)" row repeats the average on the x100 percent scale.
    """
    scores = pd.DataFrame(report.scores()).T
    if scores.empty:
        return "No successful runs."
    table = _with_average(scores)
    ranks = rank_table(report.scores())
    table.loc["Average (%)"] = table.loc["Average"] * 100.0
    table.loc["Average Rank"] = pd.Series(ranks)
    return table.to_string(float_format=format_score, na_rep="-")
