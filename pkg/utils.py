"""Small helpers shared by the command line, the benchmark and the numerics."""

from __future__ import annotations

import logging
import math
import os
import re
import time
from contextlib import contextmanager
from typing import Any, Callable, Iterator

ENV_PREFIX = "ONDAT_"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: str | int = "INFO") -> None:
    """Configure root logging once for the command line tools."""
    if isinstance(level, str):
        level = level.upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def env_setting(name: str, default: Any = None, cast: Callable[[str], Any] = str) -> Any:
    """Read an ONDAT_-prefixed environment override."""
    raw = os.getenv(ENV_PREFIX + name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ValueError(f"environment variable {ENV_PREFIX + name}={raw!r} is invalid: {e}") from e


def next_odd(value: float) -> int:
    """Smallest odd integer >= value."""
    n = math.ceil(value)
    return n if n % 2 == 1 else n + 1


def clean_filename(name: object) -> str:
    """Turn a series id into a safe file stem."""
    name = re.sub(r'[^\w\s#-]', '', str(name).strip())
    name = name.replace('#', '_')
    name = re.sub(r'[-\s]+', '_', name)
    return name or "series"


def format_score(score: object, precision: int = 5) -> str:
    """Format a SMAPE fraction for display."""
    try:
        return f"{float(score):.{precision}f}"
    except (TypeError, ValueError):
        return "N/A"


def format_percent(value: object, precision: int = 3) -> str:
    """Format a signed percentage for display."""
    try:
        return f"{float(value):+.{precision}f}%"
    except (TypeError, ValueError):
        return "N/A"


def calculate_completion_percentage(completed_items: int, total_items: int) -> float:
    """Calculate completion percentage."""
    if total_items == 0:
        return 0.0
    return (completed_items / total_items) * 100


class PhaseTimer:
    """Accumulates monotonic wall-clock seconds per named phase."""

    def __init__(self) -> None:
        self.seconds: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + (time.perf_counter() - start)

    def total(self) -> float:
        return sum(self.seconds.values())

    def as_dict(self) -> dict[str, float]:
        return dict(self.seconds)
