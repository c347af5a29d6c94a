"""Convert a Monash-repository .tsf file (M1, M3, M4, Tourism, ...) into a long CSV.

Usage: python scripts/convert_tsf.py INPUT.tsf OUTPUT.csv

Series with missing values ('?') are skipped. ds is the 1-based position.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Iterator, Sequence

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from errors import CorpusParseError  # noqa: E402
from tsdata import corpus_to_frame, Series  # noqa: E402
from utils import configure_logging  # noqa: E402

logger = logging.getLogger(__name__)


def read_tsf(path: str | Path) -> Iterator[tuple[str, list[float] | None]]:
    """Yield (series name, list of float values or None when a value is missing)."""
    attributes = 0
    in_data = False
    with open(path, encoding="cp1252") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not in_data:
                lowered = line.lower()
                if lowered.startswith("@attribute"):
                    attributes += 1
                elif lowered.startswith("@data"):
                    if attributes == 0:
                        raise CorpusParseError("no @attribute lines before @data", line=line_no)
                    in_data = True
                continue
            fields = line.split(":")
            if len(fields) != attributes + 1:
                raise CorpusParseError(
                    f"expected {attributes} attributes and a value list, got {len(fields)} fields",
                    line=line_no,
                )
            raw_values = fields[-1].split(",")
            if any(v.strip() == "?" for v in raw_values):
                yield fields[0], None
                continue
            try:
                yield fields[0], [float(v) for v in raw_values]
            except ValueError as e:
                raise CorpusParseError(f"bad value ({e})", line=line_no) from e
    if not in_data:
        raise CorpusParseError("no @data section found")


def convert(input_path: str | Path, output_path: str | Path, period: int = 1) -> int:
    series, skipped = [], 0
    for name, values in read_tsf(input_path):
        if values is None:
            skipped += 1
            continue
        series.append(Series(name, period, values))
    if skipped:
        logger.warning("Skipped %d series with missing values", skipped)
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    corpus_to_frame(series).to_csv(output_path, index=False, lineterminator="\n", encoding="utf-8")
    logger.info("Wrote %d series to %s", len(series), output_path)
    return len(series)


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Convert a .tsf file to unique_id,ds,y long CSV")
    parser.add_argument("input")
    parser.add_argument("output")
    args = parser.parse_args(argv)
    configure_logging()
    try:
        convert(args.input, args.output)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except CorpusParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
