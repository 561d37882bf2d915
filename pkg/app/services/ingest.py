"""
Price files in, log returns out.

The input dialect is a delimited text file with a ``date,close`` header; dates are
ISO ``YYYY-MM`` or ``YYYY-MM-DD``.
"""
from __future__ import annotations

import datetime as dt
import io
import logging
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import IO

import numpy as np
import pandas as pd

from app.config import DEFAULT_SEPARATOR
from app.errors import DuplicateDateError, InputError, ParseError

logger = logging.getLogger(__name__)

_DATE = re.compile(r"^(\d{4})-(\d{2})(?:-(\d{2}))?$")


@dataclass(frozen=True)
class PriceSeries:
    dates: tuple[dt.date, ...]
    closes: np.ndarray
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return self.closes.size


@dataclass(frozen=True)
class ReturnSeries:
    dates: tuple[dt.date, ...]
    values: np.ndarray
    labels: tuple[str, ...]
    mean_adjusted: bool = False
    original_mean: float | None = None

    def __len__(self) -> int:
        return self.values.size


def parse_date(text: str, line: int | None = None) -> dt.date:
    match = _DATE.match(text)
    if match is None:
        raise ParseError(f"date {text!r} is not YYYY-MM or YYYY-MM-DD", line)
    year, month, day = match.groups()
    try:
        return dt.date(int(year), int(month), int(day) if day else 1)
    except ValueError:
        raise ParseError(f"invalid calendar date {text!r}", line) from None


def load_prices(source: str | Path | IO[str], separator: str = DEFAULT_SEPARATOR) -> PriceSeries:
    """
    Read a price file (path or text buffer). Rows are sorted by date with a warning
    when out of order; duplicate dates and nonpositive prices are rejected.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        if not path.is_file():
            raise InputError(f"input file not found: {path}")
        name = str(path)
    else:
        name = "<upload>"

    try:
        frame = pd.read_csv(
            source,
            sep=separator,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.EmptyDataError:
        raise ParseError("file is empty", 1) from None
    except (pd.errors.ParserError, UnicodeDecodeError) as err:
        raise ParseError(str(err)) from err

    columns = {str(c).strip().lower(): c for c in frame.columns}
    if "date" not in columns or "close" not in columns:
        raise ParseError("header must name the columns date and close", 1)

    rows = []
    for offset, (raw_date, raw_close) in enumerate(zip(frame[columns["date"]], frame[columns["close"]])):
        line = offset + 2
        raw_date = "" if not isinstance(raw_date, str) else raw_date.strip()
        raw_close = "" if not isinstance(raw_close, str) else raw_close.strip()
        if not raw_date and not raw_close:
            continue
        if not raw_date or not raw_close:
            raise ParseError("row needs both a date and a close", line)
        date = parse_date(raw_date, line)
        try:
            close = float(raw_close)
        except ValueError:
            raise ParseError(f"close {raw_close!r} is not a number", line) from None
        if not math.isfinite(close):
            raise ParseError(f"close {raw_close!r} is not finite", line)
        if close <= 0:
            raise InputError(f"line {line}: nonpositive price {close}")
        rows.append((date, close, raw_date))

    if not rows:
        raise InputError(f"no price rows in {name}")

    ordered = sorted(rows, key=lambda row: row[0])
    if ordered != rows:
        logger.warning("rows in %s were not in date order; sorted ascending", name)
    for previous, current in zip(ordered, ordered[1:]):
        if previous[0] == current[0]:
            raise DuplicateDateError(current[2])

    logger.info("loaded %d prices from %s", len(ordered), name)
    return PriceSeries(
        dates=tuple(row[0] for row in ordered),
        closes=np.array([row[1] for row in ordered], dtype=float),
        labels=tuple(row[2] for row in ordered),
    )


def parse_prices(text: str, separator: str = DEFAULT_SEPARATOR) -> PriceSeries:
    return load_prices(io.StringIO(text), separator)


def write_prices(prices: PriceSeries, path: str | Path, separator: str = DEFAULT_SEPARATOR) -> None:
    frame = pd.DataFrame({"date": list(prices.labels), "close": prices.closes})
    frame.to_csv(path, sep=separator, index=False, float_format="%.12g", lineterminator="\n")


def log_returns(prices: PriceSeries) -> ReturnSeries:
    if len(prices) < 2:
        raise InputError(f"log returns need at least 2 prices, got {len(prices)}")
    closes = prices.closes
    return ReturnSeries(
        dates=prices.dates[1:],
        values=np.log(closes[1:] / closes[:-1]),
        labels=prices.labels[1:],
    )


def mean_adjust(returns: ReturnSeries) -> ReturnSeries:
    if returns.mean_adjusted:
        return returns
    if len(returns) == 0:
        raise InputError("cannot mean-adjust an empty series")
    mean = float(np.mean(returns.values))
    return replace(returns, values=returns.values - mean, mean_adjusted=True, original_mean=mean)
