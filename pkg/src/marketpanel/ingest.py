"""CSV ingestion: fundamentals, monthly prices and risk-free rates.

The dialect is deliberately strict so the contract is bit-exact: comma
separated, UTF-8, ``.`` decimal point, integer years/months, header required.
Fundamentals rows soft-fail one by one into an :class:`IngestReport`; a
missing or renamed column means the wrong file and fails hard.
"""

import csv
import io
import math
from dataclasses import dataclass

from .beta import PriceSeries
from .errors import (DuplicateMonth, InvariantViolation, NonPositivePrice,
                     RateOutOfRange, SchemaMismatch)
from .panel_core import FirmYearObservation, RiskFreeSeries, validate_observation

FUNDAMENTALS_COLUMNS = ("firm_id", "market_id", "year", "price", "book_value", "eps",
                        "sga", "rd", "sales", "total_assets", "total_equity",
                        "establishment_year", "stakes")
OPTIONAL_FUNDAMENTALS_COLUMN = "book_value_2009"
PRICES_COLUMNS = ("series_id", "year", "month", "close")
RISKFREE_COLUMNS = ("market_id", "year", "rate")


@dataclass(frozen=True)
class IngestReport:
    """Outcome of a soft-fail parse: accepted/rejected row counts."""

    rows_accepted: int
    rows_rejected: int
    rejections: tuple[tuple[int, str], ...]


def _parse_float(text: str, name: str) -> float:
    raw = text.strip()
    if raw != raw.replace(",", ""):
        raise ValueError(f"{name}: thousands separators not accepted")
    value = float(raw)
    if not math.isfinite(value):
        raise ValueError(f"{name}: not a finite number")
    return value


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ValueError(f"{name}: not an integer")


def _parse_stakes(text: str) -> tuple[float, ...]:
    raw = text.strip()
    if not raw:
        return ()
    return tuple(_parse_float(part, "stakes") for part in raw.split(";"))


def _rows(csv_text: str):
    return list(csv.reader(io.StringIO(csv_text)))


def _check_header(header: list[str], expected: tuple[str, ...], what: str,
                  optional: tuple[str, ...] = ()) -> list[str]:
    cleaned = [h.strip() for h in header]
    base = cleaned[:len(expected)]
    if tuple(base) != expected:
        raise SchemaMismatch(f"{what}: expected header {','.join(expected)!r}, "
                             f"got {','.join(cleaned)!r}")
    extras = cleaned[len(expected):]
    for col in extras:
        if col not in optional:
            raise SchemaMismatch(f"{what}: unexpected column {col!r}")
    return cleaned


def parse_fundamentals(csv_text: str) -> tuple[list[FirmYearObservation], IngestReport]:
    """Parse fundamentals.csv into observations, soft-failing per row.

    Returns the accepted observations and an :class:`IngestReport` whose
    ``rejections`` carry 1-based file line numbers and reasons. A schema
    problem raises :class:`SchemaMismatch` instead.
    """
    rows = _rows(csv_text)
    if not rows:
        raise SchemaMismatch("fundamentals: empty file")
    header = _check_header(rows[0], FUNDAMENTALS_COLUMNS, "fundamentals",
                           optional=(OPTIONAL_FUNDAMENTALS_COLUMN,))
    has_prev = OPTIONAL_FUNDAMENTALS_COLUMN in header

    accepted: list[FirmYearObservation] = []
    rejections: list[tuple[int, str]] = []
    n_rows = 0
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        n_rows += 1
        try:
            if len(row) != len(header):
                raise ValueError(f"expected {len(header)} fields, got {len(row)}")
            prev = None
            if has_prev and row[-1].strip():
                prev = _parse_float(row[-1], OPTIONAL_FUNDAMENTALS_COLUMN)
            obs = FirmYearObservation(
                firm_id=row[0].strip(),
                market_id=row[1].strip(),
                year=_parse_int(row[2], "year"),
                price=_parse_float(row[3], "price"),
                book_value=_parse_float(row[4], "book_value"),
                eps=_parse_float(row[5], "eps"),
                sga=_parse_float(row[6], "sga"),
                rd=_parse_float(row[7], "rd"),
                sales=_parse_float(row[8], "sales"),
                total_assets=_parse_float(row[9], "total_assets"),
                total_equity=_parse_float(row[10], "total_equity"),
                establishment_year=_parse_int(row[11], "establishment_year"),
                controlling_stakes=_parse_stakes(row[12]),
                book_value_prev=prev,
            )
            if not obs.firm_id or not obs.market_id:
                raise ValueError("firm_id and market_id must be non-empty")
            validate_observation(obs)
        except (ValueError, InvariantViolation) as exc:
            rejections.append((line_no, _reason(exc)))
            continue
        accepted.append(obs)

    report = IngestReport(rows_accepted=len(accepted),
                          rows_rejected=len(rejections),
                          rejections=tuple(rejections))
    assert report.rows_accepted + report.rows_rejected == n_rows
    return accepted, report


def _reason(exc: Exception) -> str:
    if isinstance(exc, InvariantViolation):
        return exc.reason
    return str(exc)


def parse_prices(csv_text: str) -> list[PriceSeries]:
    """Parse prices.csv into per-series monthly close vectors.

    Rows may arrive out of order; each series is sorted by (year, month).
    Duplicated months or non-positive closes fail hard.
    """
    rows = _rows(csv_text)
    if not rows:
        raise SchemaMismatch("prices: empty file")
    _check_header(rows[0], PRICES_COLUMNS, "prices")

    by_series: dict[str, dict[tuple[int, int], float]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(PRICES_COLUMNS):
            raise SchemaMismatch(f"prices line {line_no}: expected {len(PRICES_COLUMNS)} fields")
        series_id = row[0].strip()
        year = _parse_int(row[1], "year")
        month = _parse_int(row[2], "month")
        close = _parse_float(row[3], "close")
        if not 1 <= month <= 12:
            raise SchemaMismatch(f"prices line {line_no}: month {month} outside 1..12")
        if close <= 0:
            raise NonPositivePrice(f"prices line {line_no}: close {close!r} not positive")
        points = by_series.setdefault(series_id, {})
        if (year, month) in points:
            raise DuplicateMonth(f"prices: duplicate month ({series_id}, {year}, {month})")
        points[(year, month)] = close

    out = []
    for series_id in sorted(by_series):
        points = by_series[series_id]
        ordered = tuple((y, m, points[(y, m)]) for y, m in sorted(points))
        out.append(PriceSeries(series_id=series_id, points=ordered))
    return out


def parse_riskfree(csv_text: str) -> list[RiskFreeSeries]:
    """Parse riskfree.csv into one :class:`RiskFreeSeries` per market."""
    rows = _rows(csv_text)
    if not rows:
        raise SchemaMismatch("riskfree: empty file")
    _check_header(rows[0], RISKFREE_COLUMNS, "riskfree")

    by_market: dict[str, dict[int, float]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(RISKFREE_COLUMNS):
            raise SchemaMismatch(f"riskfree line {line_no}: expected {len(RISKFREE_COLUMNS)} fields")
        market_id = row[0].strip()
        year = _parse_int(row[1], "year")
        rate = _parse_float(row[2], "rate")
        if not 0 <= rate <= 0.5:
            raise RateOutOfRange(f"riskfree line {line_no}: rate {rate!r} outside [0, 0.5]")
        rates = by_market.setdefault(market_id, {})
        if year in rates:
            raise SchemaMismatch(f"riskfree: duplicate (market, year) ({market_id}, {year})")
        rates[year] = rate

    return [RiskFreeSeries(market_id=m, rates=dict(sorted(by_market[m].items())))
            for m in sorted(by_market)]


# --- serialization (round-trip partners of the parsers) -----------------------

def _fmt(value: float) -> str:
    # repr round-trips doubles exactly, keeping re-parsed data identical
    return repr(float(value))


def fundamentals_to_csv(observations: list[FirmYearObservation]) -> str:
    include_prev = any(o.book_value_prev is not None for o in observations)
    header = list(FUNDAMENTALS_COLUMNS)
    if include_prev:
        header.append(OPTIONAL_FUNDAMENTALS_COLUMN)
    lines = [",".join(header)]
    for o in observations:
        row = [o.firm_id, o.market_id, str(o.year), _fmt(o.price), _fmt(o.book_value),
               _fmt(o.eps), _fmt(o.sga), _fmt(o.rd), _fmt(o.sales), _fmt(o.total_assets),
               _fmt(o.total_equity), str(o.establishment_year),
               ";".join(_fmt(s) for s in o.controlling_stakes)]
        if include_prev:
            row.append(_fmt(o.book_value_prev) if o.book_value_prev is not None else "")
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def prices_to_csv(series: list[PriceSeries]) -> str:
    lines = [",".join(PRICES_COLUMNS)]
    for s in series:
        for year, month, close in s.points:
            lines.append(f"{s.series_id},{year},{month},{_fmt(close)}")
    return "\n".join(lines) + "\n"


def riskfree_to_csv(series: list[RiskFreeSeries]) -> str:
    lines = [",".join(RISKFREE_COLUMNS)]
    for s in series:
        for year in sorted(s.rates):
            lines.append(f"{s.market_id},{year},{_fmt(s.rates[year])}")
    return "\n".join(lines) + "\n"
