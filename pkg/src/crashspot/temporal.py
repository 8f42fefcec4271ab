"""Temporal binning and the severity-by-period independence test.

Events are cross-tabulated into an ``r x 2`` table of temporal category by
severity (High, Low). The chi-square statistic, its tail probability and
Cramér's V summarise how strongly severity depends on the temporal factor.
"""
from __future__ import annotations

import calendar
import math
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Callable, Iterable, Sequence

import numpy as np

from .exceptions import DataError, DegenerateTableError
from .ingest import EventRecord, Severity, StudyWindow

ALPHA = 0.05
SEVERITY_COLUMNS = ("High", "Low")


class Period(str, Enum):
    Morning = "Morning"
    Afternoon = "Afternoon"
    Evening = "Evening"
    Night = "Night"


def assign_period(ts: datetime) -> Period:
    """Night 00-05, Morning 06-11, Afternoon 12-17, Evening 18-23 (hour of day)."""
    h = ts.hour
    if h < 6:
        return Period.Night
    if h < 12:
        return Period.Morning
    if h < 18:
        return Period.Afternoon
    return Period.Evening


WEEKDAYS = tuple(calendar.day_name)  # Monday first


@dataclass(frozen=True)
class TemporalFactor:
    """A temporal factor: its name, ordered category labels and a classifier."""

    kind: str
    categories: tuple[str, ...]
    key: Callable[[datetime], str]

    def __post_init__(self):
        if len(self.categories) < 2:
            raise DataError(f"factor {self.kind!r} needs at least two categories")

    @property
    def r(self) -> int:
        return len(self.categories)

    @classmethod
    def time_of_day(cls) -> "TemporalFactor":
        return cls("time_of_day", tuple(p.value for p in Period), lambda ts: assign_period(ts).value)

    @classmethod
    def day_of_week(cls) -> "TemporalFactor":
        return cls("day_of_week", WEEKDAYS, lambda ts: WEEKDAYS[ts.weekday()])

    @classmethod
    def month(cls, window: StudyWindow | None = None, events: Iterable[EventRecord] = ()) -> "TemporalFactor":
        """Calendar months of ``window`` or, without a window, those present in ``events``."""
        if window is not None:
            months = window.months()
        else:
            months = sorted({(e.timestamp.year, e.timestamp.month) for e in events})
        return cls("month", tuple(f"{y:04d}-{m:02d}" for y, m in months), lambda ts: f"{ts.year:04d}-{ts.month:02d}")


FACTOR_NAMES = ("time_of_day", "day_of_week", "month")


def make_factor(name: str, window: StudyWindow | None = None, events: Iterable[EventRecord] = ()) -> TemporalFactor:
    if name == "time_of_day":
        return TemporalFactor.time_of_day()
    if name == "day_of_week":
        return TemporalFactor.day_of_week()
    if name == "month":
        return TemporalFactor.month(window, events)
    raise ValueError(f"unknown temporal factor {name!r}")


@dataclass(frozen=True, eq=False)
class ContingencyTable:
    observed: np.ndarray
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...] = SEVERITY_COLUMNS

    def __post_init__(self):
        obs = np.asarray(self.observed)
        if obs.ndim != 2 or obs.shape[1] != 2 or obs.shape[0] != len(self.row_labels):
            raise ValueError("observed must be r x 2 and match row_labels")
        if np.any(obs < 0):
            raise ValueError("counts must be non-negative")
        object.__setattr__(self, "observed", obs)

    @property
    def n(self) -> int:
        return int(self.observed.sum())


def build_table(events: Iterable[EventRecord], factor: TemporalFactor) -> ContingencyTable:
    """Observed counts per (category, severity); events outside the factor's categories raise."""
    index = {c: i for i, c in enumerate(factor.categories)}
    obs = np.zeros((factor.r, 2), dtype=np.int64)
    for e in events:
        label = factor.key(e.timestamp)
        try:
            i = index[label]
        except KeyError:
            raise DataError(f"event {e.id} falls in {label!r}, not a {factor.kind} category") from None
        obs[i, 0 if e.severity is Severity.High else 1] += 1
    return ContingencyTable(obs, factor.categories)


def table_from_counts(observed, row_labels: Sequence[str] | None = None) -> ContingencyTable:
    observed = np.asarray(observed)
    labels = tuple(row_labels) if row_labels is not None else tuple(str(i) for i in range(len(observed)))
    return ContingencyTable(observed, labels)


def expected_counts(table: ContingencyTable) -> np.ndarray:
    obs = table.observed.astype(float)
    n = obs.sum()
    if n <= 0:
        raise DataError("table is empty")
    return np.outer(obs.sum(axis=1), obs.sum(axis=0)) / n


@dataclass(frozen=True)
class ChiSquareReport:
    chi2: float
    df: int
    n: int
    cramers_v: float
    p_value: float | None = None

    @property
    def significant(self) -> bool | None:
        return None if self.p_value is None else self.p_value < ALPHA


def chi_square(table: ContingencyTable) -> ChiSquareReport:
    """Pearson statistic and df; raises DegenerateTableError on any zero expected count."""
    if isinstance(table, (list, tuple, np.ndarray)):
        table = table_from_counts(table)
    exp = expected_counts(table)
    if np.any(exp == 0):
        raise DegenerateTableError("degenerate margin: a row or column of the table is all zero")
    obs = table.observed.astype(float)
    chi2 = float(np.sum((obs - exp) ** 2 / exp))
    return ChiSquareReport(chi2=chi2, df=obs.shape[0] - 1, n=table.n, cramers_v=cramers_v(chi2, table.n))


def independence_test(table: ContingencyTable) -> ChiSquareReport:
    """:func:`chi_square` plus its upper-tail p-value."""
    rep = chi_square(table)
    return ChiSquareReport(rep.chi2, rep.df, rep.n, rep.cramers_v, chi2_sf(rep.chi2, rep.df))


# --------------------------------------------------------------------------
# Chi-square tail via the regularized incomplete gamma function

_EPS = 1e-16
_MAX_ITER = 10_000
_FPMIN = 1e-300


def _gamma_p_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_q_contfrac(a: float, x: float) -> float:
    # modified Lentz evaluation
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gamma_q(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if x <= 0.0:
        return 1.0
    if x < a + 1.0:
        return min(1.0, max(0.0, 1.0 - _gamma_p_series(a, x)))
    return min(1.0, max(0.0, _gamma_q_contfrac(a, x)))


def chi2_sf(x: float, df: int) -> float:
    """P(X >= x) for X ~ chi-square with ``df`` degrees of freedom."""
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("chi-square statistic must be finite")
    if x < 0:
        raise ValueError("chi-square statistic must be non-negative")
    if df < 1:
        raise ValueError("df must be >= 1")
    return gamma_q(df / 2.0, x / 2.0)


def cramers_v(chi2: float, n: int) -> float:
    """sqrt(chi2 / n): Cramér's V when one variable is binary."""
    if n <= 0:
        raise ValueError("n must be positive")
    if chi2 < 0:
        raise ValueError("chi2 must be non-negative")
    return math.sqrt(chi2 / n)


def format_p(p: float | None) -> str:
    if p is None:
        return "NA"
    return "<0.001" if p < 0.001 else f"{p:.3f}"


# --------------------------------------------------------------------------
# Descriptive summaries


def daily_mean(count: int, window: StudyWindow) -> float:
    days = window.observed_days
    if days <= 0:
        raise DataError("window has no observed days")
    return count / days


@dataclass(frozen=True)
class BinShare:
    category: str
    n_high: int
    n_low: int

    @property
    def count(self) -> int:
        return self.n_high + self.n_low

    @property
    def percent_high(self) -> float | None:
        return None if self.count == 0 else 100.0 * self.n_high / self.count


def severity_share_by_bin(events: Iterable[EventRecord], factor: TemporalFactor) -> list[BinShare]:
    table = build_table(events, factor)
    return [BinShare(label, int(h), int(l)) for label, (h, l) in zip(table.row_labels, table.observed)]


def high_share_ratio(events: Iterable[EventRecord], numerator: Period, denominator: Period) -> float | None:
    """Ratio of High-severity shares between two time-of-day periods.

    ``None`` when either period has no events or the denominator share is 0.
    """
    shares = {b.category: b.percent_high for b in severity_share_by_bin(events, TemporalFactor.time_of_day())}
    top, bottom = shares[Period(numerator).value], shares[Period(denominator).value]
    if top is None or not bottom:
        return None
    return top / bottom


def daily_counts(events: Iterable[EventRecord], window: StudyWindow) -> dict:
    """Events per observed date (zero-filled); dates outside the window are ignored."""
    counts = {d: 0 for d in window.observed_dates()}
    for e in events:
        d = e.timestamp.date()
        if d in counts:
            counts[d] += 1
    return counts
