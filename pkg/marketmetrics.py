"""
marketmetrics.py

Price-derived quantities: simple returns, cumulative returns, volatility,
Sharpe, Sortino, maximum drawdown and correlation matrices, plus the
multi-window report that feeds the stock price dynamics summary.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from constants import METRIC_WINDOWS_MONTHS, PERIODS_PER_YEAR, RISK_FREE_RATE
from errors import (
    InsufficientDataError,
    InsufficientHistoryError,
    InvalidReturnError,
    NotFoundError,
    ValidationError,
)


@dataclass(frozen=True)
class PricePanel:
    """
    Adjusted closes, one row per trading date and one column per ticker.
    Missing prices are NaN, never zero.
    """
    prices: pd.DataFrame

    def __post_init__(self):
        prices = self.prices
        if not isinstance(prices.index, pd.DatetimeIndex):
            raise ValidationError("price panel index must be a DatetimeIndex")
        if len(prices.index) > 1 and not prices.index.is_monotonic_increasing:
            raise ValidationError("price panel dates must be strictly increasing")
        if prices.index.has_duplicates:
            raise ValidationError("price panel dates must be strictly increasing")
        if prices.columns.has_duplicates:
            dupes = sorted(set(prices.columns[prices.columns.duplicated()]))
            raise ValidationError(f"duplicated tickers in price panel: {dupes}")
        values = prices.to_numpy(dtype=float, na_value=np.nan)
        present = values[~np.isnan(values)]
        if present.size and (not np.all(np.isfinite(present)) or np.any(present <= 0)):
            raise ValidationError("every price must be finite and > 0")

    @property
    def calendar(self) -> pd.DatetimeIndex:
        return self.prices.index

    @property
    def tickers(self) -> List[str]:
        return list(self.prices.columns)

    def until(self, as_of) -> "PricePanel":
        """Panel truncated to dates on or before `as_of`."""
        return PricePanel(self.prices.loc[self.prices.index <= pd.Timestamp(as_of)])

    def series(self, ticker) -> pd.Series:
        if ticker not in self.prices.columns:
            raise NotFoundError(f"ticker {ticker!r} not in price panel")
        return self.prices[ticker]


@dataclass(frozen=True)
class ReturnPanel:
    """Simple daily returns; the calendar is the price calendar minus its first date."""
    returns: pd.DataFrame

    @property
    def calendar(self) -> pd.DatetimeIndex:
        return self.returns.index

    @property
    def tickers(self) -> List[str]:
        return list(self.returns.columns)


@dataclass(frozen=True)
class RiskMetrics:
    volatility: float
    sharpe: Optional[float]
    sortino: Optional[float]


@dataclass(frozen=True)
class WindowMetrics:
    ticker: str
    window_months: int
    start: pd.Timestamp
    end: pd.Timestamp
    cumulative_return: float
    volatility: float
    sharpe: Optional[float]
    sortino: Optional[float]
    max_drawdown: float


@dataclass
class MetricsReport:
    as_of: pd.Timestamp
    target: str
    peers: List[str]
    index: str
    windows: Sequence[int]
    rows: Dict[int, Dict[str, WindowMetrics]] = field(default_factory=dict)
    correlation: pd.DataFrame = field(default_factory=pd.DataFrame)

    @property
    def entities(self) -> List[str]:
        return _unique([self.target, *self.peers, self.index])

    def metric(self, ticker, window) -> WindowMetrics:
        return self.rows[window][ticker]

    def to_dict(self) -> dict:
        """JSON-ready mapping; undefined metrics become None (JSON null)."""
        windows = {}
        for window, by_ticker in self.rows.items():
            windows[str(window)] = {
                ticker: {
                    "start": m.start.date().isoformat(),
                    "end": m.end.date().isoformat(),
                    "cumulative_return": _json_float(m.cumulative_return),
                    "volatility": _json_float(m.volatility),
                    "sharpe": _json_float(m.sharpe),
                    "sortino": _json_float(m.sortino),
                    "max_drawdown": _json_float(m.max_drawdown),
                }
                for ticker, m in by_ticker.items()
            }
        corr = {
            row: {col: _json_float(self.correlation.loc[row, col]) for col in self.correlation.columns}
            for row in self.correlation.index
        }
        return {
            "as_of": self.as_of.date().isoformat(),
            "target": self.target,
            "peers": list(self.peers),
            "index": self.index,
            "windows": windows,
            "correlation": corr,
        }


def _unique(items):
    seen = []
    for item in items:
        if item not in seen:
            seen.append(item)
    return seen


def _json_float(value):
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=float).ravel()


def simple_returns(panel: PricePanel) -> ReturnPanel:
    """Simple daily returns; a missing price on either side gives a missing return."""
    prices = panel.prices
    if len(prices.index) < 2:
        raise InsufficientDataError(f"need at least 2 dates for returns, got {len(prices.index)}")
    values = prices.to_numpy(dtype=float, na_value=np.nan)
    returns = values[1:] / values[:-1] - 1.0
    return ReturnPanel(pd.DataFrame(returns, index=prices.index[1:], columns=prices.columns))


def cumulative_return(returns) -> float:
    r = _as_array(returns)
    if r.size == 0:
        raise InsufficientDataError("cumulative return of an empty series")
    if np.any(np.isnan(r)):
        raise InvalidReturnError("return series contains missing values")
    if np.any(r <= -1.0):
        raise InvalidReturnError("every return must be > -1")
    return float(np.prod(1.0 + r) - 1.0)


def risk_metrics(returns, risk_free_rate=RISK_FREE_RATE, periods_per_year=PERIODS_PER_YEAR) -> RiskMetrics:
    """
    Annualized volatility (sample std), Sharpe and Sortino.
    Sharpe is None when volatility is zero; Sortino is None when the downside
    deviation is zero or cannot be estimated (fewer than two losing periods).
    """
    r = _as_array(returns)
    if r.size < 2:
        raise InsufficientDataError(f"risk metrics need at least 2 returns, got {r.size}")
    if np.any(np.isnan(r)):
        raise InvalidReturnError("return series contains missing values")

    excess = r - risk_free_rate / periods_per_year
    annual_excess = float(np.mean(excess)) * periods_per_year
    scale = math.sqrt(periods_per_year)

    volatility = 0.0 if np.ptp(r) == 0 else float(np.std(r, ddof=1)) * scale
    sharpe = annual_excess / volatility if volatility > 0 else None

    downside = excess[excess < 0]
    sortino = None
    if downside.size >= 2 and np.ptp(downside) > 0:
        downside_dev = float(np.std(downside, ddof=1)) * scale
        sortino = annual_excess / downside_dev
    return RiskMetrics(volatility=volatility, sharpe=sharpe, sortino=sortino)


def max_drawdown(values) -> float:
    v = _as_array(values)
    if v.size == 0:
        raise InsufficientDataError("max drawdown of an empty series")
    if np.any(np.isnan(v)) or np.any(v <= 0):
        raise InvalidReturnError("max drawdown needs a strictly positive series")
    running_max = np.maximum.accumulate(v)
    return float(min(0.0, np.min(v / running_max - 1.0)))


def correlation_matrix(returns: ReturnPanel) -> pd.DataFrame:
    """
    Pearson correlation on pairwise-complete observations.
    Pairs with fewer than 2 overlapping points are NaN (undefined), not zero.
    """
    frame = returns.returns.astype(float)
    corr = frame.corr(method="pearson", min_periods=2)
    corr = corr.clip(lower=-1.0, upper=1.0)
    counts = frame.notna().sum()
    for ticker in frame.columns:
        corr.loc[ticker, ticker] = 1.0 if counts[ticker] >= 2 else np.nan
    return corr


def window_start(calendar: pd.DatetimeIndex, as_of, months: int) -> pd.Timestamp:
    """
    Calendar months counted back from `as_of`, mapped to the nearest trading
    day (earlier day wins a tie).
    """
    as_of = pd.Timestamp(as_of)
    if len(calendar) == 0:
        raise InsufficientHistoryError("empty calendar")
    target = as_of - pd.DateOffset(months=months)
    if target < calendar[0]:
        raise InsufficientHistoryError(
            f"{months}-month window from {as_of.date()} starts {target.date()}, "
            f"before first available date {calendar[0].date()}"
        )
    pos = calendar.searchsorted(target)
    candidates = [p for p in (pos - 1, pos) if 0 <= p < len(calendar)]
    best = min(candidates, key=lambda p: (abs(calendar[p] - target), p))
    return calendar[best]


def price_dynamics_metrics(target, peers, index, panel: PricePanel, windows=METRIC_WINDOWS_MONTHS,
                           as_of=None, risk_free_rate=RISK_FREE_RATE,
                           periods_per_year=PERIODS_PER_YEAR) -> MetricsReport:
    """
    Metrics for target, peers and index over each window ending at `as_of`
    (default: last panel date). Every metric comes from the standalone
    operations above; the correlation matrix uses the longest window.
    Windows with missing prices fail loudly rather than impute.
    """
    entities = _unique([target, *peers, index])
    for ticker in entities:
        if ticker not in panel.prices.columns:
            raise NotFoundError(f"ticker {ticker!r} not in price panel")

    prices = panel.prices[entities]
    if as_of is not None:
        prices = prices.loc[prices.index <= pd.Timestamp(as_of)]
    if prices.empty:
        raise InsufficientHistoryError("no prices on or before the as-of date")
    end = prices.index[-1]

    report = MetricsReport(as_of=end, target=target, peers=list(peers), index=index,
                           windows=tuple(windows))
    longest = None
    for window in sorted(windows):
        start = window_start(prices.index, end, window)
        sub = prices.loc[start:end]
        if len(sub.index) < 3:
            raise InsufficientHistoryError(f"{window}-month window has fewer than 3 prices")
        missing = [t for t in entities if sub[t].isna().any()]
        if missing:
            raise InsufficientHistoryError(
                f"missing prices inside the {window}-month window for {missing}"
            )
        rets = simple_returns(PricePanel(sub))
        by_ticker = {}
        for ticker in entities:
            r = rets.returns[ticker].to_numpy()
            risk = risk_metrics(r, risk_free_rate, periods_per_year)
            by_ticker[ticker] = WindowMetrics(
                ticker=ticker,
                window_months=window,
                start=start,
                end=end,
                cumulative_return=cumulative_return(r),
                volatility=risk.volatility,
                sharpe=risk.sharpe,
                sortino=risk.sortino,
                max_drawdown=max_drawdown(sub[ticker].to_numpy()),
            )
        report.rows[window] = by_ticker
        longest = rets

    report.correlation = correlation_matrix(longest)
    return report


__all__ = [
    "PricePanel",
    "ReturnPanel",
    "RiskMetrics",
    "WindowMetrics",
    "MetricsReport",
    "simple_returns",
    "cumulative_return",
    "risk_metrics",
    "max_drawdown",
    "correlation_matrix",
    "window_start",
    "price_dynamics_metrics",
]
