"""
backtester.py

Monthly-rebalanced strategy portfolios over a PricePanel.

Weights are set at the last close of each signal month and held through the
last close of the following month, drifting with prices in between. Each
rebalance pays cost_bps per unit of turnover (sum of |weight changes|
against the drifted weights), taken out of wealth on the first holding day.
"""

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from constants import (
    COST_BPS,
    GPT_SCORE_THRESHOLD,
    INDEX_TICKER,
    MA_WINDOW_DAYS,
    PERIODS_PER_YEAR,
    RISK_FREE_RATE,
    SHARPE_LOOKBACK_DAYS,
    TOP_N,
)
from errors import (
    AlignmentError,
    ConfigurationError,
    InsufficientDataError,
    NotFoundError,
    ValidationError,
)
from evallab import SignalMatrix
from marketmetrics import PricePanel, max_drawdown, risk_metrics
from utils.helpers import safe_call
from utils.logging_setup import logger

EQUAL = "equal"
CAPITALIZATION = "capitalization"

# kind -> (weighting, required parameters)
STRATEGY_KINDS = {
    "MS": (EQUAL, ()),
    "MS-L": (EQUAL, ()),
    "MS-L-Cap": (CAPITALIZATION, ()),
    "MS-Top10-SR": (EQUAL, ("top_n", "sharpe_lookback")),
    "SP100-Eq": (EQUAL, ()),
    "SP100": (CAPITALIZATION, ()),
    "Naive": (EQUAL, ("ma_window",)),
    "Naive-Top10": (EQUAL, ("top_n", "sharpe_lookback", "ma_window")),
    "MS-TopN-GPT": (EQUAL, ("top_n",)),
    "MS-High-GPT": (EQUAL, ("score_threshold",)),
    "MS-Low-GPT": (EQUAL, ("score_threshold",)),
    "MS-TopN-Cap-GPT": (CAPITALIZATION, ("top_n",)),
}
PARAMETERS = ("top_n", "score_threshold", "sharpe_lookback", "ma_window")
DEFAULTS = {
    "top_n": TOP_N,
    "score_threshold": GPT_SCORE_THRESHOLD,
    "sharpe_lookback": SHARPE_LOOKBACK_DAYS,
    "ma_window": MA_WINDOW_DAYS,
}
SCORED_KINDS = {"MS-TopN-GPT", "MS-High-GPT", "MS-Low-GPT", "MS-TopN-Cap-GPT"}
BENCHMARK = "SP100"

_TOPN_LABEL = re.compile(r"^(MS|Naive)-Top(\d+)(-SR|-GPT|-Cap-GPT)?$")


@dataclass(frozen=True)
class StrategySpec:
    name: str
    weighting: str = ""
    top_n: Optional[int] = None
    score_threshold: Optional[int] = None
    sharpe_lookback: Optional[int] = None
    ma_window: Optional[int] = None
    cost_bps: float = COST_BPS
    fully_allocated: bool = True

    def __post_init__(self):
        if self.name not in STRATEGY_KINDS:
            raise ConfigurationError(f"unknown strategy {self.name!r}")
        weighting, required = STRATEGY_KINDS[self.name]
        if not self.weighting:
            object.__setattr__(self, "weighting", weighting)
        if self.weighting != weighting:
            raise ConfigurationError(f"{self.name} is {weighting}-weighted, not {self.weighting}")
        for param in PARAMETERS:
            value = getattr(self, param)
            if param in required and value is None:
                raise ConfigurationError(f"{self.name} requires {param}")
            if param not in required and value is not None:
                raise ConfigurationError(f"{self.name} does not take {param}")
        if self.top_n is not None and self.top_n < 1:
            raise ConfigurationError("top_n must be >= 1")
        if self.score_threshold is not None and not 0 <= self.score_threshold <= 10:
            raise ConfigurationError("score_threshold must be within 0-10")
        if self.sharpe_lookback is not None and self.sharpe_lookback < 2:
            raise ConfigurationError("sharpe_lookback must be >= 2 days")
        if self.ma_window is not None and self.ma_window < 1:
            raise ConfigurationError("ma_window must be >= 1 day")
        if not (self.cost_bps >= 0 and math.isfinite(self.cost_bps)):
            raise ConfigurationError("cost_bps must be >= 0")

    @property
    def label(self) -> str:
        """Display name; Top-N strategies carry their N (MS-Top10-GPT, Naive-Top5, ...)."""
        if self.name in ("MS-TopN-GPT", "MS-TopN-Cap-GPT"):
            return self.name.replace("TopN", f"Top{self.top_n}")
        if self.name in ("MS-Top10-SR", "Naive-Top10"):
            return self.name.replace("Top10", f"Top{self.top_n}")
        return self.name

    @property
    def needs_scores(self) -> bool:
        return self.name in SCORED_KINDS

    def to_dict(self) -> dict:
        doc = {"name": self.name, "weighting": self.weighting, "cost_bps": self.cost_bps,
               "fully_allocated": self.fully_allocated}
        for param in PARAMETERS:
            if getattr(self, param) is not None:
                doc[param] = getattr(self, param)
        return doc


def _kind_from_label(label: str):
    if label in STRATEGY_KINDS:
        return label, {}
    m = _TOPN_LABEL.match(label)
    if not m:
        raise ConfigurationError(f"unknown strategy {label!r}")
    family, n, suffix = m.group(1), int(m.group(2)), m.group(3) or ""
    kind = {
        ("MS", "-SR"): "MS-Top10-SR",
        ("MS", "-GPT"): "MS-TopN-GPT",
        ("MS", "-Cap-GPT"): "MS-TopN-Cap-GPT",
        ("Naive", ""): "Naive-Top10",
    }.get((family, suffix))
    if kind is None:
        raise ConfigurationError(f"unknown strategy {label!r}")
    return kind, {"top_n": n}


def make_spec(name, cost_bps=COST_BPS, **params) -> StrategySpec:
    """Spec for a kind or a label such as "MS-Top5-GPT"; missing required parameters take defaults."""
    kind, implied = _kind_from_label(name)
    _, required = STRATEGY_KINDS[kind]
    values = {p: DEFAULTS[p] for p in required}
    values.update(implied)
    values.update({k: v for k, v in params.items() if v is not None})
    return StrategySpec(name=kind, cost_bps=cost_bps, **values)


def default_catalog(cost_bps=COST_BPS) -> List[StrategySpec]:
    return [make_spec(kind, cost_bps=cost_bps) for kind in STRATEGY_KINDS]


def load_strategy_specs(documents, cost_bps=COST_BPS) -> List[StrategySpec]:
    """
    StrategySpecs from JSON-ready documents ({"name": ..., parameters...}).
    The string "all" stands for the default catalog.
    """
    if documents == "all":
        return default_catalog(cost_bps)
    allowed = {"name", "weighting", "cost_bps", "fully_allocated", *PARAMETERS}
    specs = []
    for doc in documents:
        if isinstance(doc, str):
            doc = {"name": doc}
        unknown = sorted(set(doc) - allowed)
        if unknown:
            raise ConfigurationError(f"unknown strategy keys {unknown} in {doc.get('name')!r}")
        if "name" not in doc:
            raise ConfigurationError("strategy document without name")
        params = {p: doc.get(p) for p in PARAMETERS}
        spec = make_spec(doc["name"], cost_bps=float(doc.get("cost_bps", cost_bps)), **params)
        if "weighting" in doc and doc["weighting"] != spec.weighting:
            raise ConfigurationError(f"{spec.label} is {spec.weighting}-weighted, not {doc['weighting']}")
        if "fully_allocated" in doc:
            spec = replace(spec, fully_allocated=bool(doc["fully_allocated"]))
        specs.append(spec)
    labels = [s.label for s in specs]
    if len(set(labels)) != len(labels):
        raise ConfigurationError(f"strategy listed twice: {labels}")
    return specs


def select_strategies(specs: Sequence[StrategySpec], names) -> List[StrategySpec]:
    """Subset of `specs` by label or kind; "all" (or None) keeps every spec."""
    if names is None or names == "all" or names == ["all"]:
        return list(specs)
    if isinstance(names, str):
        names = [n.strip() for n in names.split(",") if n.strip()]
    chosen = []
    for name in names:
        match = [s for s in specs if name in (s.label, s.name)]
        if not match:
            match = [make_spec(name, cost_bps=specs[0].cost_bps if specs else COST_BPS)]
        chosen.extend(s for s in match if s not in chosen)
    return chosen


# ----------------- inputs -----------------

@dataclass(frozen=True, eq=False)
class CapWeights:
    """Market capitalization per (month, ticker)."""
    caps: pd.DataFrame

    def __post_init__(self):
        frame = self.caps.astype(float)
        if not isinstance(frame.index, pd.PeriodIndex):
            frame.index = pd.PeriodIndex([pd.Period(v, freq="M") for v in frame.index], freq="M")
        values = frame.to_numpy()
        present = values[~np.isnan(values)]
        if np.any(present <= 0) or not np.all(np.isfinite(present)):
            raise ValidationError("capitalizations must be finite and > 0")
        object.__setattr__(self, "caps", frame)

    def for_month(self, month, tickers) -> np.ndarray:
        if month not in self.caps.index:
            raise ConfigurationError(f"no capitalizations for {month}")
        row = self.caps.loc[month]
        missing = [t for t in tickers if t not in row.index or np.isnan(row[t])]
        if missing:
            raise ConfigurationError(f"no capitalization for {missing} in {month}")
        return row[list(tickers)].to_numpy(dtype=float)


@dataclass(frozen=True, eq=False)
class WeightSchedule:
    w: pd.DataFrame

    @property
    def months(self) -> pd.PeriodIndex:
        return self.w.index

    @property
    def tickers(self) -> List[str]:
        return list(self.w.columns)

    def holdings(self, month) -> List[str]:
        row = self.w.loc[month]
        return sorted(row.index[row.to_numpy() != 0])


def rebalance_dates(calendar: pd.DatetimeIndex, months) -> Dict[pd.Period, pd.Timestamp]:
    """Last trading day of each month; a month without trading days is an AlignmentError."""
    ends = pd.Series(calendar, index=calendar).groupby(calendar.to_period("M")).max()
    out = {}
    for month in months:
        if month not in ends.index:
            raise AlignmentError(f"no trading days in {month}")
        out[month] = ends.loc[month]
    return out


def _closes_until(panel: PricePanel, ticker, as_of) -> pd.Series:
    s = panel.series(ticker)
    return s.loc[s.index <= as_of].dropna()


def moving_average_filter(panel: PricePanel, window=MA_WINDOW_DAYS, as_of=None, tickers=None) -> List[str]:
    """Tickers whose close at `as_of` is strictly above the mean of their last `window` closes."""
    as_of = pd.Timestamp(as_of) if as_of is not None else panel.calendar[-1]
    eligible = []
    for ticker in (tickers if tickers is not None else panel.tickers):
        closes = _closes_until(panel, ticker, as_of)
        if len(closes) < window:
            logger.warning("%s has %s closes before %s, fewer than the %s-day average needs; excluded",
                           ticker, len(closes), as_of.date(), window)
            continue
        if closes.index[-1] != as_of:
            logger.warning("%s has no close on %s; excluded from the moving-average screen", ticker, as_of.date())
            continue
        last = float(closes.iloc[-1])
        mean = float(closes.iloc[-window:].mean())
        if last > mean and not math.isclose(last, mean, rel_tol=1e-12, abs_tol=0.0):
            eligible.append(ticker)
    return sorted(eligible)


def top_n_by_trailing_sharpe(candidates, panel: PricePanel, as_of, n=TOP_N, lookback=SHARPE_LOOKBACK_DAYS,
                             risk_free_rate=RISK_FREE_RATE, periods_per_year=PERIODS_PER_YEAR) -> List[str]:
    """
    The n candidates with the best Sharpe over the last `lookback` daily
    returns, best first, ties by ticker. Zero-volatility names rank last.
    """
    as_of = pd.Timestamp(as_of)
    scored = []
    for ticker in sorted(set(candidates)):
        closes = _closes_until(panel, ticker, as_of)
        if len(closes) < lookback + 1:
            logger.warning("%s lacks %s days of history before %s; not ranked", ticker, lookback, as_of.date())
            continue
        window = closes.iloc[-(lookback + 1):].to_numpy(dtype=float)
        sharpe = risk_metrics(window[1:] / window[:-1] - 1.0, risk_free_rate, periods_per_year).sharpe
        scored.append((sharpe is None, -(sharpe or 0.0), ticker))
    scored.sort()
    if len(scored) < n:
        logger.warning("Only %s of %s requested names rankable by Sharpe on %s", len(scored), n, as_of.date())
    return [ticker for _, _, ticker in scored[:n]]


# ----------------- weights -----------------

def _scores_row(scores: pd.DataFrame, month) -> pd.Series:
    if month not in scores.index:
        return pd.Series(dtype=float)
    return scores.loc[month].dropna()


def _select(spec: StrategySpec, month, as_of, signal_row: Optional[pd.Series], universe, panel,
            scores: Optional[pd.DataFrame], index_ticker):
    """(long names, short names) chosen by the strategy for one month."""
    kind = spec.name
    buys = sorted(signal_row.index[signal_row == 1]) if signal_row is not None else []
    sells = sorted(signal_row.index[signal_row == -1]) if signal_row is not None else []

    if kind == "MS":
        return buys, sells
    if kind in ("MS-L", "MS-L-Cap"):
        return buys, []
    if kind == "MS-Top10-SR":
        return top_n_by_trailing_sharpe(buys, panel, as_of, spec.top_n, spec.sharpe_lookback), []
    if kind == "SP100-Eq":
        return list(universe), []
    if kind == "SP100":
        if index_ticker in panel.tickers:
            return [index_ticker], []
        return list(universe), []
    if kind == "Naive":
        return moving_average_filter(panel, spec.ma_window, as_of, universe), []
    if kind == "Naive-Top10":
        eligible = moving_average_filter(panel, spec.ma_window, as_of, universe)
        return top_n_by_trailing_sharpe(eligible, panel, as_of, spec.top_n, spec.sharpe_lookback), []

    row = _scores_row(scores, month)
    unscored = [t for t in buys if t not in row.index]
    if unscored:
        logger.warning("%s %s: buys without a score are left out: %s", spec.label, month, unscored)
    scored = [(t, int(row[t])) for t in buys if t in row.index]
    if kind == "MS-High-GPT":
        return [t for t, s in scored if s > spec.score_threshold], []
    if kind == "MS-Low-GPT":
        return [t for t, s in scored if s <= spec.score_threshold], []
    ranked = sorted(scored, key=lambda ts: (-ts[1], ts[0]))
    return [t for t, _ in ranked[:spec.top_n]], []


def build_weights(spec: StrategySpec, signals: Optional[SignalMatrix], scores: Optional[pd.DataFrame],
                  panel: PricePanel, caps: Optional[CapWeights] = None, months=None,
                  index_ticker=INDEX_TICKER, universe=None) -> WeightSchedule:
    """
    Target weights per month. Equal weighting splits |weight| evenly over the
    selected names (longs positive, shorts negative); capitalization weighting
    is proportional to market cap. A month with nothing selected holds cash.
    """
    if signals is None and months is None:
        raise ConfigurationError(f"{spec.label} needs signals or an explicit month list")
    if spec.needs_scores and scores is None:
        raise ConfigurationError(f"{spec.label} needs explanation scores")
    uses_index = spec.name == "SP100" and index_ticker in panel.tickers
    if spec.weighting == CAPITALIZATION and caps is None and not uses_index:
        raise ConfigurationError(f"{spec.label} needs market capitalizations")

    months = signals.months if signals is not None else pd.PeriodIndex(months, freq="M")
    if universe is None:
        universe = signals.tickers if signals is not None else [t for t in panel.tickers if t != index_ticker]
    universe = list(universe)
    columns = universe + ([index_ticker] if uses_index and index_ticker not in universe else [])
    unknown = [t for t in columns if t not in panel.tickers]
    if unknown:
        raise NotFoundError(f"tickers missing from the price panel: {unknown}")

    dates = rebalance_dates(panel.calendar, months)
    weights = pd.DataFrame(0.0, index=months, columns=columns)
    for month in months:
        as_of = dates[month]
        row = signals.m.loc[month] if signals is not None else None
        longs, shorts = _select(spec, month, as_of, row, universe, panel, scores, index_ticker)
        names = longs + shorts
        if not names:
            logger.warning("%s %s: nothing selected, holding cash", spec.label, month)
            continue
        signs = np.array([1.0] * len(longs) + [-1.0] * len(shorts))
        if spec.weighting == CAPITALIZATION and not (spec.name == "SP100" and uses_index):
            cap = caps.for_month(month, names)
            w = signs * cap / cap.sum()
        elif spec.name in ("Naive", "Naive-Top10") and not spec.fully_allocated:
            slots = len(universe) if spec.name == "Naive" else spec.top_n
            w = signs / slots
        else:
            w = signs / len(names)
        weights.loc[month, names] = w
    return WeightSchedule(weights)


# ----------------- simulation -----------------

@dataclass(frozen=True)
class TradeLogEntry:
    date: pd.Timestamp
    ticker: str
    weight_delta: float


@dataclass(frozen=True)
class Trade:
    ticker: str
    side: int
    entry: pd.Timestamp
    exit: pd.Timestamp
    pnl: float

    @property
    def profitable(self) -> bool:
        return self.pnl > 0


@dataclass
class PerformanceReport:
    strategy: str
    total_return_gross: float
    total_return_net: float
    sharpe: Optional[float]
    sortino: Optional[float]
    volatility: float
    win_rate: Optional[float]
    max_drawdown: float
    turnover: float
    wealth_curve: pd.Series
    gross_wealth_curve: pd.Series
    trade_log: List[TradeLogEntry] = field(default_factory=list)
    trades: List[Trade] = field(default_factory=list)
    flagged: List[str] = field(default_factory=list)

    @property
    def total_return(self) -> float:
        return self.total_return_net

    def to_dict(self) -> dict:
        def _num(v):
            return None if v is None or not math.isfinite(v) else float(v)

        return {
            "strategy": self.strategy,
            "total_return_gross": _num(self.total_return_gross),
            "total_return_net": _num(self.total_return_net),
            "sharpe": _num(self.sharpe),
            "sortino": _num(self.sortino),
            "volatility": _num(self.volatility),
            "win_rate": _num(self.win_rate),
            "max_drawdown": _num(self.max_drawdown),
            "turnover": _num(self.turnover),
            "trade_count": len(self.trades),
            "flagged": list(self.flagged),
            "trade_log": [
                {"date": e.date.date().isoformat(), "ticker": e.ticker, "weight_delta": float(e.weight_delta)}
                for e in self.trade_log
            ],
        }


@dataclass
class _Simulation:
    curve: pd.Series
    daily: np.ndarray
    turnover: float
    trade_log: List[TradeLogEntry]
    trades: List[Trade]
    flagged: List[str]


def _simulate(weights: WeightSchedule, panel: PricePanel, cost_bps: float) -> _Simulation:
    months = weights.months
    if len(months) == 0:
        raise InsufficientDataError("empty weight schedule")
    for prev, nxt in zip(months, months[1:]):
        if nxt != prev + 1:
            raise AlignmentError(f"weight schedule skips from {prev} to {nxt}")
    tickers = weights.tickers
    dates = rebalance_dates(panel.calendar, months)
    last = months[-1] + 1
    try:
        end = rebalance_dates(panel.calendar, [last])[last]
    except AlignmentError:
        raise AlignmentError(f"no prices for the month after {months[-1]} to hold its positions")

    raw = panel.prices[tickers]
    filled = raw.ffill()
    returns = (filled / filled.shift(1) - 1.0).to_numpy(dtype=float)
    stale = raw.isna().to_numpy() & filled.notna().to_numpy()
    calendar = panel.calendar
    pos = {d: i for i, d in enumerate(calendar)}
    rate = cost_bps / 10_000.0
    W = weights.w.to_numpy(dtype=float)

    current = np.zeros(len(tickers))
    wealth = 1.0
    curve_dates = [dates[months[0]]]
    curve_values = [1.0]
    daily = []
    turnover = 0.0
    trade_log, trades, flagged = [], [], set()
    open_trades = {}

    for i, month in enumerate(months):
        start = dates[month]
        stop = dates[months[i + 1]] if i + 1 < len(months) else end
        target = W[i]
        unpriced = [tickers[j] for j in np.flatnonzero(target) if np.isnan(filled.iloc[pos[start], j])]
        if unpriced:
            raise AlignmentError(f"{month}: no price on or before {start.date()} for {unpriced}")

        delta = target - current
        cost = rate * float(np.abs(delta).sum())
        turnover += float(np.abs(delta).sum())
        for j in np.flatnonzero(np.abs(delta) > 1e-15):
            trade_log.append(TradeLogEntry(start, tickers[j], float(delta[j])))
            old, new = np.sign(current[j]), np.sign(target[j])
            if old != 0 and old != new:
                trade = open_trades.pop(j)
                trade["pnl"] -= rate * abs(current[j]) * wealth
                trades.append(Trade(tickers[j], int(old), trade["entry"], start, trade["pnl"]))
                old = 0
            if new != 0 and old == 0:
                open_trades[j] = {"entry": start, "side": int(new), "pnl": -rate * abs(target[j]) * wealth}
            elif new != 0:
                open_trades[j]["pnl"] -= rate * abs(delta[j]) * wealth

        w = target.copy()
        base = wealth * (1.0 - cost)
        for k in range(pos[start] + 1, pos[stop] + 1):
            r = np.nan_to_num(returns[k])
            held = np.flatnonzero(w)
            if held.size and stale[k, held].any():
                flagged.update(tickers[j] for j in held[stale[k, held]])
            gross = float(w @ r)
            for j in held:
                open_trades[j]["pnl"] += base * w[j] * r[j]
            new_wealth = base * (1.0 + gross)
            daily.append(new_wealth / wealth - 1.0)
            wealth = new_wealth
            base = wealth
            if 1.0 + gross != 0.0:
                w = w * (1.0 + r) / (1.0 + gross)
            curve_dates.append(calendar[k])
            curve_values.append(wealth)
        current = w

    for j, trade in sorted(open_trades.items()):
        trades.append(Trade(tickers[j], trade["side"], trade["entry"], end, trade["pnl"]))
    if flagged:
        logger.warning("Positions marked to their last available price: %s", sorted(flagged))
    return _Simulation(
        curve=pd.Series(curve_values, index=pd.DatetimeIndex(curve_dates), name="wealth"),
        daily=np.array(daily, dtype=float),
        turnover=turnover,
        trade_log=trade_log,
        trades=trades,
        flagged=sorted(flagged),
    )


def run_backtest(spec: StrategySpec, weights: WeightSchedule, panel: PricePanel,
                 risk_free_rate=RISK_FREE_RATE, periods_per_year=PERIODS_PER_YEAR) -> PerformanceReport:
    """Net-of-cost performance of a weight schedule; the gross figures come from the same run at zero cost."""
    net = _simulate(weights, panel, spec.cost_bps)
    gross = net if spec.cost_bps == 0 else _simulate(weights, panel, 0.0)
    if net.daily.size < 2:
        raise InsufficientDataError(f"{spec.label}: fewer than 2 holding days")
    risk = risk_metrics(net.daily, risk_free_rate, periods_per_year)
    closed = net.trades
    win_rate = sum(t.profitable for t in closed) / len(closed) if closed else None
    return PerformanceReport(
        strategy=spec.label,
        total_return_gross=float(gross.curve.iloc[-1] / gross.curve.iloc[0] - 1.0),
        total_return_net=float(net.curve.iloc[-1] / net.curve.iloc[0] - 1.0),
        sharpe=risk.sharpe,
        sortino=risk.sortino,
        volatility=risk.volatility,
        win_rate=win_rate,
        max_drawdown=max_drawdown(net.curve.to_numpy()),
        turnover=net.turnover,
        wealth_curve=net.curve,
        gross_wealth_curve=gross.curve,
        trade_log=net.trade_log,
        trades=closed,
        flagged=net.flagged,
    )


def run_strategies(specs: Sequence[StrategySpec], signals: SignalMatrix, scores: Optional[pd.DataFrame],
                   panel: PricePanel, caps: Optional[CapWeights] = None, index_ticker=INDEX_TICKER,
                   universe=None, max_workers=4, errors: Optional[list] = None,
                   risk_free_rate=RISK_FREE_RATE, periods_per_year=PERIODS_PER_YEAR) -> Dict[str, PerformanceReport]:
    """Backtest every spec over the same shared inputs; failures are logged, recorded and skipped."""
    def _one(spec):
        def _run():
            weights = build_weights(spec, signals, scores, panel, caps, index_ticker=index_ticker,
                                    universe=universe)
            return run_backtest(spec, weights, panel, risk_free_rate, periods_per_year)
        return safe_call(_run, errors=errors, context=f"backtest {spec.label}")

    if max_workers > 1 and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            reports = list(pool.map(_one, specs))
    else:
        reports = [_one(s) for s in specs]
    return {spec.label: rep for spec, rep in zip(specs, reports) if rep is not None}


SUMMARY_COLUMNS = [
    "strategy", "total_return_gross", "total_return_net", "sharpe", "sortino",
    "volatility", "win_rate", "max_drawdown",
]


def summary_table(reports: Dict[str, PerformanceReport], benchmark=BENCHMARK) -> pd.DataFrame:
    """One row per strategy; `excess_vs_benchmark` is added when the benchmark was run."""
    rows = []
    for label, rep in reports.items():
        doc = rep.to_dict()
        rows.append({col: doc[col] for col in SUMMARY_COLUMNS})
    frame = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    if benchmark in reports:
        frame["excess_vs_benchmark"] = frame["total_return_net"] - reports[benchmark].total_return_net
    return frame


__all__ = [
    "StrategySpec",
    "STRATEGY_KINDS",
    "make_spec",
    "default_catalog",
    "load_strategy_specs",
    "select_strategies",
    "CapWeights",
    "WeightSchedule",
    "rebalance_dates",
    "moving_average_filter",
    "top_n_by_trailing_sharpe",
    "build_weights",
    "TradeLogEntry",
    "Trade",
    "PerformanceReport",
    "run_backtest",
    "run_strategies",
    "summary_table",
]
