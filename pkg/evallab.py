"""
evallab.py

Signal-following evaluation: performance and hit ratio of a signal matrix
against next-month returns, cross-sectional detrending, and bootstrapped
significance against random buy / hold / sell matrices.

Signal and return matrices are DataFrames indexed by monthly Periods with one
column per ticker. Row i of the return matrix is the return realized during
the month after signal month i.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from constants import BOOTSTRAP_CHUNK, BOOTSTRAP_SAMPLES, MASTER_SEED, RNG_NAME
from errors import (
    AlignmentError,
    InsufficientHistoryError,
    InvalidArgumentError,
    InvalidInputError,
    UndefinedRatioError,
    ValidationError,
)
from marketmetrics import PricePanel
from utils.logging_setup import logger

DECISION_VALUES = (-1, 0, 1)


class Leg(str, Enum):
    LONG = "long"
    SHORT = "short"
    BOTH = "both"

    @property
    def label(self) -> str:
        return {"long": "Buy", "short": "Sell", "both": "Both"}[self.value]


def _month_index(index) -> pd.PeriodIndex:
    if isinstance(index, pd.PeriodIndex):
        return index.asfreq("M")
    return pd.PeriodIndex([pd.Period(v, freq="M") for v in index], freq="M")


@dataclass(frozen=True, eq=False)
class SignalMatrix:
    m: pd.DataFrame

    def __post_init__(self):
        frame = self.m.copy()
        frame.index = _month_index(frame.index)
        if frame.index.has_duplicates or not frame.index.is_monotonic_increasing:
            raise ValidationError("signal months must be unique and increasing")
        if frame.columns.has_duplicates:
            raise ValidationError("duplicated tickers in signal matrix")
        values = frame.to_numpy(dtype=float, na_value=np.nan)
        bad = ~np.isin(values, DECISION_VALUES)
        if bad.any():
            i, j = map(int, np.argwhere(bad)[0])
            raise ValidationError(
                f"signal for {frame.columns[j]} in {frame.index[i]} is {values[i, j]!r}; expected -1, 0 or 1"
            )
        object.__setattr__(self, "m", frame.astype(np.int8))

    @property
    def months(self) -> pd.PeriodIndex:
        return self.m.index

    @property
    def tickers(self) -> List[str]:
        return list(self.m.columns)

    @property
    def values(self) -> np.ndarray:
        return self.m.to_numpy(dtype=np.int8)

    @property
    def shape(self):
        return self.m.shape


@dataclass(frozen=True, eq=False)
class MonthlyReturnMatrix:
    """Monthly returns per (month, ticker). Detrended matrices hold excess returns, which may fall to -1 or below."""
    r: pd.DataFrame
    detrended: bool = False

    def __post_init__(self):
        frame = self.r.astype(float)
        frame.index = _month_index(frame.index)
        if frame.index.has_duplicates or not frame.index.is_monotonic_increasing:
            raise ValidationError("return months must be unique and increasing")
        values = frame.to_numpy()
        present = values[~np.isnan(values)]
        if not np.all(np.isfinite(present)):
            raise ValidationError("monthly returns must be finite")
        if not self.detrended and np.any(present <= -1.0):
            raise ValidationError("monthly returns must be > -1")
        object.__setattr__(self, "r", frame)

    @property
    def months(self) -> pd.PeriodIndex:
        return self.r.index

    @property
    def tickers(self) -> List[str]:
        return list(self.r.columns)

    @property
    def values(self) -> np.ndarray:
        return self.r.to_numpy(dtype=float)


@dataclass(frozen=True)
class BootstrapResult:
    observed_R: float
    observed_HR: float
    quantile_R: float
    quantile_HR: float
    n_samples: int
    seed: int
    leg: str
    detrend: bool
    rng: str = RNG_NAME
    valid_hr_samples: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# ----------------- core statistics -----------------

def _aligned(m: SignalMatrix, r: MonthlyReturnMatrix):
    if not m.months.equals(r.months):
        raise AlignmentError("signal and return matrices cover different months")
    if m.tickers != r.tickers:
        raise AlignmentError("signal and return matrices cover different tickers")
    return m.values, r.values


def _leg_mask(m: np.ndarray, leg: Leg) -> np.ndarray:
    if leg is Leg.LONG:
        return m == 1
    if leg is Leg.SHORT:
        return m == -1
    return m != 0


def _monthly_pnl(m: np.ndarray, r: np.ndarray, leg: Leg):
    """Average of m*r over the active cells of each month; months without any are flat."""
    active = _leg_mask(m, leg) & ~np.isnan(r)
    pnl = np.where(active, m * np.nan_to_num(r), 0.0)
    counts = active.sum(axis=-1)
    sums = pnl.sum(axis=-1)
    monthly = np.divide(sums, counts, out=np.zeros(sums.shape, dtype=float), where=counts > 0)
    return monthly, counts


def _hit_ratio(m: np.ndarray, r: np.ndarray, leg: Leg):
    active = _leg_mask(m, leg) & ~np.isnan(r)
    hits = (active & (m * np.nan_to_num(r) > 0)).sum(axis=(-2, -1))
    total = active.sum(axis=(-2, -1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, hits / np.maximum(total, 1), np.nan), total


def signal_performance(m: SignalMatrix, r: MonthlyReturnMatrix, leg=Leg.BOTH) -> float:
    """Compounded monthly average of m*r over the active cells of `leg`."""
    leg = Leg(leg)
    mv, rv = _aligned(m, r)
    monthly, counts = _monthly_pnl(mv, rv, leg)
    if not counts.any():
        raise InvalidInputError(f"no active {leg.value} signals in any month")
    flat = [str(p) for p, c in zip(m.months, counts) if c == 0]
    if flat:
        logger.warning("No active %s signals in %s; those months are flat", leg.value, ", ".join(flat))
    return float(np.prod(1.0 + monthly) - 1.0)


def hit_ratio(m: SignalMatrix, r: MonthlyReturnMatrix, leg=Leg.BOTH) -> float:
    """Share of active cells whose m*r is positive."""
    leg = Leg(leg)
    mv, rv = _aligned(m, r)
    ratio, total = _hit_ratio(mv, rv, leg)
    if total == 0:
        raise UndefinedRatioError(f"hit ratio undefined: no active {leg.value} signals")
    return float(ratio)


def detrend_returns(r: MonthlyReturnMatrix) -> MonthlyReturnMatrix:
    """
    Subtract each month's cross-sectional mean. Rows already centred to
    within rounding are left as they are, so detrending twice changes nothing.
    """
    values = r.values
    counts = (~np.isnan(values)).sum(axis=1)
    empty = [str(p) for p, c in zip(r.months, counts) if c == 0]
    if empty:
        raise InvalidInputError(f"no defined returns in {', '.join(empty)}")
    means = np.nanmean(values, axis=1)
    scale = np.nanmax(np.abs(values), axis=1)
    tolerance = 4.0 * counts * np.finfo(float).eps * scale
    shift = np.where(np.abs(means) <= tolerance, 0.0, means)
    out = pd.DataFrame(values - shift[:, None], index=r.months, columns=r.tickers)
    return MonthlyReturnMatrix(out, detrended=True)


def _labels(months, tickers):
    if isinstance(months, int):
        months = pd.period_range("2000-01", periods=months, freq="M")
    if isinstance(tickers, int):
        width = len(str(tickers))
        tickers = [f"T{i:0{width}d}" for i in range(tickers)]
    return pd.PeriodIndex(months, freq="M"), list(tickers)


def random_signal_matrix(months, tickers, seed=None, rng: Optional[np.random.Generator] = None) -> SignalMatrix:
    """Independent uniform draws over {-1, 0, +1}. `months` / `tickers` may be labels or counts."""
    months, tickers = _labels(months, tickers)
    rng = rng if rng is not None else np.random.default_rng(seed)
    draws = rng.integers(-1, 2, size=(len(months), len(tickers)), dtype=np.int8)
    return SignalMatrix(pd.DataFrame(draws, index=months, columns=tickers))


# ----------------- bootstrap -----------------

def _sample_chunk(seeds: Sequence[np.random.SeedSequence], shape, r: np.ndarray, leg: Leg):
    draws = np.stack([
        np.random.Generator(np.random.PCG64(s)).integers(-1, 2, size=shape, dtype=np.int8)
        for s in seeds
    ])
    monthly, _ = _monthly_pnl(draws, r[None, :, :], leg)
    perf = np.prod(1.0 + monthly, axis=-1) - 1.0
    hr, _ = _hit_ratio(draws, r[None, :, :], leg)
    return perf, hr


def _quantile(samples: np.ndarray, observed: float) -> float:
    valid = samples[~np.isnan(samples)]
    if valid.size == 0:
        raise UndefinedRatioError("no bootstrap sample produced a defined statistic")
    below = np.count_nonzero(valid < observed)
    ties = np.count_nonzero(valid == observed)
    return float(100.0 * (below + 0.5 * ties) / valid.size)


def bootstrap_evaluate(observed: SignalMatrix, r: MonthlyReturnMatrix, leg=Leg.BOTH,
                       n_samples=BOOTSTRAP_SAMPLES, seed=MASTER_SEED, detrend=False,
                       chunk_size=BOOTSTRAP_CHUNK, n_jobs=1) -> BootstrapResult:
    """
    Rank the observed performance and hit ratio within those of `n_samples`
    random signal matrices. Sample k draws from its own generator spawned
    from `seed`, so the result does not depend on chunking or `n_jobs`.
    Quantiles count samples strictly below the observed value plus half the ties.
    """
    if n_samples < 1:
        raise InvalidArgumentError("n_samples must be >= 1")
    leg = Leg(leg)
    returns = detrend_returns(r) if detrend else r
    observed_R = signal_performance(observed, returns, leg)
    observed_HR = hit_ratio(observed, returns, leg)

    _, rv = _aligned(observed, returns)
    seeds = np.random.SeedSequence(seed).spawn(n_samples)
    chunks = [seeds[i:i + chunk_size] for i in range(0, n_samples, chunk_size)]

    def _run(chunk):
        return _sample_chunk(chunk, observed.shape, rv, leg)

    if n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_run, chunks))
    else:
        parts = [_run(c) for c in chunks]
    perf = np.concatenate([p for p, _ in parts])
    hr = np.concatenate([h for _, h in parts])

    valid_hr = int(np.count_nonzero(~np.isnan(hr)))
    if valid_hr < n_samples:
        logger.debug("%s of %s bootstrap samples had no active %s signals", n_samples - valid_hr,
                     n_samples, leg.value)
    return BootstrapResult(
        observed_R=observed_R,
        observed_HR=observed_HR,
        quantile_R=_quantile(perf, observed_R),
        quantile_HR=_quantile(hr, observed_HR),
        n_samples=n_samples,
        seed=int(seed),
        leg=leg.value,
        detrend=bool(detrend),
        valid_hr_samples=valid_hr,
    )


def bootstrap_table(observed: SignalMatrix, r: MonthlyReturnMatrix, n_samples=BOOTSTRAP_SAMPLES,
                    seed=MASTER_SEED, chunk_size=BOOTSTRAP_CHUNK, n_jobs=1) -> List[BootstrapResult]:
    """Buy, Sell and Both legs on raw and on detrended returns; undefined legs are skipped with a warning."""
    rows = []
    for detrend in (False, True):
        for leg in (Leg.LONG, Leg.SHORT, Leg.BOTH):
            try:
                rows.append(bootstrap_evaluate(observed, r, leg, n_samples, seed, detrend, chunk_size, n_jobs))
            except (InvalidInputError, UndefinedRatioError) as e:
                logger.warning("Skipping %s leg (detrended=%s): %s", leg.label, detrend, e)
    return rows


def render_bootstrap_table(results: Sequence[BootstrapResult]) -> str:
    labels = {leg.value: leg.label for leg in Leg}
    frame = pd.DataFrame([
        {
            "Signals": labels[res.leg],
            "Returns": "detrended" if res.detrend else "raw",
            "R (%)": round(100.0 * res.observed_R, 2),
            "Q_R": round(res.quantile_R, 2),
            "HR (%)": round(100.0 * res.observed_HR, 2),
            "Q_HR": round(res.quantile_HR, 2),
        }
        for res in results
    ])
    return frame.to_string(index=False) if not frame.empty else "(no bootstrap results)"


# ----------------- inputs -----------------

def monthly_returns_from_prices(panel: PricePanel, months=None, tickers=None) -> MonthlyReturnMatrix:
    """
    Row i holds the return from the last trading day of month i to the last
    trading day of month i + 1 (signals are acted on at month-end close).
    """
    calendar = panel.calendar
    if len(calendar) == 0:
        raise InsufficientHistoryError("empty price panel")
    month_ends = pd.Series(calendar, index=calendar).groupby(calendar.to_period("M")).max()
    tickers = list(tickers) if tickers is not None else panel.tickers
    closes = panel.prices.loc[month_ends.to_numpy(), tickers]
    closes.index = month_ends.index

    months = _month_index(months) if months is not None else month_ends.index[:-1]
    rows = []
    for month in months:
        if month not in closes.index or month + 1 not in closes.index:
            raise InsufficientHistoryError(f"no month-end prices for {month} and the month after it")
        rows.append(closes.loc[month + 1].to_numpy(dtype=float) / closes.loc[month].to_numpy(dtype=float) - 1.0)
    values = np.array(rows, dtype=float).reshape(len(months), len(tickers))
    return MonthlyReturnMatrix(pd.DataFrame(values, index=months, columns=tickers))


def signal_counts(m: SignalMatrix) -> Dict[str, int]:
    values = m.values
    return {
        "buy": int(np.count_nonzero(values == 1)),
        "hold": int(np.count_nonzero(values == 0)),
        "sell": int(np.count_nonzero(values == -1)),
    }


__all__ = [
    "Leg",
    "SignalMatrix",
    "MonthlyReturnMatrix",
    "BootstrapResult",
    "signal_performance",
    "hit_ratio",
    "detrend_returns",
    "random_signal_matrix",
    "bootstrap_evaluate",
    "bootstrap_table",
    "render_bootstrap_table",
    "monthly_returns_from_prices",
    "signal_counts",
]
