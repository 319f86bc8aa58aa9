import math

import numpy as np
import pandas as pd
import pytest

from errors import InsufficientDataError, InsufficientHistoryError, InvalidReturnError, NotFoundError, ValidationError
from marketmetrics import (
    PricePanel,
    ReturnPanel,
    correlation_matrix,
    cumulative_return,
    max_drawdown,
    price_dynamics_metrics,
    risk_metrics,
    simple_returns,
    window_start,
)


def _oracle_std(xs):
    n = len(xs)
    mean = sum(xs) / n
    return math.sqrt(sum((x - mean) ** 2 for x in xs) / (n - 1))


def _oracle_drawdown(values):
    worst = 0.0
    for i in range(len(values)):
        for j in range(i, len(values)):
            worst = min(worst, values[j] / values[i] - 1.0)
    return worst


def _oracle_corr(a, b):
    ma, mb = sum(a) / len(a), sum(b) / len(b)
    cov = sum((x - ma) * (y - mb) for x, y in zip(a, b))
    va = sum((x - ma) ** 2 for x in a)
    vb = sum((y - mb) ** 2 for y in b)
    return cov / math.sqrt(va * vb)


def test_metrics_match_direct_formulas(panel):
    rets = simple_returns(panel)
    prices = panel.prices
    for ticker in panel.tickers:
        p = prices[ticker].tolist()
        r = [p[i] / p[i - 1] - 1.0 for i in range(1, len(p))]
        np.testing.assert_allclose(rets.returns[ticker].to_numpy(), r, rtol=0, atol=1e-12)

        growth = 1.0
        for x in r:
            growth *= 1.0 + x
        assert cumulative_return(r) == pytest.approx(growth - 1.0, abs=1e-9)

        vol = _oracle_std(r) * math.sqrt(252)
        mean = sum(r) / len(r) * 252
        downside = [x for x in r if x < 0]
        risk = risk_metrics(r)
        assert risk.volatility == pytest.approx(vol, abs=1e-9)
        assert risk.sharpe == pytest.approx(mean / vol, abs=1e-9)
        assert risk.sortino == pytest.approx(mean / (_oracle_std(downside) * math.sqrt(252)), abs=1e-9)

    sample = prices["AAA"].tolist()[:120]
    assert max_drawdown(sample) == pytest.approx(_oracle_drawdown(sample), abs=1e-9)


def test_correlation_matrix_matches_pairwise_oracle(panel):
    rets = simple_returns(panel)
    corr = correlation_matrix(rets)
    for a in panel.tickers:
        for b in panel.tickers:
            expected = 1.0 if a == b else _oracle_corr(rets.returns[a].tolist(), rets.returns[b].tolist())
            assert corr.loc[a, b] == pytest.approx(expected, abs=1e-9)
            assert corr.loc[a, b] == corr.loc[b, a]


def test_simple_returns_of_known_prices():
    frame = pd.DataFrame({"X": [100.0, 110.0, 99.0]}, index=pd.bdate_range("2024-01-01", periods=3))
    rets = simple_returns(PricePanel(frame))
    np.testing.assert_allclose(rets.returns["X"].to_numpy(), [0.10, -0.10])
    assert len(rets.calendar) == 2


def test_single_price_has_no_returns():
    frame = pd.DataFrame({"X": [100.0]}, index=pd.bdate_range("2024-01-01", periods=1))
    with pytest.raises(InsufficientDataError):
        simple_returns(PricePanel(frame))


def test_missing_price_gives_missing_return():
    frame = pd.DataFrame({"X": [100.0, np.nan, 120.0]}, index=pd.bdate_range("2024-01-01", periods=3))
    rets = simple_returns(PricePanel(frame)).returns["X"].to_numpy()
    assert np.isnan(rets).all()


def test_panel_rejects_non_positive_prices():
    frame = pd.DataFrame({"X": [100.0, 0.0]}, index=pd.bdate_range("2024-01-01", periods=2))
    with pytest.raises(ValidationError):
        PricePanel(frame)


def test_cumulative_return_examples():
    assert cumulative_return([0.10, -0.10]) == pytest.approx(-0.01, abs=1e-15)
    assert cumulative_return([0.0, 0.0, 0.0]) == 0.0
    with pytest.raises(InsufficientDataError):
        cumulative_return([])
    with pytest.raises(InvalidReturnError):
        cumulative_return([0.1, -1.0])


def test_flat_series_has_undefined_ratios():
    risk = risk_metrics([0.01] * 20)
    assert risk.volatility == 0.0
    assert risk.sharpe is None
    assert risk.sortino is None


def test_sortino_needs_losing_periods():
    assert risk_metrics([0.01, 0.02, 0.03, -0.01]).sortino is None
    assert risk_metrics([0.01, 0.02, -0.03, -0.01]).sortino is not None


def test_max_drawdown_examples():
    assert max_drawdown([100, 120, 90, 130]) == pytest.approx(-0.25)
    assert max_drawdown([1, 2, 3, 4]) == 0.0
    with pytest.raises(InvalidReturnError):
        max_drawdown([1.0, -1.0])


def test_correlation_with_too_few_points_is_undefined():
    frame = pd.DataFrame({"A": [0.01, np.nan, 0.02], "B": [np.nan, 0.03, 0.01]},
                         index=pd.bdate_range("2024-01-01", periods=3))
    corr = correlation_matrix(ReturnPanel(frame))
    assert np.isnan(corr.loc["A", "B"])
    assert corr.loc["A", "A"] == 1.0


def test_window_start_maps_to_nearest_trading_day(panel):
    calendar = panel.calendar
    as_of = calendar[-1]
    start = window_start(calendar, as_of, 3)
    target = as_of - pd.DateOffset(months=3)
    assert start in calendar
    assert abs(start - target) <= pd.Timedelta(days=3)
    with pytest.raises(InsufficientHistoryError):
        window_start(calendar, calendar[10], 3)


def test_price_dynamics_report(panel):
    report = price_dynamics_metrics("AAA", ["BBB", "CCC"], "SPX", panel, windows=(3, 6, 12))
    assert report.entities == ["AAA", "BBB", "CCC", "SPX"]
    assert sorted(report.rows) == [3, 6, 12]
    m3 = report.metric("AAA", 3)
    sub = panel.prices["AAA"].loc[m3.start:m3.end].to_numpy()
    assert m3.cumulative_return == pytest.approx(sub[-1] / sub[0] - 1.0, abs=1e-12)
    assert list(report.correlation.columns) == ["AAA", "BBB", "CCC", "SPX"]

    doc = report.to_dict()
    assert doc["target"] == "AAA"
    assert set(doc["windows"]) == {"3", "6", "12"}


def test_price_dynamics_errors(panel):
    with pytest.raises(NotFoundError):
        price_dynamics_metrics("ZZZ", ["BBB"], "SPX", panel)
    with pytest.raises(InsufficientHistoryError):
        price_dynamics_metrics("AAA", ["BBB"], "SPX", panel, windows=(24,))


def _random_panel(rng, n_days=250, tickers=("A", "B", "C")):
    steps = rng.normal(0.0008, 0.012, size=(n_days, len(tickers)))
    steps[0] = 0.0
    prices = 50.0 * np.exp(np.cumsum(steps, axis=0))
    return PricePanel(pd.DataFrame(prices, index=pd.bdate_range("2022-01-03", periods=n_days), columns=list(tickers)))


def test_sortino_at_least_sharpe_when_downside_is_smaller(rng):
    checked = 0
    for _ in range(200):
        r = rng.normal(0.001, 0.01, size=250)
        risk = risk_metrics(r)
        downside = r[r < 0]
        downside_dev = _oracle_std(downside.tolist()) * math.sqrt(252)
        if r.mean() < 0 or downside_dev > risk.volatility:
            continue
        checked += 1
        assert risk.sortino >= risk.sharpe
    assert checked >= 150


def test_ratios_and_drawdown_ignore_wealth_scale(rng):
    for _ in range(50):
        panel = _random_panel(rng)
        for factor in (1e-3, 3.7, 250.0):
            scaled = PricePanel(panel.prices * factor)
            base, other = simple_returns(panel).returns, simple_returns(scaled).returns
            for ticker in panel.tickers:
                a = risk_metrics(base[ticker].to_numpy())
                b = risk_metrics(other[ticker].to_numpy())
                assert b.sharpe == pytest.approx(a.sharpe, rel=1e-9)
                assert b.sortino == pytest.approx(a.sortino, rel=1e-9)
                assert max_drawdown(scaled.prices[ticker].to_numpy()) == pytest.approx(
                    max_drawdown(panel.prices[ticker].to_numpy()), abs=1e-12)


def test_correlations_stay_bounded(rng):
    for _ in range(50):
        panel = _random_panel(rng)
        prices = panel.prices.copy()
        prices["D"] = prices["A"] * 2.0
        prices["E"] = 1.0 / prices["A"]
        corr = correlation_matrix(simple_returns(PricePanel(prices)))
        values = corr.to_numpy()
        assert np.all(np.abs(values) <= 1.0 + 1e-12)
        np.testing.assert_array_equal(values, values.T)
        np.testing.assert_array_equal(np.diag(values), 1.0)


def test_compounded_returns_match_price_ratio(rng):
    for _ in range(50):
        panel = _random_panel(rng)
        rets = simple_returns(panel).returns
        for ticker in panel.tickers:
            prices = panel.prices[ticker].to_numpy()
            assert abs(cumulative_return(rets[ticker].to_numpy()) - (prices[-1] / prices[0] - 1.0)) <= 1e-12
