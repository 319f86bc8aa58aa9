import numpy as np
import pandas as pd
import pytest

from conftest import make_panel
from errors import AlignmentError, InvalidInputError, UndefinedRatioError, ValidationError
from evallab import (
    Leg,
    MonthlyReturnMatrix,
    SignalMatrix,
    bootstrap_evaluate,
    bootstrap_table,
    detrend_returns,
    hit_ratio,
    monthly_returns_from_prices,
    random_signal_matrix,
    render_bootstrap_table,
    signal_counts,
    signal_performance,
)

MONTHS = pd.period_range("2023-01", periods=4, freq="M")
TICKERS = [f"S{i}" for i in range(6)]


def _matrices(m, r, months=None, tickers=None):
    months = months if months is not None else pd.period_range("2023-01", periods=len(m), freq="M")
    tickers = tickers or [f"S{i}" for i in range(len(m[0]))]
    return (SignalMatrix(pd.DataFrame(m, index=months, columns=tickers)),
            MonthlyReturnMatrix(pd.DataFrame(r, index=months, columns=tickers)))


def _in_leg(s, leg):
    return {"long": s == 1, "short": s == -1, "both": s != 0}[leg]


def _enumerate(m, r, leg):
    """Explicit loops over months and cells; returns (performance, hit ratio) with None when undefined."""
    wealth = 1.0
    any_active = False
    hits = total = 0
    for i in range(len(m)):
        pnl, count = 0.0, 0
        for j in range(len(m[i])):
            if _in_leg(m[i][j], leg):
                pnl += m[i][j] * r[i][j]
                count += 1
                total += 1
                hits += m[i][j] * r[i][j] > 0
        if count:
            any_active = True
            wealth *= 1.0 + pnl / count
    perf = wealth - 1.0 if any_active else None
    ratio = hits / total if total else None
    return perf, ratio


def test_statistics_match_enumerator(rng):
    for _ in range(1000):
        m = rng.integers(-1, 2, size=(4, 6))
        r = rng.normal(0.0, 0.08, size=(4, 6))
        sm, rm = _matrices(m, r)
        for leg in ("long", "short", "both"):
            perf, ratio = _enumerate(m.tolist(), r.tolist(), leg)
            if perf is None:
                with pytest.raises(InvalidInputError):
                    signal_performance(sm, rm, leg)
                with pytest.raises(UndefinedRatioError):
                    hit_ratio(sm, rm, leg)
                continue
            assert signal_performance(sm, rm, leg) == pytest.approx(perf, abs=1e-12)
            assert hit_ratio(sm, rm, leg) == pytest.approx(ratio, abs=1e-12)


def test_performance_hand_example():
    sm, rm = _matrices([[1, -1], [0, 1]], [[0.10, -0.20], [0.5, -0.05]])
    # month 1: (0.10 + 0.20) / 2 = 0.15 ; month 2: -0.05
    assert signal_performance(sm, rm, Leg.BOTH) == pytest.approx(1.15 * 0.95 - 1.0)
    assert hit_ratio(sm, rm, Leg.BOTH) == pytest.approx(2 / 3)
    assert signal_performance(sm, rm, Leg.SHORT) == pytest.approx(0.20)


def test_misaligned_matrices():
    sm, _ = _matrices([[1, 0]], [[0.1, 0.1]])
    _, other = _matrices([[1, 0]], [[0.1, 0.1]], tickers=["X", "Y"])
    with pytest.raises(AlignmentError):
        signal_performance(sm, other)


def test_signal_matrix_domain():
    with pytest.raises(ValidationError):
        SignalMatrix(pd.DataFrame([[2, 0]], index=MONTHS[:1], columns=["A", "B"]))


def test_detrend_properties(rng):
    for _ in range(1000):
        values = rng.normal(0.01, 0.06, size=(5, 8))
        r = MonthlyReturnMatrix(pd.DataFrame(values, index=pd.period_range("2023-01", periods=5, freq="M"),
                                             columns=[f"S{i}" for i in range(8)]))
        once = detrend_returns(r)
        np.testing.assert_allclose(once.values.mean(axis=1), 0.0, atol=1e-12)
        twice = detrend_returns(once)
        assert np.array_equal(once.values, twice.values)


def test_detrend_ignores_missing_cells():
    r = MonthlyReturnMatrix(pd.DataFrame([[0.1, np.nan, 0.3]], index=MONTHS[:1], columns=["A", "B", "C"]))
    out = detrend_returns(r).values
    np.testing.assert_allclose(out[0, [0, 2]], [-0.1, 0.1])
    assert np.isnan(out[0, 1])


def test_random_signal_matrix_is_seeded():
    a = random_signal_matrix(12, 20, seed=5)
    b = random_signal_matrix(12, 20, seed=5)
    assert np.array_equal(a.values, b.values)
    assert set(np.unique(a.values).tolist()) <= {-1, 0, 1}
    assert str(a.months[0]) == "2000-01"


def _returns_panel(seed, months=12, tickers=20):
    values = np.random.default_rng(seed).normal(0.005, 0.07, size=(months, tickers))
    return MonthlyReturnMatrix(pd.DataFrame(values, index=pd.period_range("2022-01", periods=months, freq="M"),
                                            columns=[f"S{i:02d}" for i in range(tickers)]))


def test_bootstrap_ranks_oracle_signals_at_the_top():
    r = _returns_panel(11)
    optimal = np.sign(detrend_returns(r).values).astype(int)
    observed = SignalMatrix(pd.DataFrame(optimal, index=r.months, columns=r.tickers))
    result = bootstrap_evaluate(observed, r, Leg.BOTH, n_samples=10_000, seed=7, detrend=True)
    assert result.observed_HR == 1.0
    assert result.quantile_HR >= 99.9
    assert result.quantile_R >= 99.9
    assert result.n_samples == 10_000 and result.seed == 7


def test_bootstrap_is_calibrated_on_random_signals():
    r = _returns_panel(12)
    rng = np.random.default_rng(2024)
    inside_r = inside_hr = 0
    for trial in range(100):
        observed = random_signal_matrix(r.months, r.tickers, rng=rng)
        result = bootstrap_evaluate(observed, r, Leg.BOTH, n_samples=200, seed=trial)
        inside_r += 1 <= result.quantile_R <= 99
        inside_hr += 1 <= result.quantile_HR <= 99
    assert inside_r >= 95
    assert inside_hr >= 95


def test_bootstrap_reproducible_across_chunking():
    r = _returns_panel(13)
    observed = random_signal_matrix(r.months, r.tickers, seed=1)
    a = bootstrap_evaluate(observed, r, Leg.LONG, n_samples=1_000, seed=7)
    b = bootstrap_evaluate(observed, r, Leg.LONG, n_samples=1_000, seed=7, chunk_size=64, n_jobs=3)
    assert a == b
    c = bootstrap_evaluate(observed, r, Leg.LONG, n_samples=1_000, seed=8)
    assert c.observed_R == a.observed_R


def test_bootstrap_table_skips_empty_legs():
    r = _returns_panel(14, months=3, tickers=5)
    longs_only = SignalMatrix(pd.DataFrame(np.ones((3, 5), dtype=int), index=r.months, columns=r.tickers))
    rows = bootstrap_table(longs_only, r, n_samples=50, seed=3)
    assert [(row.leg, row.detrend) for row in rows] == [
        ("long", False), ("both", False), ("long", True), ("both", True),
    ]
    text = render_bootstrap_table(rows)
    assert "Buy" in text and "detrended" in text
    assert rows[0].to_dict()["rng"] == "numpy.random.PCG64"


def test_monthly_returns_from_prices():
    panel = make_panel(["A", "B"], n_days=90, seed=4, start="2023-01-02")
    returns = monthly_returns_from_prices(panel)
    closes = panel.prices.groupby(panel.calendar.to_period("M")).last()
    assert list(returns.months) == list(closes.index[:-1])
    expected = closes.iloc[1].to_numpy() / closes.iloc[0].to_numpy() - 1.0
    np.testing.assert_allclose(returns.values[0], expected, rtol=0, atol=1e-15)


def test_signal_counts():
    sm, _ = _matrices([[1, -1, 0], [0, 0, 1]], [[0.0] * 3] * 2)
    assert signal_counts(sm) == {"buy": 2, "hold": 3, "sell": 1}


def test_detrended_returns_may_fall_below_minus_one():
    r = MonthlyReturnMatrix(pd.DataFrame([[-0.5, 1.5]], index=MONTHS[:1], columns=["A", "B"]))
    out = detrend_returns(r)
    assert out.detrended
    np.testing.assert_array_equal(out.values, [[-1.0, 1.0]])
    with pytest.raises(ValidationError):
        MonthlyReturnMatrix(pd.DataFrame([[-1.0, 1.0]], index=MONTHS[:1], columns=["A", "B"]))
    with pytest.raises(ValidationError):
        MonthlyReturnMatrix(pd.DataFrame([[np.inf, 1.0]], index=MONTHS[:1], columns=["A", "B"]), detrended=True)


def test_bootstrap_on_detrended_crash_month():
    sm, rm = _matrices([[-1, 1, 0], [1, -1, 1]], [[-0.95, 2.0, 0.1], [0.02, -0.01, 0.03]])
    result = bootstrap_evaluate(sm, rm, Leg.BOTH, n_samples=100, seed=1, detrend=True)
    assert result.detrend
    assert 0.0 <= result.quantile_R <= 100.0
    rows = bootstrap_table(sm, rm, n_samples=50, seed=1)
    assert [(row.leg, row.detrend) for row in rows] == [
        ("long", False), ("short", False), ("both", False), ("long", True), ("short", True), ("both", True),
    ]


def test_hit_ratio_ignores_scale_and_joint_sign_flip(rng):
    for _ in range(200):
        m = rng.integers(-1, 2, size=(4, 6))
        r = rng.normal(0.0, 0.05, size=(4, 6))
        sm, rm = _matrices(m, r)
        if not (m != 0).any():
            continue
        base = hit_ratio(sm, rm, Leg.BOTH)
        for factor in (0.5, 2.0):
            _, scaled = _matrices(m, r * factor)
            assert hit_ratio(sm, scaled, Leg.BOTH) == base
        flipped_m, flipped_r = _matrices(-m, -r)
        assert hit_ratio(flipped_m, flipped_r, Leg.BOTH) == base
        if (m == 1).any():
            assert hit_ratio(flipped_m, flipped_r, Leg.SHORT) == hit_ratio(sm, rm, Leg.LONG)


def test_turning_a_loss_into_a_win_never_lowers_hit_quantile():
    r = _returns_panel(15, months=6, tickers=10)
    signals = random_signal_matrix(r.months, r.tickers, seed=4).values.astype(int)
    losing = np.argwhere((signals != 0) & (signals * r.values < 0))
    assert len(losing) > 0

    def quantile(m):
        observed = SignalMatrix(pd.DataFrame(m, index=r.months, columns=r.tickers))
        return bootstrap_evaluate(observed, r, Leg.BOTH, n_samples=300, seed=9).quantile_HR

    current = quantile(signals)
    for i, j in losing[:5]:
        signals[i, j] = -signals[i, j]
        improved = quantile(signals)
        assert improved >= current
        current = improved
