"""Shared synthetic inputs: seeded price panels, stub providers and an on-disk run workspace."""

import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

import datastore
from backtester import CapWeights
from marketmetrics import PricePanel
from providers.stubs import HashingEmbeddingProvider, StubLLMClient, analyst_responder

TICKERS = ["AAA", "BBB", "CCC", "DDD", "EEE", "FFF", "GGG", "HHH"]
INDEX = "SPX"
SECTORS = {
    "AAA": "semiconductors chips wafers foundry design",
    "BBB": "semiconductors chips memory storage design",
    "CCC": "banking loans deposits credit cards mortgages",
    "DDD": "banking loans investment brokerage deposits",
    "EEE": "retail stores groceries apparel ecommerce",
    "FFF": "retail ecommerce logistics apparel marketplace",
    "GGG": "energy oil gas drilling refining pipelines",
    "HHH": "energy oil refining chemicals pipelines",
}


def make_panel(tickers, n_days=300, seed=0, start="2021-01-04", drift=0.0004, vol=0.015) -> PricePanel:
    """Geometric random walk on business days, one column per ticker."""
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, periods=n_days)
    steps = rng.normal(drift, vol, size=(n_days, len(tickers)))
    steps[0] = 0.0
    prices = 100.0 * np.exp(np.cumsum(steps, axis=0))
    return PricePanel(pd.DataFrame(prices, index=dates, columns=list(tickers)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def panel():
    return make_panel(["AAA", "BBB", "CCC", "DDD", INDEX], n_days=300, seed=1)


@pytest.fixture
def stub_llm():
    return StubLLMClient(analyst_responder)


@pytest.fixture
def embedder():
    return HashingEmbeddingProvider(64)


@pytest.fixture
def reference_signals_path():
    return Path(__file__).resolve().parent.parent / "fixtures" / "reference_signals.csv"


def _news_records(tickers, start, end, seed):
    rng = np.random.default_rng(seed)
    words = ["growth", "margin", "guidance", "contract", "lawsuit", "upgrade", "launch", "buyback", "merger"]
    records = []
    for ticker in tickers:
        for day in pd.date_range(start, end, freq="5D"):
            topic = words[int(rng.integers(len(words)))]
            kind = "opinion" if rng.random() < 0.3 else "factual"
            records.append({
                "ticker": ticker,
                "date": day.date().isoformat(),
                "title": f"{ticker} {topic} update",
                "body": f"{ticker} announced a {topic} item worth {int(rng.integers(1, 900))} million.\n"
                        "Click here to subscribe to our newsletter.",
                "kind": kind,
            })
    return records


def _fundamentals(tickers, quarters, seed):
    rng = np.random.default_rng(seed)
    out = {}
    for ticker in tickers:
        base = float(rng.uniform(1e9, 5e10))
        reports = []
        for k, quarter in enumerate(quarters):
            scale = base * (1.0 + 0.03 * k)
            reports.append({
                "quarter": quarter,
                "balance_sheet": {"Total Assets": 4.0 * scale, "Total Debt": 1.2 * scale},
                "income_statement": {"Total Revenue": scale, "Net Income": 0.1 * scale},
                "cash_flow": {"Operating Cash Flow": 0.15 * scale},
            })
        out[ticker] = reports
    return out


def build_workspace(root, seed=7, n_samples=200, strategies="all"):
    """
    Every input a full run needs, written under `root`, plus its run config.
    Prices cover 2022-01-03 .. 2023-12-29; the run covers 2023-01 .. 2023-04.
    """
    root = Path(root)
    data = root / "data"
    data.mkdir(parents=True, exist_ok=True)

    dates = pd.bdate_range("2022-01-03", "2023-12-29")
    full = make_panel(TICKERS + [INDEX], n_days=len(dates), seed=seed, start="2022-01-03")
    datastore.write_prices(full, data / "prices.csv")

    descriptions = [
        {"ticker": t, "name": f"{t.title()} Holdings", "text": f"{t} Holdings operates in {SECTORS[t]}."}
        for t in TICKERS
    ]
    (data / "descriptions.json").write_text(json.dumps(descriptions, indent=2), encoding="utf-8")

    news = _news_records(TICKERS, "2022-12-01", "2023-04-30", seed)
    (data / "news.jsonl").write_text("".join(json.dumps(r) + "\n" for r in news), encoding="utf-8")

    fundamentals = _fundamentals(TICKERS, ["2022Q1", "2022Q2", "2022Q3", "2022Q4", "2023Q1"], seed)
    (data / "fundamentals.json").write_text(json.dumps(fundamentals, indent=2), encoding="utf-8")

    macro = data / "macro"
    macro.mkdir(exist_ok=True)
    for day, source in [("2022-12-20", "fedwatch"), ("2023-01-10", "bankresearch"), ("2023-02-07", "fedwatch"),
                        ("2023-03-14", "bankresearch"), ("2023-04-11", "fedwatch")]:
        (macro / f"{day}_{source}.txt").write_text(
            f"Central bank policy on {day}: rates on hold, inflation easing, equities outlook neutral.",
            encoding="utf-8",
        )

    months = pd.period_range("2022-12", "2023-05", freq="M")
    caps = pd.DataFrame(
        np.random.default_rng(seed + 1).uniform(1e10, 5e11, size=(len(months), len(TICKERS))),
        index=months, columns=TICKERS,
    )
    records = [(str(m), t, repr(float(caps.loc[m, t]))) for m in months for t in TICKERS]
    datastore._to_csv(data / "caps.csv", datastore.CAP_COLUMNS, records)

    config = {
        "universe": TICKERS,
        "data_dir": "data",
        "output_dir": "out",
        "index_ticker": INDEX,
        "months": {"start": "2023-01", "end": "2023-04"},
        "inputs": {
            "prices": "prices.csv",
            "descriptions": "descriptions.json",
            "news": "news.jsonl",
            "fundamentals": "fundamentals.json",
            "macro": "macro",
            "caps": "caps.csv",
        },
        "llm": {"provider": "stub", "max_in_flight": 2},
        "embedding": {"provider": "stub", "dimension": 64},
        "evaluation": {"n_samples": n_samples, "seed": seed, "cost_bps": 5},
        "summaries": {"peer_count": 3, "n_quarters": 2},
        "strategies": strategies,
    }
    path = root / "run.json"
    path.write_text(json.dumps(config, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def workspace(tmp_path):
    return build_workspace(tmp_path / "ws")


@pytest.fixture
def caps_for():
    def _make(months, tickers, values=None):
        months = pd.PeriodIndex(months, freq="M")
        if values is None:
            values = np.ones((len(months), len(tickers)))
        return CapWeights(pd.DataFrame(values, index=months, columns=list(tickers)))
    return _make
