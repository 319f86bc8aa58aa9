import json

import numpy as np
import pandas as pd
import pytest

import datastore
from conftest import TICKERS, build_workspace
from evallab import SignalMatrix
from errors import IntegrityError
from main import main
from marketsense import MarketSensePipeline
from providers.stubs import StubLLMClient, analyst_responder
from runconfig import load_run_config

RUN_MONTHS = pd.period_range("2023-01", "2023-04", freq="M")


def _out(config_path):
    return config_path.parent / "out"


def _with_signal_file(config_path, seed=5, drop_caps=False):
    """Adds a ready-made signals file to the workspace so evaluation commands can run on their own."""
    rng = np.random.default_rng(seed)
    values = rng.integers(-1, 2, size=(len(RUN_MONTHS), len(TICKERS)))
    matrix = SignalMatrix(pd.DataFrame(values, index=RUN_MONTHS, columns=TICKERS))
    scores = pd.DataFrame(rng.integers(0, 11, size=values.shape), index=RUN_MONTHS, columns=TICKERS,
                          dtype=float).where(values == 1)
    datastore.write_signals(config_path.parent / "data" / "signals.csv", matrix, scores)

    raw = json.loads(config_path.read_text(encoding="utf-8"))
    raw["inputs"]["signals"] = "signals.csv"
    if drop_caps:
        del raw["inputs"]["caps"]
    config_path.write_text(json.dumps(raw, indent=2), encoding="utf-8")
    return config_path


def test_run_all_writes_every_output(tmp_path):
    config = build_workspace(tmp_path / "ws", n_samples=100)
    assert main(["run-all", "--config", str(config)]) == 0

    out = _out(config)
    for name in ("signals.csv", "bootstrap.json", "bootstrap.txt", "similarity.json", "report.txt",
                 "universe_cache.json", "run.log", "backtest/summary.csv", "backtest/wealth_curves.csv"):
        assert (out / name).exists(), name
    assert len(list((out / "backtest").glob("*.json"))) == 12

    manifest = datastore.read_json(out / "manifests" / "run-all.json")
    assert manifest["status"] == "ok"
    assert (manifest["data_start"], manifest["data_end"]) == ("2023-01", "2023-04")
    assert set(manifest["inputs"]) >= {"prices", "descriptions", "news", "fundamentals", "caps"}
    assert {"signals", "bootstrap.json", "report.txt"} <= set(manifest["outputs"])

    matrix, scores = datastore.load_signals(out / "signals.csv")
    assert list(matrix.months) == list(RUN_MONTHS)
    buys = matrix.values == 1
    assert not np.isnan(scores.to_numpy()[buys]).any()
    assert np.isnan(scores.to_numpy()[~buys]).all()

    store = datastore.SummaryStore(out / "store")
    assert store.count("news") == len(TICKERS) * len(RUN_MONTHS)
    assert store.count("dynamics") == len(TICKERS) * len(RUN_MONTHS)
    assert store.count("signal") == len(TICKERS) * len(RUN_MONTHS)


def test_identical_runs_are_byte_identical(tmp_path):
    outs = []
    for name in ("a", "b"):
        config = build_workspace(tmp_path / name, n_samples=100)
        assert main(["run-all", "--config", str(config)]) == 0
        outs.append(_out(config))
    for rel in ("manifests/run-all.json", "report.txt", "signals.csv", "bootstrap.json",
                "backtest/summary.csv", "similarity.json"):
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel


def test_report_without_outputs(workspace):
    assert main(["report", "--config", str(workspace)]) == 3


@pytest.mark.parametrize("argv", [
    ["explode", "--config", "run.json"],
    ["backtest"],
    ["backtest", "--config", "run.json", "--samples", "many"],
])
def test_usage_errors(argv):
    assert main(argv) == 2


def test_missing_or_invalid_config(tmp_path, workspace):
    assert main(["backtest", "--config", str(tmp_path / "absent.json")]) == 2
    raw = json.loads(workspace.read_text(encoding="utf-8"))
    raw["llm"]["api_key"] = "do-not-store"
    workspace.write_text(json.dumps(raw), encoding="utf-8")
    assert main(["backtest", "--config", str(workspace)]) == 2


def test_backtest_all_strategies_from_signal_file(workspace):
    config = _with_signal_file(workspace)
    assert main(["backtest", "--config", str(config), "--strategies", "all"]) == 0
    out = _out(config)
    reports = sorted(p.stem for p in (out / "backtest").glob("*.json"))
    assert len(reports) == 12
    assert "MS-Top10-GPT" in reports and "SP100" in reports
    summary = pd.read_csv(out / "backtest" / "summary.csv")
    assert "excess_vs_benchmark" in summary.columns
    manifest = datastore.read_json(out / "manifests" / "backtest.json")
    assert "signals" in manifest["inputs"]


def test_backtest_subset(workspace):
    config = _with_signal_file(workspace)
    assert main(["backtest", "--config", str(config), "--strategies", "MS,MS-Top5-GPT"]) == 0
    reports = sorted(p.stem for p in (_out(config) / "backtest").glob("*.json"))
    assert reports == ["MS", "MS-Top5-GPT"]


def test_strategy_failures_exit_non_zero(workspace):
    config = _with_signal_file(workspace, drop_caps=True)
    assert main(["backtest", "--config", str(config), "--strategies", "MS,MS-L-Cap"]) == 1
    manifest = datastore.read_json(_out(config) / "manifests" / "backtest.json")
    assert manifest["status"] == "errors"
    assert [e["context"] for e in manifest["errors"]] == ["backtest MS-L-Cap"]
    assert (_out(config) / "backtest" / "MS.json").exists()


def test_bootstrap_echoes_samples_and_seed(workspace):
    config = _with_signal_file(workspace)
    assert main(["bootstrap", "--config", str(config), "--samples", "50", "--seed", "3"]) == 0
    doc = datastore.read_json(_out(config) / "bootstrap.json")
    assert (doc["n_samples"], doc["seed"]) == (50, 3)
    assert doc["results"]
    assert all(r["n_samples"] == 50 and r["seed"] == 3 for r in doc["results"])
    assert all(0.0 <= r["quantile_R"] <= 100.0 for r in doc["results"])
    assert sum(doc["counts"].values()) == len(RUN_MONTHS) * len(TICKERS)

    first = (_out(config) / "bootstrap.json").read_bytes()
    assert main(["bootstrap", "--config", str(config), "--samples", "50", "--seed", "3"]) == 0
    assert (_out(config) / "bootstrap.json").read_bytes() == first


def test_report_after_bootstrap(workspace):
    config = _with_signal_file(workspace)
    assert main(["bootstrap", "--config", str(config), "--samples", "20"]) == 0
    assert main(["report", "--config", str(config)]) == 0
    text = (_out(config) / "report.txt").read_text(encoding="utf-8")
    assert text.startswith("Bootstrap significance")


def _manifest(config, command):
    return datastore.read_json(_out(config) / "manifests" / f"{command}.json")


def test_universe_file_contents_reach_the_manifest(workspace):
    config = _with_signal_file(workspace)
    universe = config.parent / "universe.json"
    universe.write_text(json.dumps(TICKERS), encoding="utf-8")
    raw = json.loads(config.read_text(encoding="utf-8"))
    raw["universe"] = "universe.json"
    config.write_text(json.dumps(raw, indent=2), encoding="utf-8")

    assert main(["bootstrap", "--config", str(config), "--samples", "20"]) == 0
    first = _manifest(config, "bootstrap")
    assert "universe" in first["inputs"]
    assert main(["bootstrap", "--config", str(config), "--samples", "20"]) == 0
    assert _manifest(config, "bootstrap")["manifest_hash"] == first["manifest_hash"]

    universe.write_text(json.dumps(TICKERS[::-1]), encoding="utf-8")
    assert main(["bootstrap", "--config", str(config), "--samples", "20"]) == 0
    second = _manifest(config, "bootstrap")
    assert second["config_hash"] == first["config_hash"]
    assert second["inputs"]["universe"] != first["inputs"]["universe"]
    assert second["manifest_hash"] != first["manifest_hash"]


def test_stored_summaries_a_stage_reads_reach_the_manifest(tmp_path):
    config = build_workspace(tmp_path / "ws", n_samples=50)
    assert main(["run-all", "--config", str(config)]) == 0
    assert main(["signal", "--config", str(config)]) == 0
    first = _manifest(config, "signal")
    assert "store" in first["inputs"]

    store = datastore.SummaryStore(_out(config) / "store")
    doc = store.get("news", TICKERS[0], "2023-02")
    doc["text"] += " Guidance was raised after the close."
    store.put("news", TICKERS[0], "2023-02", doc)
    assert main(["signal", "--config", str(config)]) == 0
    second = _manifest(config, "signal")
    assert second["inputs"]["store"] != first["inputs"]["store"]
    assert second["manifest_hash"] != first["manifest_hash"]


def test_failed_signals_are_never_holds(tmp_path):
    config = build_workspace(tmp_path / "ws", n_samples=50)

    def responder(system, prompt):
        if "Decide whether BBB is" in prompt:
            return "No view this month."
        return analyst_responder(system, prompt)

    settings = load_run_config(config)
    llm = StubLLMClient(responder, context_chars=settings.llm.context_chars)
    manifest = MarketSensePipeline(settings, llm=llm).run("run-all")
    assert not manifest.ok
    contexts = {e["context"] for e in manifest.errors}
    assert {f"signal BBB {m}" for m in RUN_MONTHS} <= contexts
    assert {"backtest signals", "bootstrap signals"} <= contexts

    signals = _out(config) / "signals.csv"
    assert datastore.signal_gaps(signals) == [(m, "BBB") for m in RUN_MONTHS]
    with pytest.raises(IntegrityError):
        datastore.load_signals(signals)
    assert not (_out(config) / "bootstrap.json").exists()
    assert main(["backtest", "--config", str(config)]) == 1
