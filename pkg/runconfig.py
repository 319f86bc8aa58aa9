"""
runconfig.py

RunConfig: one JSON document describing a run. Relative paths resolve
against the directory of the config file. Credentials never appear in it;
providers name the environment variable that holds them (`api_key_env`).

{
  "universe": "universe.json",
  "data_dir": "data",
  "output_dir": "out",
  "index_ticker": "SPX",
  "months": {"start": "2023-01", "end": "2024-01"},
  "inputs": {"prices": "prices.csv", "descriptions": "descriptions.json", "news": "news.jsonl",
             "fundamentals": "fundamentals.json", "macro": "macro", "caps": "caps.csv"},
  "llm": {"provider": "rest", "endpoint": "https://...", "model": "gpt-4", "api_key_env": "OPENAI_API_KEY"},
  "embedding": {"provider": "rest", "endpoint": "https://...", "model": "text-embedding-3-small",
                "api_key_env": "OPENAI_API_KEY"},
  "evaluation": {"n_samples": 10000, "seed": 7, "cost_bps": 5, "risk_free_rate": 0.0, "periods_per_year": 252},
  "summaries": {"peer_count": 5, "n_quarters": 2, "window_days": null, "macro_every_days": 14},
  "strategies": "all"
}
"""

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import pandas as pd

from constants import (
    BOOTSTRAP_SAMPLES,
    COST_BPS,
    EMBEDDING_DIM,
    INDEX_TICKER,
    LLM_BACKOFF_SECONDS,
    LLM_CONTEXT_CHARS,
    LLM_MAX_IN_FLIGHT,
    LLM_MAX_RETRIES,
    LLM_TEMPERATURE,
    LLM_TIMEOUT,
    MACRO_CADENCE_DAYS,
    MASTER_SEED,
    N_QUARTERS,
    PEER_COUNT,
    PERIODS_PER_YEAR,
    RISK_FREE_RATE,
)
from errors import ConfigurationError
from utils.helpers import canonical_json, sha256_text

PROVIDERS = ("stub", "rest")
INPUT_NAMES = ("prices", "descriptions", "news", "fundamentals", "macro", "caps", "signals", "returns")
TOP_LEVEL_KEYS = ("universe", "data_dir", "output_dir", "index_ticker", "months", "inputs", "llm", "embedding",
                  "evaluation", "summaries", "strategies")
_CREDENTIAL = re.compile(r"(api[_-]?key|token|password|passwd|secret|credential)s?$", re.IGNORECASE)


def _reject_credentials(node, where="config"):
    if isinstance(node, dict):
        for key, value in node.items():
            if _CREDENTIAL.search(str(key)) and not str(key).endswith("_env"):
                raise ConfigurationError(
                    f"{where}.{key}: credentials must not be stored in config files; "
                    f"name an environment variable with '{key}_env' instead"
                )
            _reject_credentials(value, f"{where}.{key}")
    elif isinstance(node, list):
        for i, value in enumerate(node):
            _reject_credentials(value, f"{where}[{i}]")


@dataclass(frozen=True)
class ProviderSettings:
    provider: str = "stub"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: Optional[str] = None
    timeout: float = LLM_TIMEOUT
    verify_ssl: bool = True
    retries: int = LLM_MAX_RETRIES
    backoff: float = LLM_BACKOFF_SECONDS
    max_in_flight: int = LLM_MAX_IN_FLIGHT
    temperature: float = LLM_TEMPERATURE
    context_chars: int = LLM_CONTEXT_CHARS
    dimension: int = EMBEDDING_DIM

    def __post_init__(self):
        if self.provider not in PROVIDERS:
            raise ConfigurationError(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.provider == "rest":
            missing = [k for k in ("endpoint", "model", "api_key_env") if not getattr(self, k)]
            if missing:
                raise ConfigurationError(f"rest provider needs {missing}")
        if self.max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class EvaluationSettings:
    n_samples: int = BOOTSTRAP_SAMPLES
    seed: int = MASTER_SEED
    cost_bps: float = COST_BPS
    risk_free_rate: float = RISK_FREE_RATE
    periods_per_year: int = PERIODS_PER_YEAR
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if self.cost_bps < 0:
            raise ConfigurationError("cost_bps must be >= 0")
        if self.periods_per_year <= 0:
            raise ConfigurationError("periods_per_year must be > 0")


@dataclass(frozen=True)
class SummarySettings:
    peer_count: int = PEER_COUNT
    n_quarters: int = N_QUARTERS
    window_days: Optional[int] = None
    macro_every_days: int = MACRO_CADENCE_DAYS
    include_names_in_ranking: bool = False


@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path
    universe: Optional[Path]
    data_dir: Path
    output_dir: Path
    index_ticker: str
    months: Optional[pd.PeriodIndex]
    inputs: dict
    llm: ProviderSettings
    embedding: ProviderSettings
    evaluation: EvaluationSettings
    summaries: SummarySettings
    strategies: object = "all"
    tickers: Optional[List[str]] = field(default=None)

    @property
    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON, paths as written (not resolved)."""
        return sha256_text(canonical_json(self.raw))

    def input_path(self, name) -> Optional[Path]:
        return self.inputs.get(name)

    def with_overrides(self, seed=None, samples=None, strategies=None, universe=None) -> "RunConfig":
        """Config with command-line overrides applied; they count toward config_hash."""
        raw = copy.deepcopy(self.raw)
        if seed is not None:
            raw.setdefault("evaluation", {})["seed"] = int(seed)
        if samples is not None:
            raw.setdefault("evaluation", {})["n_samples"] = int(samples)
        if strategies is not None:
            raw["strategies"] = strategies if strategies == "all" else [
                s.strip() for s in strategies.split(",") if s.strip()
            ]
        if universe is not None:
            raw["universe"] = universe
        return build_run_config(raw, self.base_dir)


def _resolve(base: Path, value) -> Optional[Path]:
    if value is None:
        return None
    path = Path(value)
    return path if path.is_absolute() else (base / path).resolve()


def _months(spec) -> Optional[pd.PeriodIndex]:
    if spec is None:
        return None
    try:
        if isinstance(spec, dict):
            return pd.period_range(spec["start"], spec["end"], freq="M")
        return pd.PeriodIndex([pd.Period(m, freq="M") for m in spec], freq="M")
    except (KeyError, ValueError, TypeError) as e:
        raise ConfigurationError(f"bad months specification {spec!r}: {e}")


def _section(raw, name, cls):
    doc = raw.get(name) or {}
    if not isinstance(doc, dict):
        raise ConfigurationError(f"{name} must be an object")
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigurationError(f"unknown {name} keys: {unknown}")
    return cls(**doc)


def build_run_config(raw: dict, base_dir) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigurationError("run config must be a JSON object")
    _reject_credentials(raw)
    unknown = sorted(set(raw) - set(TOP_LEVEL_KEYS))
    if unknown:
        raise ConfigurationError(f"unknown config keys: {unknown}")
    base = Path(base_dir).resolve()
    data_dir = _resolve(base, raw.get("data_dir", "."))

    inputs = raw.get("inputs") or {}
    unknown = sorted(set(inputs) - set(INPUT_NAMES))
    if unknown:
        raise ConfigurationError(f"unknown inputs: {unknown}")
    resolved_inputs = {name: _resolve(data_dir, value) for name, value in inputs.items() if value}

    universe = raw.get("universe")
    tickers = None
    universe_path = None
    if isinstance(universe, list):
        tickers = [str(t) for t in universe]
    elif isinstance(universe, str) and universe.endswith(".json"):
        universe_path = _resolve(base, universe)
    elif isinstance(universe, str):
        tickers = [t.strip() for t in universe.split(",") if t.strip()]
    if universe_path is not None:
        if not universe_path.exists():
            raise ConfigurationError(f"universe file not found: {universe_path}")
        with open(universe_path, encoding="utf-8") as f:
            tickers = [str(t) for t in json.load(f)]

    return RunConfig(
        raw=raw,
        base_dir=base,
        universe=universe_path,
        data_dir=data_dir,
        output_dir=_resolve(base, raw.get("output_dir", "out")),
        index_ticker=raw.get("index_ticker", INDEX_TICKER),
        months=_months(raw.get("months")),
        inputs=resolved_inputs,
        llm=_section(raw, "llm", ProviderSettings),
        embedding=_section(raw, "embedding", ProviderSettings),
        evaluation=_section(raw, "evaluation", EvaluationSettings),
        summaries=_section(raw, "summaries", SummarySettings),
        strategies=raw.get("strategies", "all"),
        tickers=sorted(tickers) if tickers is not None else None,
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})")
    return build_run_config(raw, path.parent)


__all__ = [
    "ProviderSettings",
    "EvaluationSettings",
    "SummarySettings",
    "RunConfig",
    "build_run_config",
    "load_run_config",
]
