"""
marketsense.py

MarketSensePipeline ties the modules together for one RunConfig:

summarize-news -> summarize-fundamentals -> summarize-macro -> summarize-dynamics
-> signal -> rank -> backtest -> bootstrap -> similarity-report -> report

Every stage reads what earlier stages left in the summary store / output
directory, records per-stock failures instead of stopping, and finishes by
writing a RunManifest. A manifest with errors means a non-zero exit.
"""

import datetime
import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import backtester
import datastore
import evallab
import peersimilarity
import signalengine
import summarizers
from errors import ConfigurationError, EmptyInputError, IntegrityError, NotFoundError, NothingToReportError
from llmcore.chat import ChatCompletionClient
from llmcore.embeddings import EmbeddingsClient
from marketmetrics import price_dynamics_metrics
from providers.adapters import RestEmbeddingAdapter, RestLLMAdapter
from providers.files import FileFundamentalsSource, FileMacroSource, FileNewsSource
from providers.iface import DecodingParams, EmbeddingProvider, LLMClient
from providers.stubs import HashingEmbeddingProvider, StubLLMClient, analyst_responder
from runconfig import ProviderSettings, RunConfig
from utils.helpers import safe_call
from utils.logging_setup import attach_run_log, detach_run_log, logger
from utils.wait import heartbeat

COMMANDS = (
    "summarize-news",
    "summarize-fundamentals",
    "summarize-macro",
    "summarize-dynamics",
    "signal",
    "rank",
    "backtest",
    "bootstrap",
    "similarity-report",
    "report",
)


def build_llm_client(settings: ProviderSettings) -> LLMClient:
    if settings.provider == "stub":
        return StubLLMClient(analyst_responder, context_chars=settings.context_chars)
    inner = ChatCompletionClient(settings.endpoint, settings.api_key_env, settings.model,
                                 timeout=settings.timeout, verify_ssl=settings.verify_ssl)
    return RestLLMAdapter(inner, max_in_flight=settings.max_in_flight, context_chars=settings.context_chars,
                          retries=settings.retries, backoff=settings.backoff)


def build_embedding_provider(settings: ProviderSettings) -> EmbeddingProvider:
    if settings.provider == "stub":
        return HashingEmbeddingProvider(settings.dimension)
    inner = EmbeddingsClient(settings.endpoint, settings.api_key_env, settings.model,
                             timeout=settings.timeout, verify_ssl=settings.verify_ssl)
    return RestEmbeddingAdapter(inner, max_in_flight=settings.max_in_flight,
                                retries=settings.retries, backoff=settings.backoff)


class MarketSensePipeline:
    def __init__(self, config: RunConfig, llm: Optional[LLMClient] = None,
                 embedder: Optional[EmbeddingProvider] = None, as_of=None):
        self.config = config
        self.llm = llm or build_llm_client(config.llm)
        self.embedder = peersimilarity.CachedEmbedder(embedder or build_embedding_provider(config.embedding))
        self.params = DecodingParams(temperature=config.llm.temperature)
        self.out = Path(config.output_dir)
        self.store = datastore.SummaryStore(self.out / "store")
        self.as_of = summarizers.to_month(as_of) if as_of is not None else None
        self.workers = config.llm.max_in_flight
        self.errors: List[dict] = []
        self.manifest: Optional[datastore.RunManifest] = None
        self._cache = {}

    # ----------------- inputs -----------------

    def _input(self, name, required=True) -> Optional[Path]:
        path = self.config.input_path(name)
        if path is None or not Path(path).exists():
            if required:
                raise ConfigurationError(f"input '{name}' is not configured or missing: {path}")
            return None
        if self.manifest is not None and Path(path).is_file():
            self.manifest.add_input(name, path)
        return Path(path)

    def _cached(self, key, loader):
        if key not in self._cache:
            self._cache[key] = loader()
        return self._cache[key]

    @property
    def panel(self):
        return self._cached("prices", lambda: datastore.load_prices(self._input("prices")))

    @property
    def descriptions(self):
        return self._cached("descriptions", lambda: datastore.load_descriptions(self._input("descriptions")))

    @property
    def company_names(self) -> Dict[str, str]:
        return self._cached("names", lambda: datastore.load_company_names(self._input("descriptions")))

    @property
    def news(self) -> FileNewsSource:
        return self._cached("news", lambda: FileNewsSource(self._input("news")))

    @property
    def fundamentals(self) -> FileFundamentalsSource:
        return self._cached("fundamentals", lambda: FileFundamentalsSource(self._input("fundamentals")))

    @property
    def macro(self) -> FileMacroSource:
        return self._cached("macro", lambda: FileMacroSource(self._input("macro")))

    @property
    def tickers(self) -> List[str]:
        if self.config.tickers is not None:
            return list(self.config.tickers)
        return [t for t in self.panel.tickers if t != self.config.index_ticker]

    @property
    def months(self) -> pd.PeriodIndex:
        if self.as_of is not None:
            return pd.PeriodIndex([self.as_of], freq="M")
        if self.config.months is not None:
            return self.config.months
        periods = self.panel.calendar.to_period("M").unique()
        return pd.PeriodIndex(periods[12:-1], freq="M")

    def _rebalance_date(self, month) -> pd.Timestamp:
        return backtester.rebalance_dates(self.panel.calendar, [month])[month]

    # ----------------- harness -----------------

    def run(self, command: str, **options) -> datastore.RunManifest:
        """Run one command (or "run-all") and write its manifest."""
        stages = COMMANDS if command == "run-all" else (command,)
        for stage in stages:
            if stage not in COMMANDS:
                raise ConfigurationError(f"unknown command {stage!r}")

        self.errors = []
        self._cache = {}
        self.manifest = datastore.RunManifest(command=command, config_hash=self.config.config_hash)
        if self.config.universe is not None:
            self.manifest.add_input("universe", self.config.universe)
        self.store.reset_reads()
        run_log = attach_run_log(self.out / "run.log")
        try:
            logger.info("🚀 %s started (config %s)", command, self.config.config_hash[:12])
            for stage in stages:
                method = getattr(self, "stage_" + stage.replace("-", "_"))
                with heartbeat(stage):
                    method(**options)
            months = self.months if "prices" in self._cache or self.config.months is not None else None
            if months is not None and len(months):
                self.manifest.data_start, self.manifest.data_end = str(months[0]), str(months[-1])
            consumed = self.store.reads_digest()
            if consumed is not None:
                self.manifest.inputs["store"] = consumed
            self.manifest.errors = list(self.errors)
            path = self.manifest.write(self.out / "manifests" / f"{command}.json")
            if self.errors:
                logger.error("❌ %s finished with %s errors (manifest %s)", command, len(self.errors), path)
            else:
                logger.info("✅ %s finished (manifest %s)", command, path)
            return self.manifest
        finally:
            detach_run_log(run_log)

    def _output(self, name, path):
        self.manifest.add_output(name, path)
        return path

    def _parallel(self, func, items):
        if self.workers <= 1 or len(items) <= 1:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(func, items))

    # ----------------- summaries -----------------

    def _news_window(self, month):
        tau = self.config.summaries.window_days or month.days_in_month
        end = month.end_time.date()
        return tau, end - datetime.timedelta(days=tau - 1), end

    def summarize_news_for(self, ticker) -> int:
        """Daily and progressive news summaries of one ticker over every configured month."""
        prev = None
        first = self.months[0]
        if self.store.exists("news", ticker, str(first - 1)):
            prev = datastore.load_progressive(self.store, ticker, first - 1)
        written = 0
        for month in self.months:
            tau, start, end = self._news_window(month)
            articles = summarizers.clean_articles(self.news.articles(ticker, start, end), ticker,
                                                  self.company_names.get(ticker))
            by_day = {}
            for article in articles:
                by_day.setdefault(article.date, []).append(article)
            jobs = [(by_day[day], ticker, day) for day in sorted(by_day)]
            dailies = summarizers.summarize_daily_batch(jobs, self.llm, max_workers=1, params=self.params)
            for daily in dailies:
                self.store.put("daily-news", ticker, daily.date.isoformat(), datastore.daily_to_doc(daily))
            prev = summarizers.update_progressive_summary(prev, dailies, self.llm, as_of=month,
                                                          window_days=tau, params=self.params)
            self.store.put("news", ticker, str(month), datastore.progressive_to_doc(prev))
            written += 1
        return written

    def stage_summarize_news(self, **_):
        logger.info("📰 Summarizing news for %s tickers over %s months", len(self.tickers), len(self.months))
        self._parallel(
            lambda t: safe_call(self.summarize_news_for, t, errors=self.errors, context=f"summarize-news {t}"),
            self.tickers,
        )
        logger.info("📰 %s daily and %s monthly news summaries in store",
                    self.store.count("daily-news"), self.store.count("news"))

    def summarize_fundamentals_for(self, ticker) -> int:
        """One summary per newly available quarter up to the last configured month."""
        last_day = self.months[-1].end_time
        reports = sorted(self.fundamentals.statements(ticker), key=lambda r: pd.Period(r.quarter, freq="Q"))
        reports = [r for r in reports if pd.Period(r.quarter, freq="Q").end_time <= last_day]
        if not reports:
            raise EmptyInputError(f"no quarterly statements for {ticker}")
        n = self.config.summaries.n_quarters
        written = 0
        for k in range(len(reports)):
            quarter = str(pd.Period(reports[k].quarter, freq="Q"))
            if self.store.exists("fundamentals", ticker, quarter):
                continue
            table = summarizers.standardize_financials(reports[:k + 1], n)
            summary = summarizers.summarize_fundamentals(ticker, table, self.llm, self.params)
            self.store.put("fundamentals", ticker, quarter, datastore.fundamentals_to_doc(summary))
            written += 1
        return written

    def stage_summarize_fundamentals(self, **_):
        logger.info("📊 Summarizing fundamentals for %s tickers", len(self.tickers))
        self._parallel(
            lambda t: safe_call(self.summarize_fundamentals_for, t, errors=self.errors,
                                context=f"summarize-fundamentals {t}"),
            self.tickers,
        )

    def stage_summarize_macro(self, **_):
        every = self.config.summaries.macro_every_days
        start = (self.months[0] - 1).start_time.date()
        end = self.months[-1].end_time.date()
        dates = summarizers.macro_run_dates(start, end, every)
        logger.info("🌍 Macro summaries on %s run dates", len(dates))
        for run_date in dates:
            reports = self.macro.reports(run_date - datetime.timedelta(days=every - 1), run_date)
            if not reports:
                logger.info("No macro reports in the %s days up to %s", every, run_date)
                continue

            def _one(reports=reports, run_date=run_date):
                summary = summarizers.summarize_macro(reports, run_date, self.llm, self.params)
                self.store.put("macro", None, run_date.isoformat(), datastore.macro_to_doc(summary))

            safe_call(_one, errors=self.errors, context=f"summarize-macro {run_date}")

    def _peers(self) -> Dict[str, List[dict]]:
        def _load():
            path = self.out / "universe_cache.json"
            if path.exists():
                return datastore.load_universe_cache(path)
            tradable = set(self.panel.tickers)
            descriptions = [d for d in self.descriptions if d.ticker in tradable and d.ticker != self.config.index_ticker]
            targets = [t for t in self.tickers if t in {d.ticker for d in descriptions}]
            cache = peersimilarity.build_universe_cache(descriptions, self.config.summaries.peer_count,
                                                        self.embedder, targets, self.workers)
            self._output("universe_cache", datastore.save_universe_cache(path, cache))
            return cache

        return self._cached("peers", _load)

    def summarize_dynamics_for(self, ticker, month) -> str:
        peers = [p["ticker"] for p in self._peers().get(ticker, [])]
        if not peers:
            raise NotFoundError(f"no peer universe for {ticker}")
        as_of = self._rebalance_date(month)
        report = price_dynamics_metrics(ticker, peers, self.config.index_ticker, self.panel,
                                        as_of=as_of, risk_free_rate=self.config.evaluation.risk_free_rate,
                                        periods_per_year=self.config.evaluation.periods_per_year)
        text = summarizers.render_dynamics_summary(report, ticker, self.llm, self.params)
        self.store.put("dynamics", ticker, str(month), {"ticker": ticker, "as_of": str(month), "text": text,
                                                        "metrics": report.to_dict()})
        return text

    def stage_summarize_dynamics(self, **_):
        logger.info("📈 Price dynamics for %s tickers over %s months", len(self.tickers), len(self.months))
        jobs = [(t, m) for t in self.tickers for m in self.months]
        self._parallel(
            lambda job: safe_call(self.summarize_dynamics_for, *job, errors=self.errors,
                                  context=f"summarize-dynamics {job[0]} {job[1]}"),
            jobs,
        )

    # ----------------- signals -----------------

    def _macro_summaries(self) -> List[summarizers.MacroSummary]:
        return self._cached("macro_summaries", lambda: [
            datastore.doc_to_macro(self.store.get(*key)) for key in self.store.keys("macro")
        ])

    def context_for(self, ticker, month) -> signalengine.SignalContext:
        news = self.store.get("news", ticker, str(month))["text"]
        dynamics = self.store.get("dynamics", ticker, str(month))["text"]
        fundamentals = signalengine.carry_forward_fundamentals(
            [datastore.doc_to_fundamentals(self.store.get(*key)) for key in self.store.keys("fundamentals", ticker)],
            month,
        )
        macro = summarizers.latest_macro(month, self._macro_summaries())
        return signalengine.SignalContext(
            ticker=ticker,
            as_of=month,
            news=news,
            dynamics=dynamics,
            fundamentals=fundamentals.text if fundamentals is not None else "",
            macro=macro.text if macro is not None else None,
        )

    def _signals_path(self) -> Path:
        return self.out / "signals.csv"

    def _signal_frame(self):
        return pd.DataFrame(np.nan, index=self.months, columns=self.tickers, dtype=float)

    def stage_signal(self, **_):
        frame = self._signal_frame()
        for month in self.months:
            contexts = {}
            for ticker in self.tickers:
                ctx = safe_call(self.context_for, ticker, month, errors=self.errors,
                                context=f"signal context {ticker} {month}")
                if ctx is not None:
                    contexts[ticker] = ctx
            signals = signalengine.generate_signals(list(contexts.values()), self.llm, self.workers,
                                                     self.errors, self.params)
            for ticker, sig in signals.items():
                frame.loc[month, ticker] = int(sig.decision)
                self.store.put("signal", ticker, str(month), {
                    "ticker": ticker,
                    "as_of": str(month),
                    "decision": int(sig.decision),
                    "explanation": sig.explanation,
                    "raw_completion": sig.raw_completion,
                    "macro_available": contexts[ticker].macro is not None,
                })
            decided = frame.loc[[month]].dropna(axis=1)
            logger.info("🧠 %s: %s signals (%s)", month, len(signals),
                        evallab.signal_counts(evallab.SignalMatrix(decided)))
        missing = [(m, t) for m in self.months for t in self.tickers if pd.isna(frame.loc[m, t])]
        if missing:
            logger.warning("%s signal cells failed and are written without a decision", len(missing))
        matrix = evallab.SignalMatrix(frame.fillna(0))
        self._output("signals", datastore.write_signals(self._signals_path(), matrix, missing=missing))

    def _load_signal(self, ticker, month) -> Optional[signalengine.Signal]:
        if not self.store.exists("signal", ticker, str(month)):
            return None
        doc = self.store.get("signal", ticker, str(month))
        return signalengine.Signal(ticker, summarizers.to_month(doc["as_of"]),
                                   signalengine.Decision(doc["decision"]), doc["explanation"],
                                   doc.get("raw_completion", ""))

    def stage_rank(self, **_):
        path = self._signals_path()
        if not path.exists():
            raise ConfigurationError("no signals to rank; run the signal command first")
        matrix, scores = datastore.load_signals(path, allow_missing=True)
        gaps = datastore.signal_gaps(path)
        seed = self.config.evaluation.seed
        for month in self.months:
            if month not in matrix.months:
                continue
            buys = [self._load_signal(t, month) for t in matrix.tickers if matrix.m.loc[month, t] == 1]
            buys = [s for s in buys if s is not None]
            rng = np.random.default_rng([seed, month.ordinal])
            ranked = safe_call(signalengine.rank_buy_explanations, buys, self.llm, rng=rng,
                               include_names=self.config.summaries.include_names_in_ranking,
                               params=self.params, errors=self.errors, context=f"rank {month}")
            for r in ranked or []:
                scores.loc[month, r.signal.ticker] = float(r.score)
            if ranked:
                high, low = signalengine.partition_by_score(ranked)
                logger.info("🏅 %s: %s buys ranked (%s above the threshold)", month, len(ranked), len(high))
        self._output("signals", datastore.write_signals(path, matrix, scores, missing=gaps))

    # ----------------- evaluation -----------------

    def _signals(self, stage):
        """Signals for an evaluation stage, or None (error recorded) when some cells have no decision."""
        path = self._signals_path()
        if not path.exists():
            path = self._input("signals", required=False)
        if path is None or not Path(path).exists():
            raise ConfigurationError("no signals file; run the signal command or configure inputs.signals")
        try:
            return datastore.load_signals(path)
        except IntegrityError as e:
            logger.error("❌ %s skipped: %s", stage, e)
            self.errors.append({"context": f"{stage} signals", "error": f"{type(e).__name__}: {e}"})
            return None

    def stage_backtest(self, **_):
        loaded = self._signals("backtest")
        if loaded is None:
            return
        matrix, scores = loaded
        caps_path = self._input("caps", required=False)
        caps = datastore.load_caps(caps_path) if caps_path is not None else None
        specs = backtester.load_strategy_specs(self.config.strategies, self.config.evaluation.cost_bps)
        logger.info("💼 Backtesting %s strategies", len(specs))
        reports = backtester.run_strategies(
            specs, matrix, scores, self.panel, caps, index_ticker=self.config.index_ticker,
            max_workers=self.workers, errors=self.errors,
            risk_free_rate=self.config.evaluation.risk_free_rate,
            periods_per_year=self.config.evaluation.periods_per_year,
        )
        if not reports:
            return
        table = backtester.summary_table(reports)
        for path in datastore.write_backtest_reports(self.out / "backtest", reports, table):
            self._output(f"backtest/{path.name}", path)

    def stage_bootstrap(self, **_):
        loaded = self._signals("bootstrap")
        if loaded is None:
            return
        matrix, _ = loaded
        returns_path = self._input("returns", required=False)
        if returns_path is not None:
            returns = datastore.load_monthly_returns(returns_path)
        else:
            returns = evallab.monthly_returns_from_prices(self.panel, matrix.months, matrix.tickers)
        ev = self.config.evaluation
        logger.info("🎲 Bootstrapping %s random signal matrices (seed %s)", ev.n_samples, ev.seed)
        rows = evallab.bootstrap_table(matrix, returns, ev.n_samples, ev.seed, n_jobs=ev.n_jobs)
        doc = {
            "n_samples": ev.n_samples,
            "seed": ev.seed,
            "counts": evallab.signal_counts(matrix),
            "results": [r.to_dict() for r in rows],
        }
        self._output("bootstrap.json", datastore.write_json(self.out / "bootstrap.json", doc))
        text = evallab.render_bootstrap_table(rows) + "\n"
        path = self.out / "bootstrap.txt"
        path.write_text(text, encoding="utf-8")
        self._output("bootstrap.txt", path)

    def stage_similarity_report(self, **_):
        signals, contexts = [], []
        for month in self.months:
            for ticker in self.tickers:
                sig = self._load_signal(ticker, month)
                if sig is None:
                    continue
                ctx = safe_call(self.context_for, ticker, month, errors=self.errors,
                                context=f"similarity context {ticker} {month}")
                if ctx is not None:
                    signals.append(sig)
                    contexts.append(ctx)
        if not signals:
            raise ConfigurationError("no stored signals; run the signal command first")
        stats = signalengine.signal_component_similarity(signals, contexts, self.embedder)
        doc = {name: vars(s) for name, s in stats.items()}
        self._output("similarity.json", datastore.write_json(self.out / "similarity.json", doc))

    def stage_report(self, **_):
        parts = []
        summary = self.out / "backtest" / "summary.txt"
        if summary.exists():
            parts.append("Strategy performance\n" + summary.read_text(encoding="utf-8"))
        boot = self.out / "bootstrap.txt"
        if boot.exists():
            parts.append("Bootstrap significance\n" + boot.read_text(encoding="utf-8"))
        sim = self.out / "similarity.json"
        if sim.exists():
            stats = json.loads(sim.read_text(encoding="utf-8"))
            lines = [f"{name:<14} mean={_fmt(s['mean'])} std={_fmt(s['std'])} min={_fmt(s['min'])} max={_fmt(s['max'])}"
                     for name, s in stats.items()]
            parts.append("Signal / component text similarity\n" + "\n".join(lines) + "\n")
        if not parts:
            raise NothingToReportError(f"nothing to report in {self.out}; run backtest, bootstrap or similarity-report first")
        path = self.out / "report.txt"
        path.write_text("\n".join(parts), encoding="utf-8")
        self._output("report.txt", path)
        logger.info("📄 Report written to %s", path)


def _fmt(value) -> str:
    return "n/a" if value is None else f"{value:.4f}"


__all__ = ["COMMANDS", "MarketSensePipeline", "build_llm_client", "build_embedding_provider"]
