"""
summarizers.py

Produces the four texts a signal is built from, all through an LLMClient:

- daily news summaries and the monthly progressive news summary that carries
  older, still-relevant news forward from its predecessor;
- fundamentals summaries over a standardized side-by-side quarterly table
  with abbreviated numbers ("22.96 billion");
- price dynamics summaries rendered from a MetricsReport;
- two-stage macro summaries (each report alone, then the union).

No summarizer calls the LLM on empty input.
"""

import datetime
import math
import numbers
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd

from constants import LLM_CONTEXT_CHARS, LLM_MAX_IN_FLIGHT, MACRO_CADENCE_DAYS, N_QUARTERS
from errors import (
    AlignmentError,
    EmptyInputError,
    InvalidArgumentError,
    InvalidInputError,
    InvalidNumberError,
    ParseError,
    ValidationError,
)
from marketmetrics import MetricsReport
from providers.iface import DecodingParams, LLMClient
from utils.logging_setup import logger

NEWS_KINDS = ("factual", "opinion")
STATEMENT_SECTIONS = (
    ("balance_sheet", "Balance Sheet"),
    ("income_statement", "Income Statement"),
    ("cash_flow", "Cash Flow"),
)
MISSING_CELL = "n/a"

ANALYST_SYSTEM = "You are a financial analyst. Be factual and concise."
FACTUAL_BLOCK = "=== Factual articles ==="
OPINION_BLOCK = "=== Opinion articles ==="

DAILY_NEWS_PROMPT = """Stock: {ticker}
Date: {date}
Task: summarize today's news about the company.

{factual_block}
{factual}

{opinion_block}
{opinion}

Instructions: keep only information relevant to {ticker}. Answer with two sections, the first headed FACTUAL NEWS: and the second headed ANALYST OPINIONS:, so reported facts stay separate from analysts' views."""

PROGRESSIVE_PROMPT = """You are a financial analyst maintaining the running news summary of {ticker}.

Current Summary ({current_label}):
{current}

Daily News Summary ({ticker}, {start} to {end}):
Factual news:
{factual}

Analysts' opinions:
{opinions}

Instructions: Integrate the most pertinent information from the daily news into the current summary. Keep older developments that still matter, such as mergers, legal disputes or guidance, and drop stale ones. Distinguish factual news from analysts' opinions. Write the updated summary of {ticker} as of {month}."""

FUNDAMENTALS_PROMPT = """You are a financial analyst focusing on recent trends. Evaluate the financial health of {ticker} from its latest quarters.

Financial Tables (oldest quarter first):
{table}

Analysis Focus: recent trends and developments in profitability, revenue growth, debt levels and cash flow generation.

Instructions: Conduct a bullet-form analysis. Stay factual and give no investment recommendation."""

DYNAMICS_PROMPT = """You are a financial analyst reviewing the price dynamics of {ticker} as of {as_of}.

Performance Metrics (target, most similar stocks, market index):
{metrics}

Correlation Matrix (daily returns, {corr_window}-month window):
{correlation}

Comparative Analysis: compare {ticker} with the related stocks and with the index {index}.

Instructions: Summarize the findings in a concise and factual report."""

MACRO_REPORT_PROMPT = """Summarize the following investment report. Focus on the critical macroeconomic elements: central bank policies, geopolitical insights and market outlooks.

Report:
{report}"""

MACRO_SYNTHESIS_PROMPT = """Below are summaries of {count} investment reports and research articles as of {as_of}.

{summaries}

Synthesis and Sentiment Analysis: extract the consensus view and the divergent views or contradictions between the reports. Give the sentiment (positive, negative, neutral) by asset class or investment dimension.

Instructions: Write a detailed and factual report that emphasizes the prevailing market sentiment, categorized by asset class."""


# ----------------- types -----------------

def to_month(value) -> pd.Period:
    """Monthly period for '2023-11', '2023-11-30', a date or a Period."""
    if isinstance(value, pd.Period):
        return value.asfreq("M")
    return pd.Period(pd.Timestamp(value), freq="M")


@dataclass(frozen=True)
class NewsArticle:
    ticker: str
    date: datetime.date
    title: str
    body: str
    kind: str = "factual"

    def __post_init__(self):
        if self.kind not in NEWS_KINDS:
            raise ValidationError(f"news kind must be one of {NEWS_KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class DailyNewsSummary:
    ticker: str
    date: datetime.date
    text: str
    source_article_count: int
    opinion_text: str = ""

    def __post_init__(self):
        if self.source_article_count > 0 and not (self.text or "").strip():
            raise ValidationError(f"daily summary for {self.ticker} {self.date} has no text")


@dataclass(frozen=True)
class ProgressiveNewsSummary:
    ticker: str
    as_of: pd.Period
    text: str
    window_days: int
    predecessor: Optional["ProgressiveNewsSummary"] = None

    def __post_init__(self):
        if self.window_days <= 0:
            raise ValidationError("window_days must be > 0")
        if self.predecessor is not None:
            if self.predecessor.ticker != self.ticker:
                raise ValidationError("predecessor belongs to another ticker")
            if not self.predecessor.as_of < self.as_of:
                raise ValidationError("predecessor must be strictly older")


@dataclass(frozen=True)
class QuarterlyStatement:
    quarter: str
    balance_sheet: Dict[str, object] = field(default_factory=dict)
    income_statement: Dict[str, object] = field(default_factory=dict)
    cash_flow: Dict[str, object] = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class StandardizedFinancialTable:
    quarters: List[str]
    table: pd.DataFrame

    def cell(self, statement, item, quarter) -> str:
        return self.table.loc[(statement, item), quarter]

    def render(self) -> str:
        return self.table.to_string()


@dataclass(frozen=True)
class FundamentalsSummary:
    ticker: str
    quarters_covered: Tuple[str, ...]
    text: str

    @property
    def last_quarter(self) -> pd.Period:
        return pd.Period(self.quarters_covered[-1], freq="Q")


@dataclass(frozen=True)
class MacroReport:
    date: datetime.date
    source: str
    text: str


@dataclass(frozen=True)
class MacroSummary:
    as_of: datetime.date
    text: str
    report_count: int
    report_summaries: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.report_count < 1:
            raise ValidationError("a macro summary needs at least one report")


# ----------------- numbers and tables -----------------

_SCALES = ((1e9, "billion"), (1e6, "million"), (1e3, "thousand"))
_ABBREVIATED = re.compile(r"^\s*(-?\d+(?:\.\d+)?)\s*(billion|million|thousand)?\s*$")


def abbreviate_number(x) -> str:
    """22_960_000_000 -> '22.96 billion'; values below 1,000 stay plain."""
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise InvalidNumberError(f"not a number: {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise InvalidNumberError(f"not a finite number: {x!r}")
    for scale, word in _SCALES:
        if abs(x) >= scale:
            return f"{x / scale:.2f} {word}"
    plain = round(x, 2)
    if plain == int(plain):
        return str(int(plain))
    return f"{plain:.2f}"


def parse_abbreviated(text: str) -> float:
    m = _ABBREVIATED.match(text)
    if not m:
        raise InvalidNumberError(f"not an abbreviated number: {text!r}")
    value = float(m.group(1))
    scale = {word: s for s, word in _SCALES}.get(m.group(2), 1.0)
    return value * scale


def _to_number(value, item, quarter):
    if value is None or (isinstance(value, str) and not value.strip()):
        return None
    if isinstance(value, bool):
        raise AlignmentError(f"line item {item!r} in {quarter} is not numeric: {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise AlignmentError(f"line item {item!r} in {quarter} is not numeric: {value!r}")
    if math.isnan(number):
        return None
    return number


def standardize_financials(reports: Sequence[QuarterlyStatement], n_quarters=N_QUARTERS) -> StandardizedFinancialTable:
    """
    Place the last `n_quarters` statements side by side, oldest first, with
    every number abbreviated. A line item absent in one quarter shows as
    "n/a"; a line item filed under different statements in different quarters,
    or holding a non-numeric value, is an AlignmentError naming the item.
    """
    if not reports:
        raise EmptyInputError("no quarterly statements")
    if n_quarters < 1:
        raise InvalidArgumentError("n_quarters must be >= 1")

    periods = {}
    for report in reports:
        try:
            period = pd.Period(report.quarter, freq="Q")
        except (ValueError, TypeError):
            raise AlignmentError(f"unrecognized quarter identifier {report.quarter!r}")
        if period in periods:
            raise AlignmentError(f"quarter {period} reported twice")
        periods[period] = report

    selected = sorted(periods)[-n_quarters:]
    for older, newer in zip(selected, selected[1:]):
        if newer != older + 1:
            raise AlignmentError(f"quarters are not consecutive: {older} then {newer}")

    item_section = {}
    rows = []
    values = {}
    for period in selected:
        report = periods[period]
        for attr, label in STATEMENT_SECTIONS:
            for item, raw in (getattr(report, attr) or {}).items():
                known = item_section.get(item)
                if known is not None and known != label:
                    raise AlignmentError(
                        f"line item {item!r} filed under {known} and {label} ({period})"
                    )
                if known is None:
                    item_section[item] = label
                    rows.append((label, item))
                values[(label, item, period)] = _to_number(raw, item, period)

    order = {label: i for i, (_, label) in enumerate(STATEMENT_SECTIONS)}
    rows.sort(key=lambda row: order[row[0]])
    columns = [str(p) for p in selected]
    data = []
    for label, item in rows:
        line = []
        for period in selected:
            number = values.get((label, item, period))
            line.append(MISSING_CELL if number is None else abbreviate_number(number))
        data.append(line)

    index = pd.MultiIndex.from_tuples(rows, names=["statement", "item"]) if rows else \
        pd.MultiIndex.from_tuples([], names=["statement", "item"])
    return StandardizedFinancialTable(quarters=columns, table=pd.DataFrame(data, index=index, columns=columns))


def summarize_fundamentals(ticker, table: StandardizedFinancialTable, client: LLMClient,
                           params: DecodingParams = DecodingParams()) -> FundamentalsSummary:
    if table.table.empty:
        raise EmptyInputError(f"no financial line items for {ticker}")
    prompt = FUNDAMENTALS_PROMPT.format(ticker=ticker, table=table.render())
    text = _require_text(client.complete(ANALYST_SYSTEM, prompt, params), f"fundamentals {ticker}")
    return FundamentalsSummary(ticker=ticker, quarters_covered=tuple(table.quarters), text=text)


# ----------------- news -----------------

_BOILERPLATE = re.compile(
    r"(click here|subscribe|sign up|read more|advertisement|all rights reserved|"
    r"cookie|newsletter|follow us|sponsored)",
    re.IGNORECASE,
)


def clean_articles(articles: Sequence[NewsArticle], ticker, company_name=None) -> List[NewsArticle]:
    """
    Strip boilerplate lines and drop articles that mention neither the ticker
    symbol nor the company name.
    """
    symbol = ticker.split(".")[0]
    symbol_re = re.compile(rf"\b{re.escape(symbol)}\b")
    name_re = re.compile(re.escape(company_name), re.IGNORECASE) if company_name else None

    kept = []
    for article in articles:
        lines = [ln.strip() for ln in article.body.splitlines()]
        body = "\n".join(ln for ln in lines if ln and not _BOILERPLATE.search(ln))
        text = f"{article.title}\n{body}"
        mentioned = symbol_re.search(text) or (name_re is not None and name_re.search(text))
        if not body or not mentioned:
            logger.debug("Dropped article %r for %s", article.title, ticker)
            continue
        kept.append(NewsArticle(article.ticker, article.date, article.title, body, article.kind))
    return kept


_FACTUAL_HEAD = re.compile(r"^\s*FACTUAL NEWS\s*:", re.IGNORECASE | re.MULTILINE)
_OPINION_HEAD = re.compile(r"^\s*ANALYST OPINIONS\s*:", re.IGNORECASE | re.MULTILINE)


def _split_sections(completion: str) -> Tuple[str, str]:
    facts_m = _FACTUAL_HEAD.search(completion)
    opin_m = _OPINION_HEAD.search(completion)
    if not facts_m and not opin_m:
        return completion.strip(), ""
    if facts_m and opin_m and facts_m.start() < opin_m.start():
        facts = completion[facts_m.end():opin_m.start()]
        opinions = completion[opin_m.end():]
    elif facts_m and opin_m:
        opinions = completion[opin_m.end():facts_m.start()]
        facts = completion[facts_m.end():]
    elif facts_m:
        facts, opinions = completion[facts_m.end():], ""
    else:
        facts, opinions = completion[:opin_m.start()], completion[opin_m.end():]
    facts, opinions = facts.strip(), opinions.strip()
    if not facts:
        facts = completion.strip()
    return facts, opinions


def _require_text(completion: str, what: str) -> str:
    text = (completion or "").strip()
    if not text:
        raise ParseError(f"empty completion for {what}", raw=completion or "")
    return text


def _article_block(articles: Sequence[NewsArticle]) -> str:
    if not articles:
        return "(none)"
    return "\n\n".join(f"- {a.title}\n{a.body}" for a in articles)


def summarize_daily_news(articles: Sequence[NewsArticle], ticker, date, client: LLMClient,
                         params: DecodingParams = DecodingParams()) -> DailyNewsSummary:
    """One summary per (ticker, date); no articles means an empty summary and no LLM call."""
    date = pd.Timestamp(date).date()
    others = sorted({a.ticker for a in articles if a.ticker != ticker})
    if others:
        raise InvalidInputError(f"articles for {others} passed to the {ticker} summarizer")
    if not articles:
        return DailyNewsSummary(ticker=ticker, date=date, text="", source_article_count=0)

    factual = [a for a in articles if a.kind == "factual"]
    opinion = [a for a in articles if a.kind == "opinion"]
    prompt = DAILY_NEWS_PROMPT.format(ticker=ticker, date=date.isoformat(),
                                      factual_block=FACTUAL_BLOCK, opinion_block=OPINION_BLOCK,
                                      factual=_article_block(factual), opinion=_article_block(opinion))
    completion = client.complete(ANALYST_SYSTEM, prompt, params)
    _require_text(completion, f"daily news {ticker} {date}")
    facts, opinions = _split_sections(completion)
    return DailyNewsSummary(ticker=ticker, date=date, text=facts,
                            source_article_count=len(articles), opinion_text=opinions)


def summarize_daily_batch(jobs, client: LLMClient, max_workers=LLM_MAX_IN_FLIGHT,
                          params: DecodingParams = DecodingParams()) -> List[DailyNewsSummary]:
    """
    jobs: iterable of (articles, ticker, date). Distinct (ticker, date) pairs
    run concurrently; results come back in job order.
    """
    jobs = list(jobs)

    def _one(job):
        articles, ticker, date = job
        return summarize_daily_news(articles, ticker, date, client, params)

    if max_workers <= 1 or len(jobs) <= 1:
        return [_one(job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_one, jobs))


def _dated_lines(dailies, attr) -> str:
    lines = [f"[{d.date.isoformat()}] {getattr(d, attr).strip()}" for d in dailies if getattr(d, attr).strip()]
    return "\n".join(lines) if lines else "(none)"


def _progressive_prompt(ticker, prev, dailies, month, start, end) -> str:
    if prev is None:
        current_label, current = "none", "No previous summary: this is the first month of coverage."
    else:
        current_label, current = f"as of {prev.as_of}", prev.text
    return PROGRESSIVE_PROMPT.format(
        ticker=ticker, current_label=current_label, current=current,
        start=start.isoformat(), end=end.isoformat(),
        factual=_dated_lines(dailies, "text"), opinions=_dated_lines(dailies, "opinion_text"),
        month=month,
    )


def update_progressive_summary(prev: Optional[ProgressiveNewsSummary], dailies: Sequence[DailyNewsSummary],
                               client: LLMClient, as_of=None, window_days=None,
                               params: DecodingParams = DecodingParams(),
                               context_chars=None) -> ProgressiveNewsSummary:
    """
    Next progressive summary from the previous one plus the daily summaries of
    the last `window_days` days of month `as_of` (default: the whole month).
    Oldest dailies are dropped first when the prompt exceeds the client's
    context budget. A month without news carries the previous text forward
    without an LLM call.
    """
    dailies = sorted(dailies, key=lambda d: d.date)
    tickers = {d.ticker for d in dailies}
    if prev is not None:
        tickers.add(prev.ticker)
    if len(tickers) > 1:
        raise InvalidInputError(f"mixed tickers in progressive update: {sorted(tickers)}")
    if not tickers:
        raise EmptyInputError("no daily summaries and no previous summary")
    ticker = tickers.pop()

    if as_of is not None:
        month = to_month(as_of)
    elif dailies:
        month = to_month(dailies[-1].date)
    else:
        month = prev.as_of + 1
    if prev is not None and not prev.as_of < month:
        raise InvalidInputError(f"previous summary {prev.as_of} is not older than {month}")

    tau = int(window_days) if window_days is not None else month.days_in_month
    if tau <= 0:
        raise InvalidArgumentError("window_days must be > 0")
    end = month.end_time.date()
    start = end - datetime.timedelta(days=tau - 1)
    outside = [d.date.isoformat() for d in dailies if not start <= d.date <= end]
    if outside:
        raise InvalidInputError(f"daily summaries outside {start}..{end}: {outside}")

    content = [d for d in dailies if d.source_article_count > 0]
    if not content:
        if prev is None:
            raise EmptyInputError(f"no news for {ticker} in {month} and no previous summary")
        logger.info("No news for %s in %s; carrying the previous summary forward", ticker, month)
        return ProgressiveNewsSummary(ticker, month, prev.text, tau, prev)

    limit = context_chars or getattr(client, "context_chars", LLM_CONTEXT_CHARS)
    dropped = 0
    prompt = _progressive_prompt(ticker, prev, content, month, start, end)
    while len(prompt) > limit and dropped < len(content) - 1:
        dropped += 1
        prompt = _progressive_prompt(ticker, prev, content[dropped:], month, start, end)
    if dropped:
        logger.warning("Truncated %s oldest daily summaries for %s %s to fit %s characters",
                       dropped, ticker, month, limit)

    text = _require_text(client.complete(ANALYST_SYSTEM, prompt, params), f"progressive news {ticker} {month}")
    return ProgressiveNewsSummary(ticker, month, text, tau, prev)


def walk_chain(summary: ProgressiveNewsSummary) -> List[ProgressiveNewsSummary]:
    """The summary followed by its predecessors, newest first."""
    chain = []
    node = summary
    while node is not None:
        chain.append(node)
        node = node.predecessor
    return chain


# ----------------- price dynamics -----------------

def _pct(value) -> str:
    return "n/a" if value is None or not math.isfinite(value) else f"{value * 100:.2f}%"


def _ratio(value) -> str:
    return "n/a" if value is None or not math.isfinite(value) else f"{value:.2f}"


def format_metric_lines(report: MetricsReport) -> List[str]:
    """One line per (window, entity) with every metric as it appears in the prompt."""
    roles = {t: "peer" for t in report.peers}
    roles[report.index] = "index"
    roles[report.target] = "target"
    lines = []
    for window in sorted(report.rows):
        lines.append(f"{window}-month window:")
        for ticker in report.entities:
            m = report.rows[window][ticker]
            lines.append(
                f"  {ticker} ({roles[ticker]}): cumulative return {_pct(m.cumulative_return)}, "
                f"volatility {_pct(m.volatility)}, Sharpe {_ratio(m.sharpe)}, "
                f"Sortino {_ratio(m.sortino)}, max drawdown {_pct(m.max_drawdown)}"
            )
    return lines


def render_dynamics_summary(report: MetricsReport, ticker, client: LLMClient,
                            params: DecodingParams = DecodingParams()) -> str:
    if report.target != ticker:
        raise InvalidInputError(f"report targets {report.target}, not {ticker}")
    if not report.rows:
        raise InvalidInputError(f"empty metrics report for {ticker}")
    for window, by_ticker in report.rows.items():
        if report.index not in by_ticker:
            raise InvalidInputError(f"report has no index row for the {window}-month window")
        missing = [t for t in report.entities if t not in by_ticker]
        if missing:
            raise InvalidInputError(f"report has no rows for {missing} in the {window}-month window")

    correlation = report.correlation.loc[report.entities, report.entities]
    prompt = DYNAMICS_PROMPT.format(
        ticker=ticker,
        as_of=report.as_of.date().isoformat(),
        metrics="\n".join(format_metric_lines(report)),
        corr_window=max(report.rows),
        correlation=correlation.to_string(float_format=lambda v: f"{v:.2f}", na_rep="n/a"),
        index=report.index,
    )
    return _require_text(client.complete(ANALYST_SYSTEM, prompt, params), f"price dynamics {ticker}")


# ----------------- macro -----------------

def summarize_macro(reports, as_of, client: LLMClient, params: DecodingParams = DecodingParams()) -> MacroSummary:
    """
    Two stages: each report is summarized on its own, then the union of the
    summaries is condensed into one view (N + 1 LLM calls for N reports).
    """
    texts, skipped = [], []
    for i, report in enumerate(reports, 1):
        text = report.text if isinstance(report, MacroReport) else str(report)
        if text.strip():
            texts.append(text)
        else:
            skipped.append(f"{report.source} {report.date}" if isinstance(report, MacroReport) else f"report {i}")
    if skipped:
        logger.warning("Skipping empty macro reports: %s", ", ".join(skipped))
    if not texts:
        raise EmptyInputError("no macro reports to summarize")

    as_of = pd.Timestamp(as_of).date()
    stage_one = []
    for i, text in enumerate(texts, 1):
        summary = client.complete(ANALYST_SYSTEM, MACRO_REPORT_PROMPT.format(report=text.strip()), params)
        stage_one.append(_require_text(summary, f"macro report {i}"))

    joined = "\n\n".join(f"Report {i}:\n{s}" for i, s in enumerate(stage_one, 1))
    prompt = MACRO_SYNTHESIS_PROMPT.format(count=len(stage_one), as_of=as_of.isoformat(), summaries=joined)
    text = _require_text(client.complete(ANALYST_SYSTEM, prompt, params), f"macro synthesis {as_of}")
    return MacroSummary(as_of=as_of, text=text, report_count=len(stage_one), report_summaries=tuple(stage_one))


def macro_run_dates(start, end, every_days=MACRO_CADENCE_DAYS) -> List[datetime.date]:
    """Biweekly (by default) run dates from `start` through `end`."""
    return [ts.date() for ts in pd.date_range(pd.Timestamp(start), pd.Timestamp(end), freq=f"{every_days}D")]


def latest_macro(as_of, summaries: Sequence[MacroSummary]) -> Optional[MacroSummary]:
    """Newest summary dated on or before `as_of` (a month means its last day), or None."""
    cutoff = as_of.end_time.date() if isinstance(as_of, pd.Period) else pd.Timestamp(as_of).date()
    eligible = [s for s in summaries if s.as_of <= cutoff]
    return max(eligible, key=lambda s: s.as_of) if eligible else None


__all__ = [
    "NewsArticle",
    "DailyNewsSummary",
    "ProgressiveNewsSummary",
    "QuarterlyStatement",
    "StandardizedFinancialTable",
    "FundamentalsSummary",
    "MacroReport",
    "MacroSummary",
    "to_month",
    "abbreviate_number",
    "parse_abbreviated",
    "standardize_financials",
    "summarize_fundamentals",
    "clean_articles",
    "summarize_daily_news",
    "summarize_daily_batch",
    "update_progressive_summary",
    "walk_chain",
    "format_metric_lines",
    "render_dynamics_summary",
    "summarize_macro",
    "macro_run_dates",
    "latest_macro",
]
