"""
signalengine.py

Turns the four analyses of a stock (news, price dynamics, macro environment,
fundamentals) into a buy / hold / sell signal with its explanation, and ranks
a month's buy explanations on a 0-10 scale.

A decision is always parsed from the completion, never defaulted: a reply
without a usable decision token is a ParseError carrying the raw text.
"""

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from constants import GPT_SCORE_THRESHOLD, LLM_MAX_IN_FLIGHT, SCORE_MAX, SCORE_MIN, SIGNAL_HORIZON
from errors import InvalidContextError, InvalidInputError, ParseError, RangeError, RankingError
from peersimilarity import CachedEmbedder, cosine_similarity
from providers.iface import DecodingParams, EmbeddingProvider, LLMClient
from summarizers import FundamentalsSummary, to_month
from utils.helpers import safe_call
from utils.logging_setup import logger


class Decision(IntEnum):
    BUY = 1
    HOLD = 0
    SELL = -1

    @classmethod
    def from_token(cls, token: str) -> "Decision":
        return cls[token.strip().upper()]


NEWS_HEADER = "### News Analysis"
DYNAMICS_HEADER = "### Price Dynamics Analysis"
MACRO_HEADER = "### Macroeconomic Environment Analysis"
FUNDAMENTALS_HEADER = "### Fundamentals Analysis"
SECTION_HEADERS = (NEWS_HEADER, DYNAMICS_HEADER, MACRO_HEADER, FUNDAMENTALS_HEADER)
MACRO_ABSENT_NOTE = "Macroeconomic environment: no macroeconomic summary is available for this month."

SIGNAL_SYSTEM = "You are an expert financial analyst."
SIGNAL_PROMPT = """You are an expert financial analyst. Decide whether {ticker} is a "buy", "hold" or "sell" for a {horizon} horizon as of {as_of}. "Buy" means holding a long position in the portfolio, "sell" means holding a short position and "hold" means no position.

{sections}

Instructions: reason step by step through the most important developments in the analyses above, weigh them against each other and explain your reasoning. Finish with a single final line of the form "Decision: <buy|hold|sell>"."""

RANKING_INSTRUCTION = "rank these explanations on a scale of 0 to 10"
RANKING_PROMPT = """You are an expert financial analyst. Below are the explanations behind the "buy" signals of {month}, one per identifier.

{entries}

Instructions: {instruction}, with 10 indicating a strong buy. Answer with one line per identifier in the form "<identifier>: <score>" using whole numbers, and score every identifier listed."""


@dataclass(frozen=True)
class SignalContext:
    ticker: str
    as_of: pd.Period
    news: str
    dynamics: str
    fundamentals: str
    macro: Optional[str] = None
    horizon: str = SIGNAL_HORIZON

    def __post_init__(self):
        if not self.ticker:
            raise InvalidContextError("signal context without ticker")
        object.__setattr__(self, "as_of", to_month(self.as_of))
        for name in ("news", "dynamics", "fundamentals"):
            value = getattr(self, name)
            if value is None or not str(value).strip():
                raise InvalidContextError(f"{self.ticker} {self.as_of}: missing {name} analysis")
        if self.macro is not None and not self.macro.strip():
            object.__setattr__(self, "macro", None)


@dataclass(frozen=True)
class Signal:
    ticker: str
    as_of: pd.Period
    decision: Decision
    explanation: str
    raw_completion: str = ""


@dataclass(frozen=True)
class RankedSignal:
    signal: Signal
    score: int

    def __post_init__(self):
        if self.signal.decision is not Decision.BUY:
            raise InvalidInputError(f"{self.signal.ticker}: only buy signals are ranked")
        if not SCORE_MIN <= self.score <= SCORE_MAX:
            raise RangeError(f"{self.signal.ticker}: score {self.score} outside {SCORE_MIN}-{SCORE_MAX}")


@dataclass(frozen=True)
class ComponentStats:
    count: int
    mean: Optional[float]
    std: Optional[float]
    min: Optional[float]
    max: Optional[float]


# ----------------- prompt and parsing -----------------

def build_signal_prompt(ctx: SignalContext) -> str:
    sections = [f"{NEWS_HEADER}\n{ctx.news.strip()}", f"{DYNAMICS_HEADER}\n{ctx.dynamics.strip()}"]
    if ctx.macro is not None:
        sections.append(f"{MACRO_HEADER}\n{ctx.macro.strip()}")
    else:
        sections.append(MACRO_ABSENT_NOTE)
    sections.append(f"{FUNDAMENTALS_HEADER}\n{ctx.fundamentals.strip()}")
    return SIGNAL_PROMPT.format(ticker=ctx.ticker, horizon=ctx.horizon, as_of=ctx.as_of,
                                sections="\n\n".join(sections))


_DECISION_LINE = re.compile(
    r"^[ \t>*_#-]*(?:final[ \t]+)?decision[ \t*_]*[:=][ \t*_]*([A-Za-z]*)[^\n]*",
    re.IGNORECASE | re.MULTILINE,
)
_TOKEN = re.compile(r"\b(buy|hold|sell)\b", re.IGNORECASE)
_SENTENCE_BREAK = re.compile(r"(?<=[.!?])\s+|\n+")


def parse_decision(completion: str) -> Decision:
    """
    The verdict of a completion. A structured "Decision: <token>" line wins;
    otherwise the last sentence must name exactly one of buy, hold, sell.
    """
    text = completion or ""
    structured = [m.group(1).lower() for m in _DECISION_LINE.finditer(text)]
    if structured:
        unknown = sorted({t for t in structured if t not in ("buy", "hold", "sell")})
        if unknown:
            raise ParseError(f"unrecognized decision token {unknown[0]!r}", raw=text)
        distinct = set(structured)
        if len(distinct) > 1:
            raise ParseError(f"conflicting decision lines: {sorted(distinct)}", raw=text)
        return Decision.from_token(distinct.pop())

    sentences = [s for s in _SENTENCE_BREAK.split(text.strip()) if s.strip()]
    if not sentences:
        raise ParseError("empty completion", raw=text)
    tokens = {t.lower() for t in _TOKEN.findall(sentences[-1])}
    if len(tokens) != 1:
        what = "no decision token" if not tokens else f"conflicting decision tokens {sorted(tokens)}"
        raise ParseError(f"{what} in the final sentence", raw=text)
    return Decision.from_token(tokens.pop())


def generate_signal(ctx: SignalContext, client: LLMClient, params: DecodingParams = DecodingParams()) -> Signal:
    completion = client.complete(SIGNAL_SYSTEM, build_signal_prompt(ctx), params)
    try:
        decision = parse_decision(completion)
    except ParseError as e:
        raise ParseError(f"{ctx.ticker} {ctx.as_of}: {e}", raw=completion) from e
    explanation = _DECISION_LINE.sub("", completion).strip()
    if decision is not Decision.HOLD and not explanation:
        raise ParseError(f"{ctx.ticker} {ctx.as_of}: {decision.name} without explanation", raw=completion)
    return Signal(ticker=ctx.ticker, as_of=ctx.as_of, decision=decision,
                  explanation=explanation, raw_completion=completion)


def generate_signals(contexts: Sequence[SignalContext], client: LLMClient, max_workers=LLM_MAX_IN_FLIGHT,
                     errors: Optional[list] = None,
                     params: DecodingParams = DecodingParams()) -> Dict[str, Signal]:
    """
    Signals for one month, stocks in parallel. A stock whose signal fails is
    logged and recorded in `errors` and left out of the result.
    """
    def _one(ctx):
        return safe_call(generate_signal, ctx, client, params, errors=errors,
                         context=f"signal {ctx.ticker} {ctx.as_of}")

    if max_workers <= 1 or len(contexts) <= 1:
        results = [_one(c) for c in contexts]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(_one, contexts))
    return {s.ticker: s for s in results if s is not None}


# ----------------- ranking -----------------

_SCORE_LINE = re.compile(r"^[ \t*\-\[]*(E\d+)\]?[ \t*]*[:=\-][ \t*]*(-?\d+(?:\.\d+)?)(?:[ \t]*/[ \t]*10)?", re.MULTILINE)


def _ranking_entries(ids, by_id, order, include_names) -> str:
    lines = []
    for i in order:
        sid = ids[i]
        head = f"[{sid}] {by_id[sid].ticker}" if include_names else f"[{sid}]"
        lines.append(f"{head}\n{by_id[sid].explanation.strip()}")
    return "\n\n".join(lines)


def _parse_scores(completion: str, wanted) -> Dict[str, int]:
    scores = {}
    for sid, raw in _SCORE_LINE.findall(completion or ""):
        if sid not in wanted:
            logger.debug("Ignoring score for unknown identifier %s", sid)
            continue
        value = float(raw)
        if value != int(value):
            raise RangeError(f"{sid}: score {raw} is not a whole number")
        value = int(value)
        if not SCORE_MIN <= value <= SCORE_MAX:
            raise RangeError(f"{sid}: score {value} outside {SCORE_MIN}-{SCORE_MAX}")
        if sid in scores and scores[sid] != value:
            raise RankingError(f"{sid} scored twice ({scores[sid]} and {value})", raw=completion)
        scores[sid] = value
    return scores


def rank_buy_explanations(signals: Sequence[Signal], client: LLMClient, seed=None, rng=None,
                          include_names=False, params: DecodingParams = DecodingParams()) -> List[RankedSignal]:
    """
    Score every buy explanation of one month in a single call. Explanations
    get stable identifiers (E01, E02, ... in ticker order) and are shown in a
    seeded random order. Identifiers the reply leaves unscored are asked for
    once more; still missing is a RankingError.
    """
    if not signals:
        return []
    months = {s.as_of for s in signals}
    if len(months) > 1:
        raise InvalidInputError(f"ranking spans several months: {sorted(str(m) for m in months)}")
    not_buy = sorted(s.ticker for s in signals if s.decision is not Decision.BUY)
    if not_buy:
        raise InvalidInputError(f"only buy signals are ranked, got {not_buy}")
    tickers = [s.ticker for s in signals]
    if len(set(tickers)) != len(tickers):
        raise InvalidInputError("a ticker appears twice in one month's ranking")

    rng = rng if rng is not None else np.random.default_rng(seed)
    ordered = sorted(signals, key=lambda s: s.ticker)
    width = max(2, len(str(len(ordered))))
    ids = [f"E{i:0{width}d}" for i in range(1, len(ordered) + 1)]
    by_id = dict(zip(ids, ordered))
    month = ordered[0].as_of

    def _ask(wanted_ids):
        order = [ids.index(sid) for sid in wanted_ids]
        order = [order[k] for k in rng.permutation(len(order))]
        prompt = RANKING_PROMPT.format(month=month, instruction=RANKING_INSTRUCTION,
                                       entries=_ranking_entries(ids, by_id, order, include_names))
        completion = client.complete(SIGNAL_SYSTEM, prompt, params)
        return completion, _parse_scores(completion, set(wanted_ids))

    completion, scores = _ask(ids)
    missing = [sid for sid in ids if sid not in scores]
    if missing:
        logger.warning("%s: %s explanations unscored, asking again", month, len(missing))
        completion, retry = _ask(missing)
        scores.update(retry)
        missing = [sid for sid in ids if sid not in scores]
        if missing:
            raise RankingError(f"{month}: no score for {missing}", raw=completion)

    ranked = [RankedSignal(by_id[sid], scores[sid]) for sid in ids]
    ranked.sort(key=lambda r: (-r.score, r.signal.ticker))
    return ranked


def partition_by_score(ranked: Sequence[RankedSignal], threshold=GPT_SCORE_THRESHOLD
                       ) -> Tuple[List[RankedSignal], List[RankedSignal]]:
    """(score > threshold, score <= threshold)"""
    high = [r for r in ranked if r.score > threshold]
    low = [r for r in ranked if r.score <= threshold]
    return high, low


def carry_forward_fundamentals(summaries: Sequence[FundamentalsSummary], as_of) -> Optional[FundamentalsSummary]:
    """Newest fundamentals summary whose last quarter closed on or before the end of month `as_of`."""
    month_end = to_month(as_of).end_time
    eligible = [s for s in summaries if s.last_quarter.end_time <= month_end]
    if not eligible:
        return None
    return max(eligible, key=lambda s: s.last_quarter)


# ----------------- text similarity -----------------

COMPONENTS = ("news", "dynamics", "fundamentals", "macro")


def signal_component_similarity(signals: Sequence[Signal], contexts: Sequence[SignalContext],
                                provider: EmbeddingProvider) -> Dict[str, ComponentStats]:
    """
    Cosine similarity between each explanation and each of the four texts
    that went into it, aggregated per component. Signals without explanation
    and months without macro text are skipped.
    """
    if len(signals) != len(contexts):
        raise InvalidInputError(f"{len(signals)} signals but {len(contexts)} contexts")
    for s, c in zip(signals, contexts):
        if (s.ticker, s.as_of) != (c.ticker, c.as_of):
            raise InvalidInputError(f"signal {s.ticker} {s.as_of} paired with context {c.ticker} {c.as_of}")

    embedder = provider if isinstance(provider, CachedEmbedder) else CachedEmbedder(provider)
    values = {name: [] for name in COMPONENTS}
    for s, c in zip(signals, contexts):
        if not s.explanation.strip():
            continue
        anchor = embedder.embed(s.explanation)
        for name in COMPONENTS:
            text = getattr(c, name)
            if text is None or not text.strip():
                continue
            values[name].append(cosine_similarity(anchor, embedder.embed(text)))

    stats = {}
    for name, sims in values.items():
        if not sims:
            stats[name] = ComponentStats(0, None, None, None, None)
            continue
        arr = np.asarray(sims, dtype=float)
        std = float(arr.std(ddof=1)) if arr.size > 1 else None
        stats[name] = ComponentStats(int(arr.size), float(arr.mean()), std, float(arr.min()), float(arr.max()))
    return stats


__all__ = [
    "Decision",
    "SignalContext",
    "Signal",
    "RankedSignal",
    "ComponentStats",
    "SECTION_HEADERS",
    "RANKING_INSTRUCTION",
    "build_signal_prompt",
    "parse_decision",
    "generate_signal",
    "generate_signals",
    "rank_buy_explanations",
    "partition_by_score",
    "carry_forward_fundamentals",
    "signal_component_similarity",
]
