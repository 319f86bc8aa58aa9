"""
datastore.py

File formats and persistence:

- prices CSV        date,ticker,adj_close
- signals CSV       as_of,ticker,decision,score
- caps CSV          month,ticker,market_cap
- returns CSV       month,ticker,return
- descriptions JSON [{"ticker", "name", "text"}]
- news JSON-lines   {"ticker", "date", "title", "body", "kind"}
- fundamentals JSON {ticker: [{"quarter", "balance_sheet", "income_statement", "cash_flow"}]}
- macro directory   YYYY-MM-DD_<source>.txt
- SummaryStore      <root>/<kind>/<ticker>/<as_of>.json, canonical JSON
- RunManifest and the backtest / bootstrap report writers
"""

import csv
import datetime
import json
import math
import os
import re
import tempfile
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from backtester import CapWeights
from constants import COMPONENT_VERSIONS
from errors import IntegrityError, NotFoundError, ParseError, ValidationError
from evallab import MonthlyReturnMatrix, SignalMatrix
from marketmetrics import PricePanel
from peersimilarity import StockDescription
from summarizers import (
    DailyNewsSummary,
    FundamentalsSummary,
    MacroReport,
    MacroSummary,
    NewsArticle,
    ProgressiveNewsSummary,
    QuarterlyStatement,
    to_month,
)
from utils.helpers import canonical_json, sha256_file, sha256_text
from utils.logging_setup import logger

PRICE_COLUMNS = ("date", "ticker", "adj_close")
SIGNAL_COLUMNS = ("as_of", "ticker", "decision", "score")
CAP_COLUMNS = ("month", "ticker", "market_cap")
RETURN_COLUMNS = ("month", "ticker", "return")


def _number(value: float) -> str:
    return "" if value is None or (isinstance(value, float) and math.isnan(value)) else repr(float(value))


def _write_text(path, text: str):
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    return path


def write_json(path, payload) -> Path:
    return _write_text(path, canonical_json(payload))


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def _rows(path, columns: Sequence[str]):
    """(line number, row) pairs from a CSV that must carry `columns`; malformed rows raise ParseError."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            return
        missing = [c for c in columns if c not in reader.fieldnames]
        if missing:
            raise ParseError(f"{path}: missing columns {missing}", line=1)
        for row in reader:
            if None in row or any(row.get(c) is None for c in columns):
                raise ParseError(f"{path}: wrong number of fields", line=reader.line_num)
            yield reader.line_num, row


def _to_csv(path, columns, records: Iterable[Sequence[str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(records)
    return path


# ----------------- prices -----------------

def load_prices(path) -> PricePanel:
    records = {}
    for line, row in _rows(path, PRICE_COLUMNS):
        try:
            date = pd.Timestamp(datetime.date.fromisoformat(row["date"].strip()))
            ticker = row["ticker"].strip()
            raw = row["adj_close"].strip()
            price = float(raw) if raw else np.nan
        except ValueError as e:
            raise ParseError(f"{path}: malformed price row ({e})", line=line)
        if not ticker:
            raise ParseError(f"{path}: empty ticker", line=line)
        if not math.isnan(price) and not (math.isfinite(price) and price > 0):
            raise ParseError(f"{path}: price must be finite and > 0, got {raw}", line=line)
        key = (date, ticker)
        if key in records:
            raise IntegrityError(f"{path}: duplicate row for {ticker} on {date.date()} (line {line})")
        records[key] = price

    if not records:
        return PricePanel(pd.DataFrame(index=pd.DatetimeIndex([]), dtype=float))
    series = pd.Series(records)
    frame = series.unstack().sort_index()
    frame = frame[sorted(frame.columns)]
    frame.index = pd.DatetimeIndex(frame.index).as_unit("ns")
    frame.index.name = None
    frame.columns.name = None
    return PricePanel(frame.astype(float))


def write_prices(panel: PricePanel, path) -> Path:
    prices = panel.prices
    records = []
    for date, row in prices.iterrows():
        for ticker in sorted(prices.columns):
            records.append((date.date().isoformat(), ticker, _number(row[ticker])))
    return _to_csv(path, PRICE_COLUMNS, records)


# ----------------- signals -----------------

def _read_signals(path):
    """Decisions keyed by (month, ticker); None where the decision column is blank."""
    decisions, scores = {}, {}
    for line, row in _rows(path, SIGNAL_COLUMNS):
        try:
            month = to_month(row["as_of"].strip())
        except ValueError:
            raise ParseError(f"{path}: bad as_of {row['as_of']!r}", line=line)
        ticker = row["ticker"].strip()
        raw = row["decision"].strip()
        if raw and raw not in ("-1", "0", "1"):
            raise ValidationError(f"{path}: decision must be -1, 0 or 1, got {raw!r}", line=line)
        key = (month, ticker)
        if key in decisions:
            raise IntegrityError(f"{path}: duplicate signal for {ticker} in {month} (line {line})")
        decisions[key] = int(raw) if raw else None
        score = (row.get("score") or "").strip()
        if score:
            if not re.fullmatch(r"\d+", score) or not 0 <= int(score) <= 10:
                raise ValidationError(f"{path}: score must be a whole number 0-10, got {score!r}", line=line)
            if decisions[key] != 1:
                raise ValidationError(f"{path}: only buy signals carry a score", line=line)
            scores[key] = float(score)
    return decisions, scores


def _decision_frame(decisions) -> pd.DataFrame:
    frame = pd.Series(decisions, dtype=float).unstack()
    frame.index = pd.PeriodIndex(frame.index, freq="M")
    return frame.sort_index()[sorted(frame.columns)]


def _gaps(frame) -> List[Tuple[pd.Period, str]]:
    return [(frame.index[i], frame.columns[j]) for i, j in np.argwhere(frame.isna().to_numpy())]


def signal_gaps(path) -> List[Tuple[pd.Period, str]]:
    """(month, ticker) cells with no decision: blank in the file or absent from it."""
    decisions, _ = _read_signals(path)
    return _gaps(_decision_frame(decisions)) if decisions else []


def load_signals(path, allow_missing=False) -> Tuple[SignalMatrix, pd.DataFrame]:
    """
    SignalMatrix plus a month x ticker score frame (NaN where unscored).
    A cell without a decision (a failed signal) raises IntegrityError; with
    `allow_missing` it holds no position instead and is logged.
    """
    decisions, scores = _read_signals(path)
    if not decisions:
        empty = pd.DataFrame(index=pd.PeriodIndex([], freq="M"), dtype=float)
        logger.warning("%s holds no signals", path)
        return SignalMatrix(empty.astype(np.int8)), empty

    frame = _decision_frame(decisions)
    gaps = _gaps(frame)
    if gaps:
        preview = ", ".join(f"{t} {m}" for m, t in gaps[:5])
        if not allow_missing:
            raise IntegrityError(f"{path}: {len(gaps)} (month, ticker) cells have no decision ({preview})")
        logger.warning("%s: %s cells have no decision and hold no position (%s)", path, len(gaps), preview)
    matrix = SignalMatrix(frame.fillna(0))
    if not np.any(matrix.values != 0):
        logger.warning("%s: no active signals, every cell is a hold", path)

    score_frame = pd.DataFrame(np.nan, index=matrix.months, columns=matrix.tickers)
    for (month, ticker), value in scores.items():
        score_frame.loc[month, ticker] = value
    return matrix, score_frame


def write_signals(path, signals: SignalMatrix, scores: Optional[pd.DataFrame] = None, missing=()) -> Path:
    """One row per (month, ticker); cells in `missing` are written with a blank decision."""
    missing = set(missing)
    records = []
    for month in signals.months:
        for ticker in sorted(signals.tickers):
            if (month, ticker) in missing:
                records.append((str(month), ticker, "", ""))
                continue
            decision = int(signals.m.loc[month, ticker])
            score = ""
            if scores is not None and month in scores.index and ticker in scores.columns:
                value = scores.loc[month, ticker]
                score = "" if pd.isna(value) else str(int(value))
            records.append((str(month), ticker, str(decision), score))
    return _to_csv(path, SIGNAL_COLUMNS, records)


# ----------------- other inputs -----------------

def _month_frame(path, columns, value_column) -> pd.DataFrame:
    records = {}
    for line, row in _rows(path, columns):
        try:
            month = to_month(row[columns[0]].strip())
            raw = row[value_column].strip()
            value = float(raw) if raw else np.nan
        except ValueError as e:
            raise ParseError(f"{path}: malformed row ({e})", line=line)
        key = (month, row["ticker"].strip())
        if key in records:
            raise IntegrityError(f"{path}: duplicate row for {key[1]} in {key[0]} (line {line})")
        records[key] = value
    if not records:
        return pd.DataFrame(index=pd.PeriodIndex([], freq="M"), dtype=float)
    frame = pd.Series(records).unstack()
    frame.index = pd.PeriodIndex(frame.index, freq="M")
    return frame.sort_index()[sorted(frame.columns)].astype(float)


def load_caps(path) -> CapWeights:
    return CapWeights(_month_frame(path, CAP_COLUMNS, "market_cap"))


def load_monthly_returns(path) -> MonthlyReturnMatrix:
    return MonthlyReturnMatrix(_month_frame(path, RETURN_COLUMNS, "return"))


def write_monthly_returns(path, returns: MonthlyReturnMatrix) -> Path:
    records = [
        (str(month), ticker, _number(returns.r.loc[month, ticker]))
        for month in returns.months
        for ticker in sorted(returns.tickers)
    ]
    return _to_csv(path, RETURN_COLUMNS, records)


def load_descriptions(path) -> List[StockDescription]:
    return [StockDescription(d["ticker"], d["text"]) for d in _description_docs(path)]


def load_company_names(path) -> Dict[str, str]:
    return {d["ticker"]: d["name"] for d in _description_docs(path) if d.get("name")}


def _description_docs(path) -> List[dict]:
    docs = read_json(path)
    if isinstance(docs, dict):
        docs = [{"ticker": t, "text": text} for t, text in docs.items()]
    for i, doc in enumerate(docs):
        if not isinstance(doc, dict) or "ticker" not in doc or "text" not in doc:
            raise ParseError(f"{path}: description #{i} needs ticker and text")
    return docs


def load_news(path) -> List[NewsArticle]:
    articles = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                articles.append(NewsArticle(
                    ticker=doc["ticker"],
                    date=datetime.date.fromisoformat(doc["date"]),
                    title=doc.get("title", ""),
                    body=doc.get("body", ""),
                    kind=doc.get("kind", "factual"),
                ))
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"{path}: bad news record ({e})", raw=line, line=line_no)
    return articles


def load_fundamentals(path) -> Dict[str, List[QuarterlyStatement]]:
    docs = read_json(path)
    out = {}
    for ticker, reports in docs.items():
        out[ticker] = [
            QuarterlyStatement(
                quarter=r["quarter"],
                balance_sheet=r.get("balance_sheet", {}),
                income_statement=r.get("income_statement", {}),
                cash_flow=r.get("cash_flow", {}),
            )
            for r in reports
        ]
    return out


_MACRO_FILE = re.compile(r"^(\d{4}-\d{2}-\d{2})_(.+)\.txt$")


def load_macro_reports(directory) -> List[MacroReport]:
    reports = []
    for path in sorted(Path(directory).glob("*.txt")):
        m = _MACRO_FILE.match(path.name)
        if not m:
            logger.warning("Skipping macro file with unexpected name: %s", path.name)
            continue
        reports.append(MacroReport(datetime.date.fromisoformat(m.group(1)), m.group(2),
                                   path.read_text(encoding="utf-8")))
    return reports


def save_universe_cache(path, cache: Dict[str, List[dict]]) -> Path:
    return write_json(path, cache)


def load_universe_cache(path) -> Dict[str, List[dict]]:
    return read_json(path)


# ----------------- summary store -----------------

SUMMARY_KINDS = ("daily-news", "news", "fundamentals", "dynamics", "macro", "signal")
MARKET_WIDE = "_market"
_KEY_PART = re.compile(r"^[A-Za-z0-9._-]+$")


class SummaryStore:
    """
    Summary documents keyed by (kind, ticker, as_of) under `root`, written as
    canonical JSON so a document reads back byte-identical. Writes are
    serialized through one lock per store. `reads` maps the key of every
    document read since the last `reset_reads` to its SHA-256.
    """

    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()
        self.reads: Dict[str, str] = {}

    def path(self, kind, ticker, as_of) -> Path:
        if kind not in SUMMARY_KINDS:
            raise ValidationError(f"unknown summary kind {kind!r}")
        ticker = ticker or MARKET_WIDE
        as_of = str(as_of)
        for part in (ticker, as_of):
            if not _KEY_PART.match(part):
                raise ValidationError(f"invalid key part {part!r}")
        return self.root / kind / ticker / f"{as_of}.json"

    @staticmethod
    def key(kind, ticker, as_of) -> str:
        return f"{kind}/{ticker or MARKET_WIDE}/{as_of}"

    def put(self, kind, ticker, as_of, document: dict) -> str:
        """Store a document; returns its SHA-256."""
        text = canonical_json(document)
        with self._lock:
            _write_text(self.path(kind, ticker, as_of), text)
        return sha256_text(text)

    def get_bytes(self, kind, ticker, as_of) -> bytes:
        path = self.path(kind, ticker, as_of)
        if not path.exists():
            raise NotFoundError(f"no {kind} summary for {ticker or MARKET_WIDE} {as_of}")
        data = path.read_bytes()
        with self._lock:
            self.reads[self.key(kind, ticker, as_of)] = sha256_text(data.decode("utf-8"))
        return data

    def reset_reads(self):
        with self._lock:
            self.reads = {}

    def reads_digest(self) -> Optional[str]:
        """One SHA-256 over every (key, document hash) read, or None when nothing was read."""
        with self._lock:
            reads = dict(self.reads)
        return sha256_text(canonical_json(reads)) if reads else None

    def get(self, kind, ticker, as_of) -> dict:
        return json.loads(self.get_bytes(kind, ticker, as_of).decode("utf-8"))

    def exists(self, kind, ticker, as_of) -> bool:
        return self.path(kind, ticker, as_of).exists()

    def keys(self, kind=None, ticker=None) -> List[Tuple[str, str, str]]:
        kinds = [kind] if kind else list(SUMMARY_KINDS)
        out = []
        for k in kinds:
            base = self.root / k
            if not base.is_dir():
                continue
            for path in sorted(base.glob("*/*.json")):
                if ticker is None or path.parent.name == ticker:
                    out.append((k, path.parent.name, path.stem))
        return out

    def count(self, kind=None) -> int:
        return len(self.keys(kind))

    def load_predecessor(self, kind, ticker, as_of) -> dict:
        doc = self.get(kind, ticker, as_of)
        link = doc.get("predecessor")
        if not link:
            raise NotFoundError(f"{self.key(kind, ticker, as_of)} is the root of its chain")
        k, t, a = link.split("/")
        return self.get(k, t, a)


def daily_to_doc(summary: DailyNewsSummary) -> dict:
    return {
        "ticker": summary.ticker,
        "date": summary.date.isoformat(),
        "text": summary.text,
        "opinion_text": summary.opinion_text,
        "source_article_count": summary.source_article_count,
    }


def doc_to_daily(doc: dict) -> DailyNewsSummary:
    return DailyNewsSummary(doc["ticker"], datetime.date.fromisoformat(doc["date"]), doc["text"],
                            doc["source_article_count"], doc.get("opinion_text", ""))


def progressive_to_doc(summary: ProgressiveNewsSummary) -> dict:
    prev = summary.predecessor
    return {
        "ticker": summary.ticker,
        "as_of": str(summary.as_of),
        "text": summary.text,
        "window_days": summary.window_days,
        "predecessor": SummaryStore.key("news", prev.ticker, prev.as_of) if prev is not None else None,
    }


def load_progressive(store: SummaryStore, ticker, as_of) -> ProgressiveNewsSummary:
    """Rebuild a progressive summary with its whole predecessor chain."""
    docs = [store.get("news", ticker, str(to_month(as_of)))]
    while docs[-1].get("predecessor"):
        _, t, a = docs[-1]["predecessor"].split("/")
        docs.append(store.get("news", t, a))
    node = None
    for doc in reversed(docs):
        node = ProgressiveNewsSummary(doc["ticker"], to_month(doc["as_of"]), doc["text"],
                                      doc["window_days"], node)
    return node


def fundamentals_to_doc(summary: FundamentalsSummary) -> dict:
    return {"ticker": summary.ticker, "quarters_covered": list(summary.quarters_covered), "text": summary.text}


def doc_to_fundamentals(doc: dict) -> FundamentalsSummary:
    return FundamentalsSummary(doc["ticker"], tuple(doc["quarters_covered"]), doc["text"])


def macro_to_doc(summary: MacroSummary) -> dict:
    return {
        "as_of": summary.as_of.isoformat(),
        "text": summary.text,
        "report_count": summary.report_count,
        "report_summaries": list(summary.report_summaries),
    }


def doc_to_macro(doc: dict) -> MacroSummary:
    return MacroSummary(datetime.date.fromisoformat(doc["as_of"]), doc["text"], doc["report_count"],
                        tuple(doc.get("report_summaries", ())))


# ----------------- manifest and reports -----------------

@dataclass
class RunManifest:
    """
    Identity of a run. `manifest_hash` covers the command, the effective
    config hash, input content hashes and component versions; timestamps are
    the data window of the run, not the wall clock, so identical runs write
    identical manifests.
    """
    command: str
    config_hash: str
    inputs: Dict[str, str] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=lambda: dict(COMPONENT_VERSIONS))
    data_start: Optional[str] = None
    data_end: Optional[str] = None
    outputs: Dict[str, str] = field(default_factory=dict)
    errors: List[dict] = field(default_factory=list)

    def add_input(self, name, path) -> str:
        digest = sha256_file(path)
        self.inputs[name] = digest
        return digest

    def add_output(self, name, path) -> str:
        digest = sha256_file(path)
        self.outputs[name] = digest
        return digest

    @property
    def manifest_hash(self) -> str:
        return sha256_text(canonical_json({
            "command": self.command,
            "config_hash": self.config_hash,
            "inputs": self.inputs,
            "versions": self.versions,
        }))

    @property
    def run_id(self) -> str:
        return self.manifest_hash[:16]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["errors"] = sorted(self.errors, key=lambda e: (e.get("context", ""), e.get("error", "")))
        doc["manifest_hash"] = self.manifest_hash
        doc["run_id"] = self.run_id
        doc["status"] = "ok" if self.ok else "errors"
        return doc

    def write(self, path) -> Path:
        return write_json(path, self.to_dict())


RATIO_COLUMNS = ("sharpe", "sortino")


def render_summary_table(table: pd.DataFrame) -> str:
    """Aligned text: ratios with two decimals, everything else in percent."""
    def _fmt(col, v):
        if v is None or pd.isna(v):
            return "n/a"
        return f"{v:.2f}" if col in RATIO_COLUMNS else f"{100 * v:.2f}%"

    pretty = table.copy()
    for col in pretty.columns[1:]:
        pretty[col] = [_fmt(col, v) for v in table[col]]
    return pretty.to_string(index=False)


def write_backtest_reports(directory, reports: dict, table: pd.DataFrame) -> List[Path]:
    """Per-strategy JSON, the combined CSV and text table, and the wealth-curve CSV."""
    directory = Path(directory)
    written = []
    for label, report in reports.items():
        written.append(write_json(directory / f"{label}.json", report.to_dict()))

    written.append(_write_text(directory / "summary.csv", table.to_csv(index=False, lineterminator="\n")))
    written.append(_write_text(directory / "summary.txt", render_summary_table(table) + "\n"))

    curves = pd.DataFrame({label: rep.wealth_curve for label, rep in reports.items()})
    curves.index = [d.date().isoformat() for d in curves.index]
    curves.index.name = "date"
    written.append(_write_text(directory / "wealth_curves.csv", curves.to_csv(lineterminator="\n")))
    return written


__all__ = [
    "load_prices",
    "write_prices",
    "load_signals",
    "signal_gaps",
    "write_signals",
    "load_caps",
    "load_monthly_returns",
    "write_monthly_returns",
    "load_descriptions",
    "load_company_names",
    "load_news",
    "load_fundamentals",
    "load_macro_reports",
    "save_universe_cache",
    "load_universe_cache",
    "write_json",
    "read_json",
    "SummaryStore",
    "daily_to_doc",
    "doc_to_daily",
    "progressive_to_doc",
    "load_progressive",
    "fundamentals_to_doc",
    "doc_to_fundamentals",
    "macro_to_doc",
    "doc_to_macro",
    "RunManifest",
    "write_backtest_reports",
]
