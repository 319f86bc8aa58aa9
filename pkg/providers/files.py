# providers/files.py
import datetime
from typing import Dict, List

import pandas as pd

import datastore
from providers.iface import FundamentalsSource, MacroReportSource, NewsSource
from summarizers import MacroReport, NewsArticle, QuarterlyStatement


def _day(value) -> datetime.date:
    return pd.Timestamp(value).date()


class FileNewsSource(NewsSource):
    """News JSON-lines file, loaded once and indexed by ticker."""

    def __init__(self, path):
        self.path = path
        self._by_ticker: Dict[str, List[NewsArticle]] = {}
        for article in datastore.load_news(path):
            self._by_ticker.setdefault(article.ticker, []).append(article)

    def tickers(self) -> List[str]:
        return sorted(self._by_ticker)

    def articles(self, ticker: str, start, end) -> List[NewsArticle]:
        start, end = _day(start), _day(end)
        found = [a for a in self._by_ticker.get(ticker, []) if start <= a.date <= end]
        return sorted(found, key=lambda a: (a.date, a.title))


class FileFundamentalsSource(FundamentalsSource):
    def __init__(self, path):
        self.path = path
        self._reports = datastore.load_fundamentals(path)

    def statements(self, ticker: str) -> List[QuarterlyStatement]:
        return list(self._reports.get(ticker, []))


class FileMacroSource(MacroReportSource):
    """Directory of dated macro reports (YYYY-MM-DD_<source>.txt)."""

    def __init__(self, directory):
        self.directory = directory
        self._reports = datastore.load_macro_reports(directory)

    def reports(self, start, end) -> List[MacroReport]:
        start, end = _day(start), _day(end)
        return [r for r in self._reports if start <= r.date <= end]
