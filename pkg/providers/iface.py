from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Protocol

import numpy as np

from constants import LLM_TEMPERATURE
from errors import ShapeError

if TYPE_CHECKING:
    from summarizers import NewsArticle, QuarterlyStatement, MacroReport


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = LLM_TEMPERATURE
    max_tokens: Optional[int] = None


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise ShapeError("embedding must have a positive dimension")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("embedding entries must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def dimension(self) -> int:
        return int(self.values.size)


class LLMClient(Protocol):
    context_chars: int

    def complete(self, system: str, prompt: str, params: DecodingParams) -> str:
        ...


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> EmbeddingVector:
        ...


class NewsSource(Protocol):
    def articles(self, ticker: str, start, end) -> List[NewsArticle]:
        ...


class FundamentalsSource(Protocol):
    def statements(self, ticker: str) -> List[QuarterlyStatement]:
        ...


class MacroReportSource(Protocol):
    def reports(self, start, end) -> List[MacroReport]:
        ...
