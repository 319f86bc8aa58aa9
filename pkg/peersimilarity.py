"""
peersimilarity.py

Identifies the comparison universe of a stock: embed every company
description, score each one against the target by cosine similarity and keep
the top n. Similarity ties break by ticker so rankings are reproducible.
"""

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from constants import LLM_MAX_IN_FLIGHT, PEER_COUNT
from errors import (
    InvalidArgumentError,
    NotFoundError,
    ShapeError,
    UndefinedSimilarityError,
    ValidationError,
)
from providers.iface import EmbeddingProvider, EmbeddingVector
from utils.helpers import sha256_text
from utils.logging_setup import logger


@dataclass(frozen=True)
class StockDescription:
    ticker: str
    text: str

    def __post_init__(self):
        if not self.ticker:
            raise ValidationError("description without ticker")
        if not self.text or not self.text.strip():
            raise ValidationError(f"empty description for {self.ticker}")


def cosine_similarity(a: EmbeddingVector, b: EmbeddingVector) -> float:
    if a.dimension != b.dimension:
        raise ShapeError(f"dimension mismatch: {a.dimension} vs {b.dimension}")
    norm_a = float(np.linalg.norm(a.values))
    norm_b = float(np.linalg.norm(b.values))
    if norm_a == 0.0 or norm_b == 0.0:
        raise UndefinedSimilarityError("cosine similarity with an all-zero vector")
    sim = float(np.dot(a.values, b.values)) / (norm_a * norm_b)
    return min(1.0, max(-1.0, sim))


class CachedEmbedder:
    """
    Wraps an EmbeddingProvider; each distinct text is embedded once, keyed by
    the SHA-256 of its content. Safe to share between threads.
    """

    def __init__(self, provider: EmbeddingProvider):
        self.provider = provider
        self._cache: Dict[str, EmbeddingVector] = {}
        self._lock = threading.Lock()
        self.misses = 0

    def embed(self, text: str) -> EmbeddingVector:
        key = sha256_text(text)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        vector = self.provider.embed(text)
        with self._lock:
            if key not in self._cache:
                self._cache[key] = vector
                self.misses += 1
            return self._cache[key]

    def embed_all(self, texts: Sequence[str], max_workers: int = LLM_MAX_IN_FLIGHT) -> List[EmbeddingVector]:
        if max_workers <= 1 or len(texts) <= 1:
            return [self.embed(t) for t in texts]
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(self.embed, texts))


def _index_descriptions(descriptions: Sequence[StockDescription]) -> Dict[str, StockDescription]:
    by_ticker = {}
    for d in descriptions:
        if d.ticker in by_ticker:
            raise ValidationError(f"ticker {d.ticker} described twice")
        by_ticker[d.ticker] = d
    return by_ticker


def rank_universe(target, descriptions: Sequence[StockDescription], n, provider,
                  max_workers: int = LLM_MAX_IN_FLIGHT) -> List[Tuple[str, float]]:
    """
    (ticker, similarity) pairs for the n descriptions closest to the target's,
    highest similarity first, ties by ticker. The target is never included.
    """
    by_ticker = _index_descriptions(descriptions)
    if target not in by_ticker:
        raise NotFoundError(f"target {target!r} has no description")
    if n < 1 or n >= len(by_ticker):
        raise InvalidArgumentError(f"n must be in [1, {len(by_ticker) - 1}], got {n}")

    embedder = provider if isinstance(provider, CachedEmbedder) else CachedEmbedder(provider)
    tickers = sorted(by_ticker)
    vectors = dict(zip(tickers, embedder.embed_all([by_ticker[t].text for t in tickers], max_workers)))

    anchor = vectors[target]
    scored = [(t, cosine_similarity(anchor, vectors[t])) for t in tickers if t != target]
    # equal to 12 decimals counts as a tie
    scored.sort(key=lambda pair: (-round(pair[1], 12), pair[0]))
    return scored[:n]


def stock_universe(target, descriptions: Sequence[StockDescription], n=PEER_COUNT,
                   provider: EmbeddingProvider = None, max_workers: int = LLM_MAX_IN_FLIGHT) -> List[str]:
    """The n tickers most similar to `target`, most similar first."""
    if provider is None:
        raise InvalidArgumentError("an embedding provider is required")
    return [t for t, _ in rank_universe(target, descriptions, n, provider, max_workers)]


def build_universe_cache(descriptions: Sequence[StockDescription], n=PEER_COUNT,
                         provider: EmbeddingProvider = None, targets=None,
                         max_workers: int = LLM_MAX_IN_FLIGHT) -> Dict[str, List[dict]]:
    """target -> ordered [{"ticker", "similarity"}], sharing one embedding cache."""
    embedder = CachedEmbedder(provider)
    targets = sorted(targets) if targets is not None else sorted(d.ticker for d in descriptions)
    cache = {}
    for target in targets:
        ranked = rank_universe(target, descriptions, n, embedder, max_workers)
        cache[target] = [{"ticker": t, "similarity": s} for t, s in ranked]
    logger.info("🧭 Peer universes built for %s targets (%s embeddings)", len(targets), embedder.misses)
    return cache


__all__ = [
    "StockDescription",
    "EmbeddingVector",
    "cosine_similarity",
    "CachedEmbedder",
    "rank_universe",
    "stock_universe",
    "build_universe_cache",
]
