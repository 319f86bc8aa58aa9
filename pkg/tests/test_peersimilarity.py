import math

import numpy as np
import pytest

from errors import InvalidArgumentError, NotFoundError, ShapeError, UndefinedSimilarityError, ValidationError
from peersimilarity import (
    CachedEmbedder,
    StockDescription,
    build_universe_cache,
    cosine_similarity,
    rank_universe,
    stock_universe,
)
from providers.iface import EmbeddingVector
from providers.stubs import HashingEmbeddingProvider

VOCAB = ["chips", "software", "cloud", "banking", "loans", "insurance", "retail", "apparel", "oil", "gas",
         "pharma", "biotech", "devices", "airlines", "railroads", "utilities", "telecom", "media", "games", "autos"]


def _descriptions(n=50, seed=3):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        words = rng.choice(VOCAB, size=6, replace=True)
        out.append(StockDescription(f"T{i:02d}", f"Company {i} works in " + " ".join(words)))
    return out


class CountingProvider:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def embed(self, text):
        self.calls += 1
        return self.inner.embed(text)


def _oracle(target, descriptions, provider, n):
    vectors = {d.ticker: provider.embed(d.text).values for d in descriptions}
    a = vectors[target]
    scored = []
    for ticker, v in vectors.items():
        if ticker == target:
            continue
        dot = sum(x * y for x, y in zip(a, v))
        sim = dot / (math.sqrt(sum(x * x for x in a)) * math.sqrt(sum(y * y for y in v)))
        scored.append((-round(sim, 12), ticker))
    scored.sort()
    return [t for _, t in scored[:n]]


def test_stock_universe_matches_exhaustive_sort():
    descriptions = _descriptions()
    provider = HashingEmbeddingProvider(64)
    embedder = CachedEmbedder(provider)
    for d in descriptions:
        peers = stock_universe(d.ticker, descriptions, 5, embedder, max_workers=1)
        assert len(peers) == 5
        assert d.ticker not in peers
        assert peers == _oracle(d.ticker, descriptions, provider, 5)


def test_rank_universe_orders_by_similarity_then_ticker():
    descriptions = [
        StockDescription("AAA", "chips cloud"),
        StockDescription("ZZZ", "chips cloud"),
        StockDescription("BBB", "chips cloud"),
        StockDescription("CCC", "oil gas pipelines"),
    ]
    ranked = rank_universe("AAA", descriptions, 3, HashingEmbeddingProvider(64), max_workers=1)
    assert [t for t, _ in ranked[:2]] == ["BBB", "ZZZ"]
    assert ranked[0][1] == pytest.approx(1.0)
    assert ranked[0][1] >= ranked[1][1] >= ranked[2][1]


def test_default_peer_count_is_five():
    descriptions = _descriptions(10)
    assert len(stock_universe("T00", descriptions, provider=HashingEmbeddingProvider(32))) == 5


def test_stock_universe_argument_errors():
    descriptions = _descriptions(6)
    provider = HashingEmbeddingProvider(32)
    with pytest.raises(NotFoundError):
        stock_universe("NOPE", descriptions, 3, provider)
    with pytest.raises(InvalidArgumentError):
        stock_universe("T00", descriptions, 6, provider)
    with pytest.raises(InvalidArgumentError):
        stock_universe("T00", descriptions, 0, provider)
    with pytest.raises(ValidationError):
        stock_universe("T00", descriptions + [StockDescription("T00", "duplicate")], 3, provider)


def test_each_description_embedded_once():
    descriptions = _descriptions(12)
    counting = CountingProvider(HashingEmbeddingProvider(32))
    cache = build_universe_cache(descriptions, 4, counting, max_workers=1)
    assert counting.calls == 12
    assert sorted(cache) == [d.ticker for d in descriptions]
    for target, peers in cache.items():
        assert len(peers) == 4
        assert target not in [p["ticker"] for p in peers]
        sims = [round(p["similarity"], 12) for p in peers]
        assert sims == sorted(sims, reverse=True)


def test_cosine_similarity_rules():
    a = EmbeddingVector(np.array([1.0, 0.0]))
    b = EmbeddingVector(np.array([0.0, 2.0]))
    assert cosine_similarity(a, a) == pytest.approx(1.0)
    assert cosine_similarity(a, b) == pytest.approx(0.0)
    with pytest.raises(ShapeError):
        cosine_similarity(a, EmbeddingVector(np.array([1.0, 0.0, 0.0])))
    with pytest.raises(UndefinedSimilarityError):
        cosine_similarity(a, EmbeddingVector(np.zeros(2)))


def test_empty_description_is_rejected():
    with pytest.raises(ValidationError):
        StockDescription("AAA", "   ")
