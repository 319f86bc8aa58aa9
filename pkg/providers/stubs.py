# providers/stubs.py
"""
Offline providers: deterministic stand-ins for the LLM and embedding
endpoints, used by tests and by runs configured with provider "stub".
"""

import hashlib
import re
import threading
from typing import Callable, List, Optional, Tuple

import numpy as np

from constants import EMBEDDING_DIM, LLM_CONTEXT_CHARS
from providers.iface import DecodingParams, EmbeddingProvider, EmbeddingVector, LLMClient
from signalengine import DYNAMICS_HEADER, NEWS_HEADER, RANKING_INSTRUCTION
from summarizers import FACTUAL_BLOCK, OPINION_BLOCK

Responder = Callable[[str, str], str]


def _digest(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


class StubLLMClient(LLMClient):
    """
    Records every call and answers through `responder(system, prompt)`.
    Without a responder it echoes the first `echo_chars` characters of the prompt.
    """

    def __init__(self, responder: Optional[Responder] = None, echo_chars: int = 100,
                 context_chars: int = LLM_CONTEXT_CHARS):
        self.responder = responder or (lambda system, prompt: prompt[:echo_chars])
        self.context_chars = context_chars
        self.calls: List[Tuple[str, str, DecodingParams]] = []
        self._lock = threading.Lock()

    def complete(self, system: str, prompt: str, params: DecodingParams = DecodingParams()) -> str:
        with self._lock:
            self.calls.append((system, prompt, params))
        return self.responder(system, prompt)

    @property
    def prompts(self) -> List[str]:
        with self._lock:
            return [prompt for _, prompt, _ in self.calls]


def echo_all(system: str, prompt: str) -> str:
    return prompt


# ----------------- analyst responder -----------------

_RANK_ENTRY = re.compile(r"^\[(E\d+)\][^\n]*\n(.*?)(?=\n\n\[E\d+\]|\n\nInstructions:)", re.MULTILINE | re.DOTALL)
_SIGNAL_SUBJECT = re.compile(r"Decide whether (\S+) is a .*? as of (\d{4}-\d{2})")


def _section(prompt: str, header: str) -> str:
    start = prompt.find(header)
    if start < 0:
        return ""
    body = prompt[start + len(header):].lstrip("\n")
    return body.split("\n\n", 1)[0].strip()


def _first_words(text: str, n: int) -> str:
    words = text.split()
    return " ".join(words[:n])


def _rank_reply(prompt: str) -> str:
    lines = []
    for sid, explanation in _RANK_ENTRY.findall(prompt):
        lines.append(f"{sid}: {_digest(explanation.strip()) % 11}")
    return "\n".join(sorted(lines))


def _signal_reply(prompt: str) -> str:
    m = _SIGNAL_SUBJECT.search(prompt)
    subject = f"{m.group(1)} {m.group(2)}" if m else prompt
    bucket = _digest(subject) % 10
    decision = "BUY" if bucket <= 3 else ("HOLD" if bucket <= 8 else "SELL")
    news = _first_words(_section(prompt, NEWS_HEADER), 40)
    dynamics = _first_words(_section(prompt, DYNAMICS_HEADER), 25)
    return (
        f"The news flow points to: {news}\n"
        f"The price dynamics show: {dynamics}\n"
        f"Weighing both, the position for the coming month is {decision.lower()}.\n"
        f"Decision: {decision}"
    )


def _daily_reply(prompt: str) -> str:
    factual = prompt.split(FACTUAL_BLOCK, 1)[1].split(OPINION_BLOCK, 1)[0]
    opinion = prompt.split(OPINION_BLOCK, 1)[1].split("\n\nInstructions:", 1)[0]
    facts = _first_words(factual, 50) or "(none)"
    views = _first_words(opinion, 30) or "(none)"
    return f"FACTUAL NEWS:\n{facts}\nANALYST OPINIONS:\n{views}"


def _summary_reply(prompt: str) -> str:
    body = [ln for ln in prompt.splitlines()[1:] if ln.strip() and not ln.startswith("Instructions:")]
    words = _first_words(" ".join(body), 60)
    return f"Summary [{_digest(prompt) % 10**8:08d}]: {words or 'no material information.'}"


def analyst_responder(system: str, prompt: str) -> str:
    """
    Deterministic analyst: answers ranking prompts with "<id>: <score>"
    lines, signal prompts with reasoning and a "Decision:" line, daily news
    prompts with labelled sections and anything else with a short digest.
    """
    if RANKING_INSTRUCTION in prompt:
        return _rank_reply(prompt)
    if NEWS_HEADER in prompt:
        return _signal_reply(prompt)
    if FACTUAL_BLOCK in prompt and OPINION_BLOCK in prompt:
        return _daily_reply(prompt)
    return _summary_reply(prompt)


# ----------------- embeddings -----------------

_WORD = re.compile(r"[a-z0-9]+")


class HashingEmbeddingProvider(EmbeddingProvider):
    """Signed hashed bag of words, L2-normalized."""

    def __init__(self, dimension: int = EMBEDDING_DIM):
        self.dimension = dimension

    def embed(self, text: str) -> EmbeddingVector:
        vec = np.zeros(self.dimension, dtype=float)
        tokens = _WORD.findall(text.lower()) or [text]
        for token in tokens:
            h = _digest(token)
            vec[h % self.dimension] += 1.0 if (h >> 32) & 1 else -1.0
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            vec[_digest(text) % self.dimension] = 1.0
            norm = 1.0
        return EmbeddingVector(vec / norm)
