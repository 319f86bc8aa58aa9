# providers/adapters.py
import threading

from constants import LLM_BACKOFF_SECONDS, LLM_CONTEXT_CHARS, LLM_MAX_IN_FLIGHT, LLM_MAX_RETRIES
from llmcore import chat, embeddings
from providers.iface import DecodingParams, EmbeddingProvider, EmbeddingVector, LLMClient
from utils.helpers import call_with_retries


class RestLLMAdapter(LLMClient):
    """
    Exposes a ChatCompletionClient as an LLMClient: bounded in-flight requests,
    retries with exponential backoff on transient failures.
    """

    def __init__(self, inner: chat.ChatCompletionClient, max_in_flight: int = LLM_MAX_IN_FLIGHT,
                 context_chars: int = LLM_CONTEXT_CHARS, retries: int = LLM_MAX_RETRIES,
                 backoff: float = LLM_BACKOFF_SECONDS):
        self._d = inner
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self.context_chars = context_chars
        self.retries = retries
        self.backoff = backoff

    def complete(self, system: str, prompt: str, params: DecodingParams = DecodingParams()) -> str:
        with self._slots:
            return call_with_retries(
                self._d.complete, system, prompt, params.temperature, params.max_tokens,
                retries=self.retries, backoff=self.backoff,
            )


class RestEmbeddingAdapter(EmbeddingProvider):
    """
    Exposes an EmbeddingsClient as an EmbeddingProvider. The client is shared,
    so calls go through the same in-flight limit and retry policy.
    """

    def __init__(self, inner: embeddings.EmbeddingsClient, max_in_flight: int = LLM_MAX_IN_FLIGHT,
                 retries: int = LLM_MAX_RETRIES, backoff: float = LLM_BACKOFF_SECONDS):
        self._d = inner
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self.retries = retries
        self.backoff = backoff

    def embed(self, text: str) -> EmbeddingVector:
        with self._slots:
            values = call_with_retries(self._d.embed, text, retries=self.retries, backoff=self.backoff)
        return EmbeddingVector(values)
