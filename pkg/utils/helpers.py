"""
helpers.py

General-purpose helpers used by the pipeline: guarded calls, retries, hashing.
"""

import hashlib
import json
import time

from constants import LLM_BACKOFF_SECONDS, LLM_MAX_RETRIES
from errors import TransientLLMError, TransportError
from utils.logging_setup import logger


def safe_call(func, *args, fallback=None, errors=None, context="", **kwargs):
    """
    Call func(*args, **kwargs) and catch/log any exception.
    Returns fallback on error. When `errors` is a list, the failure is also
    appended to it as {"context": ..., "error": ...} so the caller can report it.

    Example:
        safe_call(pipeline.summarize_ticker, "AAPL", fallback=None, errors=run_errors,
                  context="summarize-news AAPL")
    """
    try:
        return func(*args, **kwargs)
    except Exception as e:
        name = context or getattr(func, "__qualname__", repr(func))
        logger.exception("Error in %s: %s", name, e)
        if errors is not None:
            errors.append({"context": name, "error": f"{type(e).__name__}: {e}"})
        return fallback


def call_with_retries(func, *args, retries=LLM_MAX_RETRIES, backoff=LLM_BACKOFF_SECONDS,
                      sleep=time.sleep, **kwargs):
    """
    Call func, retrying up to `retries` times on TransientLLMError with
    exponential backoff (backoff, 2*backoff, 4*backoff, ...).
    Raises TransportError carrying the attempt count once retries run out.
    """
    attempts = 0
    while True:
        attempts += 1
        try:
            return func(*args, **kwargs)
        except TransientLLMError as e:
            if attempts > retries:
                raise TransportError(str(e), attempts) from e
            delay = backoff * (2 ** (attempts - 1))
            logger.warning("Transient provider failure (attempt %s): %s; retrying in %.1f s",
                           attempts, e, delay)
            sleep(delay)


def canonical_json(payload) -> str:
    """Stable JSON text used for hashing and for byte-identical documents."""
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, indent=2, allow_nan=False) + "\n"


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path) -> str:
    hasher = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 16), b""):
            hasher.update(block)
    return hasher.hexdigest()


__all__ = ["safe_call", "call_with_retries", "canonical_json", "sha256_text", "sha256_file"]
