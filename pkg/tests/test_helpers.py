import json
import logging
import math
import time

import pytest

from errors import TransientLLMError, TransportError
from utils.helpers import call_with_retries, canonical_json, safe_call, sha256_file, sha256_text
from utils.logging_setup import _set_last_log, attach_run_log, detach_run_log, logger
from utils.wait import heartbeat


def test_safe_call_records_failures():
    errors = []

    def boom(x):
        raise ValueError(f"bad {x}")

    assert safe_call(boom, 3, fallback="fb", errors=errors, context="summarize AAA") == "fb"
    assert errors == [{"context": "summarize AAA", "error": "ValueError: bad 3"}]
    assert safe_call(lambda a, b=0: a + b, 1, b=2, errors=errors) == 3
    assert len(errors) == 1


def test_retries_with_exponential_backoff():
    delays = []
    calls = []

    def flaky():
        calls.append(1)
        if len(calls) < 3:
            raise TransientLLMError("503")
        return "ok"

    assert call_with_retries(flaky, retries=3, backoff=0.5, sleep=delays.append) == "ok"
    assert delays == [0.5, 1.0]


def test_retries_exhausted():
    delays = []

    def down():
        raise TransientLLMError("timeout")

    with pytest.raises(TransportError) as err:
        call_with_retries(down, retries=3, backoff=1.0, sleep=delays.append)
    assert err.value.attempts == 4
    assert delays == [1.0, 2.0, 4.0]


def test_non_transient_errors_are_not_retried():
    delays = []

    def broken():
        raise KeyError("model")

    with pytest.raises(KeyError):
        call_with_retries(broken, sleep=delays.append)
    assert delays == []


def test_canonical_json_is_stable(tmp_path):
    a = canonical_json({"b": 1, "a": [1.5, None], "c": "é"})
    b = canonical_json({"c": "é", "a": [1.5, None], "b": 1})
    assert a == b
    assert a.endswith("\n")
    assert json.loads(a) == {"a": [1.5, None], "b": 1, "c": "é"}
    with pytest.raises(ValueError):
        canonical_json({"x": math.nan})

    path = tmp_path / "doc.json"
    path.write_text(a, encoding="utf-8")
    assert sha256_file(path) == sha256_text(a)


def test_run_log_is_clean_and_attached_once(tmp_path):
    path = tmp_path / "logs" / "run.log"
    handler = attach_run_log(path)
    try:
        assert attach_run_log(path) is handler
        logger.info("✅ stage signal done")
        logger.info("⏳ Still working on bootstrap...")
        logger.debug("internal detail")
    finally:
        detach_run_log(handler)
    text = path.read_text(encoding="utf-8")
    assert "[INFO] stage signal done" in text
    assert "✅" not in text
    assert "Still working" not in text
    assert "internal detail" not in text
    assert handler not in logger.handlers


def test_heartbeat_beats_only_when_quiet():
    _set_last_log(0.0)
    with heartbeat("bootstrap", interval=0.05) as beat:
        time.sleep(0.4)
    assert beat.beats >= 1
    assert not beat.is_alive()

    with heartbeat("signal", interval=60.0) as quiet:
        logger.log(logging.DEBUG, "talking")
        time.sleep(0.1)
    assert quiet.beats == 0
