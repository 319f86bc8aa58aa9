"""
logging_setup.py

Centralized logging setup used by the MarketSense pipeline and the heartbeat thread.

Provides:
- logger: configured logger ("MarketSense")
- ch: console StreamHandler (used by HeartbeatThread to emit progress messages)
- _get_last_log / _set_last_log: helpers for tracking last log time
- attach_run_log / detach_run_log: per-run report file
- UpdateLastHandler, RunLogFormatter, SkipHeartbeatFilter classes
"""

import logging
import os
import re
import sys
import threading
import time

HEARTBEAT_MARKER = "still working"

# track last log time (for heartbeat suppression)
_last_lock = threading.Lock()
_last_log = time.time()


def _get_last_log():
    """Return the timestamp of the last log (thread-safe)."""
    with _last_lock:
        return _last_log


def _set_last_log(ts):
    """Set the timestamp of the last log (thread-safe)."""
    global _last_log
    with _last_lock:
        _last_log = ts


class UpdateLastHandler(logging.Handler):
    """
    Updates the module-level last-log timestamp whenever any record is emitted,
    so the HeartbeatThread stays quiet while other stages are talking.
    """

    def emit(self, record):
        try:
            _set_last_log(getattr(record, "created", time.time()))
        except Exception:
            # Never raise from logging handler
            pass


logger = logging.getLogger("MarketSense")
logger.setLevel(logging.DEBUG)
logger.propagate = False

# console handler (keeps emoji markers + progress info)
ch = logging.StreamHandler(sys.stdout)
ch.setLevel(logging.INFO)
ch.setFormatter(logging.Formatter(
    "%(asctime)s [%(levelname)s] %(message)s",
    "%Y-%m-%d %H:%M:%S"
))


class RunLogFormatter(logging.Formatter):
    """
    Formatter for the run log file: strips non-ascii characters (emoji markers)
    and drops heartbeat lines.
    """

    def format(self, record):
        msg = record.getMessage()
        if HEARTBEAT_MARKER in msg.lower():
            return ""
        clean = re.sub(r"[^\x00-\x7F]+", " ", msg).strip()
        ts = time.strftime("%Y-%m-%d %H:%M:%S", time.localtime(record.created))
        text = f"{ts} [{record.levelname}] {clean}"
        if record.exc_info:
            text += "\n" + self.formatException(record.exc_info)
        return text


class SkipHeartbeatFilter(logging.Filter):
    """Keeps heartbeat messages out of the run log file."""

    def filter(self, record):
        return HEARTBEAT_MARKER not in record.getMessage().lower()


def attach_run_log(path):
    """
    Add a file handler writing the clean run report to `path`.
    Returns the handler; attaching the same path twice returns the existing one.
    """
    target = os.path.abspath(path)
    for handler in logger.handlers:
        if isinstance(handler, logging.FileHandler) and handler.baseFilename == target:
            return handler
    os.makedirs(os.path.dirname(target), exist_ok=True)
    fh = logging.FileHandler(target, encoding="utf-8")
    fh.setLevel(logging.INFO)
    fh.setFormatter(RunLogFormatter())
    fh.addFilter(SkipHeartbeatFilter())
    logger.addHandler(fh)
    return fh


def detach_run_log(handler):
    logger.removeHandler(handler)
    handler.close()


# attach handlers to logger (clear previous handlers first)
logger.handlers = []
logger.addHandler(UpdateLastHandler())
logger.addHandler(ch)


__all__ = [
    "logger",
    "ch",
    "_get_last_log",
    "_set_last_log",
    "attach_run_log",
    "detach_run_log",
    "UpdateLastHandler",
    "RunLogFormatter",
    "SkipHeartbeatFilter",
    "HEARTBEAT_MARKER",
]
