"""
wait.py

HeartbeatThread that logs an occasional "⏳ still working on <stage>..." line
when no other logs have been emitted for a configured interval. Used around
LLM batches and bootstrap loops, which can run quietly for minutes.

The message goes to the console handler only, never to the run log file.
"""

import logging
import threading
import time
from contextlib import contextmanager

from constants import HEARTBEAT_INTERVAL
from utils.logging_setup import ch, _get_last_log, _set_last_log


class HeartbeatThread(threading.Thread):
    """
    Background thread that emits a progress line to the console handler
    if no other log has been emitted for `interval` seconds.

    The thread is daemonized so it won't block process exit.
    """

    def __init__(self, stage, interval=HEARTBEAT_INTERVAL, stop_event: threading.Event = None):
        super().__init__(daemon=True)
        self.stage = stage
        self.interval = float(interval)
        self._stop_event = stop_event or threading.Event()
        self.beats = 0

    def stop(self):
        self._stop_event.set()

    def run(self):
        while not self._stop_event.is_set():
            now = time.time()
            try:
                last = _get_last_log()
            except Exception:
                last = 0.0

            if now - last >= self.interval:
                record = logging.makeLogRecord({
                    "name": "MarketSense",
                    "levelno": logging.INFO,
                    "levelname": "INFO",
                    "msg": f"⏳ Still working on {self.stage}...",
                    "created": now,
                })
                try:
                    ch.emit(record)
                    self.beats += 1
                except Exception:
                    pass
                try:
                    _set_last_log(now)
                except Exception:
                    pass

            # wake often to check the stop event
            self._stop_event.wait(min(0.25, self.interval))


@contextmanager
def heartbeat(stage, interval=HEARTBEAT_INTERVAL):
    """Run a HeartbeatThread for the duration of the `with` block."""
    thread = HeartbeatThread(stage, interval=interval)
    thread.start()
    try:
        yield thread
    finally:
        thread.stop()
        thread.join(timeout=1.0)


__all__ = ["HeartbeatThread", "heartbeat"]
