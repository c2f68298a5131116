"""
Log Scrubbing and structlog Setup

Parameter vectors routinely have tens of thousands of coordinates; a single
careless `logger.debug("update", model=phi)` would bury the log. Every event
therefore passes through a scrubbing processor that replaces numpy arrays and
long numeric sequences with a compact summary before rendering.

MUST be configured before the first log call of a CLI command
(`configure_logging`); library code only calls `get_logger`.
"""

import logging
import os
import sys
from numbers import Number
from typing import Any, Dict, List, Optional

import numpy as np
import structlog

# Sequences longer than this are summarized instead of printed
MAX_INLINE_ITEMS = int(os.getenv("FEDSIM_LOG_MAX_ITEMS", "8"))
LOG_LEVEL = os.getenv("FEDSIM_LOG_LEVEL", "INFO")
LOG_FORMAT = os.getenv("FEDSIM_LOG_FORMAT", "console")


class VectorScrubber:
    """
    Replaces bulky numeric payloads in log events with summaries
    """

    def __init__(self, max_items: int = MAX_INLINE_ITEMS):
        """
        Args:
            max_items: sequences up to this length are logged verbatim
        """
        self.max_items = max_items

    def summarize(self, value: np.ndarray) -> str:
        """`ndarray(shape=(d,), norm=...)` style summary"""
        arr = np.asarray(value)
        if arr.size and np.issubdtype(arr.dtype, np.number):
            finite = bool(np.all(np.isfinite(arr)))
            norm = float(np.linalg.norm(arr.astype(np.float64).ravel())) if finite else float("nan")
            return f"ndarray(shape={arr.shape}, norm={norm:.6g}, finite={finite})"
        return f"ndarray(shape={arr.shape}, dtype={arr.dtype})"

    def scrub_value(self, value: Any) -> Any:
        if isinstance(value, np.ndarray):
            if value.size <= self.max_items and value.ndim <= 1:
                return value.tolist()
            return self.summarize(value)
        if isinstance(value, np.generic):
            return value.item()
        if isinstance(value, (list, tuple)) and len(value) > self.max_items:
            if all(isinstance(v, Number) for v in value):
                return self.summarize(np.asarray(value, dtype=np.float64))
            return f"{type(value).__name__}(len={len(value)})"
        if isinstance(value, dict):
            return self.scrub_dict(value)
        return value

    def scrub_dict(self, data: Dict[str, Any]) -> Dict[str, Any]:
        return {key: self.scrub_value(val) for key, val in data.items()}

    def has_bulk(self, data: Dict[str, Any]) -> bool:
        """True when the event carries something the scrubber would rewrite"""
        for value in data.values():
            if isinstance(value, (np.ndarray, np.generic)):
                return True
            if isinstance(value, (list, tuple)) and len(value) > self.max_items:
                return True
            if isinstance(value, dict) and self.has_bulk(value):
                return True
        return False

    def __call__(self, logger, method_name: str, event_dict: Dict[str, Any]) -> Dict[str, Any]:
        # most events carry only scalars and pass through untouched
        if not self.has_bulk(event_dict):
            return event_dict
        return self.scrub_dict(event_dict)


# Global scrubber instance
_scrubber = VectorScrubber()


def scrub_dict(data: Dict[str, Any]) -> Dict[str, Any]:
    return _scrubber.scrub_dict(data)


def safe_log(message: str, **fields: Any) -> str:
    """
    Render a message with scrubbed key=value fields, for plain-text output
    (script banners, CLI echoes)
    """
    if not fields:
        return message
    parts = [f"{k}={v}" for k, v in _scrubber.scrub_dict(fields).items()]
    return f"{message} " + " ".join(parts)


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    """Configure structlog to write scrubbed events to stderr"""
    level_name = (level or LOG_LEVEL).upper()
    numeric = logging.getLevelName(level_name)
    if not isinstance(numeric, int):
        numeric = logging.INFO

    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if (fmt or LOG_FORMAT) == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    processors: List[Any] = [
        structlog.contextvars.merge_contextvars,
        structlog.processors.add_log_level,
        structlog.processors.TimeStamper(fmt="iso", utc=True),
        _scrubber,
        renderer,
    ]
    structlog.configure(
        processors=processors,
        wrapper_class=structlog.make_filtering_bound_logger(numeric),
        # resolve sys.stderr per logger so redirected streams (test runners) are honoured
        logger_factory=lambda *args: structlog.PrintLogger(file=sys.stderr),
        cache_logger_on_first_use=False,
    )


def get_logger(name: Optional[str] = None):
    return structlog.get_logger(name)


__all__ = [
    "VectorScrubber",
    "scrub_dict",
    "safe_log",
    "configure_logging",
    "get_logger",
]
