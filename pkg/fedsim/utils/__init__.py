"""
Utility modules for fedsim
"""

from .safe_logging import (
    VectorScrubber,
    configure_logging,
    get_logger,
    safe_log,
    scrub_dict,
)
from .table_formatter import TableFormatter, format_summary, format_table

__all__ = [
    'VectorScrubber',
    'configure_logging',
    'get_logger',
    'safe_log',
    'scrub_dict',
    'TableFormatter',
    'format_summary',
    'format_table',
]
