"""
Table Formatter Utility
Renders impact matrices and run summaries as aligned text with tabulate
"""

from typing import Any, Dict, Optional

import pandas as pd
from tabulate import tabulate

MISSING_CELL = "-"


class TableFormatter:
    """Formats report tables for the terminal"""

    def __init__(self, table_format: str = "github"):
        self.table_format = table_format

    def format_table(self, table: pd.DataFrame, title: Optional[str] = None) -> str:
        """
        Format an aggregator x attack frame

        Args:
            table: first column holds row labels, the rest are cells
            title: optional heading printed above the table

        Returns:
            Aligned text table
        """
        if table.empty:
            return "(no cells)"
        body = tabulate(
            table.values.tolist(),
            headers=list(table.columns),
            tablefmt=self.table_format,
            stralign="right",
            disable_numparse=True,
            missingval=MISSING_CELL,
        )
        return f"{title}\n{body}" if title else body

    def format_summary(self, fields: Dict[str, Any]) -> str:
        """Two-column key/value block for a finished run"""
        rows = [[key, value] for key, value in fields.items()]
        return tabulate(rows, tablefmt="plain", disable_numparse=True)


# Global formatter instance
formatter = TableFormatter()


def format_table(table: pd.DataFrame, title: Optional[str] = None) -> str:
    return formatter.format_table(table, title)


def format_summary(fields: Dict[str, Any]) -> str:
    return formatter.format_summary(fields)


__all__ = ["TableFormatter", "format_table", "format_summary"]
