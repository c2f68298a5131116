"""
Run-time metrics for a simulated experiment
Tracks round durations, crafted and retained update counts, and errors
"""

import time
from collections import deque
from datetime import datetime, timezone
from typing import Any, Dict, Optional


class SimulationMetrics:
    """Collects and tracks simulation metrics"""

    def __init__(self, window: int = 1000):
        # Round counters
        self.rounds_completed = 0
        self.rounds_failed = 0

        # Round duration tracking (keep the last `window` for percentiles)
        self.round_times = deque(maxlen=window)

        # Update counters
        self.updates_submitted = 0
        self.updates_retained = 0
        self.crafted_updates = 0

        # Crafter statuses (ok, no-op, degenerate, search-failed)
        self.status_counts: Dict[str, int] = {}

        # Error tracking
        self.error_counts: Dict[str, int] = {}

        self.start_time = time.perf_counter()
        self.end_time: Optional[float] = None

    def record_round_start(self) -> float:
        return time.perf_counter()

    def record_round_end(self, start_time: float, submitted: int, retained: int):
        """Record the completion of a round"""
        self.round_times.append((time.perf_counter() - start_time) * 1000)
        self.rounds_completed += 1
        self.updates_submitted += submitted
        self.updates_retained += retained

    def record_craft(self, status: str, count: int = 1):
        self.crafted_updates += count
        self.status_counts[status] = self.status_counts.get(status, 0) + count

    def record_error(self, error_type: str):
        """Record an error occurrence"""
        self.rounds_failed += 1
        self.error_counts[error_type] = self.error_counts.get(error_type, 0) + 1

    def finish(self):
        self.end_time = time.perf_counter()

    def get_elapsed_seconds(self) -> float:
        end = self.end_time if self.end_time is not None else time.perf_counter()
        return end - self.start_time

    def get_round_time_stats(self) -> Dict[str, float]:
        """Round duration statistics in milliseconds"""
        if not self.round_times:
            return {"avg": 0, "min": 0, "max": 0, "p50": 0, "p95": 0}

        sorted_times = sorted(self.round_times)
        count = len(sorted_times)

        return {
            "avg": sum(sorted_times) / count,
            "min": sorted_times[0],
            "max": sorted_times[-1],
            "p50": sorted_times[count // 2],
            "p95": sorted_times[int(count * 0.95)] if count > 20 else sorted_times[-1],
        }

    def get_metrics_summary(self) -> Dict[str, Any]:
        """Get comprehensive metrics summary"""
        stats = self.get_round_time_stats()
        retention = (
            self.updates_retained / self.updates_submitted * 100 if self.updates_submitted > 0 else 100
        )
        return {
            "elapsed_seconds": round(self.get_elapsed_seconds(), 3),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "rounds": {
                "completed": self.rounds_completed,
                "failed": self.rounds_failed,
            },
            "round_times_ms": {key: round(value, 2) for key, value in stats.items()},
            "updates": {
                "submitted": self.updates_submitted,
                "retained": self.updates_retained,
                "retention_rate": round(retention, 2),
                "crafted": self.crafted_updates,
            },
            "craft_status": self.status_counts,
            "errors": self.error_counts,
        }


__all__ = ["SimulationMetrics"]
