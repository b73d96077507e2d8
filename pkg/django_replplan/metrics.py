"""
Batch metrics and episode timing.
"""

import logging
import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from django.utils import timezone

logger = logging.getLogger("django_replplan.performance")


class PerformanceMonitor:
    """Collects wall-clock durations per operation; kept out of trace files."""

    def __init__(self):
        self.metrics: Dict[str, List[Dict[str, Any]]] = {}
        self.lock = threading.Lock()

    def record_metric(self, metric_name: str, value: Any, tags: Optional[Dict[str, str]] = None):
        metric_data = {
            "name": metric_name,
            "value": value,
            "tags": tags or {},
            "timestamp": timezone.now().isoformat(),
        }
        with self.lock:
            metrics_list = self.metrics.setdefault(metric_name, [])
            metrics_list.append(metric_data)
            if len(metrics_list) > 500:
                del metrics_list[:-500]

    def get_metrics(self, metric_name: Optional[str] = None) -> Any:
        with self.lock:
            if metric_name:
                return list(self.metrics.get(metric_name, []))
            return {name: list(values) for name, values in self.metrics.items()}


performance_monitor = PerformanceMonitor()


@contextmanager
def performance_timer(operation: str, **tags):
    """Time an operation and log its duration in milliseconds."""
    start_time = time.perf_counter()
    try:
        yield
    finally:
        duration_ms = (time.perf_counter() - start_time) * 1000
        performance_monitor.record_metric(
            "duration_ms", duration_ms, {"operation": operation, **{k: str(v) for k, v in tags.items()}}
        )
        logger.info(
            f"{operation} took {duration_ms:.1f} ms",
            extra={"operation": operation, "duration_ms": duration_ms},
        )


@dataclass
class MetricsReport:
    """Aggregates per-episode rows; aggregates are always recomputed from the rows."""

    rows: List[Dict[str, Any]] = field(default_factory=list)

    def add(self, row: Dict[str, Any]):
        self.rows.append(row)

    def sorted_rows(self) -> List[Dict[str, Any]]:
        return sorted(self.rows, key=lambda row: row.get("task_index", 0))

    @property
    def episodes(self) -> int:
        return len(self.rows)

    def _mean(self, key: str) -> float:
        if not self.rows:
            return 0.0
        return sum(float(row.get(key, 0) or 0) for row in self.rows) / len(self.rows)

    @property
    def success_rate(self) -> float:
        if not self.rows:
            return 0.0
        return sum(1 for row in self.rows if row.get("success")) / len(self.rows)

    @property
    def mean_score(self) -> float:
        return self._mean("score")

    @property
    def mean_env_steps(self) -> float:
        return self._mean("env_steps")

    @property
    def mean_llm_calls(self) -> float:
        return self._mean("llm_calls")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "episodes": self.episodes,
            "success_rate": self.success_rate,
            "mean_score": self.mean_score,
            "mean_env_steps": self.mean_env_steps,
            "mean_llm_calls": self.mean_llm_calls,
            "rows": self.sorted_rows(),
        }

    def summary(self) -> str:
        return (
            f"Episodes: {self.episodes}  SR: {self.success_rate * 100:.1f}%  "
            f"Score: {self.mean_score * 100:.1f}  "
            f"Env steps: {self.mean_env_steps:.1f}  LLM calls: {self.mean_llm_calls:.1f}"
        )
