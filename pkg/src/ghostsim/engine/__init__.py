"""Performance and energy model: memory, per-block latency, scheduling, metrics."""
from __future__ import annotations

from .energy import ENERGY_CLASSES, energy
from .latency import (UnsupportedActivationError, aggregate_latency, combine_latency, pass_time,
                      update_latency)
from .memory import MemoryModel, MemoryState, memory_fetch_time
from .schedule import (Event, Timeline, balance_passes, balance_workload, build_schedule,
                       check_timeline, pipeline_schedule, place)
from .simulate import (SimReport, SimulationError, op_count, report_csv, simulate,
                       simulate_batch, write_reports_csv)

__all__ = [
    "ENERGY_CLASSES", "Event", "MemoryModel", "MemoryState", "SimReport", "SimulationError",
    "Timeline", "UnsupportedActivationError", "aggregate_latency", "balance_passes",
    "balance_workload", "build_schedule", "check_timeline", "combine_latency", "energy",
    "memory_fetch_time", "op_count", "pass_time", "pipeline_schedule", "place", "report_csv",
    "simulate", "simulate_batch", "update_latency", "write_reports_csv",
]
