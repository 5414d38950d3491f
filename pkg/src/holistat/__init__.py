"""holistat: holistic analysis of datacenter telemetry and workload traces."""

from .errors import DegenerateInput, EmptySeries, HolistatError, InvalidInput, TraceFormatError
from .model import JobRecord, JobState, MetricSeries, NodeInfo, TraceBundle

__version__ = "0.1.0"

__all__ = [
    "DegenerateInput", "EmptySeries", "HolistatError", "InvalidInput", "TraceFormatError",
    "JobRecord", "JobState", "MetricSeries", "NodeInfo", "TraceBundle",
]
