"""Schedulability analysis, taskset generation and simulation for
multi-core real-time systems sharing one GPU, under GCAPS preemptive
GPU context scheduling and the default time-sliced round-robin driver."""

from .model import GpuSegment, SystemConfig, Task, Taskset, ValidationError, validate
from .analysis import AnalysisResult, InterferenceBreakdown, Mode
from .rta_rr import rr_response_times
from .rta_gcaps import PriorityView, gcaps_response_times
from .prio_assign import GpuPriorityAssignment, assign_gpu_priorities
from .gen import GenParams, GenerationError, generate_taskset, table2_taskset
from .sim import ReleasePattern, SimConfig, SimResult, estimate_theta, simulate

__all__ = [
    "GpuSegment", "SystemConfig", "Task", "Taskset", "ValidationError", "validate",
    "AnalysisResult", "InterferenceBreakdown", "Mode",
    "rr_response_times", "gcaps_response_times", "PriorityView",
    "GpuPriorityAssignment", "assign_gpu_priorities",
    "GenParams", "GenerationError", "generate_taskset", "table2_taskset",
    "ReleasePattern", "SimConfig", "SimResult", "estimate_theta", "simulate",
]
