"""Result types and helpers shared by the two response-time analyses."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from enum import Enum

from .model import Task, Taskset, ValidationError, to_ms, validate


class Mode(str, Enum):
    BUSY = "busy"
    SUSPEND = "suspend"


class AnalysisOrderError(RuntimeError):
    """A jitter term needs the response time of a task that was not analyzed yet."""


class _Unbounded(Exception):
    pass


UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class InterferenceBreakdown:
    cpu_preempt: int = 0  # P^C
    cpu_block: int = 0  # B^C
    gpu_direct: int = 0  # I^dp
    gpu_indirect: int = 0  # I^id
    gpu_interleave: int = 0  # I^ie

    @property
    def total(self) -> int:
        return (self.cpu_preempt + self.cpu_block + self.gpu_direct
                + self.gpu_indirect + self.gpu_interleave)


@dataclass(frozen=True)
class TaskResult:
    wcrt: int | None  # None when the iteration passed the deadline
    breakdown: InterferenceBreakdown = field(default_factory=InterferenceBreakdown)
    schedulable: bool | None = None  # None for best-effort tasks (not analyzed)

    @property
    def analyzed(self) -> bool:
        return self.schedulable is not None

    @property
    def bounded(self) -> bool:
        return self.wcrt is not None


@dataclass
class AnalysisResult:
    per_task: dict
    method: str = ""
    view: str = "unified"
    gpu_priorities: dict = field(default_factory=dict)

    @property
    def taskset_schedulable(self) -> bool:
        return all(r.schedulable for r in self.per_task.values() if r.analyzed)

    def wcrt(self, task_id) -> int | None:
        return self.per_task[task_id].wcrt

    def responses(self) -> dict:
        return {tid: r.wcrt for tid, r in self.per_task.items() if r.analyzed}

    def to_dict(self) -> dict:
        tasks = {}
        for tid, r in self.per_task.items():
            entry = {
                "analyzed": r.analyzed,
                "wcrt_ms": UNBOUNDED if r.wcrt is None else to_ms(r.wcrt),
                "schedulable": r.schedulable,
            }
            entry.update({k + "_ms": to_ms(v) for k, v in asdict(r.breakdown).items()})
            tasks[str(tid)] = entry
        return {
            "method": self.method,
            "view": self.view,
            "gpu_priorities": {str(k): v for k, v in self.gpu_priorities.items()},
            "taskset_schedulable": self.taskset_schedulable,
            "tasks": tasks,
        }


def ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def require_valid(ts: Taskset) -> None:
    problems = validate(ts)
    if problems:
        raise ValidationError(problems)


def same_core_higher(ts: Taskset, ti: Task) -> list[Task]:
    """hpp(): real-time tasks on ti's core with higher CPU priority."""
    key = ti.cpu_key()
    return [t for t in ts.tasks if t.realtime and t.core == ti.core and t.id != ti.id
            and t.cpu_key() > key]


def remote_higher(ts: Taskset, ti: Task, by_gpu: bool) -> list[Task]:
    """hp() minus hpp(): higher-priority real-time tasks on other cores."""
    if by_gpu:
        key = ti.gpu_key()
        return [t for t in ts.tasks if t.realtime and t.core != ti.core and t.gpu_key() > key]
    key = ti.cpu_key()
    return [t for t in ts.tasks if t.realtime and t.core != ti.core and t.cpu_key() > key]


def analysis_order(ts: Taskset) -> list[Task]:
    """Real-time tasks by decreasing CPU priority (ties to lower id)."""
    return sorted(ts.realtime_tasks(), key=Task.cpu_key, reverse=True)


def known_response(responses: dict, th: Task) -> int:
    if th.id not in responses:
        raise AnalysisOrderError(
            f"response time of task {th.id} is needed; analyze tasks in decreasing priority")
    r = responses[th.id]
    if r is None:
        raise _Unbounded(th.id)
    return r


def fixed_point(task: Task, base: int, interference) -> tuple[int | None, object]:
    """Iterate ``R = base + interference(R).total`` from ``base`` on the us grid.

    Returns ``(R, breakdown)`` at the fixed point, or ``(None, last)`` once R
    passes the deadline.
    """
    r = base
    while True:
        parts = interference(r)
        nxt = base + parts.total
        if nxt > task.deadline:
            return None, parts
        if nxt == r:
            return r, parts
        r = nxt
