"""Separate GPU-segment priorities via Audsley's lowest-level-first search."""

from __future__ import annotations

from dataclasses import dataclass, field

from .analysis import Mode, require_valid
from .model import Task, Taskset
from .rta_gcaps import SEPARATE, UNIFIED, gcaps_response_times, task_response_time


@dataclass(frozen=True)
class GpuPriorityAssignment:
    priorities: dict = field(default_factory=dict)  # task id -> gpu priority
    feasible: bool = False

    def to_dict(self) -> dict:
        return {"feasible": self.feasible,
                "gpu_priorities": {str(k): v for k, v in self.priorities.items()}}

    def apply(self, ts: Taskset) -> Taskset:
        return ts.with_gpu_priorities(self.priorities)


def _passes_at_level(ts: Taskset, cand: Task, assigned: list[Task], unassigned: list[Task],
                     mode: Mode) -> bool:
    # Lower levels already fixed, every other unassigned task above the candidate.
    prio = {t.id: lvl for lvl, t in enumerate(assigned, start=1)}
    level = len(assigned) + 1
    prio[cand.id] = level
    for t in unassigned:
        if t.id != cand.id:
            prio[t.id] = level + 1
    trial = ts.with_gpu_priorities(prio)
    res = task_response_time(trial, trial.task(cand.id), mode, SEPARATE, {})
    return bool(res.schedulable)


def _level_values(rt: list[Task]) -> list[int]:
    values = sorted(t.cpu_priority for t in rt)
    if len(set(values)) == len(values):
        return values
    return list(range(1, len(rt) + 1))


def assign_gpu_priorities(ts: Taskset, mode) -> GpuPriorityAssignment:
    """Assign GPU priorities bottom-up, keeping each core's GPU order equal to its CPU order.

    At every level the candidates are the lowest-CPU-priority unassigned task
    of each core, tried in order of lowest CPU priority then lowest id; the
    first one whose own test passes (deadline-based jitters, all unassigned
    tasks assumed above it) takes the level.
    """
    require_valid(ts)
    mode = Mode(mode)
    rt = ts.realtime_tasks()
    unassigned = sorted(rt, key=Task.cpu_key)
    assigned: list[Task] = []
    while unassigned:
        lowest_on_core: dict[int, Task] = {}
        for t in unassigned:
            lowest_on_core.setdefault(t.core, t)
        candidates = sorted(lowest_on_core.values(), key=lambda t: (t.cpu_priority, t.id))
        chosen = next((c for c in candidates
                       if _passes_at_level(ts, c, assigned, unassigned, mode)), None)
        if chosen is None:
            return GpuPriorityAssignment({}, False)
        assigned.append(chosen)
        unassigned.remove(chosen)

    values = _level_values(rt)
    prio = {t.id: v for t, v in zip(assigned, values)}
    result = GpuPriorityAssignment(prio, True)
    assert gcaps_response_times(result.apply(ts), mode, SEPARATE).taskset_schedulable
    return result


def schedulable_with_separate_priorities(ts: Taskset, mode) -> bool:
    """Two-stage test: default priorities first, then a searched GPU assignment."""
    if gcaps_response_times(ts, mode, UNIFIED).taskset_schedulable:
        return True
    return assign_gpu_priorities(ts, mode).feasible
