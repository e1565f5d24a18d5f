"""Response-time analysis under GCAPS priority-based GPU context scheduling.

Each GPU segment is bracketed by two runlist updates of cost ``epsilon``;
real-time GPU work never interleaves, higher-priority segments evict lower
ones, and the rt_mutex around the update path adds bounded blocking.

With a separate GPU-segment priority assignment (``PriorityView.separate``)
the remote higher-priority set is taken by GPU priority and every jitter
uses the deadline instead of the response time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .analysis import (
    AnalysisResult, InterferenceBreakdown, Mode, TaskResult, _Unbounded, analysis_order,
    ceil_div, fixed_point, known_response, remote_higher, require_valid, same_core_higher,
)
from .model import SystemConfig, Task, Taskset, ValidationError, priority_order_violations


@dataclass(frozen=True)
class PriorityView:
    """How GPU priorities are read from a taskset.

    ``unified`` ignores the tasks' ``gpu_priority`` and uses the CPU priority
    everywhere; ``separate`` uses ``gpu_priority`` for GPU interference.
    ``jitter`` selects response-time based (``"response"``) or
    deadline-based (``"deadline"``) release jitter.
    """

    mode: str = "unified"
    jitter: str | None = None

    def __post_init__(self):
        if self.mode not in ("unified", "separate"):
            raise ValueError(f"unknown priority view {self.mode!r}")
        if self.jitter is None:
            object.__setattr__(self, "jitter", "deadline" if self.mode == "separate" else "response")
        if self.jitter not in ("response", "deadline"):
            raise ValueError(f"unknown jitter source {self.jitter!r}")

    @property
    def by_gpu(self) -> bool:
        return self.mode == "separate"

    def gpu_priority(self, t: Task) -> int:
        return t.gpu_priority if self.by_gpu else t.cpu_priority

    def cpu_priority(self, t: Task) -> int:
        return t.cpu_priority


UNIFIED = PriorityView("unified")
SEPARATE = PriorityView("separate")


def _view(view) -> PriorityView:
    if view is None:
        return UNIFIED
    if isinstance(view, PriorityView):
        return view
    return PriorityView(str(view))


class InflatedDemands(NamedTuple):
    g_star: int
    ge_star: int
    gm_star: int


def inflated_demands(task: Task, cfg: SystemConfig) -> InflatedDemands:
    extra = 2 * cfg.runlist_update * task.eta_g
    return InflatedDemands(task.G + extra, task.Ge + extra, task.Gm + extra)


def gcaps_blocking(task: Task, cfg: SystemConfig) -> int:
    return (task.eta_g + 1) * cfg.runlist_update


def _response_or_deadline(th: Task, responses, view: PriorityView) -> int:
    if view.jitter == "deadline":
        return th.deadline
    return known_response(responses or {}, th)


def _gpu_jitter(th: Task, responses, view) -> int:
    return max(0, _response_or_deadline(th, responses, view) - th.Ge)


def _cpu_jitter(th: Task, responses, view) -> int:
    return max(0, _response_or_deadline(th, responses, view) - (th.C + th.Gm))


def _remote_gpu_term(ts: Taskset, ti: Task, R: int, view, responses) -> int:
    cfg = ts.config
    total = 0
    for th in remote_higher(ts, ti, view.by_gpu):
        if th.uses_gpu:
            jitter = _gpu_jitter(th, responses, view)
            total += ceil_div(R + jitter, th.period) * inflated_demands(th, cfg).ge_star
    return total


def gcaps_direct_preempt(ts: Taskset, i, R: int, mode, view=None, responses=None) -> int:
    ti = ts.task(i)
    if not ti.uses_gpu:
        return 0
    mode, view = Mode(mode), _view(view)
    cfg = ts.config
    local = 0
    for th in same_core_higher(ts, ti):
        if not th.uses_gpu:
            continue
        if mode is Mode.BUSY:
            local += ceil_div(R, th.period) * inflated_demands(th, cfg).ge_star
        else:
            # Updates of a same-core task already sit in its CPU demand.
            jitter = _gpu_jitter(th, responses, view)
            local += ceil_div(R + jitter, th.period) * th.Ge
    return local + _remote_gpu_term(ts, ti, R, view, responses)


def gcaps_indirect_busy(ts: Taskset, i, R: int, view=None, responses=None) -> int:
    """Busy-waiting delay seen by a CPU-only task.

    GPU-using tasks get zero here: their direct-preemption term already holds
    the same remote contributions.  For a CPU-only task the remote sum is
    taken over all of hp(i) as written, not only over the GPU competitors
    of the spinning middle task in hpp(i); that per-middle-task reading is
    tighter but not what the bound states.

    The second sum charges each same-core higher-priority GPU task's own
    spin (G^e plus its two updates per segment).  Without it nothing in the
    recurrence covers the core time such a task burns while busy-waiting.
    """
    ti = ts.task(i)
    if ti.uses_gpu:
        return 0
    view = _view(view)
    spin = 0
    for th in same_core_higher(ts, ti):
        if th.uses_gpu:
            spin += ceil_div(R, th.period) * inflated_demands(th, ts.config).ge_star
    return _remote_gpu_term(ts, ti, R, view, responses) + spin


def gcaps_cpu_preempt(ts: Taskset, i, R: int, mode, responses=None, view=None) -> int:
    ti = ts.task(i)
    mode, view = Mode(mode), _view(view)
    total = 0
    for th in same_core_higher(ts, ti):
        if mode is Mode.BUSY:
            total += ceil_div(R, th.period) * (th.C + th.Gm)
        elif not th.uses_gpu:
            total += ceil_div(R, th.period) * th.C
        else:
            jitter = _cpu_jitter(th, responses, view)
            total += ceil_div(R + jitter, th.period) * (th.C + inflated_demands(th, ts.config).gm_star)
    return total


def task_response_time(ts: Taskset, ti: Task, mode, view, responses) -> TaskResult:
    """Fixed-point bound for one real-time task given hp response times."""
    mode, view = Mode(mode), _view(view)
    cfg = ts.config
    blocking = gcaps_blocking(ti, cfg)
    own = ti.C + ti.G + 2 * cfg.runlist_update * ti.eta_g

    def interference(r):
        return InterferenceBreakdown(
            cpu_preempt=gcaps_cpu_preempt(ts, ti.id, r, mode, responses, view),
            cpu_block=blocking,
            gpu_direct=gcaps_direct_preempt(ts, ti.id, r, mode, view, responses),
            gpu_indirect=gcaps_indirect_busy(ts, ti.id, r, view, responses) if mode is Mode.BUSY else 0,
        )

    try:
        wcrt, parts = fixed_point(ti, own, interference)
    except _Unbounded:
        return TaskResult(None, InterferenceBreakdown(cpu_block=blocking), False)
    return TaskResult(wcrt, parts, wcrt is not None)


def gcaps_response_times(ts: Taskset, mode, view=None) -> AnalysisResult:
    require_valid(ts)
    mode, view = Mode(mode), _view(view)
    if view.by_gpu:
        problems = priority_order_violations(ts)
        if problems:
            raise ValidationError(problems)
    responses: dict = {}
    per_task: dict = {}
    for ti in analysis_order(ts):
        res = task_response_time(ts, ti, mode, view, responses)
        responses[ti.id] = res.wcrt
        per_task[ti.id] = res
    for t in ts.tasks:
        if not t.realtime:
            per_task[t.id] = TaskResult(None)
    gprio = {t.id: view.gpu_priority(t) for t in ts.tasks if t.realtime}
    suffix = "_sep" if view.by_gpu else ""
    return AnalysisResult(per_task={t.id: per_task[t.id] for t in ts.tasks},
                          method=f"gcaps_{mode.value}{suffix}", view=view.mode,
                          gpu_priorities=gprio)
