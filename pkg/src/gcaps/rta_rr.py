"""Response-time analysis under the driver's default time-sliced round-robin.

Every GPU-using process owns a runlist entry that the GPU serves for up to
one slice ``L`` per turn, paying a context switch ``theta`` between turns.
GPU work is never preempted by priority, only interleaved, and the driver
needs no explicit runlist updates, so the direct-preemption and blocking
terms are always zero.
"""

from __future__ import annotations

from .analysis import (
    AnalysisResult, InterferenceBreakdown, Mode, TaskResult, _Unbounded, analysis_order,
    ceil_div, fixed_point, known_response, require_valid, same_core_higher,
)
from .model import SystemConfig, Taskset


def interleave_delay(nu: int, ge: int, cfg: SystemConfig) -> int:
    """Worst-case stretch of one pure-GPU segment interleaved with ``nu`` other entries."""
    if nu <= 0 or ge <= 0:
        return 0
    return (cfg.slice + cfg.ctx_switch) * nu * ceil_div(ge, cfg.slice)


def rr_interleaved(ts: Taskset, i) -> int:
    ti = ts.task(i)
    # The driver is priority-blind: best-effort GPU users count too.
    nu = sum(1 for t in ts.tasks if t.id != ti.id and t.uses_gpu)
    return sum(interleave_delay(nu, s.pure_gpu, ts.config) for s in ti.gpu_segments)


def rr_indirect_busy(ts: Taskset, i, R: int, responses: dict | None = None) -> int:
    """CPU delay from same-core higher-priority tasks spinning through interleaved GPU work."""
    ti = ts.task(i)
    hpp = same_core_higher(ts, ti)
    hpp_ids = {t.id for t in hpp}
    # Entries outside hpp(i) plus the spinning task itself; other hpp members are
    # charged by their own outer term.
    outside = sum(1 for t in ts.tasks if t.uses_gpu and t.id not in hpp_ids)
    total = 0
    for th in hpp:
        if not th.uses_gpu:
            continue
        nu = outside + 1
        stretch = sum(interleave_delay(nu, s.pure_gpu, ts.config) for s in th.gpu_segments)
        total += ceil_div(R, th.period) * stretch
    return total


def rr_cpu_preempt(ts: Taskset, i, R: int, mode, responses: dict | None = None) -> int:
    ti = ts.task(i)
    mode = Mode(mode)
    total = 0
    for th in same_core_higher(ts, ti):
        demand = th.C + th.Gm
        if mode is Mode.BUSY or not th.uses_gpu:
            # a task that never suspends carries no release jitter
            total += ceil_div(R, th.period) * demand
        else:
            jitter = max(0, known_response(responses or {}, th) - demand)
            total += ceil_div(R + jitter, th.period) * demand
    return total


def rr_response_times(ts: Taskset, mode) -> AnalysisResult:
    require_valid(ts)
    mode = Mode(mode)
    responses: dict = {}
    per_task: dict = {}
    for ti in analysis_order(ts):
        interleave = rr_interleaved(ts, ti.id)

        def interference(r, ti=ti, interleave=interleave):
            indirect = rr_indirect_busy(ts, ti.id, r, responses) if mode is Mode.BUSY else 0
            return InterferenceBreakdown(
                cpu_preempt=rr_cpu_preempt(ts, ti.id, r, mode, responses),
                gpu_indirect=indirect,
                gpu_interleave=interleave,
            )

        try:
            wcrt, parts = fixed_point(ti, ti.C + ti.G, interference)
        except _Unbounded:
            wcrt, parts = None, InterferenceBreakdown()
        responses[ti.id] = wcrt
        per_task[ti.id] = TaskResult(wcrt, parts, wcrt is not None)
    for t in ts.tasks:
        if not t.realtime:
            per_task[t.id] = TaskResult(None)
    return AnalysisResult(per_task={t.id: per_task[t.id] for t in ts.tasks},
                          method=f"tsg_rr_{mode.value}")
