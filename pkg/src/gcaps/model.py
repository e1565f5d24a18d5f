"""Task, taskset and platform types.

All durations are stored as integer microseconds so that the analyses and
the simulator work on an exact grid.  The JSON document format and the
``from_ms`` constructors speak milliseconds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Sequence

US_PER_MS = 1000


def us(ms: float) -> int:
    """Convert milliseconds to the integer microsecond grid."""
    return int(round(ms * US_PER_MS))


def to_ms(value_us: int) -> float:
    return value_us / US_PER_MS


class ValidationError(ValueError):
    """Raised when a taskset or parameter set breaks its invariants."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class GpuSegment:
    misc_cpu: int  # G^m, CPU-side launch work (us)
    pure_gpu: int  # G^e, GPU work needing no CPU (us)

    @property
    def total(self) -> int:
        return self.misc_cpu + self.pure_gpu


@dataclass(frozen=True)
class Task:
    id: int
    cpu_segments: tuple[int, ...]
    gpu_segments: tuple[GpuSegment, ...]
    period: int
    deadline: int
    cpu_priority: int = 0
    gpu_priority: int | None = None
    core: int = 0
    realtime: bool = True
    first_release: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cpu_segments", tuple(int(c) for c in self.cpu_segments))
        object.__setattr__(self, "gpu_segments", tuple(self.gpu_segments))
        if self.gpu_priority is None:
            object.__setattr__(self, "gpu_priority", self.cpu_priority)

    @classmethod
    def from_ms(cls, id, cpu, gpu=(), period=100.0, deadline=None, priority=0,
                gpu_priority=None, core=0, realtime=True, first_release=0.0):
        """Build a task from millisecond values; ``gpu`` holds ``(gm, ge)`` pairs."""
        return cls(
            id=id,
            cpu_segments=tuple(us(c) for c in cpu),
            gpu_segments=tuple(GpuSegment(us(gm), us(ge)) for gm, ge in gpu),
            period=us(period),
            deadline=us(period if deadline is None else deadline),
            cpu_priority=priority,
            gpu_priority=gpu_priority,
            core=core,
            realtime=realtime,
            first_release=us(first_release),
        )

    @cached_property
    def C(self) -> int:
        return sum(self.cpu_segments)

    @cached_property
    def G(self) -> int:
        return sum(s.total for s in self.gpu_segments)

    @cached_property
    def Gm(self) -> int:
        return sum(s.misc_cpu for s in self.gpu_segments)

    @cached_property
    def Ge(self) -> int:
        return sum(s.pure_gpu for s in self.gpu_segments)

    @property
    def eta_g(self) -> int:
        return len(self.gpu_segments)

    @property
    def uses_gpu(self) -> bool:
        return bool(self.gpu_segments)

    @property
    def cpu_utilization(self) -> float:
        return (self.C + self.Gm) / self.period

    def cpu_key(self) -> tuple:
        """Total order on CPU priority: best-effort below real-time, ties to lower id."""
        return (self.realtime, self.cpu_priority if self.realtime else 0, -self.id)

    def gpu_key(self) -> tuple:
        return (self.realtime, self.gpu_priority if self.realtime else 0, -self.id)


@dataclass(frozen=True)
class SystemConfig:
    num_cores: int = 4
    slice: int = 1024  # L, TSG time slice (us)
    ctx_switch: int = 200  # theta (us)
    runlist_update: int = 1000  # epsilon (us)

    @classmethod
    def from_ms(cls, num_cores=4, slice_ms=1.024, theta_ms=0.2, epsilon_ms=1.0):
        return cls(num_cores, us(slice_ms), us(theta_ms), us(epsilon_ms))

    def violations(self) -> list[str]:
        out = []
        if self.num_cores < 1:
            out.append("config: num_cores must be >= 1")
        if self.slice <= 0:
            out.append("config: slice must be > 0")
        if self.ctx_switch < 0:
            out.append("config: ctx_switch must be >= 0")
        if self.runlist_update < self.ctx_switch:
            out.append("config: runlist_update must be >= ctx_switch")
        return out


@dataclass(frozen=True)
class Taskset:
    tasks: tuple[Task, ...]
    config: SystemConfig = field(default_factory=SystemConfig)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))

    def __iter__(self):
        return iter(self.tasks)

    def __len__(self):
        return len(self.tasks)

    def task(self, task_id) -> Task:
        for t in self.tasks:
            if t.id == task_id:
                return t
        raise KeyError(task_id)

    @property
    def ids(self) -> list:
        return [t.id for t in self.tasks]

    def realtime_tasks(self) -> list[Task]:
        return [t for t in self.tasks if t.realtime]

    def with_config(self, **changes) -> "Taskset":
        return Taskset(self.tasks, replace(self.config, **changes))

    def with_gpu_priorities(self, prio: dict) -> "Taskset":
        return Taskset(
            tuple(replace(t, gpu_priority=prio.get(t.id, t.gpu_priority)) for t in self.tasks),
            self.config,
        )

    def without(self, task_id) -> "Taskset":
        return Taskset(tuple(t for t in self.tasks if t.id != task_id), self.config)


def _task_violations(t: Task) -> list[str]:
    out = []
    name = f"task {t.id}"
    if len(t.cpu_segments) != t.eta_g + 1:
        out.append(f"{name}: needs {t.eta_g + 1} CPU segments around {t.eta_g} GPU segments, "
                   f"got {len(t.cpu_segments)}")
    if any(c < 0 for c in t.cpu_segments):
        out.append(f"{name}: negative CPU segment")
    for j, s in enumerate(t.gpu_segments):
        if s.misc_cpu < 0:
            out.append(f"{name}: GPU segment {j} has negative misc_cpu")
        if s.pure_gpu <= 0:
            out.append(f"{name}: GPU segment {j} needs pure_gpu > 0")
    if t.period <= 0:
        out.append(f"{name}: period must be > 0")
    if t.deadline <= 0:
        out.append(f"{name}: deadline must be > 0")
    if t.deadline > t.period:
        out.append(f"{name}: deadline {to_ms(t.deadline)} exceeds period {to_ms(t.period)}")
    if t.first_release < 0:
        out.append(f"{name}: negative first_release")
    return out


def validate(ts: Taskset) -> list[str]:
    """Return every invariant violation of ``ts``; an empty list means valid."""
    out = list(ts.config.violations())
    seen = set()
    for t in ts.tasks:
        if t.id in seen:
            out.append(f"task {t.id}: duplicate id")
        seen.add(t.id)
        out.extend(_task_violations(t))
        if not 0 <= t.core < ts.config.num_cores:
            out.append(f"task {t.id}: core {t.core} outside 0..{ts.config.num_cores - 1}")
    out.extend(priority_order_violations(ts))
    return out


def priority_order_violations(ts: Taskset) -> list[str]:
    """Same-core priority rules: distinct CPU priorities, GPU order matching CPU order."""
    out = []
    by_core: dict[int, list[Task]] = {}
    for t in ts.tasks:
        if t.realtime:
            by_core.setdefault(t.core, []).append(t)
    for core, tasks in sorted(by_core.items()):
        prios = [t.cpu_priority for t in tasks]
        if len(set(prios)) != len(prios):
            out.append(f"core {core}: real-time tasks share a cpu_priority")
        for a in tasks:
            for b in tasks:
                if a.cpu_priority > b.cpu_priority and a.gpu_priority <= b.gpu_priority:
                    out.append(f"core {core}: task {a.id} has higher cpu_priority than task {b.id} "
                               f"but not a higher gpu_priority (same-core GPU order must "
                               f"follow CPU order to avoid deadlock)")
    return out


def check(ts: Taskset) -> Taskset:
    problems = validate(ts)
    if problems:
        raise ValidationError(problems)
    return ts


def per_core_utilization(ts: Taskset) -> dict[int, float]:
    """CPU-side utilization (C + G^m) / T summed per core, every core listed."""
    util = {c: 0.0 for c in range(ts.config.num_cores)}
    for t in ts.tasks:
        util[t.core] = util.get(t.core, 0.0) + t.cpu_utilization
    return util


# -- document format -------------------------------------------------------

def _ms(v: int) -> float:
    return round(v / US_PER_MS, 3)


def config_to_dict(cfg: SystemConfig) -> dict:
    return {
        "num_cores": cfg.num_cores,
        "slice_ms": _ms(cfg.slice),
        "theta_ms": _ms(cfg.ctx_switch),
        "epsilon_ms": _ms(cfg.runlist_update),
    }


def config_from_dict(d: dict) -> SystemConfig:
    return SystemConfig.from_ms(
        num_cores=int(d.get("num_cores", 4)),
        slice_ms=float(d.get("slice_ms", 1.024)),
        theta_ms=float(d.get("theta_ms", 0.2)),
        epsilon_ms=float(d.get("epsilon_ms", 1.0)),
    )


def task_to_dict(t: Task) -> dict:
    return {
        "id": t.id,
        "core": t.core,
        "realtime": t.realtime,
        "cpu_priority": t.cpu_priority,
        "gpu_priority": t.gpu_priority,
        "period_ms": _ms(t.period),
        "deadline_ms": _ms(t.deadline),
        "first_release_ms": _ms(t.first_release),
        "cpu_segments_ms": [_ms(c) for c in t.cpu_segments],
        "gpu_segments": [{"gm_ms": _ms(s.misc_cpu), "ge_ms": _ms(s.pure_gpu)}
                         for s in t.gpu_segments],
    }


def task_from_dict(d: dict) -> Task:
    return Task.from_ms(
        id=d["id"],
        cpu=d["cpu_segments_ms"],
        gpu=[(g["gm_ms"], g["ge_ms"]) for g in d.get("gpu_segments", [])],
        period=d["period_ms"],
        deadline=d.get("deadline_ms"),
        priority=d.get("cpu_priority", 0),
        gpu_priority=d.get("gpu_priority"),
        core=d.get("core", 0),
        realtime=d.get("realtime", True),
        first_release=d.get("first_release_ms", 0.0),
    )


def taskset_to_dict(ts: Taskset) -> dict:
    return {"config": config_to_dict(ts.config), "tasks": [task_to_dict(t) for t in ts.tasks]}


def taskset_from_dict(d: dict) -> Taskset:
    return Taskset(tuple(task_from_dict(t) for t in d["tasks"]), config_from_dict(d.get("config", {})))


def dumps(ts: Taskset, indent: int | None = 2) -> str:
    return json.dumps(taskset_to_dict(ts), indent=indent)


def loads(text: str) -> Taskset:
    return taskset_from_dict(json.loads(text))


def make_taskset(tasks: Iterable[Task], config: SystemConfig | None = None) -> Taskset:
    return Taskset(tuple(tasks), config or SystemConfig())
