"""Random taskset generation and the fixed example taskset.

The pipeline: per core draw a task count and a utilization, split it with
UUniFast, turn each share into segment WCETs, assign Rate-Monotonic
priorities, re-allocate all tasks with worst-fit decreasing, and finally
demote a fraction of tasks to best-effort.

A task's drawn utilization share covers its whole demand ``C + G``; the
worst-fit reallocation balances CPU-side load ``(C + G^m) / T``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .model import GpuSegment, SystemConfig, Task, Taskset, us

MAX_RETRIES = 100


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class GenParams:
    num_cores: int = 4
    tasks_per_core: tuple[int, int] = (3, 6)
    gpu_task_ratio: tuple[float, float] = (0.4, 0.6)  # fraction of tasks using the GPU
    util_per_core: tuple[float, float] = (0.4, 0.6)
    period: tuple[float, float] = (30.0, 500.0)  # ms
    gpu_segments_per_task: tuple[int, int] = (1, 3)
    g_to_c_ratio: tuple[float, float] = (0.2, 2.0)
    gm_in_g_ratio: tuple[float, float] = (0.1, 0.3)
    epsilon: float = 1.0  # ms
    theta: float = 0.2  # ms
    slice: float = 1.024  # ms
    best_effort_ratio: float = 0.0
    seed: int = 0
    period_dist: str = "uniform"  # or "loguniform"

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                object.__setattr__(self, f.name, tuple(v))

    def violations(self) -> list[str]:
        out = []
        ranges = ["tasks_per_core", "gpu_task_ratio", "util_per_core", "period",
                  "gpu_segments_per_task", "g_to_c_ratio", "gm_in_g_ratio"]
        for name in ranges:
            lo, hi = getattr(self, name)
            if lo > hi:
                out.append(f"{name}: empty range [{lo}, {hi}]")
        for name in ("gpu_task_ratio", "gm_in_g_ratio"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi > 1:
                out.append(f"{name}: must lie within [0, 1]")
        if not 0 <= self.best_effort_ratio <= 1:
            out.append("best_effort_ratio: must lie within [0, 1]")
        if self.num_cores < 1:
            out.append("num_cores: must be >= 1")
        if self.tasks_per_core[0] < 1:
            out.append("tasks_per_core: need at least one task per core")
        if self.util_per_core[0] <= 0:
            out.append("util_per_core: must be > 0")
        if self.period[0] <= 0:
            out.append("period: must be > 0")
        if self.gpu_segments_per_task[0] < 1:
            out.append("gpu_segments_per_task: GPU tasks need at least one segment")
        if self.slice <= 0 or self.theta < 0 or self.epsilon < self.theta:
            out.append("overheads: need slice > 0 and epsilon >= theta >= 0")
        if self.period_dist not in ("uniform", "loguniform"):
            out.append(f"period_dist: unknown distribution {self.period_dist!r}")
        return out

    def system_config(self) -> SystemConfig:
        return SystemConfig.from_ms(self.num_cores, self.slice, self.theta, self.epsilon)

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "GenParams":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown generation parameters: {sorted(unknown)}")
        return cls(**d)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def uunifast(n: int, total_util: float, rng: np.random.Generator) -> list[float]:
    """Split ``total_util`` into ``n`` shares uniformly over the simplex (Bini & Buttazzo)."""
    shares = []
    remaining = total_util
    for i in range(1, n):
        nxt = remaining * rng.random() ** (1.0 / (n - i))
        shares.append(remaining - nxt)
        remaining = nxt
    shares.append(remaining)
    return shares


def _split(total: int, parts: int, rng: np.random.Generator, minimum: int = 0) -> list[int]:
    """Integer split of ``total`` over ``parts`` with a flat Dirichlet draw."""
    if parts == 1:
        return [total]
    w = rng.dirichlet(np.ones(parts))
    free = total - minimum * parts
    raw = np.floor(w * free).astype(int)
    raw[int(np.argmax(w))] += free - int(raw.sum())
    return [int(x) + minimum for x in raw]


def _draw_period(p: GenParams, rng) -> int:
    lo, hi = p.period
    if p.period_dist == "loguniform":
        return us(float(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
    return us(float(rng.uniform(lo, hi)))


def _draw_task(tid: int, util: float, uses_gpu: bool, p: GenParams, rng) -> Task | None:
    period = _draw_period(p, rng)
    if not uses_gpu:
        c = max(1, int(round(util * period)))
        if c > period:
            return None
        return Task(tid, (c,), (), period, period)
    eta = int(rng.integers(p.gpu_segments_per_task[0], p.gpu_segments_per_task[1] + 1))
    g_over_c = float(rng.uniform(*p.g_to_c_ratio))
    gm_share = float(rng.uniform(*p.gm_in_g_ratio))
    # util * T = C + G  with  G = r * C
    c_total = util * period / (1.0 + g_over_c)
    g_total = g_over_c * c_total
    c_us = int(round(c_total))
    g_us = max(int(round(g_total)), eta)  # every segment keeps >= 1 us of GPU work
    if c_us + g_us > period:
        return None
    cpu = _split(c_us, eta + 1, rng)
    segs = []
    for g in _split(g_us, eta, rng, minimum=1):
        gm = min(int(round(gm_share * g)), g - 1)
        segs.append(GpuSegment(gm, g - gm))
    return Task(tid, tuple(cpu), tuple(segs), period, period)


def rate_monotonic(tasks: list[Task]) -> list[Task]:
    """Distinct priorities by period, shorter period higher; ties go to the lower id."""
    order = sorted(tasks, key=lambda t: (t.period, t.id))
    n = len(order)
    prio = {t.id: n - k for k, t in enumerate(order)}
    return [replace(t, cpu_priority=prio[t.id], gpu_priority=prio[t.id]) for t in tasks]


def worst_fit_decreasing(tasks: list[Task], num_cores: int) -> list[Task]:
    """Re-allocate by decreasing CPU utilization, each onto the least-loaded core."""
    load = [0.0] * num_cores
    core_of = {}
    for t in sorted(tasks, key=lambda t: (-t.cpu_utilization, t.id)):
        c = min(range(num_cores), key=lambda k: (load[k], k))
        core_of[t.id] = c
        load[c] += t.cpu_utilization
    return [replace(t, core=core_of[t.id]) for t in tasks]


def generate_taskset(p: GenParams, rng: np.random.Generator | None = None) -> Taskset:
    problems = p.violations()
    if problems:
        raise GenerationError("; ".join(problems))
    if rng is None:
        rng = np.random.default_rng(p.seed)

    shares: list[tuple[int, float]] = []
    for core in range(p.num_cores):
        n = int(rng.integers(p.tasks_per_core[0], p.tasks_per_core[1] + 1))
        u = float(rng.uniform(*p.util_per_core))
        shares.extend((core, s) for s in uunifast(n, u, rng))
    n = len(shares)
    gpu_ratio = float(rng.uniform(*p.gpu_task_ratio))
    n_gpu = int(round(gpu_ratio * n))
    gpu_idx = set(int(k) for k in rng.choice(n, size=n_gpu, replace=False))

    tasks = []
    for k, (core, util) in enumerate(shares):
        for _ in range(MAX_RETRIES):
            t = _draw_task(k + 1, util, k in gpu_idx, p, rng)
            if t is not None:
                break
        else:
            raise GenerationError(f"task {k + 1}: no feasible draw for utilization {util:.3f} "
                                  f"after {MAX_RETRIES} tries")
        tasks.append(replace(t, core=core))

    tasks = rate_monotonic(tasks)
    tasks = worst_fit_decreasing(tasks, p.num_cores)
    n_be = int(round(p.best_effort_ratio * n))
    if n_be:
        be = set(int(k) for k in rng.choice(n, size=n_be, replace=False))
        tasks = [replace(t, realtime=False, cpu_priority=0, gpu_priority=0) if k in be else t
                 for k, t in enumerate(tasks)]
    return Taskset(tuple(tasks), p.system_config())


def taskset_seed(base_seed: int, *indices: int) -> np.random.Generator:
    """Independent generator for one taskset of a batch, derived from the batch seed."""
    return np.random.default_rng(np.random.SeedSequence([base_seed, *indices]))


def generate_batch(p: GenParams, count: int, *indices: int) -> list[Taskset]:
    return [generate_taskset(p, taskset_seed(p.seed, *indices, k)) for k in range(count)]


def table2_taskset(config: SystemConfig | None = None) -> Taskset:
    """Four tasks on two cores with RM priorities; the third task first arrives at 70 ms.

    Core 0 hosts tasks 1, 2 and 4; core 1 hosts task 3.  The default
    configuration has zero update and switch overheads.
    """
    cfg = config or SystemConfig.from_ms(num_cores=2, slice_ms=1.024, theta_ms=0.0, epsilon_ms=0.0)
    tasks = (
        Task.from_ms(1, [2, 4, 3], [(2, 4), (2, 2)], period=80, priority=4, core=0),
        Task.from_ms(2, [40], [], period=150, priority=3, core=0),
        Task.from_ms(3, [4, 30], [(5, 80)], period=190, priority=2, core=1, first_release=70),
        Task.from_ms(4, [16, 2], [(2, 10)], period=200, priority=1, core=0),
    )
    return Taskset(tasks, cfg)
