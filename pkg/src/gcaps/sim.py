"""Discrete-event simulator for partitioned fixed-priority CPUs sharing one GPU.

Two GPU policies are modelled:

``tsg_rr``
    Every task with outstanding pure-GPU work owns a runlist entry.  The GPU
    serves entries round-robin in ascending id order, each visit lasting
    ``min(remaining, L)``, and pays ``theta`` whenever it switches to a
    different context.  A slice is never cut short.

``gcaps``
    A running set and a pending set of GPU contexts, updated at the begin
    and end of every GPU segment.  An update that changes which contexts
    may run (a task entering the running set, or a running task leaving it)
    takes a single priority-ordered lock, runs non-preemptively for
    ``epsilon`` on the issuing core and stalls the GPU meanwhile.  An update
    that only parks a lower-priority context in the pending set rewrites
    nothing the GPU sees, so it is ordinary preemptible CPU work of
    ``epsilon`` and takes no lock; it commits when that work is done, and if
    by then the context would run it claims the GPU under the lock without
    paying ``epsilon`` again.  The end-of-segment update is issued by
    the completion itself and needs no CPU.  A real-time context in the
    running set runs alone; best-effort contexts share the GPU round-robin
    when no real-time context runs.

In busy mode a task keeps competing for its core at its own priority while
it waits for the GPU; in suspend mode it leaves the core until its segment
(including the end update) is finished.

Time runs on the integer microsecond grid; the public config speaks ms.
"""

from __future__ import annotations

import json
import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .analysis import Mode, require_valid
from .model import SystemConfig, Task, Taskset, ValidationError, to_ms, us

EVENT_KINDS = (
    "job_release", "cpu_dispatch", "cpu_preempt", "gpu_seg_begin_request",
    "runlist_update_start", "runlist_update_end", "gpu_dispatch", "gpu_preempt",
    "gpu_slice_expire", "gpu_ctx_switch", "gpu_seg_complete", "job_complete",
    "deadline_miss",
)
KIND_RANK = {k: i for i, k in enumerate(EVENT_KINDS)}
POLICIES = ("gcaps", "tsg_rr")
RELEASE_KINDS = ("synchronous", "periodic_with_offsets", "sporadic")


class Event(NamedTuple):
    time: int  # us
    kind: str
    task: int
    job: int

    def sort_key(self):
        return (self.time, KIND_RANK[self.kind], self.task)

    def line(self) -> str:
        return f"{self.time},{self.kind},{self.task},{self.job}"


@dataclass(frozen=True)
class ReleasePattern:
    """How jobs arrive.

    ``synchronous`` releases every task at its ``first_release`` and then
    strictly periodically.  ``periodic_with_offsets`` adds a seeded random
    offset in ``[0, T)`` to each first release.  ``sporadic`` stretches each
    inter-arrival time by a seeded uniform draw from ``jitter`` (ms).
    """

    kind: str = "synchronous"
    seed: int = 0
    jitter: tuple[float, float] = (0.0, 0.0)

    def violations(self) -> list[str]:
        out = []
        if self.kind not in RELEASE_KINDS:
            out.append(f"release pattern: unknown kind {self.kind!r}")
        lo, hi = self.jitter
        if lo < 0 or hi < lo:
            out.append(f"release pattern: jitter range [{lo}, {hi}] must satisfy 0 <= lo <= hi")
        return out

    @classmethod
    def sporadic(cls, seed: int, jitter=(0.0, 10.0)) -> "ReleasePattern":
        return cls("sporadic", seed, tuple(jitter))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "jitter_ms": list(self.jitter)}

    @classmethod
    def from_dict(cls, d: dict) -> "ReleasePattern":
        return cls(d.get("kind", "synchronous"), int(d.get("seed", 0)),
                   tuple(d.get("jitter_ms", (0.0, 0.0))))


@dataclass(frozen=True)
class SimConfig:
    policy: str = "gcaps"
    wait_mode: str = "busy"
    horizon: float = 1000.0  # ms; releases happen in [0, horizon)
    release: ReleasePattern = field(default_factory=ReleasePattern)
    record_trace: bool = False
    check_invariants: bool = False
    drain: float | None = None  # ms allowed after the horizon; default 10 x longest deadline

    def violations(self) -> list[str]:
        out = []
        if self.policy not in POLICIES:
            out.append(f"policy: unknown {self.policy!r}")
        if self.wait_mode not in ("busy", "suspend"):
            out.append(f"wait_mode: unknown {self.wait_mode!r}")
        if not self.horizon > 0:
            out.append("horizon must be > 0")
        out.extend(self.release.violations())
        return out

    def to_dict(self) -> dict:
        return {"policy": self.policy, "wait_mode": self.wait_mode, "horizon_ms": self.horizon,
                "release": self.release.to_dict(), "record_trace": self.record_trace,
                "check_invariants": self.check_invariants}


@dataclass
class TaskStats:
    jobs: int = 0
    misses: int = 0
    mort: int | None = None  # us
    min: int | None = None
    total_response: int = 0
    unfinished: int = 0
    cpu_time: int = 0  # useful CPU work incl. begin updates
    spin_time: int = 0  # busy-waiting on the CPU
    gpu_time: int = 0
    max_blocking_count: int = 0  # per job, lower-priority updates that blocked it
    max_blocking_span: int = 0  # longest single such blocking interval

    @property
    def mean(self) -> float | None:
        return self.total_response / self.jobs if self.jobs else None

    def record(self, response: int, missed: bool):
        self.jobs += 1
        self.total_response += response
        self.misses += missed
        self.mort = response if self.mort is None else max(self.mort, response)
        self.min = response if self.min is None else min(self.min, response)

    def to_dict(self) -> dict:
        def ms(v):
            return None if v is None else to_ms(v)
        return {"mort_ms": ms(self.mort), "mean_ms": None if self.mean is None else self.mean / 1000,
                "min_ms": ms(self.min), "jobs": self.jobs, "misses": self.misses,
                "unfinished": self.unfinished, "cpu_time_ms": ms(self.cpu_time),
                "spin_time_ms": ms(self.spin_time), "gpu_time_ms": ms(self.gpu_time),
                "max_blocking_count": self.max_blocking_count,
                "max_blocking_span_ms": ms(self.max_blocking_span)}


@dataclass
class SimResult:
    per_task: dict
    config: SimConfig
    end_time: int = 0
    hyperperiod_warning: bool = False
    trace: list | None = None
    invariant_violations: list = field(default_factory=list)

    def mort(self, task_id) -> int | None:
        return self.per_task[task_id].mort

    @property
    def misses(self) -> int:
        return sum(s.misses for s in self.per_task.values())

    def trace_lines(self) -> list[str]:
        return [e.line() for e in self.trace or []]

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(), "end_time_ms": to_ms(self.end_time),
                "hyperperiod_warning": self.hyperperiod_warning,
                "invariant_violations": list(self.invariant_violations),
                "tasks": {str(k): v.to_dict() for k, v in self.per_task.items()}}

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# phase kinds
_CPU, _BEGIN, _GPU = 0, 1, 2


class _Proc:
    __slots__ = ("task", "id", "core", "ck", "gk", "rt", "phases", "queue", "job", "pidx",
                 "kind", "rem", "upd", "gst", "next_release", "n_released", "stats",
                 "blocks", "jitter")

    def __init__(self, task: Task, gcaps: bool):
        self.task = task
        self.id = task.id
        self.core = task.core
        self.ck = task.cpu_key()
        self.gk = task.gpu_key()
        self.rt = task.realtime
        phases = []
        for j, seg in enumerate(task.gpu_segments):
            # G^m runs at CPU priority right before its pure-GPU part
            phases.append((_CPU, task.cpu_segments[j] + seg.misc_cpu))
            if gcaps:
                phases.append((_BEGIN, 0))
            phases.append((_GPU, seg.pure_gpu))
        phases.append((_CPU, task.cpu_segments[-1]))
        self.phases = phases
        self.queue = deque()
        self.job = None  # (release, index) of the job in progress
        self.pidx = 0
        self.kind = None
        self.rem = 0
        self.upd = None  # begin update: new | wait | np | bk | commit | cwait
        self.gst = None  # gcaps GPU phase: q | endwait | end
        self.next_release = None
        self.n_released = 0
        self.stats = TaskStats()
        self.blocks = {}  # update serial -> blocked time, for the current job
        self.jitter = None


class _Sim:
    def __init__(self, ts: Taskset, cfg: SimConfig):
        sc: SystemConfig = ts.config
        self.cfg = cfg
        self.gcaps = cfg.policy == "gcaps"
        self.busy = Mode(cfg.wait_mode) is Mode.BUSY
        self.eps = sc.runlist_update
        self.theta = sc.ctx_switch
        self.L = sc.slice
        self.procs = [_Proc(t, self.gcaps) for t in sorted(ts.tasks, key=lambda t: t.id)]
        self.by_core = [[p for p in self.procs if p.core == c] for c in range(sc.num_cores)]
        self.core_run = [None] * sc.num_cores
        self.prev_run = [None] * sc.num_cores
        self.t = 0
        self.horizon = us(cfg.horizon)
        drain = cfg.drain if cfg.drain is not None else None
        longest = max((t.deadline for t in ts.tasks), default=0)
        self.limit = self.horizon + (us(drain) if drain is not None else 10 * longest)
        # gcaps bookkeeping
        self.running: list[_Proc] = []
        self.pending: list[_Proc] = []
        self.lock: _Proc | None = None
        self.lock_kind = None
        self.lock_rem = 0
        self.serial = 0
        self.waiters: list[_Proc] = []
        self.end_waiters: list[_Proc] = []
        # GPU engine
        self.rr_entries: list[_Proc] = []
        self.g_cur: _Proc | None = None
        self.g_phase = None  # switch | run
        self.g_rem = 0
        self.last_ctx = None
        self.rr_pos = -math.inf
        self.trace = [] if cfg.record_trace else None
        self.violations: list[str] = []
        self._init_releases()

    # -- releases -----------------------------------------------------------

    def _init_releases(self):
        rel = self.cfg.release
        rng = random.Random(rel.seed)
        lo, hi = us(rel.jitter[0]), us(rel.jitter[1])
        for p in self.procs:
            first = p.task.first_release
            if rel.kind == "periodic_with_offsets":
                first += rng.randrange(p.task.period)
            if rel.kind == "sporadic":
                p.jitter = random.Random(rng.getrandbits(64))
            p.next_release = first if first < self.horizon else None
        self._jitter = (lo, hi)

    def _release_due(self):
        t = self.t
        for p in self.procs:
            while p.next_release is not None and p.next_release <= t:
                idx = p.n_released
                p.n_released += 1
                p.queue.append((p.next_release, idx))
                self._emit("job_release", p, idx)
                gap = p.task.period
                if p.jitter is not None:
                    gap += p.jitter.randint(*self._jitter)
                nxt = p.next_release + gap
                p.next_release = nxt if nxt < self.horizon else None
                if p.job is None:
                    self._start_job(p)

    def _start_job(self, p: _Proc):
        p.job = p.queue.popleft()
        p.pidx = 0
        p.blocks = {}
        self._enter_phase(p)

    def _finish_job(self, p: _Proc):
        release, idx = p.job
        response = self.t - release
        missed = response > p.task.deadline
        p.stats.record(response, missed)
        self._emit("job_complete", p, idx)
        if missed:
            self._emit("deadline_miss", p, idx)
        if self.cfg.check_invariants and p.rt:
            self._check_blocking(p)
        p.job = None
        p.kind = None
        if p.queue:
            self._start_job(p)

    # -- phase machine --------------------------------------------------------

    def _enter_phase(self, p: _Proc):
        while True:
            if p.pidx == len(p.phases):
                self._finish_job(p)
                return
            kind, amount = p.phases[p.pidx]
            if kind == _CPU:
                if amount == 0:
                    p.pidx += 1
                    continue
                p.kind, p.rem = _CPU, amount
                return
            if kind == _BEGIN:
                p.kind, p.upd, p.rem = _BEGIN, "new", 0
                self._emit("gpu_seg_begin_request", p)
                return
            p.kind, p.rem = _GPU, amount
            if self.gcaps:
                p.gst = "q"
            else:
                self._emit("gpu_seg_begin_request", p)
                self.rr_entries.append(p)
                self.rr_entries.sort(key=lambda q: q.id)
            return

    def _begin_done(self, p: _Proc):
        self._emit("runlist_update_end", p)
        p.upd = None
        p.pidx += 1
        p.kind, p.rem, p.gst = _GPU, p.phases[p.pidx][1], "q"

    def _gpu_done(self, p: _Proc):
        self._emit("gpu_seg_complete", p)
        if self.gcaps:
            p.gst = "endwait"
            self.end_waiters.append(p)
        else:
            self.rr_entries.remove(p)
            p.pidx += 1
            self._enter_phase(p)

    def _wants_cpu(self, p: _Proc) -> bool:
        if p.kind == _CPU:
            return True
        if p.kind == _BEGIN:
            return p.upd not in ("wait", "cwait")
        return self.busy

    def _top(self, core: int):
        best = None
        for p in self.by_core[core]:
            if p.job is None:
                continue
            if p.kind == _BEGIN and p.upd == "np":
                return p
            if self._wants_cpu(p) and (best is None or p.ck > best.ck):
                best = p
        return best

    # -- gcaps runlist --------------------------------------------------------

    def _rt_running(self):
        for p in self.running:
            if p.rt:
                return p
        return None

    def _enters_running(self, p: _Proc) -> bool:
        rt = self._rt_running()
        if p.rt:
            return rt is None or rt.gk < p.gk
        return rt is None

    def _take_lock(self, p: _Proc, kind):
        self.serial += 1
        self.lock, self.lock_kind, self.lock_rem = p, kind, self.eps
        self.last_ctx = None  # the switch cost is folded into the update
        self._emit("runlist_update_start", p)

    def _start_begin(self, p: _Proc):
        self._take_lock(p, _BEGIN)
        p.upd = "np"
        if p.rt:
            self.pending.extend(self.running)
            self.running = [p]
        else:
            self.running.append(p)

    def _start_end(self, p: _Proc):
        self.end_waiters.remove(p)
        self._take_lock(p, _GPU)
        p.gst = "end"
        if p in self.pending:
            self.pending.remove(p)
            return
        self.running.remove(p)
        if self.running:
            return
        rt = [q for q in self.pending if q.rt]
        if rt:
            top = max(rt, key=lambda q: q.gk)
            self.pending.remove(top)
            self.running = [top]
        else:
            self.running, self.pending = self.pending, []

    def _finish_lock(self) -> bool:
        if self.lock is None or self.lock_rem > 0:
            return False
        p, kind = self.lock, self.lock_kind
        self.lock = self.lock_kind = None
        if kind == _BEGIN:
            self._begin_done(p)
        else:
            self._emit("runlist_update_end", p)
            p.gst = None
            p.pidx += 1
            self._enter_phase(p)
        for w in self.waiters:
            w.upd = "commit" if w.upd == "cwait" else "new"
        self.waiters.clear()
        return True

    def _requests(self) -> bool:
        reqs = [p for p in self.core_run
                if p is not None and p.kind == _BEGIN and p.upd in ("new", "commit")]
        reqs.extend(self.end_waiters)
        if not reqs:
            return False
        changed = False
        for p in sorted(reqs, key=lambda q: q.gk, reverse=True):
            if p.kind == _GPU:
                if self.lock is None:
                    self._start_end(p)
                    changed = True
                continue
            changed = True
            if p.upd == "commit":
                self._commit(p)
                continue
            if self._enters_running(p):
                if self.lock is None:
                    self._start_begin(p)
                else:
                    p.upd = "wait"
                    self.waiters.append(p)
            else:
                self._emit("runlist_update_start", p)
                p.upd, p.rem = "bk", self.eps
                if self.eps == 0:
                    self._commit(p)
        return changed

    def _commit(self, p: _Proc):
        """End of a lock-free update: park in pending, or take the GPU if it became ours."""
        if not self._enters_running(p):
            self.pending.append(p)
        elif self.lock is not None:
            p.upd = "cwait"
            self.waiters.append(p)
            return
        elif p.rt:
            self.pending.extend(self.running)
            self.running = [p]
            self.last_ctx = None
        else:
            self.running.append(p)
            self.last_ctx = None
        self._begin_done(p)

    # -- GPU engine -------------------------------------------------------------

    def _eligible(self) -> list:
        if not self.gcaps:
            return self.rr_entries
        ready = [p for p in self.running if p.kind == _GPU and p.gst == "q" and p.rem > 0]
        if len(ready) > 1:
            ready.sort(key=lambda q: q.id)
        return ready

    def _start_run(self, p: _Proc):
        self.g_phase = "run"
        self.g_rem = p.rem if (self.gcaps and p.rt) else min(p.rem, self.L)
        self.last_ctx = p.id
        self._emit("gpu_dispatch", p)

    def _gpu_timers(self) -> bool:
        if self.g_phase is None or self.g_rem > 0:
            return False
        p = self.g_cur
        if self.g_phase == "switch":
            if self.gcaps and self.lock is not None:
                return False
            if p in self._eligible():
                self._start_run(p)
            else:
                self.g_cur = self.g_phase = None
            return True
        self.g_cur = self.g_phase = None
        self.rr_pos = p.id
        if p.rem == 0:
            self._gpu_done(p)
        else:
            self._emit("gpu_slice_expire", p)
        return True

    def _gpu_select(self) -> bool:
        if self.gcaps and self.lock is not None:
            return False
        elig = self._eligible()
        changed = False
        if self.g_cur is not None and self.g_cur not in elig:
            if self.g_phase == "run":
                self._emit("gpu_preempt", self.g_cur)
            self.g_cur = self.g_phase = None
            changed = True
        if self.g_cur is None and elig:
            nxt = next((q for q in elig if q.id > self.rr_pos), elig[0])
            self.g_cur = nxt
            if self.last_ctx is not None and self.last_ctx != nxt.id and self.theta > 0:
                self.g_phase, self.g_rem = "switch", self.theta
                self.last_ctx = nxt.id
                self._emit("gpu_ctx_switch", nxt)
            else:
                self._start_run(nxt)
            changed = True
        return changed

    # -- main loop ----------------------------------------------------------------

    def _cpu_completions(self) -> bool:
        changed = False
        for p in self.core_run:
            if p is None or p.rem > 0:
                continue
            if p.kind == _CPU:
                p.pidx += 1
                self._enter_phase(p)
                changed = True
            elif p.kind == _BEGIN and p.upd == "bk":
                p.upd = "commit"
                changed = True
        return changed

    def _dispatch(self):
        for c in range(len(self.core_run)):
            self.core_run[c] = self._top(c)

    def settle(self):
        self._release_due()
        changed = True
        while changed:
            changed = self._finish_lock()
            self._dispatch()
            changed |= self._cpu_completions()
            changed |= self._gpu_timers()
            self._dispatch()
            if self.gcaps:
                changed |= self._requests()
                self._dispatch()
            changed |= self._gpu_select()
        if self.trace is not None:
            for c, p in enumerate(self.core_run):
                q = self.prev_run[c]
                if p is not q:
                    if q is not None and q.job is not None and self._wants_cpu(q):
                        self._emit("cpu_preempt", q)
                    if p is not None:
                        self._emit("cpu_dispatch", p)
        self.prev_run = list(self.core_run)

    def next_dt(self):
        cands = []
        for p in self.core_run:
            if p is not None and (p.kind == _CPU or (p.kind == _BEGIN and p.upd == "bk")):
                cands.append(p.rem)
        if self.lock is not None:
            cands.append(self.lock_rem)
        elif self.g_phase is not None:
            cands.append(self.g_rem)
        releases = [p.next_release for p in self.procs if p.next_release is not None]
        if releases:
            cands.append(min(releases) - self.t)
        if not cands:
            if any(p.job is not None for p in self.procs):
                raise RuntimeError(f"simulation stalled at t={self.t}")
            return None
        return min(cands)

    def advance(self, dt: int):
        for p in self.core_run:
            if p is None:
                continue
            if p.kind == _CPU:
                p.rem -= dt
                p.stats.cpu_time += dt
            elif p.kind == _BEGIN:
                if p.upd == "bk":
                    p.rem -= dt
                p.stats.cpu_time += dt
            else:
                p.stats.spin_time += dt
        if self.lock is not None:
            self.lock_rem -= dt
        elif self.g_phase is not None:
            self.g_rem -= dt
            if self.g_phase == "run":
                self.g_cur.rem -= dt
                self.g_cur.stats.gpu_time += dt
        self.t += dt

    def run(self) -> None:
        while True:
            self.settle()
            dt = self.next_dt()
            if dt is None:
                return
            if self.t + dt > self.limit:
                self.advance(self.limit - self.t)
                return
            if self.cfg.check_invariants and dt > 0:
                self._monitor(dt)
            self.advance(dt)

    # -- monitors --------------------------------------------------------------------

    def _monitor(self, dt: int):
        if self.gcaps and self.lock is None and self.g_phase == "run":
            e = self.g_cur
            work = [q for q in self.running + self.pending
                    if q.kind == _BEGIN or (q.kind == _GPU and q.gst == "q")]
            rt = [q for q in work if q.rt]
            if e.rt and max(q.gk for q in rt) != e.gk:
                self.violations.append(f"t={self.t}: task {e.id} on the GPU while a higher "
                                       f"real-time context has pending work")
            if not e.rt and rt:
                self.violations.append(f"t={self.t}: best-effort task {e.id} on the GPU while "
                                       f"real-time work is pending")
        h = self.lock
        if h is None:
            return
        for p in self.procs:
            if p.job is None or not p.rt or p is h or h.gk >= p.gk:
                continue
            blocked = (p.kind == _BEGIN and p.upd in ("wait", "cwait"))
            blocked |= (self.lock_kind == _BEGIN and h.core == p.core and self._wants_cpu(p))
            blocked |= (p in self.running and p.kind == _GPU and p.gst == "q")
            if blocked:
                p.blocks[self.serial] = p.blocks.get(self.serial, 0) + dt

    def _check_blocking(self, p: _Proc):
        count = len(p.blocks)
        span = max(p.blocks.values(), default=0)
        st = p.stats
        st.max_blocking_count = max(st.max_blocking_count, count)
        st.max_blocking_span = max(st.max_blocking_span, span)
        if count > p.task.eta_g + 1 or span > self.eps:
            self.violations.append(
                f"t={self.t}: job {p.job[1]} of task {p.id} blocked by {count} lower-priority "
                f"updates (longest {span} us)")

    def _emit(self, kind: str, p: _Proc, job: int | None = None):
        if self.trace is not None:
            if job is None:
                job = p.job[1] if p.job is not None else -1
            self.trace.append(Event(self.t, kind, p.id, job))

    def result(self) -> SimResult:
        per_task = {}
        for p in self.procs:
            st = p.stats
            open_jobs = ([p.job] if p.job is not None else []) + list(p.queue)
            st.unfinished = len(open_jobs)
            for release, _ in open_jobs:
                age = self.t - release
                st.mort = age if st.mort is None else max(st.mort, age)
            per_task[p.id] = st
        trace = None
        if self.trace is not None:
            order = sorted(range(len(self.trace)), key=lambda k: (self.trace[k].sort_key(), k))
            trace = [self.trace[k] for k in order]
        hyper = 1
        for p in self.procs:
            hyper = math.lcm(hyper, p.task.period)
        return SimResult(per_task, self.cfg, self.t, hyper > self.horizon, trace,
                         list(self.violations))


def simulate(ts: Taskset, cfg: SimConfig) -> SimResult:
    require_valid(ts)
    problems = cfg.violations()
    if problems:
        raise ValidationError(problems)
    sim = _Sim(ts, cfg)
    sim.run()
    return sim.result()


def estimate_theta(template: Task, nu: int, config: SystemConfig) -> float:
    """Recover the context-switch cost (ms) from a solo run and ``nu`` concurrent copies.

    Each copy sits on its own core, so only the GPU is shared.
    """
    if nu < 2:
        raise ValueError("nu must be >= 2")

    def makespan(k: int) -> int:
        copies = tuple(Task(i + 1, template.cpu_segments, template.gpu_segments,
                            template.period, template.deadline, cpu_priority=1, core=i)
                       for i in range(k))
        cfg = SystemConfig(max(k, 1), config.slice, config.ctx_switch,
                           max(config.runlist_update, config.ctx_switch))
        res = simulate(Taskset(copies, cfg), SimConfig("tsg_rr", "busy", horizon=0.001,
                                                        drain=to_ms(100 * template.period)))
        return max(st.mort for st in res.per_task.values())

    e1, en = makespan(1), makespan(nu)
    return to_ms((en - nu * e1) / (nu * e1) * config.slice)
