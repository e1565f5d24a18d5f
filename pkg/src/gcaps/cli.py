"""Command-line harness: generation, analysis, simulation, priority search, sweeps."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

from .analysis import AnalysisResult, Mode
from .gen import GenerationError, GenParams, generate_taskset, taskset_seed
from .model import Taskset, ValidationError, dumps, loads, to_ms, us
from .prio_assign import assign_gpu_priorities
from .rta_gcaps import SEPARATE, UNIFIED, gcaps_response_times
from .rta_rr import rr_response_times
from .sim import ReleasePattern, SimConfig, SimResult, simulate

METHODS = ("gcaps_busy", "gcaps_suspend", "gcaps_busy_sep", "gcaps_suspend_sep",
           "tsg_rr_busy", "tsg_rr_suspend")
CSV_COLUMNS = ("method", "param", "value", "accepted", "total", "ratio")

# name -> (lower edge, upper edge, lower edge open, integer valued)
RANGE_DOMAINS = {
    "tasks_per_core": (1, None, False, True),
    "gpu_segments_per_task": (1, None, False, True),
    "util_per_core": (0.0, None, True, False),
    "period": (0.0, None, True, False),
    "gpu_task_ratio": (0.0, 1.0, False, False),
    "g_to_c_ratio": (0.0, None, False, False),
    "gm_in_g_ratio": (0.0, 1.0, False, False),
}
SCALAR_PARAMS = ("num_cores", "best_effort_ratio", "epsilon", "theta", "slice")


class UsageError(Exception):
    pass


def split_method(method: str) -> tuple[str, Mode, bool]:
    """``gcaps_busy_sep`` -> ("gcaps", BUSY, True)."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    sep = method.endswith("_sep")
    base = method[:-4] if sep else method
    policy, mode = base.rsplit("_", 1)
    return policy, Mode(mode), sep


def analyze(ts: Taskset, method: str) -> AnalysisResult:
    """Run one named test.  ``*_sep`` tries default priorities first, then a searched assignment."""
    policy, mode, sep = split_method(method)
    if policy == "tsg_rr":
        return rr_response_times(ts, mode)
    unified = gcaps_response_times(ts, mode, UNIFIED)
    if not sep:
        return unified
    if not unified.taskset_schedulable:
        found = assign_gpu_priorities(ts, mode)
        if found.feasible:
            return gcaps_response_times(found.apply(ts), mode, SEPARATE)
    unified.method = method
    return unified


def accepted_by(ts: Taskset, methods) -> dict:
    """Verdict per method, sharing the default-priority run between plain and ``_sep``."""
    out = {}
    cache = {}
    for m in methods:
        policy, mode, sep = split_method(m)
        if policy == "tsg_rr":
            out[m] = rr_response_times(ts, mode).taskset_schedulable
            continue
        if mode not in cache:
            cache[mode] = gcaps_response_times(ts, mode, UNIFIED).taskset_schedulable
        ok = cache[mode]
        if sep and not ok:
            ok = assign_gpu_priorities(ts, mode).feasible
        out[m] = ok
    return out


# -- sweeps ---------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    base: GenParams = field(default_factory=GenParams)
    parameter: str = "util_per_core"
    values: tuple = ()
    tasksets_per_point: int = 1000
    methods: tuple = METHODS

    def violations(self) -> list[str]:
        out = []
        if self.parameter not in RANGE_DOMAINS and self.parameter not in SCALAR_PARAMS:
            out.append(f"parameter {self.parameter!r} cannot be swept")
        if self.tasksets_per_point < 1:
            out.append("tasksets_per_point must be >= 1")
        if not self.values:
            out.append("no swept values")
        for m in self.methods:
            if m not in METHODS:
                out.append(f"unknown method {m!r}")
        if not out:
            for v in self.values:
                try:
                    problems = point_params(self.base, self.parameter, v).violations()
                except ValueError as exc:
                    problems = [str(exc)]
                out.extend(f"value {v}: {p}" for p in problems)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SweepSpec":
        return cls(base=GenParams.from_dict(d.get("base", {})),
                   parameter=d.get("parameter", "util_per_core"),
                   values=tuple(d.get("values", ())),
                   tasksets_per_point=int(d.get("tasksets_per_point", 1000)),
                   methods=tuple(d.get("methods", METHODS)))

    def to_dict(self) -> dict:
        return {"base": self.base.to_dict(), "parameter": self.parameter,
                "values": list(self.values), "tasksets_per_point": self.tasksets_per_point,
                "methods": list(self.methods)}


def point_params(base: GenParams, parameter: str, value) -> GenParams:
    """Parameters for one sweep point.

    A range parameter keeps its width and is centred on ``value``; if that
    would cross the parameter's domain edge the range shrinks symmetrically
    around ``value``.  Scalar parameters are set directly.
    """
    if parameter in SCALAR_PARAMS:
        if parameter == "num_cores":
            if int(value) != value:
                raise ValueError("num_cores must be an integer")
            value = int(value)
        return replace(base, **{parameter: value})
    if parameter not in RANGE_DOMAINS:
        raise ValueError(f"parameter {parameter!r} cannot be swept")
    lo_edge, hi_edge, open_lo, integer = RANGE_DOMAINS[parameter]
    lo, hi = getattr(base, parameter)
    half = (hi - lo) / 2
    if not (value > lo_edge if open_lo else value >= lo_edge) or (hi_edge is not None and value > hi_edge):
        raise ValueError(f"{parameter} midpoint {value} outside its domain")
    room = (value - lo_edge) / 2 if open_lo else value - lo_edge
    if hi_edge is not None:
        room = min(room, hi_edge - value)
    half = min(half, room)
    new = (value - half, value + half)
    if integer:
        new = (int(round(new[0])), int(round(new[1])))
    return replace(base, **{parameter: new})


def run_sweep(spec: SweepSpec) -> list[dict]:
    problems = spec.violations()
    if problems:
        raise ValidationError(problems)
    rows = []
    for point, value in enumerate(spec.values):
        params = point_params(spec.base, spec.parameter, value)
        accepted = dict.fromkeys(spec.methods, 0)
        for k in range(spec.tasksets_per_point):
            ts = generate_taskset(params, taskset_seed(spec.base.seed, point, k))
            for m, ok in accepted_by(ts, spec.methods).items():
                accepted[m] += ok
        n = spec.tasksets_per_point
        for m in spec.methods:
            rows.append({"method": m, "param": spec.parameter, "value": value,
                         "accepted": accepted[m], "total": n, "ratio": accepted[m] / n})
    return rows


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# -- file wrappers ------------------------------------------------------------------

def load_taskset(path) -> Taskset:
    return loads(Path(path).read_text())


def analyze_file(path, method: str) -> AnalysisResult:
    return analyze(load_taskset(path), method)


def simulate_file(path, cfg: SimConfig) -> SimResult:
    return simulate(load_taskset(path), cfg)


def gen_file(params_path, out_path, seed: int | None = None) -> Taskset:
    params = GenParams.from_dict(json.loads(Path(params_path).read_text()))
    if seed is not None:
        params = replace(params, seed=seed)
    ts = generate_taskset(params)
    Path(out_path).write_text(dumps(ts))
    return ts


# -- soundness ------------------------------------------------------------------------

def soundness_patterns(k: int, sporadic: int = 3) -> list[ReleasePattern]:
    return [ReleasePattern()] + [ReleasePattern.sporadic(seed=1000 * k + s) for s in range(sporadic)]


def soundness_check(params: GenParams, count: int, horizon_periods: float = 2.0,
                    combos=None) -> list[dict]:
    """Compare simulated MORT to the analysed WCRT for every task with a bounded verdict.

    Each generated taskset is analysed under each (policy, mode) pair with
    default priorities and simulated with a synchronous release plus three
    seeded sporadic patterns; the horizon spans ``horizon_periods`` times
    the longest period.
    """
    combos = combos or [("gcaps", "busy"), ("gcaps", "suspend"),
                        ("tsg_rr", "busy"), ("tsg_rr", "suspend")]
    out = []
    for k in range(count):
        ts = generate_taskset(params, taskset_seed(params.seed, k))
        horizon = horizon_periods * to_ms(max(t.period for t in ts))
        for policy, mode in combos:
            res = analyze(ts, f"{policy}_{mode}")
            bounded = {tid: r.wcrt for tid, r in res.per_task.items() if r.schedulable}
            if not bounded:
                continue
            for pat in soundness_patterns(k):
                sim = simulate(ts, SimConfig(policy, mode, horizon, pat))
                for tid, wcrt in bounded.items():
                    mort = sim.per_task[tid].mort
                    if mort is not None and mort > wcrt:
                        out.append({"taskset": k, "policy": policy, "mode": mode,
                                    "release": pat.kind, "release_seed": pat.seed, "task": tid,
                                    "mort_ms": to_ms(mort), "wcrt_ms": to_ms(wcrt)})
    return out


# -- command line -------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _analysis_csv(res: AnalysisResult) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task", "wcrt_ms", "schedulable"])
    for tid, entry in res.to_dict()["tasks"].items():
        w.writerow([tid, entry["wcrt_ms"], entry["schedulable"]])
    return buf.getvalue()


def _cmd_gen(a):
    if a.out:
        gen_file(a.config, a.out, a.seed)
        return 0
    params = GenParams.from_dict(json.loads(Path(a.config).read_text()))
    if a.seed is not None:
        params = replace(params, seed=a.seed)
    _emit(dumps(generate_taskset(params)), None)
    return 0


def _cmd_analyze(a):
    res = analyze_file(a.config, a.method or "gcaps_suspend")
    _emit(_analysis_csv(res) if a.format == "csv" else json.dumps(res.to_dict(), indent=2), a.out)
    return 0


def _cmd_simulate(a):
    policy, mode, _ = split_method(a.method or "gcaps_busy")
    ts = load_taskset(a.config)
    horizon = a.horizon if a.horizon is not None else 2 * to_ms(max(t.period for t in ts))
    release = ReleasePattern()
    if a.release == "sporadic":
        release = ReleasePattern.sporadic(a.seed or 0, tuple(a.jitter))
    elif a.release == "periodic_with_offsets":
        release = ReleasePattern("periodic_with_offsets", a.seed or 0)
    res = simulate(ts, SimConfig(policy, mode.value, horizon, release, record_trace=a.trace))
    if a.trace:
        _emit("time_us,kind,task,job\n" + "\n".join(res.trace_lines()), a.out)
    else:
        _emit(res.dumps(), a.out)
    return 0


def _cmd_assign(a):
    _, mode, _ = split_method(a.method or "gcaps_suspend")
    found = assign_gpu_priorities(load_taskset(a.config), mode)
    _emit(json.dumps(found.to_dict(), indent=2), a.out)
    return 0


def _cmd_sweep(a):
    spec = SweepSpec.from_dict(json.loads(Path(a.config).read_text()))
    if a.seed is not None:
        spec = replace(spec, base=replace(spec.base, seed=a.seed))
    if a.method:
        spec = replace(spec, methods=(a.method,))
    rows = run_sweep(spec)
    _emit(rows_to_csv(rows) if a.format == "csv" else json.dumps(rows, indent=2), a.out)
    return 0


def _cmd_soundness(a):
    params = GenParams.from_dict(json.loads(Path(a.config).read_text())) if a.config else GenParams()
    if a.seed is not None:
        params = replace(params, seed=a.seed)
    combos = None
    if a.method:
        policy, mode, _ = split_method(a.method)
        combos = [(policy, mode.value)]
    found = soundness_check(params, a.count, combos=combos)
    _emit(json.dumps({"tasksets": a.count, "violations": found}, indent=2), a.out)
    return 3 if found else 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gcaps", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="input document (JSON)")
        sp.add_argument("--method", help=f"one of: {', '.join(METHODS)}")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", help="output path (default stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="json")
        sp.add_argument("--trace", action="store_true", help="emit the event trace")
        return sp

    common(sub.add_parser("gen", help="generate a taskset from generation parameters"))
    common(sub.add_parser("analyze", help="response-time analysis of a taskset"))
    s = common(sub.add_parser("simulate", help="simulate a taskset"))
    s.add_argument("--horizon", type=float, help="release horizon in ms (default 2x longest period)")
    s.add_argument("--release", choices=("synchronous", "periodic_with_offsets", "sporadic"),
                   default="synchronous")
    s.add_argument("--jitter", type=float, nargs=2, default=(0.0, 10.0), metavar=("LO", "HI"))
    common(sub.add_parser("assign-prio", help="search separate GPU priorities"))
    common(sub.add_parser("sweep", help="acceptance-ratio sweep"))
    s = common(sub.add_parser("soundness", help="compare simulation against analysis"), False)
    s.add_argument("--count", type=int, default=200)
    return p


HANDLERS = {"gen": _cmd_gen, "analyze": _cmd_analyze, "simulate": _cmd_simulate,
            "assign-prio": _cmd_assign, "sweep": _cmd_sweep, "soundness": _cmd_soundness}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"gcaps: error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"gcaps: error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, GenerationError, ValueError, KeyError, TypeError) as exc:
        print(f"gcaps: invalid input: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
