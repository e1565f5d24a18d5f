import numpy as np
import pytest
from scipy import stats

from gcaps.gen import (
    GenerationError, GenParams, generate_batch, generate_taskset, rate_monotonic,
    table2_taskset, taskset_seed, uunifast, worst_fit_decreasing,
)
from gcaps.model import Task, dumps, per_core_utilization, validate


def test_uunifast_single_share():
    assert uunifast(1, 0.5, np.random.default_rng(0)) == [0.5]


def test_uunifast_sums_and_positive():
    rng = np.random.default_rng(1)
    for _ in range(200):
        shares = uunifast(4, 0.6, rng)
        assert len(shares) == 4
        assert all(s > 0 for s in shares)
        assert sum(shares) == pytest.approx(0.6, abs=1e-9)


def test_uunifast_two_shares_uniform():
    rng = np.random.default_rng(2)
    first = [uunifast(2, 0.8, rng)[0] for _ in range(4000)]
    assert stats.kstest(first, stats.uniform(0, 0.8).cdf).pvalue > 0.01


def test_uunifast_marginal_matches_simplex():
    # one coordinate of a uniform point on the 3-simplex scaled by U is U*Beta(1, 2)
    rng = np.random.default_rng(3)
    last = [uunifast(3, 1.0, rng)[-1] for _ in range(4000)]
    assert stats.kstest(last, stats.beta(1, 2).cdf).pvalue > 0.01


def test_same_seed_same_taskset():
    p = GenParams(seed=9)
    assert dumps(generate_taskset(p)) == dumps(generate_taskset(p))
    assert dumps(generate_taskset(p)) != dumps(generate_taskset(GenParams(seed=10)))
    assert [dumps(t) for t in generate_batch(p, 3, 2)] == [dumps(t) for t in generate_batch(p, 3, 2)]


def test_batch_members_use_derived_seeds():
    p = GenParams(seed=4)
    batch = generate_batch(p, 2, 7)
    assert dumps(batch[1]) == dumps(generate_taskset(p, taskset_seed(4, 7, 1)))


def test_defaults_seed_42():
    p = GenParams(seed=42)
    ts = generate_taskset(p)
    assert validate(ts) == []
    for u in per_core_utilization(ts).values():
        assert 0.4 * 0.99 <= u <= 0.6 * 1.01
    total = sum((t.C + t.G) / t.period for t in ts)
    assert 0.4 * p.num_cores - 0.01 <= total <= 0.6 * p.num_cores + 0.01


@pytest.mark.parametrize("seed", range(40))
def test_generated_tasksets_validate(seed):
    p = GenParams(seed=seed, best_effort_ratio=0.3, gpu_segments_per_task=(1, 4))
    ts = generate_taskset(p)
    assert validate(ts) == []
    n = len(ts)
    assert p.num_cores * 3 <= n <= p.num_cores * 6
    for t in ts:
        assert t.deadline == t.period
        assert 30_000 <= t.period <= 500_000
        if t.uses_gpu:
            assert 1 <= t.eta_g <= 4
            assert all(s.pure_gpu >= 1 for s in t.gpu_segments)
    assert sum(not t.realtime for t in ts) == round(0.3 * n)
    assert all(t.cpu_priority == 0 for t in ts if not t.realtime)


def test_rm_priorities_distinct_and_ordered():
    ts = generate_taskset(GenParams(seed=3))
    rt = sorted(ts, key=lambda t: -t.cpu_priority)
    assert sorted(t.cpu_priority for t in rt) == list(range(1, len(rt) + 1))
    assert all(a.period <= b.period for a, b in zip(rt, rt[1:]))
    assert all(t.gpu_priority == t.cpu_priority for t in rt)


def test_rm_tie_goes_to_lower_id():
    tasks = [Task(2, (1,), (), 100, 100), Task(1, (1,), (), 100, 100), Task(3, (1,), (), 50, 50)]
    prio = {t.id: t.cpu_priority for t in rate_monotonic(tasks)}
    assert prio == {3: 3, 1: 2, 2: 1}


def test_no_gpu_tasks_when_ratio_zero():
    ts = generate_taskset(GenParams(seed=5, gpu_task_ratio=(0.0, 0.0)))
    assert all(t.eta_g == 0 for t in ts)


def test_gpu_fraction_statistics():
    p = GenParams(seed=6)
    fractions = []
    for ts in generate_batch(p, 1000):
        n = len(ts)
        k = sum(t.uses_gpu for t in ts)
        # the count is round(ratio * n) with ratio in [0.4, 0.6]
        assert round(0.4 * n) <= k <= round(0.6 * n)
        fractions.append(k / n)
    # drawn ratio is uniform on [0.4, 0.6]: mean 0.5, sd about 0.058, so the
    # mean of 1000 fractions lies well within 0.5 +- 0.01
    assert abs(np.mean(fractions) - 0.5) < 0.01


def test_vanishing_utilization_still_generates():
    ts = generate_taskset(GenParams(seed=1, util_per_core=(1e-4, 2e-4)))
    assert validate(ts) == []


def test_infeasible_parameters_raise():
    with pytest.raises(GenerationError):
        generate_taskset(GenParams(tasks_per_core=(1, 1), util_per_core=(3.0, 3.0)))
    with pytest.raises(GenerationError):
        generate_taskset(GenParams(util_per_core=(0.6, 0.4)))


def test_params_round_trip_and_unknown_keys():
    p = GenParams(num_cores=3, period=(10.0, 20.0), best_effort_ratio=0.2)
    assert GenParams.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        GenParams.from_dict({"num_cores": 2, "bogus": 1})


def _items(rng, n):
    return [Task(k + 1, (int(rng.integers(1, 400)),), (), 1000, 1000) for k in range(n)]


@pytest.mark.parametrize("seed", range(30))
def test_worst_fit_balance_bound(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 5))
    items = _items(rng, int(rng.integers(1, 15)))
    placed = worst_fit_decreasing(items, m)
    load = [0.0] * m
    for t in placed:
        load[t.core] += t.cpu_utilization
    total = sum(t.cpu_utilization for t in items)
    biggest = max(t.cpu_utilization for t in items)
    assert max(load) <= total / m + biggest + 1e-12
    assert sorted(t.id for t in placed) == sorted(t.id for t in items)


def test_worst_fit_can_exceed_the_previous_maximum():
    # the weaker "never worse than before" property does not hold for worst fit
    sizes = [300, 300, 200, 200, 200]
    before = [0, 0, 1, 1, 1]
    items = [Task(k + 1, (s,), (), 1000, 1000, core=c) for k, (s, c) in enumerate(zip(sizes, before))]
    placed = worst_fit_decreasing(items, 2)
    load = [0.0, 0.0]
    for t in placed:
        load[t.core] += t.cpu_utilization
    assert max(load) == pytest.approx(0.7)


def test_table2_taskset():
    ts = table2_taskset()
    assert validate(ts) == []
    t3 = ts.task(3)
    assert (t3.C + t3.G) / t3.period == pytest.approx((4 + 30 + 5 + 80) / 190)
    assert {t.id: t.eta_g for t in ts} == {1: 2, 2: 0, 3: 1, 4: 1}
    assert {t.id: t.cpu_priority for t in ts} == {1: 4, 2: 3, 3: 2, 4: 1}
    assert t3.first_release == 70_000 and t3.core == 1
