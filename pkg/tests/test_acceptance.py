"""Acceptance criteria, one test each, every test reporting a PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py``; the report lines are written
straight to the terminal.
"""

import math
import time
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from locache.beamforming import SlotChannel, approx_time, compute_sinr, solve_wmm
from locache.pda import validate_lapda, validate_mlpda
from locache.placement import allocate_memory, arrange_cache, build_placement
from locache.scheduler import (FmMatrix, compute_context, delivered_sizes,
                               generate_index_matrix, schedule, select_reference,
                               validate_fm_matrix, verify_decodability)
from locache.sim import export_report, load_config, run_experiment

from fixtures import (EXAMPLE_MEMORY, EXAMPLE_RATES, FM_USER1, FM_USER2, FM_USER3, FM_USER4,
                      example_lapda)
from oracles import grid_best, random_channels, random_nulls

F = Fraction
DESK = Path(__file__).resolve().parents[1] / "configs" / "desk.ini"


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number}: {detail}")
        return ok
    return emit


def _pairs(rows):
    return np.array(rows, dtype=np.int64)


REFERENCE_INDEX = {
    1: _pairs([[4, 4], [7, 7], [10, 10], [0, 0], [5, 5], [6, 6], [8, 8], [9, 9], [0, 0],
               [11, 11], [0, 0], [12, 12]]),
    2: _pairs([[4, 4], [0, 0], [4, 4], [3, 3], [3, 4], [4, 4], [0, 0], [3, 3], [3, 3],
               [4, 4], [3, 3], [0, 0]]),
    3: _pairs([[4, 4], [4, 4], [0, 0], [4, 4], [0, 0], [4, 4], [4, 4], [4, 4], [4, 4],
               [0, 0], [4, 4], [4, 4]]),
    4: _pairs([[0, 0], [1, 1], [1, 1], [2, 2], [2, 1], [0, 0], [2, 2], [0, 0], [2, 2],
               [1, 1], [1, 1], [2, 2]]),
}
REFERENCE_FM = {1: FM_USER1, 2: FM_USER2, 3: FM_USER3, 4: FM_USER4}


def test_criterion_1_allocation(report):
    start = time.perf_counter()
    result = allocate_memory(EXAMPLE_RATES, F(9, 4), 4, 2)
    elapsed = time.perf_counter() - start
    slack = {(1 - m) / r for m, r in zip(result.memory, EXAMPLE_RATES)}
    ok = (result.memory == tuple(F(m) for m in EXAMPLE_MEMORY)
          and slack == {F(1, 4000)} and elapsed < 1)
    report(1, ok, f"m={[str(m) for m in result.memory]} slack={sorted(map(str, slack))} "
                  f"({elapsed:.3f} s)")
    assert ok


def test_criterion_2_example_pipeline(report):
    start = time.perf_counter()
    family = example_lapda()
    requests = (1, 2, 3, 4)
    checks = {}
    checks["validators"] = (validate_lapda(family).passed
                            and all(validate_mlpda(Q).passed for Q in family.matrices))
    user, Q = select_reference(requests, family)
    checks["reference"] = user == 1 and Q.n_slots == 12
    ctx = compute_context(requests, family)
    checks["stretch"] = ctx.stretch == 2
    checks["fragments"] = [ctx.fragment_count(k) for k in requests] == [2, 9, 18, 9]
    checks["index sets"] = (
        [ctx.tis(k) for k in requests] == [tuple(range(4, 13)), (1, 2, 3, 7, 8, 9, 10, 11, 12),
                                           (1, 2, 3, 4, 5, 6, 10, 11, 12), tuple(range(1, 10))]
        and [ctx.ris(k) for k in requests] == [tuple(range(4, 13)), (3, 4), (4,), (1, 2)])
    checks["reference FM valid"] = all(validate_fm_matrix(FmMatrix(k, 0, REFERENCE_FM[k]), ctx) == []
                                   for k in requests)
    mismatched = []
    for k in requests:
        P = generate_index_matrix(FmMatrix(k, 0, REFERENCE_FM[k]), ctx).grid
        rows = [n + 1 for n in range(12) if not np.array_equal(P[n], REFERENCE_INDEX[k][n])]
        if rows:
            mismatched.append(f"P{k} rows {rows}")
    checks["index matrices"] = not mismatched
    plan = schedule(requests, family)
    first = plan.slots[0]
    checks["slot 1"] = (
        set(first.users) == {1, 2, 3}
        and all([(f.stu, f.subfile, f.counter) for f in first.payload(k).fragments]
                == [(k, 4, 1), (k, 4, 2)] for k in (1, 2, 3))
        and first.interference_sets() == {1: {3}, 2: {3}, 3: {2}})
    sizes = {p.user: p.size for s in plan.slots for p in s.payloads}
    checks["sizes"] = sizes == {1: F(1, 12), 2: F(1, 18), 3: F(1, 36), 4: F(1, 18)}
    elapsed = time.perf_counter() - start
    checks["runtime"] = elapsed < 1
    failed = [name for name, ok in checks.items() if not ok]
    detail = "all sub-checks hold" if not failed else f"failed {failed}; {'; '.join(mismatched)}"
    report(2, not failed, f"{detail} ({elapsed:.3f} s)")
    assert not failed, detail


def test_criterion_3_delivery_completeness(report):
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    problems = []
    for trial in range(1000):
        K = int(rng.integers(1, 9))
        L = int(rng.integers(1, min(3, K) + 1))
        S = int(rng.integers(1, 5))
        # half-steps of 1/K produce non-integer gains and exercise memory sharing
        memory = [F(int(rng.integers(0, 2 * K + 1)), 2 * K) for _ in range(S)]
        requests = tuple(int(s) for s in rng.integers(1, S + 1, size=K))
        layout = build_placement(memory, K, L)
        plan = schedule(requests, layout)
        verdict = verify_decodability(plan, arrange_cache(layout))
        expected = {k: 1 - memory[requests[k - 1] - 1] for k in range(1, K + 1)}
        if not verdict.passed or delivered_sizes(plan) != expected:
            problems.append((trial, K, L, memory, requests))
    elapsed = time.perf_counter() - start
    ok = not problems and elapsed < 60
    report(3, ok, f"{1000 - len(problems)}/1000 plans decodable and complete ({elapsed:.1f} s)")
    assert ok, problems[:3]


@pytest.fixture(scope="module")
def beam_instances():
    rng = np.random.default_rng(7)
    out = []
    start = time.perf_counter()
    for _ in range(200):
        L = int(rng.integers(1, 5))
        U = int(rng.integers(1, 6))
        h = random_channels(rng, U, L)
        nulls = random_nulls(rng, U, L)
        c = rng.uniform(0.05, 1.0, U)
        power = float(10 ** rng.uniform(-0.5, 1.5))
        sol = solve_wmm(SlotChannel(h, 1.0, power), nulls, c)
        out.append((h, nulls, c, power, sol))
    return out, time.perf_counter() - start


def test_criterion_4i_duality_and_targets(report, beam_instances):
    instances, elapsed = beam_instances
    gaps, misses = [], []
    for h, nulls, c, power, sol in instances:
        dual, primal = sol.dual.sum(), sol.powers.sum()
        gaps.append(abs(dual - primal) / max(dual, primal))
        achieved = compute_sinr(sol.beamformers, h, nulls, 1.0)
        target = sol.gamma ** sol.weights - 1
        misses.append(float(np.max(np.abs(achieved - target) / target)))
    ok = max(gaps) < 1e-6 and max(misses) < 1e-4 and elapsed < 120
    report("4(i)", ok, f"max duality gap {max(gaps):.2e}, max target error {max(misses):.2e} "
                       f"over 200 instances ({elapsed:.1f} s)")
    assert ok


def test_criterion_4ii_proportionality_as_written(report, beam_instances):
    instances, _ = beam_instances
    worst = 0.0
    for *_, sol in instances:
        # product of payload weight and rate, per the stated formula
        values = sol.weights * sol.rates
        worst = max(worst, float(np.ptp(values) / values.max()))
    ok = worst < 1e-6
    report("4(ii)", ok, f"max relative spread of c_k*log2(1+sinr_k) = {worst:.2e}")
    assert ok


def test_criterion_4ii_proportionality_rate_per_weight(report, beam_instances):
    instances, _ = beam_instances
    worst = 0.0
    for *_, sol in instances:
        values = sol.rates / sol.weights
        worst = max(worst, float(np.ptp(values) / values.max()))
    ok = worst < 1e-6
    report("4(ii) rate/weight form", ok,
           f"max relative spread of log2(1+sinr_k)/c_k = {worst:.2e}")
    assert ok


def test_criterion_4iii_two_user_oracle(report):
    rng = np.random.default_rng(99)
    start = time.perf_counter()
    worst = 0.0
    for trial in range(12):
        h = random_channels(rng, 2, 2) * 2
        nulls = [[{1}, {0}], [{1}, set()], [set(), {0}]][trial % 3]
        c = rng.uniform(0.2, 1.0, 2)
        power = float(10 ** rng.uniform(0, 1))
        sol = solve_wmm(SlotChannel(h, 1.0, power), nulls, c)
        weights = c / c.min()
        solver = float((sol.rates / weights).min())
        oracle = grid_best(h, nulls, weights, 1.0, power)
        worst = max(worst, abs(solver - oracle) / oracle)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-3
    report("4(iii)", ok, f"max relative gap to grid search {worst:.2e} over 12 instances "
                         f"({elapsed:.1f} s)")
    assert ok


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    config = load_config(DESK.read_text())
    start = time.perf_counter()
    stats = run_experiment(config)
    elapsed = time.perf_counter() - start
    out = tmp_path_factory.mktemp("desk_first")
    export_report(stats, out)
    return config, stats, out, elapsed


def test_criterion_5_delivery_time_estimate(report, desk_run):
    estimate = approx_time([F(m) for m in EXAMPLE_MEMORY], EXAMPLE_RATES, 4, 2)
    _, stats, _, _ = desk_run
    checked = violations = 0
    for name in ("a", "d"):
        for _, rec in stats[name].records:
            if rec.dof is None:
                continue
            checked += 1
            violations += rec.dof > rec.dof_bound
    ok = estimate == F(1, 3000) and violations == 0 and checked > 0
    report(5, ok, f"estimate {estimate} (= 4/3 * 1/4000); DoF bound held on "
                  f"{checked - violations}/{checked} coded drops")
    assert ok


def test_criterion_6_desk_trends(report, desk_run):
    config, stats, _, elapsed = desk_run
    p95 = {k: s.summary()["p95"] for k, s in stats.items()}
    spread = {k: max(s.times) - min(s.times) for k, s in stats.items()}
    start = time.perf_counter()
    flat = run_experiment(replace(config, shadowing_db=0.0, schemes=("a", "d")))
    elapsed += time.perf_counter() - start
    mean_a = math.fsum(flat["a"].times) / flat["a"].n
    mean_d = math.fsum(flat["d"].times) / flat["d"].n
    part_a = p95["a"] < p95["d"]
    part_b = max(spread, key=spread.get) == "d"
    part_c = abs(mean_a - mean_d) / mean_d < 0.10
    failed = sum(s.failed for s in stats.values()) + sum(s.failed for s in flat.values())
    ok = part_a and part_b and part_c and elapsed < 600 and failed == 0
    report(6, ok,
           f"(a) p95 proposed {p95['a']:.4g} < uniform {p95['d']:.4g}: {part_a}; "
           f"(b) spreads {{{', '.join(f'{k}: {v:.3g}' for k, v in sorted(spread.items()))}}}, "
           f"largest uniform: {part_b}; (c) flat means {mean_a:.4g} vs {mean_d:.4g}: {part_c} "
           f"({elapsed:.1f} s)")
    assert ok


def test_criterion_7_determinism(report, desk_run, tmp_path):
    config, _, first, _ = desk_run
    export_report(run_experiment(config), tmp_path)
    names = sorted(p.name for p in first.iterdir())
    same = [n for n in names if (first / n).read_bytes() == (tmp_path / n).read_bytes()]
    ok = same == names and sorted(p.name for p in tmp_path.iterdir()) == names
    report(7, ok, f"{len(same)}/{len(names)} report files byte-identical across two runs")
    assert ok
