import json
import math
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest

from locache.beamforming import SlotChannel, slot_time, solve_wmm
from locache.placement import Placement
from locache.scheduler import schedule
from locache.sim import (Drop, DropStats, ExperimentConfig, SchemeSetup, _Pool, _run_scheme,
                         _unicast_jobs, draw_drop, export_report, load_config, parse_report,
                         percentile, prepare_schemes, run_drop, run_experiment)

from fixtures import example_lapda

F = Fraction

SMALL = ExperimentConfig(width=3, depth=3, users=4, antennas=2, drops=20,
                         rate_samples=200, memory_ratio=0.33)


# --------------------------------------------------------------------------
# config

def test_defaults():
    cfg = ExperimentConfig()
    assert (cfg.users, cfg.antennas, cfg.memory_ratio, cfg.drops) == (36, 6, 0.33, 500)
    assert cfg.n_stus == 900
    assert cfg.total_memory == F(297)


def test_load_config_overrides_and_defaults():
    cfg = load_config("[environment]\nwidth = 4\ndepth = 2\n"
                      "[experiment]\nusers = 5\nmemory_ratio = 0.5\n"
                      "[schemes]\nschemes = a, c\n")
    assert (cfg.width, cfg.depth, cfg.users, cfg.memory_ratio) == (4.0, 2.0, 5, 0.5)
    assert cfg.schemes == ("a", "c")
    assert cfg.antennas == 6 and cfg.shadowing_mode == "stu"


@pytest.mark.parametrize("text", [
    "[room]\nwidth = 3\n",
    "[environment]\nlength = 3\n",
    "[experiment]\nusers = many\n",
    "[experiment]\ndrops = 0\n",
    "[schemes]\nschemes = a,z\n",
    "[channel]\nshadowing_mode = sometimes\n",
    "[experiment]\nmemory_ratio = 1.5\n",
])
def test_load_config_errors(text):
    with pytest.raises(ValueError):
        load_config(text)


# --------------------------------------------------------------------------
# statistics and reports

def test_percentile_rank():
    values = list(range(1, 21))
    assert percentile(values, 0.95) == 19
    assert percentile(values, 0.5) == 10
    assert percentile([3.0], 0.95) == 3.0
    with pytest.raises(ValueError):
        percentile([], 0.5)


def test_single_drop_cdf():
    stats = DropStats("a", [2.5])
    assert stats.cdf() == [(2.5, 1.0)]
    assert stats.summary()["p95"] == 2.5


def test_report_round_trip(tmp_path):
    from locache.sim import DropResult
    stats = {"a": DropStats("a", [3.0, 1.0, 2.0], 1,
                            [(0, DropResult(3.0, F(5, 2), F(4))),
                             (1, DropResult(math.nan, None, None, True))]),
             "b": DropStats("b", [0.5])}
    export_report(stats, tmp_path)
    again = parse_report(tmp_path)
    assert sorted(again) == ["a", "b"]
    assert again["a"].sorted_times() == [1.0, 2.0, 3.0]
    assert again["a"].failed == 1
    assert again["a"].records[0] == (0, stats["a"].records[0][1])
    summary = json.loads((tmp_path / "summary.json").read_text())
    cdf = (tmp_path / "cdf_a.csv").read_text().splitlines()[1:]
    xs = [float(line.split(",")[0]) for line in cdf]
    probs = [float(line.split(",")[1]) for line in cdf]
    assert probs == sorted(probs) and xs == sorted(xs)
    first = next(x for x, p in zip(xs, probs) if p >= 0.95 - 1e-12)
    assert summary["a"]["p95"] == first
    assert set(summary["a"]) == {"mean", "p50", "p95", "n", "failed"}


def test_empty_stats_give_header_only(tmp_path):
    export_report({"a": DropStats("a")}, tmp_path)
    assert (tmp_path / "cdf_a.csv").read_text() == "time,cum_prob\n"
    assert json.loads((tmp_path / "summary.json").read_text())["a"]["n"] == 0


# --------------------------------------------------------------------------
# drops

def test_drops_are_reproducible_and_paired():
    a, b = draw_drop(SMALL, 3), draw_drop(SMALL, 3)
    assert a.stus == b.stus and np.array_equal(a.channels, b.channels)
    assert draw_drop(SMALL, 4).stus != a.stus or not np.array_equal(
        draw_drop(SMALL, 4).channels, a.channels)
    assert a.channels.shape == (4, 2)
    assert all(1 <= s <= SMALL.n_stus for s in a.stus)


def test_single_user_time_is_closed_form():
    cfg = replace(SMALL, users=1, antennas=1)
    from locache.sim import _power
    setups = prepare_schemes(cfg)
    drop = draw_drop(cfg, 0)
    gain = float(np.linalg.norm(drop.channels[0]) ** 2)
    rate = math.log2(1 + _power(cfg) * gain / cfg.noise_power)
    for name, setup in setups.items():
        m = setup.memory[drop.stus[0] - 1]
        assert run_drop(cfg, setup, 0).time == pytest.approx(float(1 - m) / rate, rel=1e-6)


class _Recorder:
    def __init__(self):
        self.calls = []

    def add(self, drop_index, channels, users, nulls, sizes):
        self.calls.append((list(users), nulls, list(sizes)))
        return len(self.calls) - 1, 1.0


def test_unicast_delivers_each_remainder():
    memory = (F(1, 3), F(1), F(1, 2))
    setup = SchemeSetup("b", memory)
    drop = Drop((1, 2, 3, 1, 3), np.ones((5, 2)))
    pool = _Recorder()
    _unicast_jobs(setup, drop, 0, pool, 2)
    delivered = {}
    for users, nulls, sizes in pool.calls:
        assert len(users) <= 2
        for k, n, s in zip(users, nulls, sizes):
            assert n == set(users) - {k}
            delivered[k] = delivered.get(k, 0) + s
    assert delivered == {0: F(2, 3), 2: F(1, 2), 3: F(2, 3), 4: F(1, 2)}


def test_pooled_time_matches_slot_by_slot_solves():
    family = example_lapda()
    cfg = replace(SMALL, users=4, antennas=2)
    setup = SchemeSetup("a", family.memory, Placement.from_lapda(family))
    rng = np.random.default_rng(1)
    h = rng.standard_normal((4, 2)) + 1j * rng.standard_normal((4, 2))
    stats = _run_scheme(cfg, setup, [(0, Drop((1, 2, 3, 4), h))])
    from locache.sim import _power
    plan = schedule((1, 2, 3, 4), family)
    expected = 0.0
    for slot in plan.slots:
        pos = {k: i for i, k in enumerate(slot.users)}
        ch = SlotChannel(h[[k - 1 for k in slot.users]], cfg.noise_power, _power(cfg))
        nulls = [{pos[j] for j in p.interference} for p in slot.payloads]
        sizes = [float(p.size) for p in slot.payloads]
        expected += slot_time(solve_wmm(ch, nulls, sizes), sizes)
    assert stats.times[0] == pytest.approx(expected, rel=1e-9)
    index, rec = stats.records[0]
    assert rec.dof == 3 and rec.dof_bound == 3


def test_identical_plans_give_identical_stats():
    setups = prepare_schemes(replace(SMALL, schemes=("a",)))
    drops = [(i, draw_drop(SMALL, i)) for i in range(5)]
    one = _run_scheme(SMALL, setups["a"], drops)
    two = _run_scheme(SMALL, replace(setups["a"], name="a"), drops)
    assert one.times == two.times


def test_experiment_is_deterministic(tmp_path):
    a = run_experiment(SMALL, drops=6)
    b = run_experiment(SMALL, drops=6)
    export_report(a, tmp_path / "one")
    export_report(b, tmp_path / "two")
    for name in ("cdf_a.csv", "cdf_d.csv", "drops.csv", "summary.json"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()
    for stats in a.values():
        assert stats.n + stats.failed == 6
        for _, rec in stats.records:
            if rec.dof is not None:
                assert rec.dof <= rec.dof_bound


def test_per_drop_shadowing_mode_runs():
    cfg = replace(SMALL, shadowing_mode="drop", schemes=("a", "b"))
    stats = run_experiment(cfg, drops=3)
    assert all(s.n == 3 for s in stats.values())


def test_more_power_is_faster():
    base = replace(SMALL, schemes=("a",), shadowing_db=0)
    low = run_experiment(base, drops=100)["a"].times
    high = run_experiment(replace(base, edge_snr_db=15), drops=100)["a"].times
    assert np.mean(high) < np.mean(low)


def test_more_memory_is_faster():
    base = replace(SMALL, schemes=("a", "d"), shadowing_db=0)
    low = run_experiment(replace(base, memory_ratio=0.25), drops=100)
    high = run_experiment(replace(base, memory_ratio=0.5), drops=100)
    for name in ("a", "d"):
        assert np.mean(high[name].times) < np.mean(low[name].times)
