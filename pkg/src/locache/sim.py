"""Monte-Carlo comparison of placement/delivery schemes in a room.

Schemes
-------
a  multi-user placement, coded-caching delivery (the full pipeline)
b  multi-user placement, unicast delivery
c  single-user placement, unicast delivery
d  uniform placement, coded-caching delivery

Every scheme sees the same user drops and channel draws. Slot problems of
all drops are pooled and solved in one batch per scheme.
"""

from __future__ import annotations

import configparser
import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from .beamforming import solve_wmm_batch
from .placement import (allocate_memory, allocate_single_user, allocate_uniform,
                        approximate_rates, build_placement, floor_to_grid)
from .radio import ChannelParams, Environment, calibrate_power, sample_channels, shadowing_map
from .scheduler import plan_dof, schedule

log = logging.getLogger(__name__)

__all__ = [
    "SCHEMES",
    "ExperimentConfig",
    "SchemeSetup",
    "DropResult",
    "DropStats",
    "load_config",
    "prepare_schemes",
    "draw_drop",
    "run_drop",
    "run_experiment",
    "export_report",
    "parse_report",
    "percentile",
]

SCHEMES = {
    "a": "multi-user placement, coded caching",
    "b": "multi-user placement, unicast",
    "c": "single-user placement, unicast",
    "d": "uniform placement, coded caching",
}
CODED = {"a", "d"}


@dataclass(frozen=True)
class ExperimentConfig:
    # environment
    width: float = 30.0
    depth: float = 30.0
    cell: float = 1.0
    tx_height: float = 5.0
    # channel
    frequency_ghz: float = 3.5
    pathloss_exponent: float = 3.0
    shadowing_db: float = 7.0
    noise_power: float = 1.0
    prelog: float = 1.0
    bandwidth_per_file: float = 1.0
    edge_snr_db: float = 5.0
    shadowing_mode: str = "stu"
    # experiment
    users: int = 36
    antennas: int = 6
    memory_ratio: float = 0.33
    drops: int = 500
    seed: int = 0
    rate_samples: int = 1000
    gain_steps: int = 100
    # schemes
    schemes: tuple[str, ...] = ("a", "b", "c", "d")

    def __post_init__(self):
        if self.users < 1 or self.antennas < 1:
            raise ValueError("need at least one user and one antenna")
        if not 0 <= self.memory_ratio <= 1:
            raise ValueError("memory_ratio must lie in [0, 1]")
        if self.drops < 1:
            raise ValueError("drops must be at least 1")
        if self.shadowing_mode not in ("stu", "drop"):
            raise ValueError("shadowing_mode is 'stu' or 'drop'")
        bad = [s for s in self.schemes if s not in SCHEMES]
        if bad or not self.schemes:
            raise ValueError(f"unknown schemes {bad}; choose from {','.join(SCHEMES)}")

    @property
    def environment(self) -> Environment:
        return Environment(self.width, self.depth, self.cell, self.tx_height)

    @property
    def channel(self) -> ChannelParams:
        return ChannelParams(self.frequency_ghz, self.pathloss_exponent, self.shadowing_db,
                             self.noise_power, self.prelog, self.bandwidth_per_file,
                             self.edge_snr_db)

    @property
    def n_stus(self) -> int:
        return self.environment.n_stus

    @property
    def total_memory(self) -> Fraction:
        return Fraction(str(self.memory_ratio)) * self.n_stus


_SECTIONS = {
    "environment": ("width", "depth", "cell", "tx_height"),
    "channel": ("frequency_ghz", "pathloss_exponent", "shadowing_db", "noise_power", "prelog",
                "bandwidth_per_file", "edge_snr_db", "shadowing_mode"),
    "experiment": ("users", "antennas", "memory_ratio", "drops", "seed", "rate_samples",
                   "gain_steps"),
    "schemes": ("schemes",),
}


def load_config(text: str) -> ExperimentConfig:
    """Parse an INI config; absent fields keep their defaults (logged)."""
    parser = configparser.ConfigParser()
    parser.read_string(text)
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    defaults = ExperimentConfig()
    values = {}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ValueError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in _SECTIONS[section]:
                raise ValueError(f"unknown key {key!r} in [{section}]")
    for section, keys in _SECTIONS.items():
        for key in keys:
            if not parser.has_option(section, key):
                log.info("config: %s.%s not set, using default %r", section, key,
                         getattr(defaults, key))
                continue
            raw = parser.get(section, key).strip()
            kind = types[key]
            try:
                if key == "schemes":
                    values[key] = tuple(s.strip() for s in raw.split(",") if s.strip())
                elif kind == "int":
                    values[key] = int(raw)
                elif kind == "float":
                    values[key] = float(raw)
                else:
                    values[key] = raw
            except ValueError:
                raise ValueError(f"bad value for {section}.{key}: {raw!r}") from None
    return ExperimentConfig(**values)


@dataclass(frozen=True, eq=False)
class SchemeSetup:
    """Placement artifacts of one scheme, built once per configuration."""

    name: str
    memory: tuple[Fraction, ...]
    placement: object = None          # Placement for coded schemes


@dataclass(frozen=True)
class Drop:
    stus: tuple[int, ...]
    channels: np.ndarray


@dataclass(frozen=True)
class DropResult:
    time: float
    dof: Fraction | None = None
    dof_bound: Fraction | None = None
    failed: bool = False


@dataclass
class DropStats:
    scheme: str
    times: list = field(default_factory=list)
    failed: int = 0
    records: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.times)

    def sorted_times(self) -> list:
        return sorted(self.times)

    def cdf(self) -> list:
        xs = self.sorted_times()
        return [(x, (i + 1) / len(xs)) for i, x in enumerate(xs)]

    def summary(self) -> dict:
        if not self.times:
            return {"mean": None, "p50": None, "p95": None, "n": 0, "failed": self.failed}
        return {"mean": math.fsum(self.times) / self.n,
                "p50": percentile(self.times, 0.5),
                "p95": percentile(self.times, 0.95),
                "n": self.n, "failed": self.failed}


def percentile(values, q) -> float:
    """Order statistic at 1-based rank ``ceil(q n)``."""
    xs = sorted(values)
    if not xs:
        raise ValueError("no values")
    rank = max(1, math.ceil(q * len(xs) - 1e-12))
    return xs[rank - 1]


def _power(config: ExperimentConfig) -> float:
    return calibrate_power(config.environment, config.channel)


def _shadow(config: ExperimentConfig):
    return shadowing_map(config.n_stus, config.channel, config.seed)


def prepare_schemes(config: ExperimentConfig) -> dict:
    """Rate map, allocations and cache layouts for the selected schemes."""
    env, params = config.environment, config.channel
    power = _power(config)
    shadow = _shadow(config) if config.shadowing_mode == "stu" else True
    rates = approximate_rates(env, params, config.antennas, config.rate_samples,
                              config.seed, power, shadow)
    K, L, M = config.users, config.antennas, config.total_memory
    out = {}
    for name in config.schemes:
        if name in ("a", "b"):
            result = allocate_memory(rates, M, K, L)
        elif name == "c":
            result = allocate_single_user(rates, M, K, L)
        else:
            result = allocate_uniform(rates, M, K, L)
        result = floor_to_grid(result, rates, config.gain_steps)
        placement = build_placement(result.memory, K, L) if name in CODED else None
        out[name] = SchemeSetup(name, result.memory, placement)
    return out


def draw_drop(config: ExperimentConfig, index: int, shadow=None) -> Drop:
    """User STUs (uniform, with replacement) and their channels for one drop.

    Stream ``(seed, index)``: STUs, intra-cell offsets, then channels.
    """
    env, params = config.environment, config.channel
    rng = np.random.default_rng([config.seed, index])
    stus = rng.integers(1, env.n_stus + 1, size=config.users)
    offsets = rng.uniform(0.0, env.cell, size=(config.users, 2))
    origins = np.array([env.stu_origin(int(s)) for s in stus])
    d = env.distance(origins[:, 0] + offsets[:, 0], origins[:, 1] + offsets[:, 1])
    if config.shadowing_mode == "stu":
        shadow = _shadow(config) if shadow is None else shadow
        h = sample_channels(d, params, config.antennas, rng, shadow[stus - 1])
    else:
        h = sample_channels(d, params, config.antennas, rng, True)
    return Drop(tuple(int(s) for s in stus), h)


class _Pool:
    """Collects slot problems, deduplicating identical ones, then solves them together."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.keys = {}
        self.problems = []

    def add(self, drop_index, channels, users, nulls, sizes):
        """``users`` 0-based indices into the drop; ``nulls[k]`` likewise."""
        sizes = [Fraction(s) for s in sizes]
        low = min(sizes)
        key = (drop_index, tuple(users), tuple(frozenset(n) for n in nulls),
               tuple(s / low for s in sizes))
        if key not in self.keys:
            self.keys[key] = len(self.problems)
            self.problems.append((channels[list(users)], users, nulls,
                                  [float(s / low) for s in sizes]))
        return self.keys[key], float(low)

    def solve(self):
        if not self.problems:
            return np.zeros(0)
        U = max(len(p[1]) for p in self.problems)
        B, L = len(self.problems), self.config.antennas
        h = np.zeros((B, U, L), dtype=complex)
        nulls = np.zeros((B, U, U), dtype=bool)
        weights = np.ones((B, U))
        mask = np.zeros((B, U), dtype=bool)
        for b, (ch, users, groups, w) in enumerate(self.problems):
            pos = {u: i for i, u in enumerate(users)}
            n = len(users)
            h[b, :n] = ch
            mask[b, :n] = True
            weights[b, :n] = w
            for i, g in enumerate(groups):
                for j in g:
                    nulls[b, i, pos[j]] = True
        sol = solve_wmm_batch(h, nulls, weights, self.config.noise_power, _power(self.config),
                              mask)
        scale = self.config.prelog * self.config.bandwidth_per_file
        rates = scale * np.log2(1 + sol.sinr)
        with np.errstate(divide="ignore", invalid="ignore"):
            per_unit = np.where(mask, weights / rates, 0.0)
        times = per_unit.max(axis=1)
        times[~sol.converged | ~np.isfinite(times)] = np.inf
        return times


def _coded_jobs(setup: SchemeSetup, drop: Drop, index, pool: _Pool):
    """Slot problems of one coded-caching drop; returns (jobs, dof, bound)."""
    plan = schedule(drop.stus, setup.placement)
    K, L = len(drop.stus), setup.placement.antenna_budget
    ref = min(setup.memory[s - 1] for s in drop.stus)
    jobs = []
    for ph in plan.phases:
        for slot in ph.slots:
            if not slot.payloads:
                continue
            users = [p.user - 1 for p in slot.payloads]
            nulls = [{j - 1 for j in p.interference} for p in slot.payloads]
            jobs.append(pool.add(index, drop.channels, users, nulls,
                                 [p.size for p in slot.payloads]))
    try:
        dof = plan_dof(plan)
    except ValueError:
        dof = None
    return jobs, dof, K * ref + L


def _unicast_jobs(setup: SchemeSetup, drop: Drop, index, pool: _Pool, antennas):
    """Groups of up to ``L`` users in index order, each stream nulled at every
    other member, each user sent its whole uncached remainder."""
    pending = [k for k, s in enumerate(drop.stus) if setup.memory[s - 1] < 1]
    jobs = []
    for start in range(0, len(pending), antennas):
        group = pending[start:start + antennas]
        nulls = [set(group) - {k} for k in group]
        sizes = [1 - setup.memory[drop.stus[k] - 1] for k in group]
        jobs.append(pool.add(index, drop.channels, group, nulls, sizes))
    return jobs


def _run_scheme(config, setup: SchemeSetup, drops) -> DropStats:
    pool = _Pool(config)
    pending = []
    for index, drop in drops:
        try:
            if setup.name in CODED:
                jobs, dof, bound = _coded_jobs(setup, drop, index, pool)
            else:
                jobs, dof, bound = _unicast_jobs(setup, drop, index, pool,
                                                 config.antennas), None, None
            pending.append((index, jobs, dof, bound))
        except Exception as exc:          # plan construction failure marks the drop
            log.warning("scheme %s drop %d failed: %s", setup.name, index, exc)
            pending.append((index, None, None, None))
    times = pool.solve()
    stats = DropStats(setup.name)
    for index, jobs, dof, bound in pending:
        if jobs is None:
            stats.failed += 1
            stats.records.append((index, DropResult(math.nan, failed=True)))
            continue
        total = math.fsum(times[b] * low for b, low in jobs)
        if not math.isfinite(total):
            stats.failed += 1
            stats.records.append((index, DropResult(math.nan, dof, bound, True)))
            continue
        stats.times.append(total)
        stats.records.append((index, DropResult(total, dof, bound)))
    return stats


def run_drop(config: ExperimentConfig, setup: SchemeSetup, index: int) -> DropResult:
    """Total delivery time of one drop under one scheme."""
    stats = _run_scheme(config, setup, [(index, draw_drop(config, index))])
    return stats.records[0][1]


def run_experiment(config: ExperimentConfig, schemes=None, drops=None) -> dict:
    """Stats per scheme over ``drops`` paired drops (defaults from the config)."""
    if schemes is not None:
        config = replace(config, schemes=tuple(schemes))
    n = config.drops if drops is None else drops
    if n < 1:
        raise ValueError("need at least one drop")
    setups = prepare_schemes(config)
    shadow = _shadow(config)
    sample = [(i, draw_drop(config, i, shadow)) for i in range(n)]
    return {name: _run_scheme(config, setups[name], sample) for name in config.schemes}


# --------------------------------------------------------------------------
# reports

def _fraction_text(value):
    return "" if value is None else f"{value.numerator}/{value.denominator}"


def export_report(stats: dict, out_dir) -> list:
    """Write ``cdf_<scheme>.csv``, ``drops.csv`` and ``summary.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in sorted(stats):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time", "cum_prob"])
        for x, p in stats[name].cdf():
            writer.writerow([repr(float(x)), repr(float(p))])
        path = out / f"cdf_{name}.csv"
        path.write_text(buf.getvalue())
        written.append(path)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["drop", "scheme", "time", "dof", "dof_bound", "failed"])
    for name in sorted(stats):
        for index, rec in stats[name].records:
            writer.writerow([index, name, repr(float(rec.time)), _fraction_text(rec.dof),
                             _fraction_text(rec.dof_bound), int(rec.failed)])
    path = out / "drops.csv"
    path.write_text(buf.getvalue())
    written.append(path)
    summary = {name: stats[name].summary() for name in sorted(stats)}
    path = out / "summary.json"
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(path)
    return written


def parse_report(out_dir) -> dict:
    """Read back what :func:`export_report` wrote."""
    out = Path(out_dir)
    summary = json.loads((out / "summary.json").read_text())
    stats = {}
    for name, row in summary.items():
        lines = (out / f"cdf_{name}.csv").read_text().splitlines()
        if not lines or lines[0] != "time,cum_prob":
            raise ValueError(f"cdf_{name}.csv: bad header")
        times = [float(line.split(",")[0]) for line in lines[1:]]
        stats[name] = DropStats(name, times, int(row["failed"]))
    drops = out / "drops.csv"
    if drops.exists():
        for row in csv.DictReader(io.StringIO(drops.read_text())):
            dof = Fraction(row["dof"]) if row["dof"] else None
            bound = Fraction(row["dof_bound"]) if row["dof_bound"] else None
            rec = DropResult(float(row["time"]), dof, bound, row["failed"] == "1")
            stats[row["scheme"]].records.append((int(row["drop"]), rec))
    return stats
