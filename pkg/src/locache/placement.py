"""Memory allocation across STUs and the resulting cache contents.

Rates come from a Monte-Carlo average over positions and channels in each
STU. Memory is then split to minimise the worst per-STU delivery time
divided by the achievable DoF, ``gamma / (m_min + L/K)``, subject to the
total budget ``M``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numpy as np

from .pda import Lapda, MlpdaMatrix, construct_mlpda, validate_lapda
from .radio import ChannelParams, Environment, calibrate_power, sample_channels

__all__ = [
    "RateMap",
    "AllocationResult",
    "GainSplit",
    "CachePart",
    "Placement",
    "CacheManifest",
    "approximate_rates",
    "allocate_memory",
    "allocate_single_user",
    "allocate_uniform",
    "quantize_allocation",
    "build_placement",
    "arrange_cache",
    "floor_to_grid",
    "emit_rates",
    "emit_allocation",
    "parse_rates",
    "parse_allocation",
]


@dataclass(frozen=True)
class RateMap:
    rates: tuple[float, ...]

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ValueError("need at least one STU")
        if any(not r > 0 or not math.isfinite(r) for r in rates):
            raise ValueError("every rate must be positive and finite")
        object.__setattr__(self, "rates", rates)

    def __len__(self):
        return len(self.rates)

    def rate(self, stu) -> float:
        return self.rates[stu - 1]


def approximate_rates(env: Environment, params: ChannelParams, antennas: int,
                      samples_per_stu: int = 1000, seed: int = 0,
                      tx_power: float | None = None, shadowing=True) -> RateMap:
    """Average ``log2(1 + P_T |h|^2 / N0)`` over random positions, shadowing
    and fading inside each STU.

    ``shadowing`` may also be an array of fixed per-STU losses in dB. STU
    ``s`` draws from its own stream seeded by ``(seed, s)``: first the
    positions, then the channel (see :func:`sample_channels`).
    """
    fixed = None if isinstance(shadowing, (bool, np.bool_)) else np.asarray(shadowing, float)
    if fixed is not None and fixed.shape != (env.n_stus,):
        raise ValueError("need one shadowing value per STU")
    if samples_per_stu < 1:
        raise ValueError("samples_per_stu must be at least 1")
    power = calibrate_power(env, params) if tx_power is None else tx_power
    if tx_power is None and params.tx_power is not None:
        power = params.tx_power
    scale = params.bandwidth_per_file * params.prelog
    rates = []
    for s in range(1, env.n_stus + 1):
        rng = np.random.default_rng([seed, s])
        x0, y0 = env.stu_origin(s)
        pos = rng.uniform(0.0, env.cell, size=(samples_per_stu, 2))
        d = env.distance(x0 + pos[:, 0], y0 + pos[:, 1])
        h = sample_channels(d, params, antennas, rng,
                            shadowing if fixed is None else fixed[s - 1])
        snr = power * np.sum(np.abs(h) ** 2, axis=1) / params.noise_power
        rates.append(scale * float(np.mean(np.log2(1 + snr))))
    return RateMap(tuple(rates))


@dataclass(frozen=True)
class AllocationResult:
    memory: tuple[Fraction, ...]
    worst_time: Fraction
    total_memory: Fraction
    n_users: int
    antennas: int

    @property
    def floor(self) -> Fraction:
        return min(self.memory)

    @property
    def objective(self) -> Fraction:
        return self.worst_time / (self.floor + Fraction(self.antennas, self.n_users))


def _exact(value) -> Fraction:
    return value if isinstance(value, Fraction) else Fraction(value)


def _fill(rates, gamma, budget):
    """Largest common floor ``m`` with ``sum(max(m, 1 - gamma r)) <= budget``."""
    tops = sorted((1 - gamma * r for r in rates), reverse=True)
    S = len(tops)
    fixed = Fraction(0)
    for j in range(S + 1):
        level = (budget - fixed) / (S - j) if j < S else None
        if j == S or level >= tops[j]:
            return level
        fixed += tops[j]
    return None


def _result(rates, gamma, floor, budget, K, L):
    memory = tuple(min(Fraction(1), max(floor, 1 - gamma * r)) for r in rates)
    return AllocationResult(memory, gamma, budget, K, L)


def allocate_memory(rates, M, K: int, L: int) -> AllocationResult:
    """Exact minimiser of ``gamma / (m + L/K)``.

    For a fixed ``gamma`` the best floor comes from water-filling the
    remaining budget, and the objective is monotone between the points
    where the set of STUs sitting above the floor changes. Those points,
    plus the smallest feasible ``gamma``, are evaluated in exact arithmetic.
    """
    r = [_exact(v) for v in (rates.rates if isinstance(rates, RateMap) else rates)]
    budget = _exact(M)
    if budget < 0:
        raise ValueError("total memory must be non-negative")
    if any(v <= 0 for v in r):
        raise ValueError("rates must be positive")
    S = len(r)
    if budget >= S:
        return AllocationResult(tuple(Fraction(1) for _ in r), Fraction(0), budget, K, L)
    ratio = Fraction(L, K)
    order = sorted(r)
    candidates = {allocate_single_user(r, budget, K, L).worst_time}
    prefix = Fraction(0)
    for j in range(S):
        candidates.add((S - budget) / (prefix + (S - j) * order[j]))
        prefix += order[j]
    best = None
    for gamma in sorted(candidates):
        floor = _fill(r, gamma, budget)
        if floor is None or floor < 0:
            continue
        value = gamma / (floor + ratio)
        if best is None or value < best[0]:
            best = (value, gamma, floor)
    _, gamma, floor = best
    return _result(r, gamma, floor, budget, K, L)


def allocate_single_user(rates, M, K: int = 1, L: int = 1) -> AllocationResult:
    """Smallest worst-case time ignoring the DoF term: ``m(s) = max(0, 1 - gamma r(s))``."""
    r = [_exact(v) for v in (rates.rates if isinstance(rates, RateMap) else rates)]
    budget = _exact(M)
    if budget < 0:
        raise ValueError("total memory must be non-negative")
    S = len(r)
    if budget >= S:
        return AllocationResult(tuple(Fraction(1) for _ in r), Fraction(0), budget, K, L)
    order = sorted(r)
    prefix = Fraction(0)
    gamma = None
    for j in range(1, S + 1):
        prefix += order[j - 1]
        g = (j - budget) / prefix
        nxt = order[j] if j < S else None
        # the first j STUs stay positive and the rest drop to zero
        if g > 0 and 1 - g * order[j - 1] >= 0 and (nxt is None or 1 - g * nxt <= 0):
            gamma = g
            break
    memory = tuple(max(Fraction(0), 1 - gamma * v) for v in r)
    return AllocationResult(memory, gamma, budget, K, L)


def allocate_uniform(rates, M, K: int, L: int) -> AllocationResult:
    r = [_exact(v) for v in (rates.rates if isinstance(rates, RateMap) else rates)]
    share = min(Fraction(1), _exact(M) / len(r))
    gamma = max((1 - share) / v for v in r)
    return AllocationResult(tuple(share for _ in r), gamma, _exact(M), K, L)


def floor_to_grid(result: AllocationResult, rates, steps: int) -> AllocationResult:
    """Round each ``K m(s)`` down to a multiple of ``1/steps``.

    Rounding down keeps the budget; the worst-case time is recomputed.
    """
    r = [_exact(v) for v in (rates.rates if isinstance(rates, RateMap) else rates)]
    K = result.n_users
    memory = tuple(Fraction(math.floor(m * K * steps), K * steps) for m in result.memory)
    gamma = max((1 - m) / v for m, v in zip(memory, r))
    return AllocationResult(memory, gamma, result.total_memory, K, result.antennas)


@dataclass(frozen=True)
class GainSplit:
    """Time-sharing between gains ``lower`` and ``lower + 1``."""

    lower: int
    low_weight: Fraction
    high_weight: Fraction

    @property
    def upper(self) -> int:
        return self.lower + 1

    def memory(self, K) -> Fraction:
        return Fraction(self.lower, K) * self.low_weight + Fraction(self.upper, K) * self.high_weight


def quantize_allocation(memory, K: int):
    """Integer gain where ``K m(s)`` is whole, otherwise a :class:`GainSplit`."""
    if isinstance(memory, AllocationResult):
        memory = memory.memory
    out = []
    for m in memory:
        gain = _exact(m) * K
        if gain.denominator == 1:
            out.append(int(gain))
            continue
        lower = math.floor(gain)
        out.append(GainSplit(lower, lower + 1 - gain, gain - lower))
    return out


@dataclass(frozen=True)
class CachePart:
    """A slice of an STU file of relative size ``weight`` placed with ``matrix``.

    ``index`` is 0 for an unsplit file, 1 for the lower-gain part and 2 for
    the upper-gain part.
    """

    index: int
    weight: Fraction
    matrix: MlpdaMatrix

    @property
    def gain(self) -> int:
        return self.matrix.stars_per_column * self.matrix.n_users // self.matrix.n_rows

    @property
    def fraction(self) -> Fraction:
        return self.matrix.memory_fraction


@dataclass(frozen=True, eq=False)
class Placement:
    """Cache layout for all STUs: one or two parts per STU."""

    parts: tuple[tuple[CachePart, ...], ...]
    memory: tuple[Fraction, ...]

    @property
    def n_stus(self) -> int:
        return len(self.parts)

    @property
    def n_users(self) -> int:
        return self.parts[0][0].matrix.n_users

    @property
    def antenna_budget(self) -> int:
        return self.parts[0][0].matrix.antenna_budget

    def stu_parts(self, stu) -> tuple[CachePart, ...]:
        return self.parts[stu - 1]

    def fraction(self, stu) -> Fraction:
        return self.memory[stu - 1]

    def split(self, stu):
        parts = self.stu_parts(stu)
        if len(parts) == 1:
            return None
        low, high = parts
        return GainSplit(low.gain, low.weight, high.weight)

    @classmethod
    def from_lapda(cls, family: Lapda) -> "Placement":
        parts = tuple((CachePart(0, Fraction(1), Q),) for Q in family.matrices)
        return cls(parts, family.memory)

    def as_lapda(self) -> Lapda:
        """Every distinct part matrix as one family, for the nesting check."""
        seen = {}
        for parts in self.parts:
            for p in parts:
                seen.setdefault(p.matrix, p.fraction)
        return Lapda(tuple(seen), tuple(seen.values()))

    def validate(self):
        return validate_lapda(self.as_lapda())


def build_placement(memory, K: int, L: int) -> Placement:
    """Cyclic-window matrices for every STU, splitting fractional gains."""
    if isinstance(memory, AllocationResult):
        memory = memory.memory
    memory = tuple(_exact(m) for m in memory)
    parts = []
    for gain in quantize_allocation(memory, K):
        if isinstance(gain, GainSplit):
            parts.append((CachePart(1, gain.low_weight, construct_mlpda(K, L, gain.lower)),
                          CachePart(2, gain.high_weight, construct_mlpda(K, L, gain.upper))))
        else:
            parts.append((CachePart(0, Fraction(1), construct_mlpda(K, L, gain)),))
    return Placement(tuple(parts), memory)


@dataclass(frozen=True, eq=False)
class CacheManifest:
    """What every user stores: ``(stu, part, subfile)`` entries and sizes."""

    placement: Placement

    @cached_property
    def _entries(self):
        K = self.placement.n_users
        table = [set() for _ in range(K)]
        for s, parts in enumerate(self.placement.parts, 1):
            for p in parts:
                Q = p.matrix
                for f in range(1, Q.n_rows + 1):
                    for k in Q.star_set(f):
                        table[k - 1].add((s, p.index, f))
        return tuple(frozenset(t) for t in table)

    def entries(self, user) -> frozenset:
        return self._entries[user - 1]

    def has(self, user, stu, part, subfile) -> bool:
        return (stu, part, subfile) in self._entries[user - 1]

    def entry_size(self, stu, part, subfile) -> Fraction:
        for p in self.placement.stu_parts(stu):
            if p.index == part:
                return p.weight / p.matrix.n_rows
        raise KeyError((stu, part))

    def cached_size(self, user, stu=None) -> Fraction:
        return sum((self.entry_size(s, p, f) for s, p, f in self._entries[user - 1]
                    if stu is None or s == stu), Fraction(0))

    def subfiles(self, user, stu, part=0) -> list[int]:
        return sorted(f for s, p, f in self._entries[user - 1] if s == stu and p == part)


def arrange_cache(layout) -> CacheManifest:
    """Cache contents implied by a :class:`Placement` or :class:`Lapda`."""
    if isinstance(layout, Lapda):
        layout = Placement.from_lapda(layout)
    return CacheManifest(layout)


# --------------------------------------------------------------------------
# text files

def emit_rates(rates: RateMap) -> str:
    return "".join(f"stu,{s},rate,{r!r}\n" for s, r in enumerate(rates.rates, 1))


def emit_allocation(result: AllocationResult) -> str:
    lines = [f"# gamma={float(result.worst_time)!r} objective={float(result.objective)!r}\n"]
    lines += [f"stu,{s},m,{m.numerator}/{m.denominator}\n"
              for s, m in enumerate(result.memory, 1)]
    return "".join(lines)


def _records(text, field):
    values = {}
    for line_no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4 or parts[0] != "stu":
            raise ValueError(f"line {line_no}: expected 'stu,<s>,<field>,<value>'")
        if parts[2] != field:
            continue
        try:
            s = int(parts[1])
            value = float(parts[3]) if field == "rate" else Fraction(parts[3])
        except (ValueError, ZeroDivisionError):
            raise ValueError(f"line {line_no}: bad value {parts[3]!r}") from None
        if s in values:
            raise ValueError(f"line {line_no}: stu {s} listed twice")
        values[s] = value
    if not values:
        raise ValueError(f"no '{field}' records found")
    if sorted(values) != list(range(1, len(values) + 1)):
        raise ValueError("STU indices must run 1..S without gaps")
    return tuple(values[s] for s in range(1, len(values) + 1))


def parse_rates(text: str) -> RateMap:
    return RateMap(_records(text, "rate"))


def parse_allocation(text: str) -> tuple[Fraction, ...]:
    return _records(text, "m")
