"""Multi-antenna placement delivery arrays (MLPDA) and their location-aware
families (LAPDA).

An MLPDA is an ``F x K`` grid whose cells are either a star (user ``k``
caches subfile ``f``) or a positive slot index (subfile ``f`` is sent to
user ``k`` in transmission ``n``). Internally the grid is a read-only
integer array with ``0`` standing for a star; every public index
(rows, users, slots) is 1-based.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache

import numpy as np

from .flows import TransportInfeasible, transport

__all__ = [
    "STAR",
    "StructureError",
    "ParseError",
    "ConditionFailure",
    "ValidationReport",
    "MlpdaMatrix",
    "Lapda",
    "validate_mlpda",
    "validate_lapda",
    "construct_mlpda",
    "construct_lapda",
    "dof",
    "parse_mlpda",
    "emit_mlpda",
    "parse_lapda",
    "emit_lapda",
]

STAR = 0


class StructureError(ValueError):
    """The input is not a well-formed grid or family at all."""


class ParseError(ValueError):
    """Syntax error in the text format, with its line and column."""

    def __init__(self, message, line, column=1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class ConditionFailure:
    condition: str
    message: str
    row: int | None = None
    column: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    failures: tuple[ConditionFailure, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures

    def failed_conditions(self) -> list[str]:
        seen = []
        for failure in self.failures:
            if failure.condition not in seen:
                seen.append(failure.condition)
        return seen

    def __bool__(self):
        return self.passed

    def __str__(self):
        if self.passed:
            return "pass"
        return "\n".join(f"{f.condition}: {f.message}" for f in self.failures)


@dataclass(frozen=True, eq=False)
class MlpdaMatrix:
    """Star/slot grid plus the antenna budget it is meant for."""

    entries: np.ndarray
    antenna_budget: int

    def __post_init__(self):
        grid = np.array(self.entries, dtype=np.int64, copy=True)
        if grid.ndim != 2 or grid.shape[0] < 1 or grid.shape[1] < 1:
            raise StructureError("grid must be a non-empty rectangle")
        if (grid < 0).any():
            raise StructureError("slot indices must be positive")
        if int(self.antenna_budget) < 1:
            raise StructureError("antenna budget must be at least 1")
        grid.flags.writeable = False
        object.__setattr__(self, "entries", grid)
        object.__setattr__(self, "antenna_budget", int(self.antenna_budget))

    @classmethod
    def from_rows(cls, rows, antenna_budget):
        """Build from rows of tokens (``'*'``/``None`` for a star, else int)."""
        rows = [list(r) for r in rows]
        if not rows:
            raise StructureError("grid has no rows")
        width = len(rows[0])
        for i, r in enumerate(rows, 1):
            if len(r) != width:
                raise StructureError(f"row {i} has {len(r)} cells, expected {width}")
        grid = [[STAR if c in ("*", None) else _slot_value(c) for c in r] for r in rows]
        return cls(np.array(grid, dtype=np.int64), antenna_budget)

    def __eq__(self, other):
        if not isinstance(other, MlpdaMatrix):
            return NotImplemented
        return (self.antenna_budget == other.antenna_budget
                and np.array_equal(self.entries, other.entries))

    def __hash__(self):
        return hash((self.antenna_budget, self.entries.shape, self.entries.tobytes()))

    @property
    def n_rows(self) -> int:
        return self.entries.shape[0]

    @property
    def n_users(self) -> int:
        return self.entries.shape[1]

    @cached_property
    def column_star_counts(self) -> tuple[int, ...]:
        return tuple(int(v) for v in (self.entries == STAR).sum(axis=0))

    @cached_property
    def stars_per_column(self) -> int:
        """Most common column star count (the nominal ``Z``)."""
        counts = Counter(self.column_star_counts)
        return max(counts.items(), key=lambda kv: (kv[1], kv[0]))[0]

    @cached_property
    def n_slots(self) -> int:
        return int(self.entries.max())

    @property
    def memory_fraction(self) -> Fraction:
        return Fraction(self.stars_per_column, self.n_rows)

    def cell(self, row, user):
        """Entry at 1-based (row, user); ``None`` for a star."""
        v = int(self.entries[row - 1, user - 1])
        return None if v == STAR else v

    def is_star(self, row, user) -> bool:
        return self.entries[row - 1, user - 1] == STAR

    @cached_property
    def _star_sets(self):
        return tuple(frozenset(int(k) + 1 for k in np.flatnonzero(r == STAR))
                     for r in self.entries)

    def star_set(self, row) -> frozenset:
        """Users caching subfile ``row``."""
        return self._star_sets[row - 1]

    def missing_rows(self, user) -> list[int]:
        """Rows not cached by ``user``, ascending."""
        return [int(f) + 1 for f in np.flatnonzero(self.entries[:, user - 1] != STAR)]

    @cached_property
    def _slot_cells(self):
        cells = {}
        rows, cols = np.nonzero(self.entries)
        for f, k in zip(rows.tolist(), cols.tolist()):
            cells.setdefault(int(self.entries[f, k]), []).append((f + 1, k + 1))
        return cells

    def slot_cells(self, n) -> list[tuple[int, int]]:
        """(row, user) pairs carrying slot ``n``, row-major."""
        return list(self._slot_cells.get(n, []))

    def served_users(self, n) -> list[int]:
        return sorted({k for _, k in self._slot_cells.get(n, [])})

    def row_for(self, user, n):
        """Row of ``user``'s column holding slot ``n``, or ``None``."""
        hits = np.flatnonzero(self.entries[:, user - 1] == n)
        return int(hits[0]) + 1 if hits.size else None

    def to_rows(self):
        return [["*" if v == STAR else int(v) for v in r] for r in self.entries]

    def __repr__(self):
        return (f"MlpdaMatrix(F={self.n_rows}, K={self.n_users}, "
                f"Z={self.stars_per_column}, N={self.n_slots}, L={self.antenna_budget})")


def _slot_value(token):
    if isinstance(token, bool):
        raise StructureError(f"bad cell {token!r}")
    try:
        value = int(token)
    except (TypeError, ValueError):
        raise StructureError(f"bad cell {token!r}") from None
    if value < 1:
        raise StructureError(f"slot index {value} is not positive")
    return value


def validate_mlpda(Q: MlpdaMatrix, stars_per_column=None) -> ValidationReport:
    """Check the four MLPDA conditions and report every violation found.

    ``stars_per_column`` overrides the expected star count; by default the
    most common column count is expected everywhere.
    """
    if not isinstance(Q, MlpdaMatrix):
        raise StructureError("expected an MlpdaMatrix")
    grid = Q.entries
    n_rows, n_users = grid.shape
    L = Q.antenna_budget
    failures = []

    expected = Q.stars_per_column if stars_per_column is None else int(stars_per_column)
    for k, count in enumerate(Q.column_star_counts, 1):
        if count != expected:
            failures.append(ConditionFailure(
                "C1", f"column {k} has {count} stars, expected {expected}", None, k))

    present = set(np.unique(grid[grid != STAR]).tolist())
    for n in range(1, Q.n_slots + 1):
        if n not in present:
            failures.append(ConditionFailure("C2", f"slot {n} never appears"))

    for k in range(n_users):
        col = grid[:, k]
        seen = {}
        for f in range(n_rows):
            v = int(col[f])
            if v == STAR:
                continue
            if v in seen:
                failures.append(ConditionFailure(
                    "C3", f"slot {v} appears twice in column {k + 1} "
                          f"(rows {seen[v] + 1} and {f + 1})", f + 1, k + 1))
            else:
                seen[v] = f

    for n in sorted(present):
        cells = Q.slot_cells(n)
        users = sorted({k for _, k in cells})
        user_idx = np.array(users) - 1
        for f in sorted({f for f, _ in cells}):
            load = int((grid[f - 1, user_idx] != STAR).sum())
            if load > L:
                failures.append(ConditionFailure(
                    "C4", f"slot {n}: row {f} has {load} integer entries among "
                          f"served users, more than L={L}", f, None))
    return ValidationReport(tuple(failures))


@dataclass(frozen=True, eq=False)
class Lapda:
    """Per-STU MLPDAs with their memory fractions."""

    matrices: tuple[MlpdaMatrix, ...]
    memory: tuple[Fraction, ...]

    def __post_init__(self):
        matrices = tuple(self.matrices)
        memory = tuple(Fraction(m) for m in self.memory)
        if not matrices:
            raise StructureError("a LAPDA needs at least one STU")
        if len(matrices) != len(memory):
            raise StructureError("one memory fraction per STU is required")
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "memory", memory)

    def __eq__(self, other):
        if not isinstance(other, Lapda):
            return NotImplemented
        return self.matrices == other.matrices and self.memory == other.memory

    def __hash__(self):
        return hash((self.matrices, self.memory))

    @property
    def n_stus(self) -> int:
        return len(self.matrices)

    @property
    def n_users(self) -> int:
        return self.matrices[0].n_users

    @property
    def antenna_budget(self) -> int:
        return self.matrices[0].antenna_budget

    def matrix(self, stu) -> MlpdaMatrix:
        return self.matrices[stu - 1]

    def fraction(self, stu) -> Fraction:
        return self.memory[stu - 1]


def _star_family(Q):
    return {Q.star_set(f) for f in range(1, Q.n_rows + 1)}


def nested(richer: MlpdaMatrix, poorer: MlpdaMatrix) -> bool:
    """Two-way containment of star sets between a richer and a poorer matrix."""
    big = _star_family(richer)
    small = _star_family(poorer)
    return (all(any(b <= B for B in big) for b in small)
            and all(any(b <= B for b in small) for B in big))


def validate_lapda(family: Lapda) -> ValidationReport:
    """Check member matrices, their memory fractions and the cross-matrix
    nesting for every pair with strictly different memory."""
    Ks = {Q.n_users for Q in family.matrices}
    Ls = {Q.antenna_budget for Q in family.matrices}
    if len(Ks) != 1 or len(Ls) != 1:
        raise StructureError(
            f"member matrices disagree on K or L (K in {sorted(Ks)}, L in {sorted(Ls)})")
    failures = []
    for s, (Q, m) in enumerate(zip(family.matrices, family.memory), 1):
        report = validate_mlpda(Q)
        for f in report.failures:
            failures.append(ConditionFailure(f.condition, f"stu {s}: {f.message}", f.row, f.column))
        if report.passed and Q.memory_fraction != m:
            failures.append(ConditionFailure(
                "memory", f"stu {s}: Z/F = {Q.memory_fraction} but m = {m}"))
    for s, (Q, m) in enumerate(zip(family.matrices, family.memory), 1):
        for s2, (Q2, m2) in enumerate(zip(family.matrices, family.memory), 1):
            if m > m2 and not nested(Q, Q2):
                failures.append(ConditionFailure(
                    "nesting", f"star sets of stu {s2} and stu {s} do not nest"))
    return ValidationReport(tuple(failures))


def dof(Q: MlpdaMatrix) -> Fraction:
    """Sum degrees of freedom ``K (F - Z) / N``."""
    if Q.n_slots == 0:
        raise ValueError("all-star matrix has no transmissions")
    return Fraction(Q.n_users * (Q.n_rows - Q.stars_per_column), Q.n_slots)


# --------------------------------------------------------------------------
# construction

def construct_mlpda(K: int, L: int, t: int) -> MlpdaMatrix:
    """Cyclic-window MLPDA with caching gain ``t``.

    Row ``f`` (within each replicated copy of ``K`` rows) is cached by users
    ``f, f+1, ..., f+t-1`` modulo ``K``. Slots are produced by rotating a
    small set of user-group templates around the ring.
    """
    K, L, t = int(K), int(L), int(t)
    if K < 1 or L < 1:
        raise ValueError("K and L must be positive")
    if not 0 <= t <= K:
        raise ValueError(f"caching gain t={t} must lie in [0, K={K}]")
    return _construct(K, L, t)


@lru_cache(maxsize=256)
def _construct(K, L, t):
    if t == K:
        return MlpdaMatrix(np.zeros((1, K), dtype=np.int64), L)
    if t == 0:
        if L >= K:
            return MlpdaMatrix(np.ones((1, K), dtype=np.int64), L)
        grid = np.zeros((L, K), dtype=np.int64)
        for j in range(K):
            for i in range(L):
                grid[i, (j + i) % K] = j + 1
        Q = MlpdaMatrix(grid, L)
    elif K <= t + L:
        grid = np.zeros((K, K), dtype=np.int64)
        for j in range(K - t):
            for k in range(K):
                grid[(k + 1 + j) % K, k] = j + 1
        Q = MlpdaMatrix(grid, L)
    else:
        templates, copies = _design_templates(K, L, t)
        Q = _assemble(K, L, t, templates, copies)
    report = validate_mlpda(Q)
    if not report.passed or Q.memory_fraction != Fraction(t, K):
        raise AssertionError(f"constructor produced an invalid matrix for {(K, L, t)}: {report}")
    return Q


def _assemble(K, L, t, templates, copies):
    grid = np.zeros((copies * K, K), dtype=np.int64)
    next_copy = np.zeros((K, K), dtype=np.int64)
    n = 0
    for members in templates:
        for b in range(K):
            n += 1
            for u, offset in members:
                user = (u + b) % K
                start = (user + offset) % K
                c = next_copy[user, start]
                next_copy[user, start] += 1
                grid[c * K + start, user] = n
    return MlpdaMatrix(grid, L)


def _window(start, t, K):
    return {(start + i) % K for i in range(t)}


def _design_templates(K, L, t):
    """Pick slot templates; each template is a list of (user, offset) pairs
    where ``offset`` is the distance from the user to the window start of the
    row it receives. Every offset in ``1..K-t`` must be used ``copies`` times
    in total across templates."""
    ceiling = min(K, t + L)
    if 2 * t <= K and t <= L:
        found = _paired_blocks(K, L, t)
        if found:
            return found
    elif 2 * t <= K:
        for g in range(ceiling, 2 * L, -1):
            found = _spread_shapes(K, L, t, g)
            if found:
                return found
        found = _paired_picks(K, L, t)
        if found:
            return found
        ceiling = 2 * L
    for g in range(ceiling, 0, -1):
        found = _spread_shapes(K, L, t, g)
        if found:
            return found
    raise AssertionError("group size 1 is always realizable")  # pragma: no cover


def _centres(count, low, high):
    """``count`` integers spread evenly over ``[low, high]``."""
    span = high - low + 1
    return [low + ((2 * i + 1) * span) // (2 * count) for i in range(count)]


def _copy_candidates(D, g, limit=4):
    base = g // math.gcd(g, D)
    return [base * i for i in range(1, limit + 1)]


def _block(d, t):
    return list(range(d - t + 1, d + 1))


def _mirror(d, t, D):
    return list(range(D + 1 - d, D + t - d + 1))


def _paired_blocks(K, L, t):
    """Groups of ``t + L`` users: two facing blocks of ``t`` users that cache
    each other's windows, plus ``L - t`` extra users aimed at one of them."""
    D = K - t
    options = []
    if D % t == 0:
        passes = t // math.gcd(t, L)
        options.append(([d for d in range(t, D + 1, t)] * passes, passes * (t + L) // t))
    for copies in _copy_candidates(D, t + L):
        count = copies * D // (t + L)
        options.append((_centres(count, t, D), copies))
    for ds, copies in options:
        forced = Counter()
        for d in ds:
            forced.update(_block(d, t))
            forced.update(_mirror(d, t, D))
        if any(forced[o] > copies for o in range(1, D + 1)):
            continue
        free = L - t
        offsets = list(range(1, D + 1))
        allowed = np.ones((len(ds), D), dtype=bool)
        for i, d in enumerate(ds):
            for o in _block(d, t):
                allowed[i, o - 1] = False
        try:
            pick = transport([free] * len(ds), [copies - forced[o] for o in offsets],
                             allowed, np.ones_like(allowed, dtype=np.int64))
        except TransportInfeasible:
            continue
        templates = []
        for i, d in enumerate(ds):
            members = [((d - o) % K, o) for o in _block(d, t)]
            members += [((-o) % K, o) for o in _mirror(d, t, D)]
            members += [((d - o) % K, o) for o in offsets if pick[i, o - 1]]
            templates.append(members)
        return templates, copies
    return None


def _paired_picks(K, L, t):
    """Groups of ``2L`` users taken from two facing blocks of ``t``."""
    D = K - t
    options = []
    if D % t == 0:
        passes = t // math.gcd(t, 2 * L)
        options.append(([d for d in range(t, D + 1, t)] * passes, passes * 2 * L // t))
    for copies in _copy_candidates(D, 2 * L):
        options.append((_centres(copies * D // (2 * L), t, D), copies))
    for ds, copies in options:
        n = len(ds)
        allowed = np.zeros((2 * n, D), dtype=bool)
        for i, d in enumerate(ds):
            for o in _block(d, t):
                allowed[2 * i, o - 1] = True
            for o in _mirror(d, t, D):
                allowed[2 * i + 1, o - 1] = True
        try:
            pick = transport([L] * (2 * n), [copies] * D, allowed,
                             np.ones_like(allowed, dtype=np.int64))
        except TransportInfeasible:
            continue
        templates = []
        for i, d in enumerate(ds):
            members = [((d - o) % K, o) for o in range(1, D + 1) if pick[2 * i, o - 1]]
            members += [((-o) % K, o) for o in range(1, D + 1) if pick[2 * i + 1, o - 1]]
            templates.append(members)
        return templates, copies
    return None


_SHAPE_SEARCH_LIMIT = 500


def _spread_shapes(K, L, t, g):
    """Same user shape in every template; offsets assigned by flow."""
    D = K - t
    copies = g // math.gcd(g, D)
    count = copies * D // g
    shapes = [sorted({(i * K) // g for i in range(g)}), list(range(g))]
    if math.comb(K - 1, g - 1) <= _SHAPE_SEARCH_LIMIT:
        shapes += [[0, *rest] for rest in itertools.combinations(range(1, K), g - 1)]
    for shape in shapes:
        members = set(shape)
        allowed = np.zeros((g, D), dtype=bool)
        for i, u in enumerate(shape):
            for o in range(1, D + 1):
                if len(members - _window(u + o, t, K)) <= L:
                    allowed[i, o - 1] = True
        try:
            x = transport([count] * g, [copies] * D, allowed)
        except TransportInfeasible:
            continue
        queues = [[o + 1 for o in range(D) for _ in range(int(x[i, o]))] for i in range(g)]
        templates = [[(u, queues[i][j]) for i, u in enumerate(shape)] for j in range(count)]
        return templates, copies
    return None


def construct_lapda(K: int, L: int, memory) -> Lapda:
    """One cyclic-window MLPDA per STU; every ``K * m(s)`` must be integral."""
    fractions = [Fraction(m) for m in memory]
    matrices = []
    for s, m in enumerate(fractions, 1):
        gain = m * K
        if gain.denominator != 1:
            raise ValueError(
                f"stu {s}: K*m = {gain} is not an integer; split the allocation first")
        matrices.append(construct_mlpda(K, L, int(gain)))
    return Lapda(tuple(matrices), tuple(fractions))


# --------------------------------------------------------------------------
# text format

def emit_mlpda(Q: MlpdaMatrix) -> str:
    return "".join(" ".join(str(c) for c in r) + "\n" for r in Q.to_rows())


def _tokens(line):
    body = line.split("#", 1)[0]
    out = []
    pos = 0
    for tok in body.split():
        pos = body.index(tok, pos)
        out.append((tok, pos + 1))
        pos += len(tok)
    return out


def _grid_row(tokens, width, line_no):
    if width is not None and len(tokens) != width:
        raise ParseError(f"expected {width} cells, found {len(tokens)}", line_no)
    row = []
    for tok, col in tokens:
        if tok == "*":
            row.append(STAR)
        elif tok.isdigit() and int(tok) >= 1:
            row.append(int(tok))
        else:
            raise ParseError(f"bad cell {tok!r}", line_no, col)
    return row


def parse_mlpda(text: str, antenna_budget: int, n_users=None) -> MlpdaMatrix:
    """Parse bare grid rows (``*`` or positive integers)."""
    rows = []
    width = n_users
    for line_no, line in enumerate(text.splitlines(), 1):
        tokens = _tokens(line)
        if not tokens:
            continue
        rows.append(_grid_row(tokens, width, line_no))
        width = len(rows[0])
    if not rows:
        raise ParseError("no grid rows", 1)
    return MlpdaMatrix(np.array(rows, dtype=np.int64), antenna_budget)


def _keyvals(tokens, keys, line_no):
    values = {}
    for tok, col in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, found {tok!r}", line_no, col)
        key, value = tok.split("=", 1)
        if key not in keys:
            raise ParseError(f"unknown key {key!r}", line_no, col)
        try:
            values[key] = Fraction(value) if key == "m" else int(value)
        except (ValueError, ZeroDivisionError):
            raise ParseError(f"bad value for {key}: {value!r}", line_no, col) from None
    missing = [k for k in keys if k not in values]
    if missing:
        raise ParseError(f"missing {', '.join(missing)}", line_no)
    return values


def parse_lapda(text: str) -> Lapda:
    """Parse the ``lapda K= L= S=`` / ``stu s m=p/q F= N=`` block format."""
    lines = [(i, _tokens(raw)) for i, raw in enumerate(text.splitlines(), 1)]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines or lines[0][1][0][0] != "lapda":
        raise ParseError("expected 'lapda K=<int> L=<int> S=<int>' header",
                         lines[0][0] if lines else 1)
    head_line, head = lines[0]
    header = _keyvals(head[1:], ("K", "L", "S"), head_line)
    K, L, S = header["K"], header["L"], header["S"]
    matrices, memory = [], []
    pos = 1
    while pos < len(lines):
        line_no, toks = lines[pos]
        if toks[0][0] != "stu" or len(toks) < 2:
            raise ParseError("expected 'stu <s> m=<p>/<q> F=<int> N=<int>'", line_no)
        expected = len(matrices) + 1
        if toks[1][0] != str(expected):
            raise ParseError(f"expected stu {expected}, found {toks[1][0]!r}", line_no, toks[1][1])
        block = _keyvals(toks[2:], ("m", "F", "N"), line_no)
        F = block["F"]
        rows = []
        for r in range(F):
            pos += 1
            if pos >= len(lines):
                raise ParseError(f"stu {expected}: expected {F} rows, found {r}", line_no)
            row_line, row_toks = lines[pos]
            if row_toks[0][0] == "stu":
                raise ParseError(f"stu {expected}: expected {F} rows, found {r}", row_line)
            rows.append(_grid_row(row_toks, K, row_line))
        Q = MlpdaMatrix(np.array(rows, dtype=np.int64), L)
        if Q.n_slots != block["N"]:
            raise ParseError(f"stu {expected}: header says N={block['N']}, grid has {Q.n_slots}",
                             line_no)
        matrices.append(Q)
        memory.append(block["m"])
        pos += 1
    if len(matrices) != S:
        raise ParseError(f"header says S={S}, found {len(matrices)} blocks", head_line)
    return Lapda(tuple(matrices), tuple(memory))


def emit_lapda(family: Lapda) -> str:
    out = [f"lapda K={family.n_users} L={family.antenna_budget} S={family.n_stus}\n"]
    for s, (Q, m) in enumerate(zip(family.matrices, family.memory), 1):
        out.append(f"stu {s} m={m.numerator}/{m.denominator} F={Q.n_rows} N={Q.n_slots}\n")
        out.append(emit_mlpda(Q))
    return "".join(out)
