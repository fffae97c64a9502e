"""Delivery planning on top of a location-aware cache layout.

The user with the least cached memory fixes a reference matrix. Its slot
schedule is reused for everybody, and each user's real missing subfiles
are cut into fragments and mapped onto the reference rows through a
per-user file-mapping (FM) matrix. When a gain ``K m`` is fractional the
file is time-shared between two matrices and delivery runs in two phases.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from .flows import TransportInfeasible, transport
from .pda import Lapda, MlpdaMatrix
from .placement import CacheManifest, GainSplit, Placement, arrange_cache

__all__ = [
    "RequestVector",
    "Segment",
    "DeliveryContext",
    "FmMatrix",
    "IndexMatrix",
    "FragmentId",
    "UserPayload",
    "Slot",
    "PhasePlan",
    "TransmissionPlan",
    "Violation",
    "VerificationReport",
    "FmInfeasible",
    "select_reference",
    "compute_context",
    "build_fm_matrix",
    "validate_fm_matrix",
    "generate_index_matrix",
    "build_plan",
    "phase_shares",
    "split_plan_noninteger",
    "schedule",
    "verify_decodability",
    "delivered_sizes",
    "fragment_counts",
    "plan_dof",
    "emit_plan",
    "parse_plan",
    "parse_requests",
]


class FmInfeasible(RuntimeError):
    """No FM matrix meets the row/column sums on the allowed support."""


@dataclass(frozen=True)
class RequestVector:
    """STU of every user, 1-based on both sides."""

    stus: tuple[int, ...]

    def __post_init__(self):
        stus = tuple(int(s) for s in self.stus)
        if not stus:
            raise ValueError("empty request vector")
        if min(stus) < 1:
            raise ValueError("STU indices start at 1")
        object.__setattr__(self, "stus", stus)

    @property
    def n_users(self) -> int:
        return len(self.stus)

    def stu(self, user) -> int:
        return self.stus[user - 1]


def _layout(layout) -> Placement:
    if isinstance(layout, Lapda):
        return Placement.from_lapda(layout)
    return layout


def _check_requests(requests, layout):
    if not isinstance(requests, RequestVector):
        requests = RequestVector(tuple(requests))
    if requests.n_users != layout.n_users:
        raise ValueError(f"{requests.n_users} requests for {layout.n_users} users")
    if max(requests.stus) > layout.n_stus:
        raise ValueError(f"request for STU {max(requests.stus)} beyond S={layout.n_stus}")
    return requests


def select_reference(requests, layout):
    """Reference user (least cached fraction, lowest index on ties) and the
    matrix that drives the first delivery phase."""
    layout = _layout(layout)
    requests = _check_requests(requests, layout)
    memory = [layout.fraction(s) for s in requests.stus]
    best = min(range(len(memory)), key=lambda k: (memory[k], k))
    parts = layout.stu_parts(requests.stus[best])
    return best + 1, parts[0].matrix


@dataclass(frozen=True, eq=False)
class Segment:
    """One part of one user's file delivered in a phase, scaled by ``share``."""

    user: int
    stu: int
    part: int
    weight: Fraction
    share: Fraction
    matrix: MlpdaMatrix

    @cached_property
    def missing(self) -> tuple[int, ...]:
        return tuple(self.matrix.missing_rows(self.user))

    @property
    def gain(self) -> int:
        Q = self.matrix
        return Q.stars_per_column * Q.n_users // Q.n_rows


@dataclass(frozen=True, eq=False)
class DeliveryContext:
    """Everything one delivery phase needs before FM matrices are solved."""

    reference_user: int
    reference: MlpdaMatrix
    stretch: int
    temporary: dict
    segments: tuple[Segment, ...]
    fragments: dict
    excluded: tuple[int, ...] = ()
    phase: int = 0
    weight: Fraction = Fraction(1)

    @property
    def ref_rows(self) -> int:
        return self.reference.n_rows

    @property
    def ref_stars(self) -> int:
        return self.reference.stars_per_column

    @property
    def ref_slots(self) -> int:
        return self.reference.n_slots

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(sorted(self.temporary))

    def user_segments(self, user) -> tuple[Segment, ...]:
        return tuple(s for s in self.segments if s.user == user)

    def segment(self, user, part=0) -> Segment:
        for s in self.segments:
            if s.user == user and s.part == part:
                return s
        raise KeyError((user, part))

    def tis(self, user) -> tuple[int, ...]:
        return self.temporary[user]

    def ris(self, user, part=0) -> tuple[int, ...]:
        return self.segment(user, part).missing

    def fragment_count(self, user, part=0) -> int:
        return self.fragments[(user, part)]


def compute_context(requests, layout, reference_user=None, reference=None,
                    shares=None, phase=0, weight=Fraction(1)) -> DeliveryContext:
    """TIS/RIS sets, stretch factor and fragment counts for one phase.

    ``shares`` maps ``(user, part)`` to the fraction of that part delivered
    in this phase; by default every part is delivered in full. Users whose
    requested file is fully cached (or who have nothing due in this phase)
    are left out.
    """
    layout = _layout(layout)
    requests = _check_requests(requests, layout)
    if reference_user is None or reference is None:
        ref_user, ref = select_reference(requests, layout)
        reference_user = reference_user or ref_user
        reference = reference if reference is not None else ref
    Q = reference
    segments = []
    for k in range(1, requests.n_users + 1):
        s = requests.stu(k)
        for p in layout.stu_parts(s):
            share = Fraction(1) if shares is None else Fraction(shares.get((k, p.index), 0))
            if share == 0:
                continue
            seg = Segment(k, s, p.index, p.weight, share, p.matrix)
            if seg.missing:
                segments.append(seg)
    active = sorted({seg.user for seg in segments})
    excluded = tuple(k for k in range(1, requests.n_users + 1) if k not in active)
    span = Q.n_rows - Q.stars_per_column
    if active and span == 0:
        raise ValueError("reference matrix caches everything but some users still miss data")
    stretch = 1
    for seg in segments:
        stretch = math.lcm(stretch, Fraction(span, len(seg.missing)).denominator)
    fragments = {(seg.user, seg.part): stretch * span // len(seg.missing) for seg in segments}
    temporary = {k: tuple(Q.missing_rows(k)) for k in active}
    return DeliveryContext(reference_user, Q, stretch, temporary, tuple(segments),
                           fragments, excluded, phase, Fraction(weight))


@dataclass(frozen=True, eq=False)
class FmMatrix:
    user: int
    part: int
    grid: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.int64, copy=True)
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)


def _cachers_of(Q: MlpdaMatrix, row, user):
    """Users served with ``user`` in the slot carrying reference row ``row``
    that already hold that row."""
    n = Q.cell(row, user)
    return frozenset(j for j in Q.served_users(n) if Q.is_star(row, j))


def _support(ctx: DeliveryContext, seg: Segment):
    Q = ctx.reference
    tis = ctx.tis(seg.user)
    allowed = np.zeros((len(tis), len(seg.missing)), dtype=bool)
    for a, i in enumerate(tis):
        holders = _cachers_of(Q, i, seg.user)
        for b, j in enumerate(seg.missing):
            allowed[a, b] = holders <= seg.matrix.star_set(j)
    return allowed


def build_fm_matrix(ctx: DeliveryContext, user, part=0) -> FmMatrix:
    """Integer transportation: every TIS row takes ``stretch`` fragments,
    every missing subfile gives ``D`` fragments, and fragments may only
    land on rows whose co-served cachers also cache that subfile."""
    seg = ctx.segment(user, part)
    tis = ctx.tis(user)
    allowed = _support(ctx, seg)
    for a, i in enumerate(tis):
        if not allowed[a].any():
            raise FmInfeasible(
                f"user {user} part {part}: reference row {i} has no compatible subfile")
    D = ctx.fragment_count(user, part)
    try:
        flow = transport([ctx.stretch] * len(tis), [D] * len(seg.missing), allowed)
    except TransportInfeasible as exc:
        raise FmInfeasible(f"user {user} part {part}: {exc}") from None
    grid = np.zeros((ctx.ref_rows, seg.matrix.n_rows), dtype=np.int64)
    rows = np.array(tis) - 1
    cols = np.array(seg.missing) - 1
    grid[np.ix_(rows, cols)] = flow
    return FmMatrix(user, part, grid)


def validate_fm_matrix(G: FmMatrix, ctx: DeliveryContext) -> list[str]:
    """Problems with ``G`` (empty when it satisfies all four FM conditions
    and the cacher-support restriction)."""
    seg = ctx.segment(G.user, G.part)
    grid = np.asarray(G.grid)
    problems = []
    if grid.shape != (ctx.ref_rows, seg.matrix.n_rows):
        return [f"shape {grid.shape} != {(ctx.ref_rows, seg.matrix.n_rows)}"]
    if (grid < 0).any():
        problems.append("negative entry")
    tis = set(ctx.tis(G.user))
    ris = set(seg.missing)
    for i in range(1, ctx.ref_rows + 1):
        if i not in tis and grid[i - 1].any():
            problems.append(f"C1: row {i} outside the TIS is nonzero")
    for j in range(1, seg.matrix.n_rows + 1):
        if j not in ris and grid[:, j - 1].any():
            problems.append(f"C2: column {j} outside the RIS is nonzero")
    for i in sorted(tis):
        total = int(grid[i - 1, sorted(c - 1 for c in ris)].sum())
        if total != ctx.stretch:
            problems.append(f"C3: row {i} sums to {total}, expected {ctx.stretch}")
    D = ctx.fragment_count(G.user, G.part)
    for j in sorted(ris):
        total = int(grid[sorted(r - 1 for r in tis), j - 1].sum())
        if total != D:
            problems.append(f"C4: column {j} sums to {total}, expected {D}")
    Q = ctx.reference
    for i in sorted(tis):
        holders = _cachers_of(Q, i, G.user)
        for j in sorted(ris):
            if grid[i - 1, j - 1] > 0 and not holders <= seg.matrix.star_set(j):
                problems.append(
                    f"support: row {i} -> subfile {j} but users "
                    f"{sorted(holders - seg.matrix.star_set(j))} lack subfile {j}")
    return problems


@dataclass(frozen=True, eq=False)
class IndexMatrix:
    user: int
    part: int
    grid: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=np.int64, copy=True)
        grid.flags.writeable = False
        object.__setattr__(self, "grid", grid)


def generate_index_matrix(G: FmMatrix, ctx: DeliveryContext) -> IndexMatrix:
    """Greedy scan: slot by slot, each of the ``stretch`` positions takes the
    smallest subfile index with fragments still owed on that row."""
    Q = ctx.reference
    remaining = np.array(G.grid, dtype=np.int64)
    out = np.zeros((Q.n_slots, ctx.stretch), dtype=np.int64)
    for n in range(1, Q.n_slots + 1):
        row = Q.row_for(G.user, n)
        if row is None:
            continue
        for m in range(ctx.stretch):
            hits = np.flatnonzero(remaining[row - 1] > 0)
            if hits.size == 0:
                raise RuntimeError(f"user {G.user}: row {row} of the FM matrix ran dry")
            omega = int(hits[0])
            out[n - 1, m] = omega + 1
            remaining[row - 1, omega] -= 1
    return IndexMatrix(G.user, G.part, out)


@dataclass(frozen=True, order=True)
class FragmentId:
    stu: int
    part: int
    subfile: int
    phase: int
    counter: int

    def text(self, with_part=False, with_phase=False) -> str:
        keys = [f"s={self.stu}"]
        if with_part:
            keys.append(f"p={self.part}")
        keys.append(f"j={self.subfile}")
        if with_phase:
            keys.append(f"phase={self.phase}")
        keys.append(f"q={self.counter}")
        return "(" + ",".join(keys) + ")"


@dataclass(frozen=True)
class UserPayload:
    user: int
    interference: frozenset
    fragments: tuple[FragmentId, ...]
    size: Fraction


@dataclass(frozen=True)
class Slot:
    index: int
    payloads: tuple[UserPayload, ...]

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(p.user for p in self.payloads)

    def payload(self, user) -> UserPayload:
        for p in self.payloads:
            if p.user == user:
                return p
        raise KeyError(user)

    def sizes(self) -> dict:
        return {p.user: p.size for p in self.payloads}

    def interference_sets(self) -> dict:
        return {p.user: p.interference for p in self.payloads}


@dataclass(frozen=True, eq=False)
class PhasePlan:
    context: DeliveryContext
    slots: tuple[Slot, ...]
    fm: tuple[FmMatrix, ...] = ()
    index: tuple[IndexMatrix, ...] = ()

    @property
    def weight(self) -> Fraction:
        return self.context.weight


@dataclass(frozen=True, eq=False)
class TransmissionPlan:
    n_users: int
    antennas: int
    phases: tuple[PhasePlan, ...]
    reference_user: int
    excluded: tuple[int, ...] = ()

    @property
    def slots(self) -> tuple[Slot, ...]:
        return tuple(s for ph in self.phases for s in ph.slots)

    @property
    def split(self) -> bool:
        return len(self.phases) > 1


def build_plan(ctx: DeliveryContext, fm=None, index=None) -> PhasePlan:
    """Assemble one phase: served sets and interference sets from the
    reference matrix, payloads from the index matrices with fresh counters."""
    Q = ctx.reference
    if fm is None:
        fm = [build_fm_matrix(ctx, s.user, s.part) for s in ctx.segments]
    fm = list(fm)
    if index is None:
        index = [generate_index_matrix(G, ctx) for G in fm]
    index = {(P.user, P.part): P for P in index}
    span = ctx.ref_rows - ctx.ref_stars
    counters = {}
    slots = []
    for n in range(1, Q.n_slots + 1):
        payloads = []
        for k in Q.served_users(n):
            if k not in ctx.temporary:
                continue
            row = Q.row_for(k, n)
            # users with nothing to receive need no protection
            interference = frozenset(j for j in Q.served_users(n)
                                     if j != k and j in ctx.temporary
                                     and not Q.is_star(row, j))
            frags = []
            size = Fraction(0)
            for seg in ctx.user_segments(k):
                P = index[(k, seg.part)]
                for m in range(ctx.stretch):
                    j = int(P.grid[n - 1, m])
                    key = (k, seg.part, j)
                    counters[key] = counters.get(key, 0) + 1
                    frags.append(FragmentId(seg.stu, seg.part, j, ctx.phase, counters[key]))
                size += (seg.share * seg.weight * len(seg.missing)
                         / (seg.matrix.n_rows * span))
            payloads.append(UserPayload(k, interference, tuple(frags), size))
        slots.append(Slot(n, tuple(payloads)))
    return PhasePlan(ctx, tuple(slots), tuple(fm), tuple(index.values()))


def phase_shares(requests, layout):
    """Per-phase ``(reference matrix, phase weight, {(user, part): share})``.

    With an integer reference gain there is a single phase. Otherwise the
    lower-gain reference part drives phase 1 and the upper-gain part
    phase 2, each user's parts being shared out between them.
    """
    layout = _layout(layout)
    requests = _check_requests(requests, layout)
    ref_user, _ = select_reference(requests, layout)
    ref_stu = requests.stu(ref_user)
    ref_split = layout.split(ref_stu)
    ref_parts = layout.stu_parts(ref_stu)
    users = range(1, requests.n_users + 1)
    if ref_split is None:
        shares = {(k, p.index): Fraction(1) for k in users
                  for p in layout.stu_parts(requests.stu(k))}
        return ref_user, [(ref_parts[0].matrix, Fraction(1), shares)]
    b1, b2 = ref_split.low_weight, ref_split.high_weight
    first, second = {}, {}
    for k in users:
        s = requests.stu(k)
        own = layout.split(s)
        parts = layout.stu_parts(s)
        if own is None:
            if parts[0].gain <= ref_split.lower:
                raise ValueError(f"user {k} holds less than the reference user")
            first[(k, 0)], second[(k, 0)] = b1, b2
        elif own.lower > ref_split.lower:
            for p in parts:
                first[(k, p.index)], second[(k, p.index)] = b1, b2
        elif own.lower == ref_split.lower:
            if own.low_weight > b1:
                raise ValueError(f"user {k} holds less than the reference user")
            first[(k, 1)], second[(k, 1)] = Fraction(1), Fraction(0)
            first[(k, 2)] = (b1 - own.low_weight) / own.high_weight
            second[(k, 2)] = b2 / own.high_weight
        else:
            raise ValueError(f"user {k} holds less than the reference user")
    return ref_user, [(ref_parts[0].matrix, b1, first), (ref_parts[1].matrix, b2, second)]


def split_plan_noninteger(requests, layout) -> list[PhasePlan]:
    """Both delivery phases as separate plans (a single one when every
    relevant gain is an integer)."""
    layout = _layout(layout)
    requests = _check_requests(requests, layout)
    ref_user, phases = phase_shares(requests, layout)
    out = []
    for p, (Q, weight, shares) in enumerate(phases, 1 if len(phases) > 1 else 0):
        ctx = compute_context(requests, layout, ref_user, Q, shares, p, weight)
        out.append(build_plan(ctx))
    return out


def schedule(requests, layout) -> TransmissionPlan:
    """Full delivery plan for a request vector."""
    layout = _layout(layout)
    requests = _check_requests(requests, layout)
    phases = split_plan_noninteger(requests, layout)
    ref_user, _ = select_reference(requests, layout)
    active = set()
    for ph in phases:
        active.update(ph.context.temporary)
    excluded = tuple(k for k in range(1, requests.n_users + 1) if k not in active)
    return TransmissionPlan(requests.n_users, layout.antenna_budget, tuple(phases),
                            ref_user, excluded)


# --------------------------------------------------------------------------
# checks

@dataclass(frozen=True)
class Violation:
    phase: int
    slot: int
    user: int
    other: int | None
    message: str


@dataclass(frozen=True)
class VerificationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.passed

    def __str__(self):
        if self.passed:
            return "decodable: 0 violations"
        lines = [f"{len(self.violations)} violation(s)"]
        lines += [f"phase {v.phase} slot {v.slot} user {v.user}: {v.message}"
                  for v in self.violations]
        return "\n".join(lines)


def verify_decodability(plan: TransmissionPlan, manifest: CacheManifest) -> VerificationReport:
    """Every co-served user that is not nulled must already cache every
    fragment it overhears, and no beam may need more than ``L - 1`` nulls."""
    L = plan.antennas
    out = []
    for ph in plan.phases:
        for slot in ph.slots:
            served = set(slot.users)
            for pay in slot.payloads:
                if not pay.interference <= served - {pay.user}:
                    out.append(Violation(ph.context.phase, slot.index, pay.user, None,
                                         "null set names users outside the slot"))
                if len(pay.interference) + 1 > L:
                    out.append(Violation(ph.context.phase, slot.index, pay.user, None,
                                         f"needs {len(pay.interference)} nulls with L={L}"))
                for other in sorted(served - {pay.user} - pay.interference):
                    for frag in pay.fragments:
                        if not manifest.has(other, frag.stu, frag.part, frag.subfile):
                            out.append(Violation(
                                ph.context.phase, slot.index, pay.user, other,
                                f"user {other} is not nulled but lacks "
                                f"stu {frag.stu} part {frag.part} subfile {frag.subfile}"))
                            break
    return VerificationReport(tuple(out))


def delivered_sizes(plan: TransmissionPlan) -> dict:
    """Total data (exact) sent to each user across all phases."""
    totals = {k: Fraction(0) for k in range(1, plan.n_users + 1)}
    for slot in plan.slots:
        for pay in slot.payloads:
            totals[pay.user] += pay.size
    return totals


def fragment_counts(plan: TransmissionPlan) -> dict:
    """``(user, stu, part, subfile, phase) -> sorted counters`` sent."""
    seen = {}
    for slot in plan.slots:
        for pay in slot.payloads:
            for f in pay.fragments:
                seen.setdefault((pay.user, f.stu, f.part, f.subfile, f.phase), []).append(f.counter)
    return {k: sorted(v) for k, v in seen.items()}


def plan_dof(plan: TransmissionPlan) -> Fraction:
    """Effective sum-DoF of the time-shared reference schedule."""
    load = Fraction(0)
    delivered = Fraction(0)
    for ph in plan.phases:
        ctx = ph.context
        if ctx.ref_slots == 0:
            continue
        load += ph.weight * Fraction(ctx.ref_slots, ctx.ref_rows)
        delivered += ph.weight * Fraction(ctx.ref_rows - ctx.ref_stars, ctx.ref_rows)
    if load == 0:
        raise ValueError("plan has no transmissions")
    return plan.n_users * delivered / load


# --------------------------------------------------------------------------
# text formats

def emit_plan(plan: TransmissionPlan) -> str:
    split = plan.split
    lines = [f"plan K={plan.n_users} L={plan.antennas} ref={plan.reference_user} "
             f"phases={len(plan.phases)}"]
    if plan.excluded:
        lines.append("excluded " + ",".join(str(k) for k in plan.excluded))
    for ph in plan.phases:
        ctx = ph.context
        w = ph.weight
        lines.append(f"phase {ctx.phase} weight={w.numerator}/{w.denominator} "
                     f"alpha={ctx.stretch} slots={len(ph.slots)}")
        for slot in ph.slots:
            for pay in slot.payloads:
                frags = "".join(f.text(with_part=split or f.part != 0, with_phase=split)
                                for f in pay.fragments)
                nulls = ",".join(str(j) for j in sorted(pay.interference))
                lines.append(f"slot {slot.index}: user {pay.user} frags {frags} "
                             f"size {pay.size.numerator}/{pay.size.denominator} null {{{nulls}}}")
    return "\n".join(lines) + "\n"


_FRAG = re.compile(r"\(([^()]*)\)")
_SLOT = re.compile(r"^slot (\d+): user (\d+) frags ((?:\([^()]*\))*) size (\d+)/(\d+) null \{([\d,]*)\}$")


def parse_plan(text: str) -> TransmissionPlan:
    """Read a plan back; contexts carry only the header data."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or not lines[0].startswith("plan "):
        raise ValueError("line 1: expected 'plan K=.. L=.. ref=.. phases=..'")
    head = dict(tok.split("=", 1) for tok in lines[0].split()[1:])
    K, L, ref = int(head["K"]), int(head["L"]), int(head["ref"])
    excluded = ()
    phases = []
    current = None
    rows = {}

    def close():
        if current is not None:
            ph_index, weight, alpha, n_slots = current
            slots = tuple(Slot(n, tuple(rows.get(n, ()))) for n in range(1, n_slots + 1))
            ctx = DeliveryContext(ref, MlpdaMatrix(np.zeros((1, K), dtype=np.int64), L),
                                  alpha, {}, (), {}, (), ph_index, weight)
            phases.append(PhasePlan(ctx, slots))

    for line_no, line in enumerate(lines[1:], 2):
        if line.startswith("excluded "):
            excluded = tuple(int(v) for v in line.split()[1].split(","))
        elif line.startswith("phase "):
            close()
            parts = line.split()
            kv = dict(tok.split("=", 1) for tok in parts[2:])
            current = (int(parts[1]), Fraction(kv["weight"]), int(kv["alpha"]), int(kv["slots"]))
            rows = {}
        else:
            m = _SLOT.match(line)
            if not m or current is None:
                raise ValueError(f"line {line_no}: cannot parse {line!r}")
            n, k = int(m.group(1)), int(m.group(2))
            frags = []
            for body in _FRAG.findall(m.group(3)):
                kv = dict(tok.split("=", 1) for tok in body.split(","))
                frags.append(FragmentId(int(kv["s"]), int(kv.get("p", 0)), int(kv["j"]),
                                        int(kv.get("phase", current[0])), int(kv["q"])))
            nulls = frozenset(int(v) for v in m.group(6).split(",") if v)
            size = Fraction(int(m.group(4)), int(m.group(5)))
            rows.setdefault(n, []).append(UserPayload(k, nulls, tuple(frags), size))
    close()
    return TransmissionPlan(K, L, tuple(phases), ref, excluded)


def parse_requests(text: str) -> RequestVector:
    """CSV with header ``user,stu``; users must be 1..K."""
    rows = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows or [c.strip() for c in rows[0].split(",")] != ["user", "stu"]:
        raise ValueError("line 1: expected header 'user,stu'")
    found = {}
    for line_no, row in enumerate(rows[1:], 2):
        cells = [c.strip() for c in row.split(",")]
        if len(cells) != 2:
            raise ValueError(f"line {line_no}: expected two columns")
        try:
            user, stu = int(cells[0]), int(cells[1])
        except ValueError:
            raise ValueError(f"line {line_no}: non-integer cell") from None
        if user in found:
            raise ValueError(f"line {line_no}: user {user} listed twice")
        found[user] = stu
    if sorted(found) != list(range(1, len(found) + 1)):
        raise ValueError("users must be numbered 1..K without gaps")
    return RequestVector(tuple(found[k] for k in range(1, len(found) + 1)))
