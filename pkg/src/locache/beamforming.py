"""Weighted max-min SINR beamforming for one multicast slot, plus delivery-time
bookkeeping.

Each served user ``k`` gets a payload of relative size ``c_k`` and a set of
co-served users that must not overhear its stream (``I_k``). The common
target ``g`` is searched by bisection; for a fixed ``g`` user ``k`` needs
SINR ``g**c_k - 1``, so achieved rates come out proportional to payloads and
everyone in a slot finishes together. The minimum-power beamformers for a
given target come from a dual uplink fixed point.

The batched solver treats many independent slots at once, padded to a common
user count; padded users have zero target and drop out of every sum.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SlotChannel",
    "WmmSolution",
    "BatchSolution",
    "WmmConvergenceError",
    "compute_sinr",
    "solve_wmm",
    "solve_wmm_batch",
    "diagnostics_csv",
    "slot_time",
    "total_time",
    "approx_time",
    "rate_ratio",
]

INNER_TOL = 1e-8
INNER_MAX_ITER = 500
OUTER_MAX_ITER = 100
OUTER_TOL = 1e-6


class WmmConvergenceError(RuntimeError):
    """The dual fixed point did not settle; ``diagnostics`` holds the last iterate."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class SlotChannel:
    """Channels of the users served in one slot, one row per user."""

    channels: np.ndarray
    noise_power: float = 1.0
    tx_power: float = 1.0

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.channels, dtype=complex))
        if h.shape[0] < 1:
            raise ValueError("a slot serves at least one user")
        if not np.isfinite(h).all():
            raise ValueError("channel vectors must be finite")
        if (np.linalg.norm(h, axis=1) == 0).any():
            raise ValueError("channel vectors must be nonzero")
        if self.noise_power <= 0 or self.tx_power <= 0:
            raise ValueError("noise and transmit power must be positive")
        object.__setattr__(self, "channels", h)

    @property
    def n_users(self) -> int:
        return self.channels.shape[0]

    @property
    def antennas(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class WmmSolution:
    beamformers: np.ndarray
    powers: np.ndarray
    sinr: np.ndarray
    dual: np.ndarray
    gamma: float
    weights: np.ndarray
    outer_iterations: int
    inner_iterations: int

    @property
    def rates(self) -> np.ndarray:
        return np.log2(1 + self.sinr)


@dataclass(frozen=True)
class BatchSolution:
    """Per-instance arrays, padded along the user axis."""

    beamformers: np.ndarray
    powers: np.ndarray
    sinr: np.ndarray
    dual: np.ndarray
    gamma: np.ndarray
    converged: np.ndarray
    outer_iterations: int
    inner_iterations: int


def _null_masks(interference, n_users):
    """``mask[k, j]`` is True when stream ``k`` must not reach user ``j``
    (0-based positions within the slot)."""
    mask = np.zeros((n_users, n_users), dtype=bool)
    for k, group in enumerate(interference):
        for j in group:
            if j == k or not 0 <= j < n_users:
                raise ValueError(f"bad interference entry {j} for user position {k}")
            mask[k, j] = True
    return mask


def compute_sinr(beamformers, channels, interference, noise_power=1.0):
    """SINR of every served user.

    ``interference[k]`` lists positions of users that do not cache stream
    ``k``; only those users see stream ``k`` as interference.
    """
    v = np.atleast_2d(np.asarray(beamformers, dtype=complex))
    h = np.atleast_2d(np.asarray(channels, dtype=complex))
    if v.shape != h.shape:
        raise ValueError("one beamformer per served user is required")
    mask = _null_masks(interference, h.shape[0])
    gains = np.abs(h.conj() @ v.T) ** 2          # gains[j, k] = |h_j^H v_k|^2
    leak = (gains * mask.T).sum(axis=1)
    return np.diag(gains) / (leak + noise_power)


def _dual_step(h, nulls, nu, targets, noise):
    """One fixed-point update; returns new dual powers and ``h^H S^-1 h``."""
    L = h.shape[-1]
    outer = h[..., :, None] * h.conj()[..., None, :]                  # (B,U,L,L)
    cov = np.einsum("bkj,bj,bjlm->bklm", nulls, nu, outer)
    cov = cov + noise * np.eye(L)
    x = np.linalg.solve(cov, h[..., None])[..., 0]                    # S_k^-1 h_k
    quad = np.einsum("bkl,bkl->bk", h.conj(), x).real
    return targets / quad, x


def _fixed_point(h, nulls, nu0, targets, noise, power):
    """Run the dual fixed point per instance until it settles or exceeds the
    power budget (iterates from below rise monotonically)."""
    nu = nu0.copy()
    active = np.ones(h.shape[0], dtype=bool)
    settled = np.zeros(h.shape[0], dtype=bool)
    over = np.zeros(h.shape[0], dtype=bool)
    steps = 0
    for _ in range(INNER_MAX_ITER):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        steps += 1
        new, _ = _dual_step(h[idx], nulls[idx], nu[idx], targets[idx], noise)
        scale = np.maximum(np.abs(new).max(axis=1), 1e-300)
        change = np.abs(new - nu[idx]).max(axis=1) / scale
        nu[idx] = new
        done = change < INNER_TOL
        blown = new.sum(axis=1) > power * (1 + 1e-9)
        settled[idx[done & ~blown]] = True
        over[idx[blown]] = True
        active[idx[done | blown]] = False
    return nu, settled, over, steps


def _downlink(h, nulls, nu, targets, noise, power):
    """Normalized beamformers from the dual covariances and the closed-form
    downlink powers."""
    B, U, L = h.shape
    _, x = _dual_step(h, nulls, nu, targets, noise)
    norms = np.linalg.norm(x, axis=-1, keepdims=True)
    vbar = x / np.where(norms > 0, norms, 1)
    gains = np.abs(np.einsum("bil,bjl->bij", h.conj(), vbar)) ** 2     # |h_i^H v_j|^2
    couple = gains * np.swapaxes(nulls, 1, 2)                           # i in I_j
    own = np.einsum("bii->bi", gains)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(targets > 0, targets / ((1 + targets) * own), 0.0)
    system = np.eye(U) - a[..., None] * (couple + np.eye(U) * own[..., None])
    ok = np.ones(B, dtype=bool)
    p = np.zeros((B, U))
    try:
        p = noise * np.linalg.solve(system, a[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for b in range(B):
            try:
                p[b] = noise * np.linalg.solve(system[b], a[b])
            except np.linalg.LinAlgError:
                ok[b] = False
    ok &= (p >= -1e-12 * power).all(axis=1) & np.isfinite(p).all(axis=1)
    p = np.clip(p, 0, None)
    total = p.sum(axis=1)
    shrink = np.where(total > power, power / np.where(total > 0, total, 1), 1.0)
    p = p * shrink[:, None]
    return vbar * np.sqrt(p)[..., None], p, ok


def _batch_sinr(h, nulls, v, noise):
    gains = np.abs(np.einsum("bjl,bkl->bjk", h.conj(), v)) ** 2       # [j, k] = |h_j^H v_k|^2
    leak = (gains * np.swapaxes(nulls, 1, 2)).sum(axis=2)
    return np.einsum("bkk->bk", gains) / (leak + noise)


def solve_wmm_batch(channels, nulls, weights, noise_power=1.0, tx_power=1.0, mask=None):
    """Solve many independent slots at once.

    Parameters
    ----------
    channels : complex array (B, U, L)
    nulls : bool array (B, U, U)
        ``nulls[b, k, j]`` when stream ``k`` must be kept away from user ``j``.
    weights : array (B, U)
        Positive payload sizes; padded entries may be anything when ``mask``
        marks them False.
    mask : bool array (B, U), optional
        Which entries are real users.

    Returns
    -------
    BatchSolution
    """
    h = np.asarray(channels, dtype=complex)
    B, U, L = h.shape
    nulls = np.asarray(nulls, dtype=bool)
    mask = np.ones((B, U), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    nulls = nulls & mask[:, :, None] & mask[:, None, :]
    c = np.where(mask, np.asarray(weights, dtype=float), np.inf)
    if (c <= 0).any():
        raise ValueError("payload weights must be positive")
    c = np.where(mask, c / c.min(axis=1, keepdims=True), 0.0)
    h = np.where(mask[..., None], h, 0)
    # padded users: unit channel, zero target, nobody nulls toward them
    h[~mask, 0] = 1.0
    noise, power = float(noise_power), float(tx_power)

    snr = power * np.linalg.norm(h, axis=-1) ** 2 / noise
    with np.errstate(divide="ignore"):
        bound = np.where(mask, np.log(1 + snr) / np.where(mask, c, 1), np.inf)
    lo = np.zeros(B)                       # log of the common target
    hi = bound.min(axis=1)
    nu_lo = np.zeros((B, U))
    outer = inner = 0
    open_ = np.ones(B, dtype=bool)
    for _ in range(OUTER_MAX_ITER):
        idx = np.flatnonzero(open_)
        if idx.size == 0:
            break
        outer += 1
        mid = 0.5 * (lo[idx] + hi[idx])
        targets = np.expm1(c[idx] * mid[:, None])
        nu, settled, over, steps = _fixed_point(h[idx], nulls[idx], nu_lo[idx], targets,
                                                noise, power)
        inner += steps
        good = settled & ~over
        lo[idx[good]] = mid[good]
        nu_lo[idx[good]] = nu[good]
        hi[idx[~good]] = mid[~good]
        tight = nu_lo[idx].sum(axis=1) >= power * (1 - OUTER_TOL)
        narrow = hi[idx] - lo[idx] <= 1e-13 * np.maximum(1.0, hi[idx])
        open_[idx[tight | narrow]] = False

    targets = np.expm1(c * lo[:, None])
    v, p, ok = _downlink(h, nulls, nu_lo, targets, noise, power)
    sinr = np.where(mask, _batch_sinr(h, nulls, v, noise), 0.0)
    gap = np.abs(nu_lo.sum(axis=1) - p.sum(axis=1)) / np.maximum(nu_lo.sum(axis=1), 1e-300)
    ok &= (gap < 1e-6) | (nu_lo.sum(axis=1) == 0)
    v = np.where(mask[..., None], v, 0)
    p = np.where(mask, p, 0.0)
    return BatchSolution(v, p, sinr, np.where(mask, nu_lo, 0.0), np.exp(lo), ok, outer, inner)


def solve_wmm(channel: SlotChannel, interference, weights) -> WmmSolution:
    """Weighted max-min beamformers for one slot.

    Parameters
    ----------
    channel : SlotChannel
    interference : sequence of sets
        ``interference[k]`` holds positions of users that must not overhear
        stream ``k``.
    weights : sequence of float
        Raw payload sizes ``c_k``.
    """
    U = channel.n_users
    c = np.asarray(weights, dtype=float)
    if c.shape != (U,) or (c <= 0).any():
        raise ValueError("need one positive weight per served user")
    nulls = _null_masks(interference, U)
    sol = solve_wmm_batch(channel.channels[None], nulls[None], c[None],
                          channel.noise_power, channel.tx_power)
    out = WmmSolution(sol.beamformers[0], sol.powers[0], sol.sinr[0], sol.dual[0],
                      float(sol.gamma[0]), c / c.min(), sol.outer_iterations,
                      sol.inner_iterations)
    if not sol.converged[0]:
        raise WmmConvergenceError("dual fixed point did not converge", diagnostics_csv(out))
    return out


def diagnostics_csv(sol: WmmSolution) -> str:
    """Per-user dual power, downlink power and SINR, with a summary comment."""
    buf = io.StringIO()
    buf.write(f"# gamma={sol.gamma!r} outer={sol.outer_iterations} inner={sol.inner_iterations}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["user", "weight", "dual_power", "power", "sinr"])
    for k in range(len(sol.sinr)):
        writer.writerow([k + 1, repr(float(sol.weights[k])), repr(float(sol.dual[k])),
                         repr(float(sol.powers[k])), repr(float(sol.sinr[k]))])
    return buf.getvalue()


def slot_time(sinr, sizes) -> float:
    """Time for the slowest user of the slot to receive its payload."""
    sinr = np.asarray(getattr(sinr, "sinr", sinr), dtype=float)
    sizes = np.asarray([float(s) for s in sizes])
    rates = np.log2(1 + sinr)
    if (rates <= 0).any():
        return math.inf
    return float((sizes / rates).max())


def total_time(plan, solutions) -> float:
    """Sum of slot times over every slot of a plan.

    ``solutions`` maps ``(phase, slot)`` to the per-user SINR, ordered as the
    slot's payloads.
    """
    total = 0.0
    for ph in plan.phases:
        for slot in ph.slots:
            if not slot.payloads:
                continue
            key = (ph.context.phase, slot.index)
            if key not in solutions:
                raise KeyError(f"no beamformer solution for phase {key[0]} slot {key[1]}")
            total += slot_time(solutions[key], [p.size for p in slot.payloads])
    return total


def approx_time(memory, rates, K, L):
    """Closed-form estimate of the total delivery time from the worst STU and
    the coded-caching DoF of the least-cached STU."""
    memory = list(memory)
    worst = max((1 - m) / r for m, r in zip(memory, rates))
    return K / (K * min(memory) + L) * worst


def rate_ratio(ref_memory, M, S, K, L, rate_weighted, rate_uniform):
    """Rate gain needed for non-uniform placement to offset its DoF loss."""
    return (K * ref_memory + L) * rate_weighted / ((K * M / S + L) * rate_uniform)
