"""Room geometry, path loss and Rayleigh channel sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Environment",
    "shadowing_map",
    "ChannelParams",
    "path_loss_db",
    "sample_channel",
    "sample_channels",
    "calibrate_power",
]


@dataclass(frozen=True)
class Environment:
    """Rectangular room split into square STU cells, transmitter on the ceiling.

    STUs are numbered from 1, row by row along the x axis.
    """

    width: float = 30.0
    depth: float = 30.0
    cell: float = 1.0
    tx_height: float = 5.0
    tx_x: float | None = None
    tx_y: float | None = None

    def __post_init__(self):
        if self.width <= 0 or self.depth <= 0 or self.cell <= 0:
            raise ValueError("room and cell sizes must be positive")
        for side in (self.width, self.depth):
            ratio = side / self.cell
            if abs(ratio - round(ratio)) > 1e-9:
                raise ValueError("room sides must be whole multiples of the cell size")
        x, y = self.transmitter[:2]
        if not (0 <= x <= self.width and 0 <= y <= self.depth):
            raise ValueError("transmitter must sit above the room footprint")

    @property
    def columns(self) -> int:
        return int(round(self.width / self.cell))

    @property
    def rows(self) -> int:
        return int(round(self.depth / self.cell))

    @property
    def n_stus(self) -> int:
        return self.columns * self.rows

    @property
    def transmitter(self) -> tuple[float, float, float]:
        x = self.width / 2 if self.tx_x is None else self.tx_x
        y = self.depth / 2 if self.tx_y is None else self.tx_y
        return (x, y, self.tx_height)

    def stu_origin(self, stu) -> tuple[float, float]:
        if not 1 <= stu <= self.n_stus:
            raise ValueError(f"stu {stu} outside 1..{self.n_stus}")
        r, c = divmod(stu - 1, self.columns)
        return (c * self.cell, r * self.cell)

    def stu_center(self, stu) -> tuple[float, float]:
        x, y = self.stu_origin(stu)
        return (x + self.cell / 2, y + self.cell / 2)

    def distance(self, x, y):
        tx, ty, th = self.transmitter
        return np.sqrt((np.asarray(x) - tx) ** 2 + (np.asarray(y) - ty) ** 2 + th ** 2)

    @property
    def edge_distance(self) -> float:
        """Transmitter to the farthest floor corner."""
        corners = [(0, 0), (self.width, 0), (0, self.depth), (self.width, self.depth)]
        return max(float(self.distance(x, y)) for x, y in corners)


@dataclass(frozen=True)
class ChannelParams:
    frequency_ghz: float = 3.5
    pathloss_exponent: float = 3.0
    shadowing_db: float = 7.0
    noise_power: float = 1.0
    prelog: float = 1.0
    bandwidth_per_file: float = 1.0
    edge_snr_db: float = 5.0
    tx_power: float | None = None

    def __post_init__(self):
        if self.pathloss_exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.shadowing_db < 0:
            raise ValueError("shadowing deviation must be non-negative")
        if self.noise_power <= 0 or self.frequency_ghz <= 0:
            raise ValueError("noise power and frequency must be positive")


def path_loss_db(distance, params: ChannelParams, shadowing=0.0):
    return (32.4 + 20 * math.log10(params.frequency_ghz)
            + 10 * params.pathloss_exponent * np.log10(distance) + shadowing)


def calibrate_power(env: Environment, params: ChannelParams, edge_snr_db=None) -> float:
    """Transmit power giving the target SNR at the farthest corner, no shadowing."""
    snr = params.edge_snr_db if edge_snr_db is None else edge_snr_db
    loss = float(path_loss_db(env.edge_distance, params))
    return params.noise_power * 10 ** ((snr + loss) / 10)


def sample_channels(distances, params: ChannelParams, antennas, rng, shadowing=True):
    """One Rayleigh channel per distance, shape ``(n, antennas)``.

    ``shadowing`` is True (draw it), False (none) or an array of fixed dB
    offsets, one per distance. Draw order per call: shadowing for all users
    when drawn, then the real parts, then the imaginary parts of the fading.
    """
    distances = np.atleast_1d(np.asarray(distances, dtype=float))
    n = distances.size
    if isinstance(shadowing, (bool, np.bool_)):
        zeta = rng.normal(0.0, params.shadowing_db, n) if shadowing and params.shadowing_db > 0 \
            else np.zeros(n)
    else:
        zeta = np.broadcast_to(np.asarray(shadowing, dtype=float), (n,))
    fading = (rng.standard_normal((n, antennas))
              + 1j * rng.standard_normal((n, antennas))) / math.sqrt(2)
    gain = 10 ** (-path_loss_db(distances, params, zeta) / 20)
    return fading * gain[:, None]


def sample_channel(env: Environment, params: ChannelParams, position, antennas, rng,
                   shadowing=True):
    """Channel vector for a user at floor position ``(x, y)``."""
    x, y = position
    if not (0 <= x <= env.width and 0 <= y <= env.depth):
        raise ValueError("position outside the room")
    return sample_channels([env.distance(x, y)], params, antennas, rng, shadowing)[0]


def shadowing_map(n_stus, params: ChannelParams, seed) -> np.ndarray:
    """Static obstruction loss in dB for every STU, drawn once per seed."""
    rng = np.random.default_rng([seed, 0x5EAD])
    if params.shadowing_db == 0:
        return np.zeros(n_stus)
    return rng.normal(0.0, params.shadowing_db, n_stus)
