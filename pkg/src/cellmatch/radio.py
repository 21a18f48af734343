"""Channel realization, SINR, and the load-shared rate metric.

Channel gains follow a log-distance path loss with Rayleigh block fading;
the SINR of a user-station pair treats every other station (macro included)
as an interferer.  The rate a user actually sees is the Shannon spectral
efficiency split evenly among the serving station's occupants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Distances below this are clamped; keeps the close-in path loss finite.
MIN_DISTANCE_M = 1.0


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_ratio(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """Propagation and power parameters.

    Defaults: -121 dBm noise, path-loss exponent 3, Rayleigh amplitude
    scale 2 (mean power gain 8), 30 dBm picocells, 46 dBm macro, and a
    9.56 dB minimum acceptable SINR.
    """

    noise_power: float = dbm_to_watts(-121.0)
    pathloss_exponent: float = 3.0
    rayleigh_scale: float = 2.0
    tx_power_pico: float = dbm_to_watts(30.0)
    tx_power_macro: float = dbm_to_watts(46.0)
    min_sinr_db: float = 9.56

    def __post_init__(self):
        if not self.noise_power > 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        if not self.pathloss_exponent >= 2:
            raise ValueError(f"path-loss exponent must be >= 2, got {self.pathloss_exponent}")
        if not (self.tx_power_pico > 0 and self.tx_power_macro > 0):
            raise ValueError("transmit powers must be positive")
        if self.rayleigh_scale < 0:
            raise ValueError(f"Rayleigh scale must be nonnegative, got {self.rayleigh_scale}")


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """Per-pair power gains, one row per user, one column per station.

    Column 0 is the macro station; column j+1 is picocell j.
    """

    gains: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, ChannelMatrix):
            return NotImplemented
        return self.gains.shape == other.gains.shape and bool(np.array_equal(self.gains, other.gains))

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=float)
        if gains.ndim != 2:
            raise ValueError(f"gains must be 2-D, got shape {gains.shape}")
        if not np.all(np.isfinite(gains)) or np.any(gains < 0):
            raise ValueError("channel gains must be finite and nonnegative")
        object.__setattr__(self, "gains", gains)

    @property
    def n_users(self) -> int:
        return self.gains.shape[0]

    @property
    def n_stations(self) -> int:
        return self.gains.shape[1]


def realize_channels(
    user_positions: np.ndarray,
    station_positions: np.ndarray,
    config: RadioConfig,
    seed,
    fading: bool = True,
) -> ChannelMatrix:
    """Draw one block-fading channel realization.

    gain[i, j] = g_ij * d_ij^(-alpha), with g_ij the squared magnitude of a
    Rayleigh amplitude of scale ``config.rayleigh_scale`` (an exponential
    power gain of mean 2*scale^2) and d_ij the user-station distance clamped
    below at 1 m.  ``fading=False`` fixes g to 1 for hand-checkable setups.
    Deterministic per seed.
    """
    users = np.atleast_2d(np.asarray(user_positions, dtype=float))
    stations = np.atleast_2d(np.asarray(station_positions, dtype=float))
    if not (np.all(np.isfinite(users)) and np.all(np.isfinite(stations))):
        raise ValueError("positions must be finite")

    diff = users[:, None, :] - stations[None, :, :]
    dist = np.maximum(np.linalg.norm(diff, axis=2), MIN_DISTANCE_M)
    pathloss = dist ** (-config.pathloss_exponent)

    if fading and config.rayleigh_scale > 0:
        rng = np.random.default_rng(seed)
        g = rng.rayleigh(scale=config.rayleigh_scale, size=dist.shape) ** 2
    else:
        g = np.ones_like(dist)
    return ChannelMatrix(gains=g * pathloss)


def sinr_matrix(channels: ChannelMatrix, powers: np.ndarray, noise_power: float) -> np.ndarray:
    """SINR of every user-station pair under full interference.

    Entry (i, j) is P_j*c_ij / (sum_{k != j} P_k*c_ik + noise); every other
    station, macro included, contributes to the denominator.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (channels.n_stations,):
        raise ValueError(f"expected {channels.n_stations} powers, got shape {powers.shape}")
    received = channels.gains * powers[None, :]
    total = received.sum(axis=1, keepdims=True)
    return received / (total - received + noise_power)


def sinr(channels: ChannelMatrix, powers: np.ndarray, user: int, station: int, noise_power: float) -> float:
    """SINR of one user-station pair; see :func:`sinr_matrix`."""
    return float(sinr_matrix(channels, powers, noise_power)[user, station])


def rate_over_load(
    channels: ChannelMatrix,
    powers: np.ndarray,
    user: int,
    station: int,
    load: int,
    noise_power: float,
) -> float:
    """Spectral efficiency of the pair shared evenly among ``load`` users.

    (1/max(1, load)) * log2(1 + SINR); an empty station divides by one.
    """
    if load < 0:
        raise ValueError(f"load must be nonnegative, got {load}")
    s = sinr(channels, powers, user, station, noise_power)
    return math.log2(1.0 + s) / max(1, load)
