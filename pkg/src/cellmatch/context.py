"""User context profiles and the acceptability rules built on them.

Each user carries an urgency coefficient tau, a trajectory angle, and a
speed.  Urgency shapes a logistic quality-of-experience curve; angle and
speed decide whether a cell can prepare a handover in time and whether the
cell's handover-failure odds are tolerable to the user.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import HALF_PI, CellGeometry, chord_length, hf_probability


@dataclass(frozen=True)
class UserProfile:
    """A user's position plus its context triple (tau, theta, speed)."""

    id: int
    position: tuple[float, float]
    tau: float
    theta: float
    speed: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"user {self.id}: tau must be positive, got {self.tau}")
        if not abs(self.theta) < HALF_PI:
            raise ValueError(f"user {self.id}: |theta| must be < pi/2, got {self.theta}")
        if self.speed < 0:
            raise ValueError(f"user {self.id}: speed must be nonnegative, got {self.speed}")


@dataclass(frozen=True)
class SmallCellProfile:
    """A picocell: geometry, serving quota, handover preparation time, power."""

    id: int
    geometry: CellGeometry
    quota: int
    prep_time: float
    tx_power: float

    def __post_init__(self):
        if self.quota < 1:
            raise ValueError(f"cell {self.id}: quota must be >= 1, got {self.quota}")
        if self.prep_time < 0:
            raise ValueError(f"cell {self.id}: prep time must be nonnegative, got {self.prep_time}")
        if not self.tx_power > 0:
            raise ValueError(f"cell {self.id}: tx power must be positive, got {self.tx_power}")


def qoe(t: float, tau: float) -> float:
    """Quality of experience after delivery time t: 1/(1 + exp(t - tau)).

    Decays logistically around the urgency coefficient tau; evaluated in a
    numerically stable form so extreme t never overflows.
    """
    if t < 0:
        raise ValueError(f"delivery time must be nonnegative, got {t}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    x = t - tau
    if x >= 0:
        e = math.exp(-x)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(x))


def is_acceptable_to_cell(user: UserProfile, cell: SmallCellProfile) -> bool:
    """Whether the cell can complete handover preparation while the user
    is still inside coverage: chord/speed >= prep time.

    A stationary user never leaves, so it is always acceptable.
    """
    if user.speed == 0:
        return True
    D = chord_length(cell.geometry, user.theta)
    return D / user.speed >= cell.prep_time


def is_acceptable_to_user(
    user: UserProfile,
    cell: SmallCellProfile,
    hf_threshold: float,
    sinr_db: float | None = None,
    min_sinr_db: float | None = None,
) -> bool:
    """Whether the user tolerates the cell: handover-failure probability
    strictly below ``hf_threshold``, and, when both SINR arguments are
    given, the link SINR at or above the floor.

    The SINR floor is an optional filter; callers that do not enforce it
    simply omit the SINR arguments.
    """
    if not 0 < hf_threshold <= 1:
        raise ValueError(f"hf_threshold must lie in (0, 1], got {hf_threshold}")
    if hf_probability(cell.geometry) >= hf_threshold:
        return False
    if sinr_db is not None and min_sinr_db is not None and sinr_db < min_sinr_db:
        return False
    return True
