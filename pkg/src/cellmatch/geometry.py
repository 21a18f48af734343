"""Coverage and handover geometry for circular small cells.

A user crosses a cell's circular coverage area along a chord whose entry
angle is uniform on (-pi/2, pi/2).  Handover fails when the chord cuts the
inner failure circle of radius ``r``; a handover between two cells is only
possible when their spacing falls inside a closed window determined by the
exit radius of the source cell and the failure radius of the target.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

HALF_PI = math.pi / 2.0

# Relative r/R above which the small-angle (linear) failure probability is
# no longer trusted; beyond it the exact form is returned with a warning.
LINEAR_REGIME_MAX_RATIO = 0.2


class NoHandover:
    """Marker: cell spacing puts the pair outside the handover window."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "NO_HANDOVER"


NO_HANDOVER = NoHandover()


@dataclass(frozen=True)
class CellGeometry:
    """Circular coverage of radius R with an inner handover-failure circle
    of radius r and an outer exit radius r_exit (> R) past which a pending
    handover must have completed."""

    center: tuple[float, float]
    R: float
    r: float
    r_exit: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.center):
            raise ValueError(f"cell center must be finite, got {self.center}")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise ValueError(f"coverage radius R must be positive, got {self.R}")
        # Boundary values r=0 and r=R are admitted so degenerate cells can be
        # expressed; generated scenarios always satisfy 0 < r < R.
        if not (0 <= self.r <= self.R):
            raise ValueError(f"failure radius r must satisfy 0 <= r <= R, got r={self.r}, R={self.R}")
        if not (self.r_exit > self.R):
            raise ValueError(f"exit radius must exceed R, got r_exit={self.r_exit}, R={self.R}")

    @property
    def reliability_ratio(self) -> float:
        """R/r; larger means a more reliable handover."""
        if self.r == 0:
            return math.inf
        return self.R / self.r


@dataclass(frozen=True)
class Trajectory:
    """Straight crossing path: entry angle theta and constant speed V."""

    theta: float
    V: float

    def __post_init__(self):
        if not abs(self.theta) < HALF_PI:
            raise ValueError(f"|theta| must be < pi/2, got {self.theta}")
        if not self.V > 0:
            raise ValueError(f"speed must be positive, got {self.V}")


def chord_length(geom: CellGeometry, theta: float) -> float:
    """Length of the coverage chord entered at angle ``theta``: 2*R*cos(theta)."""
    if not abs(theta) < HALF_PI:
        raise ValueError(f"|theta| must be < pi/2, got {theta}")
    return 2.0 * geom.R * math.cos(theta)


def interaction_time(D: float, V: float) -> float:
    """Time spent inside coverage when crossing a chord of length D at speed V."""
    if V <= 0:
        raise ValueError(f"speed must be positive, got {V}")
    if D < 0:
        raise ValueError(f"chord length must be nonnegative, got {D}")
    return D / V


def chord_cdf(geom: CellGeometry, d: float) -> float:
    """Pr(D < d) for the random chord, d in [0, 2R]."""
    if not 0 <= d <= 2 * geom.R:
        raise ValueError(f"d must lie in [0, {2 * geom.R}], got {d}")
    return 1.0 - (2.0 / math.pi) * math.acos(d / (2.0 * geom.R))


def hf_probability(geom: CellGeometry) -> float:
    """Probability that a random crossing chord cuts the failure circle.

    Equals (2/pi)*acos(sqrt(1 - (r/R)^2)) = (2/pi)*asin(r/R).
    """
    ratio = geom.r / geom.R
    return (2.0 / math.pi) * math.acos(math.sqrt(max(0.0, 1.0 - ratio * ratio)))


def hf_probability_linear(geom: CellGeometry) -> float:
    """Small-ratio linearization 2r/(pi*R) of :func:`hf_probability`.

    Valid for r/R <= 0.2 (relative error below 1%); for larger ratios the
    exact value is returned and a warning is emitted.
    """
    ratio = geom.r / geom.R
    if ratio > LINEAR_REGIME_MAX_RATIO:
        warnings.warn(
            f"r/R={ratio:.3f} exceeds the linear regime (<= {LINEAR_REGIME_MAX_RATIO}); "
            "returning the exact failure probability",
            stacklevel=2,
        )
        return hf_probability(geom)
    return 2.0 * ratio / math.pi


def inter_cell_hf_probability(
    src: CellGeometry,
    dst: CellGeometry,
    distance_OO: float,
    V: float,
    t_m: float,
    speed_cdf: Callable[[float], float] | None = None,
) -> Union[float, NoHandover]:
    """Failure probability for a handover from ``src`` into ``dst``.

    A handover is only possible when the center spacing lies in the closed
    window [src.R + dst.r, src.r_exit + dst.R]; outside it NO_HANDOVER is
    returned.  Inside, the handover succeeds when the user is slow enough to
    complete it before leaving the exit ring (deadline ``t_m``) and the
    entry chord misses the target's failure circle:

        Pr(HF) = 1 - Pr(V < (r_exit - R)/t_m) * (1 - Pr(chord failure in dst))

    ``speed_cdf`` maps a speed to Pr(V < x); by default the speed is treated
    as deterministic and the CDF degenerates to the indicator [V < x].
    """
    if distance_OO <= 0:
        raise ValueError(f"cell spacing must be positive, got {distance_OO}")
    if t_m <= 0:
        raise ValueError(f"handover deadline must be positive, got {t_m}")

    if distance_OO > src.r_exit + dst.R or distance_OO < src.R + dst.r:
        return NO_HANDOVER

    margin = (src.r_exit - src.R) / t_m
    if speed_cdf is not None:
        p_slow = speed_cdf(margin)
    else:
        p_slow = 1.0 if V < margin else 0.0
    if not 0.0 <= p_slow <= 1.0:
        raise ValueError(f"speed CDF returned {p_slow}, not a probability")
    return 1.0 - p_slow * (1.0 - hf_probability(dst))


def mc_hf_oracle(geom: CellGeometry, samples: int, seed: int) -> float:
    """Monte-Carlo estimate of :func:`hf_probability`.

    Draws entry angles uniform on (-pi/2, pi/2) and counts chords whose
    perpendicular offset from the center, R*sin|theta|, falls inside the
    failure circle.  Deterministic per seed; used to validate the closed
    form, never to replace it.
    """
    if samples < 1:
        raise ValueError(f"need at least one sample, got {samples}")
    rng = np.random.default_rng(seed)
    theta = rng.uniform(-HALF_PI, HALF_PI, size=samples)
    hits = np.count_nonzero(geom.R * np.sin(np.abs(theta)) < geom.r)
    return hits / samples
