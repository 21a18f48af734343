"""Random network scenarios and deterministic fixtures.

A scenario is one realized instance of the two-tier network: a macro
station at the origin, picocells and users dropped uniformly in the macro
disk, per-user context triples, per-cell geometry, and one channel
realization.  All randomness derives from a single seed through labeled
sub-streams, so changing the number of picocells never perturbs the user
draws of the same seed.

Fixtures are JSON documents describing a scenario exactly (schema in
``load_fixture``); they make hand-built instances for tests reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .context import SmallCellProfile, UserProfile
from .geometry import HALF_PI, CellGeometry
from .radio import ChannelMatrix, RadioConfig, realize_channels

# Labeled RNG sub-streams hanging off the master seed.
_STREAMS = {
    "user_positions": 0,
    "user_profiles": 1,
    "cell_positions": 2,
    "cell_profiles": 3,
    "channels": 4,
}


class FixtureError(ValueError):
    """A fixture document is malformed; the message names the bad field."""


@dataclass(frozen=True)
class MacroStation:
    position: tuple[float, float]
    tx_power: float

    def __post_init__(self):
        if not self.tx_power > 0:
            raise ValueError(f"macro tx power must be positive, got {self.tx_power}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Knobs for random scenario generation.

    Ranges the source material leaves open (pico radii, failure-radius
    ratios, preparation times, speeds, exit-radius factor) carry
    documented defaults and are all overridable.
    """

    macro_radius: float = 1000.0
    n_users: int = 60
    n_picos: int = 20
    quota: int = 4
    tau_range: tuple[float, float] = (0.5, 5.0)
    pico_R_range: tuple[float, float] = (100.0, 300.0)
    pico_r_ratio_range: tuple[float, float] = (0.02, 0.1)
    prep_time_range: tuple[float, float] = (1.0, 10.0)
    speed_range: tuple[float, float] = (1.0, 15.0)
    r_exit_factor: float = 1.1
    radio: RadioConfig = field(default_factory=RadioConfig)
    hf_threshold: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.macro_radius <= 0:
            raise ValueError(f"macro radius must be positive, got {self.macro_radius}")
        if self.n_users < 1 or self.n_picos < 1:
            raise ValueError(f"need at least one user and one picocell, got {self.n_users}, {self.n_picos}")
        if self.quota < 1:
            raise ValueError(f"quota must be >= 1, got {self.quota}")
        for name, (lo, hi) in (
            ("tau_range", self.tau_range),
            ("pico_R_range", self.pico_R_range),
            ("pico_r_ratio_range", self.pico_r_ratio_range),
            ("prep_time_range", self.prep_time_range),
            ("speed_range", self.speed_range),
        ):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
                raise ValueError(f"{name} must be a nonempty [min, max] interval, got [{lo}, {hi}]")
        if self.tau_range[0] <= 0:
            raise ValueError(f"tau must stay positive, got range {self.tau_range}")
        if self.pico_R_range[0] <= 0:
            raise ValueError(f"pico radii must stay positive, got range {self.pico_R_range}")
        if not (0 < self.pico_r_ratio_range[0] and self.pico_r_ratio_range[1] < 1):
            raise ValueError(f"r/R ratios must lie in (0, 1), got range {self.pico_r_ratio_range}")
        if self.prep_time_range[0] < 0 or self.speed_range[0] < 0:
            raise ValueError("preparation times and speeds must be nonnegative")
        if self.r_exit_factor <= 1:
            raise ValueError(f"exit radius factor must exceed 1, got {self.r_exit_factor}")
        if not 0 < self.hf_threshold <= 1:
            raise ValueError(f"hf_threshold must lie in (0, 1], got {self.hf_threshold}")
        if self.seed < 0:
            raise ValueError(f"seed must be nonnegative, got {self.seed}")

    def with_axis(self, axis: str, value: int, seed: int) -> "ScenarioConfig":
        """Copy with one sweep axis (n_users or n_picos) and seed replaced."""
        if axis not in ("n_users", "n_picos"):
            raise ValueError(f"unknown sweep axis {axis!r}")
        return replace(self, **{axis: value, "seed": seed})


@dataclass(frozen=True)
class Scenario:
    """One realized network instance."""

    mbs: MacroStation
    cells: tuple[SmallCellProfile, ...]
    users: tuple[UserProfile, ...]
    channels: ChannelMatrix
    noise_power: float = RadioConfig().noise_power
    seed: int | None = None

    def __post_init__(self):
        if not self.noise_power > 0:
            raise ValueError(f"noise power must be positive, got {self.noise_power}")
        n, b = self.channels.gains.shape
        if n != len(self.users) or b != len(self.cells) + 1:
            raise ValueError(
                f"channel matrix is {n}x{b}, expected {len(self.users)}x{len(self.cells) + 1}"
            )

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def station_powers(self) -> np.ndarray:
        """Transmit powers aligned with channel columns (macro first)."""
        return np.array([self.mbs.tx_power] + [c.tx_power for c in self.cells])


def _stream(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(_STREAMS[label],)))


def _disk_points(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """n points uniform over the disk of given radius (areal uniformity)."""
    r = radius * np.sqrt(rng.random(n))
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _open_angles(rng: np.random.Generator, n: int) -> np.ndarray:
    """Angles uniform on the open interval (-pi/2, pi/2)."""
    theta = rng.uniform(-HALF_PI, HALF_PI, size=n)
    bad = np.abs(theta) >= HALF_PI
    while bad.any():
        theta[bad] = rng.uniform(-HALF_PI, HALF_PI, size=int(bad.sum()))
        bad = np.abs(theta) >= HALF_PI
    return theta


def generate(config: ScenarioConfig) -> Scenario:
    """Realize one random scenario; fully determined by ``config.seed``."""
    seed = config.seed

    user_pos = _disk_points(_stream(seed, "user_positions"), config.n_users, config.macro_radius)
    prof_rng = _stream(seed, "user_profiles")
    tau = prof_rng.uniform(*config.tau_range, size=config.n_users)
    theta = _open_angles(prof_rng, config.n_users)
    speed = prof_rng.uniform(*config.speed_range, size=config.n_users)
    users = tuple(
        UserProfile(
            id=i,
            position=(float(user_pos[i, 0]), float(user_pos[i, 1])),
            tau=float(tau[i]),
            theta=float(theta[i]),
            speed=float(speed[i]),
        )
        for i in range(config.n_users)
    )

    cell_pos = _disk_points(_stream(seed, "cell_positions"), config.n_picos, config.macro_radius)
    cell_rng = _stream(seed, "cell_profiles")
    R = cell_rng.uniform(*config.pico_R_range, size=config.n_picos)
    ratio = cell_rng.uniform(*config.pico_r_ratio_range, size=config.n_picos)
    prep = cell_rng.uniform(*config.prep_time_range, size=config.n_picos)
    cells = tuple(
        SmallCellProfile(
            id=j,
            geometry=CellGeometry(
                center=(float(cell_pos[j, 0]), float(cell_pos[j, 1])),
                R=float(R[j]),
                r=float(ratio[j] * R[j]),
                r_exit=float(config.r_exit_factor * R[j]),
            ),
            quota=config.quota,
            prep_time=float(prep[j]),
            tx_power=config.radio.tx_power_pico,
        )
        for j in range(config.n_picos)
    )

    mbs = MacroStation(position=(0.0, 0.0), tx_power=config.radio.tx_power_macro)
    station_pos = np.vstack([np.asarray(mbs.position)[None, :], cell_pos])
    channels = realize_channels(
        user_pos,
        station_pos,
        config.radio,
        seed=np.random.SeedSequence(seed, spawn_key=(_STREAMS["channels"],)),
    )
    return Scenario(
        mbs=mbs,
        cells=cells,
        users=users,
        channels=channels,
        noise_power=config.radio.noise_power,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Fixture format


def serialize_scenario(scenario: Scenario) -> str:
    """Render a scenario as a fixture document (JSON, round-trip exact)."""
    doc = {
        "mbs": {"position": list(scenario.mbs.position), "tx_power": scenario.mbs.tx_power},
        "cells": [
            {
                "id": c.id,
                "center": list(c.geometry.center),
                "R": c.geometry.R,
                "r": c.geometry.r,
                "r_exit": c.geometry.r_exit,
                "quota": c.quota,
                "prep_time": c.prep_time,
                "tx_power": c.tx_power,
            }
            for c in scenario.cells
        ],
        "users": [
            {
                "id": u.id,
                "position": list(u.position),
                "tau": u.tau,
                "theta": u.theta,
                "speed": u.speed,
            }
            for u in scenario.users
        ],
        "channels": scenario.channels.gains.tolist(),
        "noise_power": scenario.noise_power,
    }
    if scenario.seed is not None:
        doc["seed"] = scenario.seed
    return json.dumps(doc, indent=2)


def _get(mapping: dict, key: str, kinds, path: str):
    if key not in mapping:
        raise FixtureError(f"{path}: missing field {key!r}")
    value = mapping[key]
    if not isinstance(value, kinds) or isinstance(value, bool):
        raise FixtureError(f"{path}.{key}: expected {kinds}, got {type(value).__name__}")
    return value


def _get_point(mapping: dict, key: str, path: str) -> tuple[float, float]:
    value = _get(mapping, key, list, path)
    if len(value) != 2 or not all(isinstance(v, (int, float)) for v in value):
        raise FixtureError(f"{path}.{key}: expected [x, y]")
    return float(value[0]), float(value[1])


def load_fixture(text: str) -> Scenario:
    """Parse a fixture document into a Scenario.

    Schema (JSON object)::

        mbs:      {position: [x, y], tx_power: watts}
        cells:    [{id, center: [x, y], R, r, r_exit, quota, prep_time, tx_power}, ...]
        users:    [{id, position: [x, y], tau, theta, speed}, ...]
        channels: optional N x (P+1) gain matrix, macro column first
        pathloss_exponent: optional, used only when channels is omitted
        seed:     optional integer

    When ``channels`` is omitted, deterministic no-fading gains
    d^(-pathloss_exponent) are computed from the positions (default
    exponent 3), which keeps hand-written fixtures predictable.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FixtureError(f"fixture is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FixtureError("fixture must be a JSON object")
    known = {"mbs", "cells", "users", "channels", "pathloss_exponent", "noise_power", "seed"}
    unknown = set(doc) - known
    if unknown:
        raise FixtureError(f"unknown fixture fields: {sorted(unknown)}")

    mbs_doc = _get(doc, "mbs", dict, "fixture")
    try:
        mbs = MacroStation(
            position=_get_point(mbs_doc, "position", "mbs"),
            tx_power=float(_get(mbs_doc, "tx_power", (int, float), "mbs")),
        )
    except ValueError as exc:
        if isinstance(exc, FixtureError):
            raise
        raise FixtureError(f"mbs: {exc}") from exc

    cells = []
    for k, c in enumerate(_get(doc, "cells", list, "fixture")):
        path = f"cells[{k}]"
        if not isinstance(c, dict):
            raise FixtureError(f"{path}: expected an object")
        try:
            cells.append(
                SmallCellProfile(
                    id=int(_get(c, "id", int, path)),
                    geometry=CellGeometry(
                        center=_get_point(c, "center", path),
                        R=float(_get(c, "R", (int, float), path)),
                        r=float(_get(c, "r", (int, float), path)),
                        r_exit=float(_get(c, "r_exit", (int, float), path)),
                    ),
                    quota=int(_get(c, "quota", int, path)),
                    prep_time=float(_get(c, "prep_time", (int, float), path)),
                    tx_power=float(_get(c, "tx_power", (int, float), path)),
                )
            )
        except ValueError as exc:
            if isinstance(exc, FixtureError):
                raise
            raise FixtureError(f"{path}: {exc}") from exc

    users = []
    for k, u in enumerate(_get(doc, "users", list, "fixture")):
        path = f"users[{k}]"
        if not isinstance(u, dict):
            raise FixtureError(f"{path}: expected an object")
        try:
            users.append(
                UserProfile(
                    id=int(_get(u, "id", int, path)),
                    position=_get_point(u, "position", path),
                    tau=float(_get(u, "tau", (int, float), path)),
                    theta=float(_get(u, "theta", (int, float), path)),
                    speed=float(_get(u, "speed", (int, float), path)),
                )
            )
        except ValueError as exc:
            if isinstance(exc, FixtureError):
                raise
            raise FixtureError(f"{path}: {exc}") from exc

    if "channels" in doc:
        raw = _get(doc, "channels", list, "fixture")
        try:
            channels = ChannelMatrix(gains=np.array(raw, dtype=float))
        except ValueError as exc:
            raise FixtureError(f"channels: {exc}") from exc
    else:
        exponent = float(doc.get("pathloss_exponent", 3.0))
        station_pos = np.vstack([np.asarray(mbs.position)[None, :], [c.geometry.center for c in cells]])
        user_pos = np.array([u.position for u in users])
        cfg = RadioConfig(pathloss_exponent=exponent)
        channels = realize_channels(user_pos, station_pos, cfg, seed=0, fading=False)

    seed = doc.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise FixtureError(f"seed: expected an integer, got {type(seed).__name__}")
    noise = doc.get("noise_power", RadioConfig().noise_power)
    if not isinstance(noise, (int, float)) or isinstance(noise, bool):
        raise FixtureError(f"noise_power: expected a number, got {type(noise).__name__}")

    try:
        return Scenario(
            mbs=mbs,
            cells=tuple(cells),
            users=tuple(users),
            channels=channels,
            noise_power=float(noise),
            seed=seed,
        )
    except ValueError as exc:
        raise FixtureError(str(exc)) from exc
