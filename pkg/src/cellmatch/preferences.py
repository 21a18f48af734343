"""Matching-dependent utilities and preference lists for both sides.

A user values a cell by the cell's handover reliability ratio R/r times the
rate it would see after admission, with the serving load counted as if the
user were already in.  A cell values an applicant by the congestion of the
cell the applicant would leave (the offloading bonus) times the urgency of
its traffic.  Both therefore depend on the entire current matching, which
is what makes the game one with externalities.

``UtilityModel`` precomputes everything matching-independent for one
scenario (SINR, spectral efficiencies, mutual acceptability) so the solver
can re-rank cheaply every iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .context import is_acceptable_to_cell, is_acceptable_to_user
from .radio import sinr_matrix
from .scenario import Scenario

# Marker for users served by the (nearest) macro station instead of a cell.
MBS = -1


@dataclass(frozen=True)
class SolverConfig:
    """Game-level knobs shared by the utility model and the solver.

    ``require_coverage`` limits a user's candidate cells to those whose
    coverage disk contains it (a cell can only serve users crossing its
    coverage).  ``enforce_min_sinr`` adds the minimum-SINR floor to
    user-side acceptability (off by default: with full-interference SINR
    the floor empties cells long before their quotas bind, which
    contradicts the load-saturation behavior this simulator targets).
    ``mbs_effective_quota`` is the quota stand-in used when an applicant's
    previous server is the macro station (None means the user count).
    ``macro_reliability`` replaces R/r for macro-served users when their
    utility is evaluated.
    """

    max_outer: int = 100
    hf_threshold: float = 0.05
    require_coverage: bool = True
    enforce_min_sinr: bool = False
    min_sinr_db: float = 9.56
    mbs_effective_quota: int | None = None
    macro_reliability: float = 1.0
    baseline_enforce_quota: bool = True

    def __post_init__(self):
        if self.max_outer < 1:
            raise ValueError(f"max_outer must be >= 1, got {self.max_outer}")
        if not 0 < self.hf_threshold <= 1:
            raise ValueError(f"hf_threshold must lie in (0, 1], got {self.hf_threshold}")
        if self.mbs_effective_quota is not None and self.mbs_effective_quota < 1:
            raise ValueError(f"mbs_effective_quota must be >= 1, got {self.mbs_effective_quota}")
        if self.macro_reliability <= 0:
            raise ValueError(f"macro_reliability must be positive, got {self.macro_reliability}")


def _covers(cell, user) -> bool:
    dx = user.position[0] - cell.geometry.center[0]
    dy = user.position[1] - cell.geometry.center[1]
    return math.hypot(dx, dy) <= cell.geometry.R


@dataclass(frozen=True)
class PreferenceList:
    """Strictly ordered ids of acceptable agents from the opposite set."""

    owner: int
    ranked: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.ranked)) != len(self.ranked):
            raise ValueError(f"preference list of {self.owner} contains duplicates")


class UtilityModel:
    """Utility evaluation for one scenario under a changing matching.

    The SINR of every user-station pair is matching-independent (all
    stations transmit regardless of association), so spectral efficiencies
    are precomputed once.  Only the load division and the applicants'
    origin-cell congestion vary with the matching.
    """

    def __init__(self, scenario: Scenario, config: SolverConfig | None = None):
        self.scenario = scenario
        self.config = config or SolverConfig()
        n, p = scenario.n_users, scenario.n_cells

        powers = scenario.station_powers()
        self.sinr = sinr_matrix(scenario.channels, powers, scenario.noise_power)
        self.log_rate = np.log2(1.0 + self.sinr)
        with np.errstate(divide="ignore"):
            self.sinr_db = 10.0 * np.log10(self.sinr)

        self.reliability = np.array([c.geometry.reliability_ratio for c in scenario.cells])
        self.inv_tau = np.array([1.0 / u.tau for u in scenario.users])
        self.quota = {c.id: c.quota for c in scenario.cells}
        self.mbs_quota = self.config.mbs_effective_quota or n

        floor_db = self.config.min_sinr_db if self.config.enforce_min_sinr else None
        self.acceptable = np.zeros((n, p), dtype=bool)
        for i, user in enumerate(scenario.users):
            for j, cell in enumerate(scenario.cells):
                if self.config.require_coverage and not _covers(cell, user):
                    continue
                ok_user = is_acceptable_to_user(
                    user,
                    cell,
                    self.config.hf_threshold,
                    sinr_db=float(self.sinr_db[i, j + 1]) if floor_db is not None else None,
                    min_sinr_db=floor_db,
                )
                self.acceptable[i, j] = ok_user and is_acceptable_to_cell(user, cell)

        self.user_candidates = {
            u.id: tuple(int(j) for j in np.flatnonzero(self.acceptable[u.id])) for u in scenario.users
        }
        self.cell_pool = {
            c.id: tuple(int(i) for i in np.flatnonzero(self.acceptable[:, c.id])) for c in scenario.cells
        }

    # -- single-agent utilities ------------------------------------------------

    def user_utility(self, matching, user: int, cell: int) -> float:
        """Utility the user gets if served by ``cell`` given the rest of the
        matching; the serving load counts the user in, capped at the quota
        (an admission to a full cell displaces someone rather than
        overfilling it)."""
        if cell == MBS:
            load = matching.mbs_occupancy() + (0 if matching.user_to_cell[user] == MBS else 1)
            return self.config.macro_reliability * float(self.log_rate[user, 0]) / max(1, load)
        members = matching.cell_to_users[cell]
        occupancy = len(members) - (1 if user in members else 0)
        load = min(occupancy + 1, self.quota[cell])
        return float(self.reliability[cell]) * float(self.log_rate[user, cell + 1]) / max(1, load)

    def cell_utility(self, matching, cell: int, user: int) -> float:
        """Utility the cell gets by serving the user: the offloading bonus
        from the congestion of the user's current server, weighted by the
        urgency 1/tau.  Negative when the user comes from an underloaded
        server; acceptability is decided elsewhere."""
        origin = matching.user_to_cell[user]
        if origin == MBS:
            k, q = matching.mbs_occupancy(), self.mbs_quota
        else:
            k, q = len(matching.cell_to_users[origin]), self.quota[origin]
        return (1.0 + math.log(max(1, k) / q)) * float(self.inv_tau[user])

    # -- preference lists ------------------------------------------------------

    def build_user_preferences(self, matching, user: int, candidates=None) -> PreferenceList:
        """Acceptable cells sorted by descending utility under the current
        matching; ties broken by cell id."""
        if candidates is None:
            candidates = self.user_candidates[user]
        ranked = sorted(candidates, key=lambda c: (-self.user_utility(matching, user, c), c))
        return PreferenceList(owner=user, ranked=tuple(ranked))

    def build_cell_preferences(self, matching, cell: int, applicants=None) -> PreferenceList:
        """Acceptable applicants sorted by descending utility under the
        current matching; ties broken by user id."""
        if applicants is None:
            applicants = self.cell_pool[cell]
        ranked = sorted(applicants, key=lambda u: (-self.cell_utility(matching, cell, u), u))
        return PreferenceList(owner=cell, ranked=tuple(ranked))

    # -- matching-level aggregates ----------------------------------------------

    def user_value(self, matching, user: int) -> float:
        """The user's utility at its current server."""
        return self.user_utility(matching, user, matching.user_to_cell[user])

    def cell_value(self, matching, cell: int) -> float:
        """Sum of the cell's per-member utilities under the matching."""
        return sum(self.cell_utility(matching, cell, m) for m in sorted(matching.cell_to_users[cell]))

    def welfare(self, matching) -> float:
        return sum(self.user_value(matching, u) for u in sorted(matching.user_to_cell))

    def mean_user_utility(self, matching) -> float:
        """Average utility over cell-served users (the per-user figure of
        merit; macro-fallback users have no serving small cell and are not
        averaged in).  Zero when nobody is served by a cell."""
        served = [u for u, c in sorted(matching.user_to_cell.items()) if c != MBS]
        if not served:
            return 0.0
        return sum(self.user_value(matching, u) for u in served) / len(served)

    def mean_user_utility_all(self, matching) -> float:
        """Average over every user, macro-fallback ones valued at the macro
        stand-in reliability; used for welfare-style comparisons."""
        return self.welfare(matching) / self.scenario.n_users

    def mean_cell_utility(self, matching) -> float:
        return sum(self.cell_value(matching, c.id) for c in self.scenario.cells) / self.scenario.n_cells
