"""Many-to-one matching: structure, solver, stability check, baseline.

The solver iterates user-proposing deferred acceptance inside an outer
fixed-point loop: utilities and preference lists are rebuilt from the
current matching, a full deferred-acceptance round produces the next one,
and the loop stops when two consecutive matchings coincide.  Because
preferences depend on the matching itself, the loop can oscillate; visited
matchings are remembered so cycles terminate with the best matching seen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .preferences import MBS, PreferenceList, SolverConfig, UtilityModel
from .scenario import Scenario

__all__ = [
    "MBS",
    "Matching",
    "SolveReport",
    "SolverConfig",
    "audit_matching",
    "deferred_acceptance_round",
    "max_sinr_baseline",
    "solve",
    "verify_stability",
]


@dataclass
class Matching:
    """Assignment of users to at most one cell each, cells to at most
    quota users; users serving no cell carry the macro marker ``MBS``."""

    user_to_cell: dict[int, int]
    cell_to_users: dict[int, set[int]]

    @classmethod
    def initial(cls, user_ids: Sequence[int], cell_ids: Sequence[int]) -> "Matching":
        """Everyone starts on the macro station."""
        return cls(
            user_to_cell={u: MBS for u in user_ids},
            cell_to_users={c: set() for c in cell_ids},
        )

    @classmethod
    def from_assignment(cls, user_to_cell: Mapping[int, int], cell_ids: Sequence[int]) -> "Matching":
        cell_to_users: dict[int, set[int]] = {c: set() for c in cell_ids}
        for u, c in user_to_cell.items():
            if c != MBS:
                cell_to_users[c].add(u)
        return cls(user_to_cell=dict(user_to_cell), cell_to_users=cell_to_users)

    def mbs_occupancy(self) -> int:
        return sum(1 for c in self.user_to_cell.values() if c == MBS)

    def occupancy(self, cell: int) -> int:
        return len(self.cell_to_users[cell])

    def key(self) -> tuple:
        """Canonical hashable form; two matchings are equal iff keys match."""
        return tuple(sorted(self.user_to_cell.items()))

    def copy(self) -> "Matching":
        return Matching(
            user_to_cell=dict(self.user_to_cell),
            cell_to_users={c: set(m) for c, m in self.cell_to_users.items()},
        )

    def __eq__(self, other):
        if not isinstance(other, Matching):
            return NotImplemented
        return self.user_to_cell == other.user_to_cell


def audit_matching(matching: Matching, quotas: Mapping[int, int]) -> None:
    """Raise if structural invariants are violated: quota respected and the
    two directions of the assignment agree."""
    for cell, members in matching.cell_to_users.items():
        if cell not in quotas:
            raise ValueError(f"matching references unknown cell {cell}")
        if len(members) > quotas[cell]:
            raise ValueError(f"cell {cell} holds {len(members)} users, quota {quotas[cell]}")
        for u in members:
            if matching.user_to_cell.get(u) != cell:
                raise ValueError(f"cell {cell} lists user {u}, but user maps to {matching.user_to_cell.get(u)}")
    for u, c in matching.user_to_cell.items():
        if c == MBS:
            continue
        if c not in matching.cell_to_users or u not in matching.cell_to_users[c]:
            raise ValueError(f"user {u} maps to cell {c} but is missing from its member set")


@dataclass(frozen=True)
class SolveReport:
    """Outcome of the fixed-point solver.

    ``final`` is the converged matching, or the best-welfare matching seen
    when the loop cycled or hit the iteration cap.  ``stable`` is only
    meaningful when ``converged`` is true (the check runs on convergence).
    ``final_round_proposals`` counts proposals in the last deferred-
    acceptance round; divided by the user count it is the per-user
    iteration effort reported by the experiments.
    """

    final: Matching
    outer_iterations: int
    inner_proposal_rounds: int
    total_proposals: int
    final_round_proposals: int
    converged: bool
    cycle_detected: bool
    stable: bool
    blocking_pairs: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if self.cycle_detected and self.converged:
            raise ValueError("a run cannot both converge and cycle")

    def iterations_per_user(self) -> float:
        return self.final_round_proposals / max(1, len(self.final.user_to_cell))

    def to_dict(self) -> dict:
        occupancy = {str(c): sorted(m) for c, m in sorted(self.final.cell_to_users.items())}
        return {
            "converged": self.converged,
            "cycle_detected": self.cycle_detected,
            "stable": self.stable,
            "outer_iterations": self.outer_iterations,
            "inner_proposal_rounds": self.inner_proposal_rounds,
            "total_proposals": self.total_proposals,
            "final_round_proposals": self.final_round_proposals,
            "iterations_per_user": self.iterations_per_user(),
            "mbs_users": sorted(u for u, c in self.final.user_to_cell.items() if c == MBS),
            "cells": occupancy,
            "blocking_pairs": [list(p) for p in self.blocking_pairs],
        }

    def to_json(self) -> str:
        """One-line machine-readable record."""
        return json.dumps(self.to_dict(), sort_keys=True)


def _run_deferred_acceptance(
    user_prefs: Mapping[int, Sequence[int]],
    cell_prefs: Mapping[int, Sequence[int]],
    quotas: Mapping[int, int],
) -> tuple[Matching, int]:
    """Synchronous user-proposing deferred acceptance on frozen lists.

    Returns the matching and the number of proposal rounds.  Users with
    exhausted (or empty) lists fall back to the macro station.  Applicants
    a cell does not rank are rejected outright.
    """
    cell_rank = {c: {u: i for i, u in enumerate(prefs)} for c, prefs in cell_prefs.items()}
    pointer = {u: 0 for u in user_prefs}
    held: dict[int, list[int]] = {c: [] for c in cell_prefs}

    waiting = {u for u, prefs in user_prefs.items() if prefs}
    rounds = 0
    while waiting:
        rounds += 1
        proposals: dict[int, list[int]] = {}
        for u in sorted(waiting):
            choice = user_prefs[u][pointer[u]]
            pointer[u] += 1
            proposals.setdefault(choice, []).append(u)

        waiting = set()
        for c in sorted(proposals):
            ranked = [u for u in proposals[c] if u in cell_rank[c]]
            unranked = [u for u in proposals[c] if u not in cell_rank[c]]
            pool = held[c] + ranked
            pool.sort(key=lambda u: cell_rank[c][u])
            held[c], rejected = pool[: quotas[c]], pool[quotas[c]:]
            for u in rejected + unranked:
                if pointer[u] < len(user_prefs[u]):
                    waiting.add(u)

    assignment = {u: MBS for u in user_prefs}
    for c, members in held.items():
        for u in members:
            assignment[u] = c
    matching = Matching.from_assignment(assignment, list(cell_prefs))
    audit_matching(matching, quotas)
    return matching, rounds


def deferred_acceptance_round(
    user_prefs: Mapping[int, Sequence[int]],
    cell_prefs: Mapping[int, Sequence[int]],
    quotas: Mapping[int, int],
) -> Matching:
    """One complete deferred-acceptance run over frozen preference lists.

    The output satisfies all structural invariants and admits no blocking
    pair with respect to the lists it consumed.
    """
    matching, _ = _run_deferred_acceptance(user_prefs, cell_prefs, quotas)
    return matching


def _count_proposals(matching: Matching, user_prefs: Mapping[int, Sequence[int]]) -> int:
    """Proposals made during a deferred-acceptance run, reconstructed from
    the outcome: a matched user proposed down to its match, an unmatched
    one through its whole list.  Independent of proposal order."""
    total = 0
    for u, prefs in user_prefs.items():
        cell = matching.user_to_cell[u]
        total += prefs.index(cell) + 1 if cell != MBS else len(prefs)
    return total


def _build_preferences(model: UtilityModel, matching: Matching):
    user_prefs = {
        u.id: model.build_user_preferences(matching, u.id).ranked for u in model.scenario.users
    }
    cell_prefs = {
        c.id: model.build_cell_preferences(matching, c.id).ranked for c in model.scenario.cells
    }
    return user_prefs, cell_prefs


def solve(scenario: Scenario, config: SolverConfig | None = None) -> SolveReport:
    """Iterate deferred acceptance to a fixed point of the matching map.

    Starting from everyone-on-the-macro, each outer iteration rebuilds all
    utilities and preference lists under the current matching and runs one
    deferred-acceptance round.  The loop stops on a fixed point
    (converged), on a revisited matching (cycle), or at ``max_outer``.
    Non-convergence is an outcome, not an error; the report then carries
    the best matching seen by total user utility.  On convergence the
    stability of the result is verified and recorded.
    """
    config = config or SolverConfig()
    model = UtilityModel(scenario, config)
    quotas = model.quota

    current = Matching.initial([u.id for u in scenario.users], [c.id for c in scenario.cells])
    seen = {current.key()}
    best = (model.welfare(current), current)

    outer = 0
    inner_rounds = 0
    total_proposals = 0
    last_proposals = 0
    converged = False
    cycle = False

    while outer < config.max_outer:
        outer += 1
        user_prefs, cell_prefs = _build_preferences(model, current)
        nxt, rounds = _run_deferred_acceptance(user_prefs, cell_prefs, quotas)
        inner_rounds += rounds
        last_proposals = _count_proposals(nxt, user_prefs)
        total_proposals += last_proposals

        if nxt == current:
            converged = True
            break
        welfare = model.welfare(nxt)
        if welfare > best[0]:
            best = (welfare, nxt)
        if nxt.key() in seen:
            cycle = True
            break
        seen.add(nxt.key())
        current = nxt

    final = current if converged else best[1]
    stable = False
    blocking: tuple[tuple[int, int], ...] = ()
    if converged:
        is_stable, pairs = _verify(final, model)
        stable = is_stable
        blocking = tuple(pairs)

    return SolveReport(
        final=final,
        outer_iterations=outer,
        inner_proposal_rounds=inner_rounds,
        total_proposals=total_proposals,
        final_round_proposals=last_proposals,
        converged=converged,
        cycle_detected=cycle,
        stable=stable,
        blocking_pairs=blocking,
    )


def _verify(matching: Matching, model: UtilityModel) -> tuple[bool, list[tuple[int, int]]]:
    """Find user-cell coalitions that would both strictly gain by deviating.

    For each mutually acceptable pair (n, p) with p not serving n, consider
    the one-step deviation: n moves to p, and if p is full its least-valued
    member is evicted to the macro station.  The user compares its utility
    at p (load capped at quota) against its current one; the cell compares
    the applicant's admission utility -- whose offloading bonus refers to
    the cell n would leave -- against zero for a free slot or against the
    evicted member's retention utility otherwise.
    """
    blocking: list[tuple[int, int]] = []
    for n in sorted(matching.user_to_cell):
        for p in sorted(matching.cell_to_users):
            if matching.user_to_cell[n] == p or not model.acceptable[n, p]:
                continue
            if not model.user_utility(matching, n, p) > model.user_value(matching, n):
                continue
            gain = model.cell_utility(matching, p, n)
            members = matching.cell_to_users[p]
            if len(members) < model.quota[p]:
                bar = 0.0
            else:
                # least-preferred member: smallest retention utility, then largest id
                worst = min(sorted(members), key=lambda m: (model.cell_utility(matching, p, m), -m))
                bar = model.cell_utility(matching, p, worst)
            if gain > bar:
                blocking.append((n, p))
    return not blocking, blocking


def verify_stability(
    matching: Matching,
    scenario: Scenario,
    config: SolverConfig | None = None,
) -> tuple[bool, list[tuple[int, int]]]:
    """Check one-step-deviation stability of a matching; see :func:`_verify`."""
    model = UtilityModel(scenario, config or SolverConfig())
    return _verify(matching, model)


def max_sinr_baseline(scenario: Scenario, config: SolverConfig | None = None) -> Matching:
    """Context-unaware baseline: each user applies to its strongest-SINR
    cell; with quotas enforced each cell keeps its strongest applicants and
    the rest fall back to the macro station."""
    config = config or SolverConfig()
    model = UtilityModel(scenario, config)
    cell_sinr = model.sinr[:, 1:]

    applicants: dict[int, list[int]] = {c.id: [] for c in scenario.cells}
    assignment = {u.id: MBS for u in scenario.users}
    if scenario.n_cells:
        for u in scenario.users:
            best = int(np.argmax(cell_sinr[u.id]))
            applicants[best].append(u.id)
    for c in scenario.cells:
        pool = sorted(applicants[c.id], key=lambda u: (-cell_sinr[u, c.id], u))
        keep = pool[: c.quota] if config.baseline_enforce_quota else pool
        for u in keep:
            assignment[u] = c.id
    matching = Matching.from_assignment(assignment, [c.id for c in scenario.cells])
    if config.baseline_enforce_quota:
        audit_matching(matching, model.quota)
    return matching
