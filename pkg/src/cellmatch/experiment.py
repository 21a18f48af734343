"""Monte-Carlo parameter sweeps and metric aggregation.

A sweep varies one scenario dimension (number of picocells or of users),
holds the other fixed, and runs many independent replicas per grid point.
Replica seeds derive deterministically from (master seed, axis value,
replica index), so extending the replica count reproduces the earlier
replicas exactly and replicas can run on a process pool in any order.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

from .matching import max_sinr_baseline, solve
from .preferences import SolverConfig, UtilityModel
from .scenario import ScenarioConfig, generate

log = logging.getLogger(__name__)

ALGORITHMS = ("proposed", "max_sinr")

CSV_COLUMNS = (
    "axis",
    "algorithm",
    "mean_user_utility",
    "se_user_utility",
    "mean_cell_utility",
    "se_cell_utility",
    "mean_iter_per_user",
    "se_iter",
    "convergence_rate",
    "replicas",
)


@dataclass(frozen=True)
class SweepSpec:
    """One sweep design: which axis varies, over which values, what stays
    fixed, and how many Monte-Carlo replicas per grid point."""

    axis: str
    values: tuple[int, ...]
    fixed: int
    replicas: int
    base: ScenarioConfig
    algorithms: tuple[str, ...] = ALGORITHMS

    def __post_init__(self):
        if self.axis not in ("n_picos", "n_users"):
            raise ValueError(f"axis must be n_picos or n_users, got {self.axis!r}")
        if not self.values or any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError(f"values must be nonempty and strictly increasing, got {self.values}")
        if any(v < 1 for v in self.values) or self.fixed < 1:
            raise ValueError("sweep dimensions must be positive")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if not self.algorithms or unknown:
            raise ValueError(f"algorithms must be a nonempty subset of {ALGORITHMS}, got {self.algorithms}")

    @property
    def fixed_axis(self) -> str:
        return "n_users" if self.axis == "n_picos" else "n_picos"


@dataclass(frozen=True)
class MetricsRow:
    """Aggregated results for one (axis value, algorithm) pair."""

    axis_value: int
    algorithm: str
    mean_user_utility: float
    se_user_utility: float
    mean_cell_utility: float
    se_cell_utility: float
    mean_iter_per_user: float
    se_iter: float
    convergence_rate: float
    replicas: int


def replica_seed(master: int, axis_value: int, replica: int) -> int:
    """Deterministic, platform-independent per-replica seed."""
    return int(np.random.SeedSequence([master, axis_value, replica]).generate_state(1)[0])


def _run_replica(task) -> dict[str, tuple[float, float, float, bool]]:
    """Run every requested algorithm on one realized scenario.

    Returns {algorithm: (mean user utility, mean cell utility, iterations
    per user, converged)}.  Module-level so a process pool can pickle it.
    """
    config, solver, algorithms = task
    scenario = generate(config)
    out = {}
    for alg in algorithms:
        if alg == "proposed":
            report = solve(scenario, solver)
            model = UtilityModel(scenario, solver)
            out[alg] = (
                model.mean_user_utility(report.final),
                model.mean_cell_utility(report.final),
                report.iterations_per_user(),
                report.converged,
            )
        else:
            matching = max_sinr_baseline(scenario, solver)
            model = UtilityModel(scenario, solver)
            out[alg] = (
                model.mean_user_utility(matching),
                model.mean_cell_utility(matching),
                0.0,
                True,
            )
    return out


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
    return mean, se


def run_sweep(
    spec: SweepSpec,
    solver: SolverConfig | None = None,
    workers: int = 1,
    progress: Callable[[str], None] | None = None,
) -> list[MetricsRow]:
    """Execute a sweep and aggregate per-point, per-algorithm metrics.

    Failed replicas are logged and excluded from the aggregates (the
    ``replicas`` column reports how many succeeded).  Results do not depend
    on ``workers``.
    """
    if solver is None:
        solver = SolverConfig(hf_threshold=spec.base.hf_threshold)
    base = replace(spec.base, **{spec.fixed_axis: spec.fixed})

    tasks = []
    for value in spec.values:
        for rep in range(spec.replicas):
            cfg = base.with_axis(spec.axis, value, replica_seed(base.seed, value, rep))
            tasks.append((value, (cfg, solver, spec.algorithms)))

    results: list[dict | None] = [None] * len(tasks)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_replica, task) for _, task in tasks]
            for idx, fut in enumerate(futures):
                try:
                    results[idx] = fut.result()
                except Exception:
                    log.warning("replica %d failed", idx, exc_info=True)
    else:
        for idx, (_, task) in enumerate(tasks):
            try:
                results[idx] = _run_replica(task)
            except Exception:
                log.warning("replica %d failed", idx, exc_info=True)

    rows: list[MetricsRow] = []
    offset = 0
    for value in spec.values:
        chunk = results[offset : offset + spec.replicas]
        offset += spec.replicas
        failed = sum(1 for r in chunk if r is None)
        if failed:
            log.warning("axis=%d: %d of %d replicas failed and were excluded", value, failed, spec.replicas)
        good = [r for r in chunk if r is not None]
        if not good:
            raise RuntimeError(f"axis={value}: every replica failed")
        for alg in spec.algorithms:
            user_u, cell_u, iters, conv = zip(*(r[alg] for r in good))
            mu, se_u = _mean_se(user_u)
            mc, se_c = _mean_se(cell_u)
            mi, se_i = _mean_se(iters)
            rows.append(
                MetricsRow(
                    axis_value=value,
                    algorithm=alg,
                    mean_user_utility=mu,
                    se_user_utility=se_u,
                    mean_cell_utility=mc,
                    se_cell_utility=se_c,
                    mean_iter_per_user=mi,
                    se_iter=se_i,
                    convergence_rate=sum(conv) / len(conv),
                    replicas=len(good),
                )
            )
        if progress is not None:
            progress(f"{spec.axis}={value}: {len(good)}/{spec.replicas} replicas done")
    return rows


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_csv(rows: Sequence[MetricsRow], path) -> None:
    """Write aggregated rows with a fixed column order; newline-terminated,
    plain decimal points.  Refuses to create a file for zero rows."""
    if not rows:
        raise ValueError("no rows to write")
    lines = [",".join(CSV_COLUMNS)]
    for row in rows:
        lines.append(
            ",".join(
                _format_value(v)
                for v in (
                    row.axis_value,
                    row.algorithm,
                    row.mean_user_utility,
                    row.se_user_utility,
                    row.mean_cell_utility,
                    row.se_cell_utility,
                    row.mean_iter_per_user,
                    row.se_iter,
                    row.convergence_rate,
                    row.replicas,
                )
            )
        )
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write CSV to {path}: {exc}") from exc


def rows_to_dicts(rows: Sequence[MetricsRow]) -> list[dict]:
    return [
        {
            "axis": r.axis_value,
            "algorithm": r.algorithm,
            "mean_user_utility": r.mean_user_utility,
            "se_user_utility": r.se_user_utility,
            "mean_cell_utility": r.mean_cell_utility,
            "se_cell_utility": r.se_cell_utility,
            "mean_iter_per_user": r.mean_iter_per_user,
            "se_iter": r.se_iter,
            "convergence_rate": r.convergence_rate,
            "replicas": r.replicas,
        }
        for r in rows
    ]
