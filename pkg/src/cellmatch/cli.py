"""Command-line front end: solve single scenarios, run sweeps, self-test.

Configuration comes from an optional JSON file plus flag overrides; presets
``fig2``/``fig3``/``fig4`` reproduce the standard experiment designs with
one command.  All randomness flows from the resolved seed (flag, then the
CELLMATCH_SEED environment variable, then the config file).

Exit codes: 0 success, 1 runtime or self-test failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiment, geometry, matching, radio, scenario
from .preferences import SolverConfig, UtilityModel

USAGE_ERROR = 2
RUNTIME_ERROR = 1

# Experiment designs shipped with the package: list of (output suffix,
# config overlay).  fig4 sweeps users for two network sizes, so it
# produces two output files.
PRESETS = {
    "fig2": [("", {
        "sweep": {"axis": "n_picos", "values": [10, 15, 20, 25, 30, 35, 40],
                  "fixed": 60, "replicas": 1000},
    })],
    "fig3": [("", {
        "sweep": {"axis": "n_users", "values": [10, 20, 30, 40, 50, 60, 70, 80, 90, 100],
                  "fixed": 20, "replicas": 1000},
    })],
    "fig4": [
        ("_p10", {"sweep": {"axis": "n_users", "values": [3, 10, 20, 30, 40, 50, 60, 70],
                            "fixed": 10, "replicas": 1000, "algorithms": ["proposed"]}}),
        ("_p20", {"sweep": {"axis": "n_users", "values": [3, 10, 20, 30, 40, 50, 60, 70],
                            "fixed": 20, "replicas": 1000, "algorithms": ["proposed"]}}),
    ],
}


class ConfigError(Exception):
    """Bad config file or flag combination; maps to exit code 2."""


def _build_dataclass(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for key, value in data.items():
        if key == "radio" and cls is scenario.ScenarioConfig:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}.radio: expected an object")
            value = _build_dataclass(radio.RadioConfig, value, f"{path}.radio")
        elif isinstance(value, list) and key.endswith("_range"):
            if len(value) != 2:
                raise ConfigError(f"{path}.{key}: expected [min, max]")
            value = tuple(value)
        elif isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, preset_overlay: dict | None = None) -> dict:
    """Read the JSON config file (if any) and apply it over a preset."""
    doc: dict = {}
    if path is not None:
        try:
            doc = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {path} must be a JSON object")
    merged = _merge(preset_overlay or {}, doc)
    known = {"scenario", "solver", "sweep", "workers", "out", "format"}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"config: unknown top-level keys {sorted(unknown)}")
    return merged


def _resolve_seed(flag_seed: int | None, config_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    env = os.environ.get("CELLMATCH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"CELLMATCH_SEED must be an integer, got {env!r}") from exc
    return config_seed if config_seed is not None else 0


def _scenario_config(doc: dict, seed: int) -> scenario.ScenarioConfig:
    data = dict(doc.get("scenario", {}))
    data["seed"] = seed
    return _build_dataclass(scenario.ScenarioConfig, data, "scenario")


def _solver_config(doc: dict, scenario_cfg: scenario.ScenarioConfig) -> SolverConfig:
    data = dict(doc.get("solver", {}))
    data.setdefault("hf_threshold", scenario_cfg.hf_threshold)
    return _build_dataclass(SolverConfig, data, "solver")


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    doc = load_config(args.config)
    cfg_seed = doc.get("scenario", {}).get("seed")
    seed = _resolve_seed(args.seed, cfg_seed)

    if args.fixture is not None:
        fixture_path = Path(args.fixture)
        if not fixture_path.is_file():
            print(f"error: fixture not found: {fixture_path}", file=sys.stderr)
            return USAGE_ERROR
        try:
            sc = scenario.load_fixture(fixture_path.read_text())
        except scenario.FixtureError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return USAGE_ERROR
        scen_cfg = None
    else:
        scen_cfg = _scenario_config(doc, seed)
        sc = scenario.generate(scen_cfg)

    solver = _solver_config(doc, scen_cfg or scenario.ScenarioConfig())
    report = matching.solve(sc, solver)
    model = UtilityModel(sc, solver)

    if args.format == "json-lines":
        record = report.to_dict()
        record["mean_user_utility"] = model.mean_user_utility(report.final)
        record["mean_cell_utility"] = model.mean_cell_utility(report.final)
        record["seed"] = sc.seed
        print(json.dumps(record, sort_keys=True))
    else:
        print(f"scenario: {sc.n_users} users, {sc.n_cells} cells, seed={sc.seed}")
        print(f"converged: {'yes' if report.converged else 'no'}"
              f" (outer iterations: {report.outer_iterations},"
              f" proposal rounds: {report.inner_proposal_rounds})")
        if report.cycle_detected:
            print("cycle detected: reporting best matching seen")
        if report.converged:
            print(f"stable: {'yes' if report.stable else 'no'}"
                  f" ({len(report.blocking_pairs)} blocking pairs)")
        print(f"iterations per user: {report.iterations_per_user():.3f}")
        print(f"mean user utility: {model.mean_user_utility(report.final):.6g}")
        print(f"mean cell utility: {model.mean_cell_utility(report.final):.6g}")
        occ = ", ".join(
            f"{c.id}:{len(report.final.cell_to_users[c.id])}/{c.quota}" for c in sc.cells
        )
        print(f"cell occupancy: {occ}")
        print(f"macro fallback: {report.final.mbs_occupancy()} users")

    if args.out is not None:
        Path(args.out).write_text(report.to_json() + "\n")
    return 0


# ---------------------------------------------------------------------------
# sweep


def _sweep_spec(doc: dict, base: scenario.ScenarioConfig, replicas: int | None) -> experiment.SweepSpec:
    data = dict(doc.get("sweep", {}))
    if not data:
        raise ConfigError("no sweep section in config and no --preset given")
    if replicas is not None:
        data["replicas"] = replicas
    data["base"] = base
    return _build_dataclass(experiment.SweepSpec, data, "sweep")


def cmd_sweep(args) -> int:
    overlays = PRESETS[args.preset] if args.preset else [("", {})]
    out_base = Path(args.out if args.out is not None else "sweep.csv")

    for suffix, overlay in overlays:
        doc = load_config(args.config, overlay)
        seed = _resolve_seed(args.seed, doc.get("scenario", {}).get("seed"))
        scen_cfg = _scenario_config(doc, seed)
        solver = _solver_config(doc, scen_cfg)
        spec = _sweep_spec(doc, scen_cfg, args.replicas)
        workers = args.workers if args.workers is not None else doc.get("workers", os.cpu_count() or 1)
        if not isinstance(workers, int) or workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {workers!r}")

        out = out_base.with_name(out_base.stem + suffix + out_base.suffix) if suffix else out_base
        fmt = args.format or doc.get("format", "csv")
        if fmt not in ("csv", "json-lines"):
            raise ConfigError(f"format must be csv or json-lines, got {fmt!r}")

        print(f"sweep {spec.axis}={list(spec.values)} ({spec.fixed_axis}={spec.fixed}, "
              f"{spec.replicas} replicas, seed={seed}) -> {out}", file=sys.stderr)
        rows = experiment.run_sweep(
            spec, solver, workers=workers, progress=lambda msg: print(msg, file=sys.stderr)
        )
        if fmt == "csv":
            experiment.write_csv(rows, out)
        else:
            with open(out, "w", encoding="ascii", newline="\n") as fh:
                for record in experiment.rows_to_dicts(rows):
                    fh.write(json.dumps(record, sort_keys=True) + "\n")
    return 0


# ---------------------------------------------------------------------------
# validate


def _check(name: str, observed: float, expected: float, tolerance: float) -> bool:
    ok = abs(observed - expected) <= tolerance
    status = "PASS" if ok else "FAIL"
    print(f"{status} {name}: observed {observed:.8g}, expected {expected:.8g} (tol {tolerance:.3g})")
    return ok


def cmd_validate(args) -> int:
    seed = _resolve_seed(args.seed, None)
    ok = True

    # closed-form identity of the failure probability
    ratios = np.linspace(0.0, 1.0, 1001)
    worst = max(
        abs(geometry.hf_probability(geometry.CellGeometry((0, 0), 100.0, 100.0 * t, 110.0))
            - (2 / math.pi) * math.asin(t))
        for t in ratios
    )
    ok &= _check("hf closed form vs arcsin identity (max grid error)", worst, 0.0, 1e-12)

    # Monte-Carlo trajectory oracle against the closed form
    samples = 1_000_000
    for ratio in (0.05, 0.1, 0.3, 0.6):
        geom = geometry.CellGeometry((0, 0), 100.0, 100.0 * ratio, 110.0)
        expected = geometry.hf_probability(geom)
        estimate = geometry.mc_hf_oracle(geom, samples, seed)
        sigma = math.sqrt(expected * (1 - expected) / samples)
        ok &= _check(f"mc trajectory oracle r/R={ratio}", estimate, expected, 3 * sigma)

    # chord CDF endpoints
    geom = geometry.CellGeometry((0, 0), 500.0, 10.0, 550.0)
    ok &= _check("chord CDF at 0", geometry.chord_cdf(geom, 0.0), 0.0, 1e-15)
    ok &= _check("chord CDF at 2R", geometry.chord_cdf(geom, 1000.0), 1.0, 1e-15)

    # Rayleigh power-gain mean: squared amplitude has mean 2*scale^2
    cfg = radio.RadioConfig()
    rng = np.random.default_rng(seed)
    g = rng.rayleigh(scale=cfg.rayleigh_scale, size=samples) ** 2
    expected_gain = 2 * cfg.rayleigh_scale**2
    ok &= _check("rayleigh power gain mean", float(g.mean()), expected_gain, 0.01 * expected_gain)

    # SINR denominator against brute-force summation
    sc = scenario.generate(scenario.ScenarioConfig(n_users=5, n_picos=4, seed=seed))
    model = UtilityModel(sc)
    powers = sc.station_powers()
    worst = 0.0
    for i in range(sc.n_users):
        for j in range(sc.n_cells + 1):
            brute = sum(
                powers[k] * sc.channels.gains[i, k] for k in range(sc.n_cells + 1) if k != j
            ) + sc.noise_power
            recomputed = powers[j] * sc.channels.gains[i, j] / model.sinr[i, j]
            worst = max(worst, abs(brute - recomputed) / brute)
    ok &= _check("sinr denominator vs brute force (max rel error)", worst, 0.0, 1e-12)

    return 0 if ok else RUNTIME_ERROR


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cellmatch",
        description="Context-aware user-to-small-cell association: solver and Monte-Carlo experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one scenario and report the matching")
    p_solve.add_argument("--config", help="JSON config file")
    p_solve.add_argument("--fixture", help="scenario fixture file (overrides generation)")
    p_solve.add_argument("--seed", type=int, help="master seed (fallback: CELLMATCH_SEED)")
    p_solve.add_argument("--format", choices=["text", "json-lines"], default="text")
    p_solve.add_argument("--out", help="write the machine-readable report here")
    p_solve.set_defaults(func=cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run a Monte-Carlo sweep and write aggregated metrics")
    p_sweep.add_argument("--config", help="JSON config file")
    p_sweep.add_argument("--preset", choices=sorted(PRESETS), help="standard experiment design")
    p_sweep.add_argument("--seed", type=int, help="master seed (fallback: CELLMATCH_SEED)")
    p_sweep.add_argument("--replicas", type=int, help="override replica count")
    p_sweep.add_argument("--workers", type=int, help="replica parallelism (default: CPU count)")
    p_sweep.add_argument("--out", help="output file (default sweep.csv)")
    p_sweep.add_argument("--format", choices=["csv", "json-lines"])
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="run the geometry and radio self-tests")
    p_val.add_argument("--seed", type=int, help="oracle seed (fallback: CELLMATCH_SEED)")
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, scenario.FixtureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
