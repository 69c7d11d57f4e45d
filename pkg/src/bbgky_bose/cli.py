"""Command-line entry point: TOML scenario configs in, CSV + manifest out.

    bbgky-bose run <config.toml> [--out DIR] [--threads K]
    bbgky-bose validate <config.toml>

Exit codes: 0 all runs completed or aborted with a diagnosed reason,
2 invalid configuration, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import __version__
from .corrections import CorrectionConfig
from .integrator import IntegratorConfig
from .runner import RunOutcome, ScenarioConfig, run_scenario

_FLOAT_FMT = "%.12e"


class ConfigError(Exception):
    pass


def load_config(path: str | Path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from e
    try:
        scenario = raw.get("scenario", {})
        corr = raw.get("correction", {})
        integ = raw.get("integrator", {})
        diag = raw.get("diagnostics", {})
        out = raw.get("output", {})
        cfg = ScenarioConfig(
            N=int(scenario["N"]),
            lam=scenario.get("lambda"),
            U=scenario.get("U"),
            orders=tuple(int(o) for o in scenario.get("orders", [])),
            t_final=float(scenario.get("t_final", 10.0)),
            dt=float(scenario.get("dt", 0.1)),
            modes=tuple(corr.get("modes", ["none"])),
            exact=bool(scenario.get("exact", True)),
            seed=int(scenario.get("seed", 0)),
            correction=CorrectionConfig(
                mode="none",
                epsilon=float(corr.get("epsilon", -1e-10)),
                eta=float(corr.get("eta", 10.0)),
                max_iter=int(corr.get("max_iter", 500)),
                dt=float(scenario.get("dt", 0.1)),
                purify_feedback=bool(corr.get("purify_feedback", False)),
            ),
            integrator=IntegratorConfig(
                rtol=float(integ.get("rtol", 1e-10)),
                atol=float(integ.get("atol", 1e-12)),
                dt=float(scenario.get("dt", 0.1)),
                t_final=float(scenario.get("t_final", 10.0)),
                max_steps_per_dt=int(integ.get("max_steps_per_dt", 10**6)),
                method=str(integ.get("method", "dopri5")),
            ),
            cluster_orders=diag.get("cluster_orders"),
            tracedist_orders=tuple(diag.get("tracedist_orders", [1, 2, 3, 4])),
            closure_strategy=str(diag.get("closure", "compat")),
            cluster_weights=str(diag.get("cluster_weights", "wick")),
            divergence_cap=float(diag.get("divergence_cap", 10.0)),
            out_dir=out.get("directory"),
            threads=None,
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"invalid configuration: {e}") from e
    return cfg


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for cell in row:
                if isinstance(cell, (int, np.integer)):
                    cells.append(str(int(cell)))
                else:
                    cells.append(_FLOAT_FMT % float(cell))
            fh.write(",".join(cells) + "\n")


def write_run_files(outcome: RunOutcome, run_dir: Path, cfg: ScenarioConfig,
                    exact: RunOutcome | None) -> dict[str, str]:
    """Emit one CSV per observable family; returns the file map for the manifest."""
    run_dir.mkdir(parents=True, exist_ok=True)
    traj = outcome.trajectory
    files: dict[str, str] = {}

    def emit(name, header, rows):
        _write_csv(run_dir / name, header, rows)
        files[name.removesuffix(".csv")] = name

    emit("imbalance.csv", ["t", "imbalance"],
         [(r.t, r.imbalance) for r in traj.records])
    orders = sorted(traj.records[0].nps) if traj.records else []
    for o in orders:
        emit(f"np_o{o}.csv", ["t"] + [f"np{i+1}" for i in range(len(traj.records[0].nps[o]))],
             [(r.t, *r.nps[o]) for r in traj.records])
    if traj.records and traj.records[0].k_eigs is not None:
        nxi = len(traj.records[0].k_eigs)
        emit("kspec.csv", ["t"] + [f"xi{i+1}" for i in range(nxi)],
             [(r.t, *r.k_eigs) for r in traj.records])
    emit("energy.csv", ["t", "energy", "trace"],
         [(r.t, r.energy, r.trace) for r in traj.records])
    if outcome.obar is not None:
        emit("steps.csv", ["t", "steps"], [(r.t, r.steps) for r in traj.records])
    if outcome.cluster_norms:
        k = len(outcome.cluster_norms[0])
        emit("clusternorms.csv", ["t"] + [f"c{o}" for o in range(1, k + 1)],
             [(r.t, *n) for r, n in zip(traj.records, outcome.cluster_norms)])
    if outcome.fock_probs:
        nn = len(outcome.fock_probs[0])
        emit("fockprob.csv", ["t"] + [f"p{n}" for n in range(nn)],
             [(r.t, *p) for r, p in zip(traj.records, outcome.fock_probs)])
    events = [(r.t, r.correction) for r in traj.records if r.correction]
    if outcome.mode in ("purify", "eom"):
        emit("corrections.csv",
             ["t", "d", "dprime", "norm", "iterations", "converged",
              "pt_residual", "energy_residual"],
             [(t, e["d"], e["dprime"], e["norm"], e["iterations"],
               int(e["converged"]), e["pt_residual"], e["energy_residual"])
              for t, e in events])
    if outcome.obar is not None and exact is not None and cfg.N <= 200:
        from .diagnostics import trace_distance
        exact_by_t = {round(r.t, 9): r for r in exact.trajectory.records}
        for o in cfg.tracedist_orders:
            if o > outcome.obar:
                continue
            rows = []
            for r in traj.records:
                ref = exact_by_t.get(round(r.t, 9))
                if ref is None or o not in ref.rho:
                    continue
                rows.append((r.t, trace_distance(r.rho[o], ref.rho[o])))
            emit(f"tracedist_o{o}.csv", ["t", "distance"], rows)
    return files


def write_outputs(outcomes: dict[str, RunOutcome], cfg: ScenarioConfig, out_dir: Path) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    exact = outcomes.get("exact")
    manifest_runs = []
    for label in sorted(outcomes):
        outcome = outcomes[label]
        files = write_run_files(outcome, out_dir / label, cfg, exact if label != "exact" else None)
        energies = outcome.trajectory.series(lambda r: r.energy)
        drift = float(np.max(np.abs(energies - energies[0]))) if len(energies) else 0.0
        rel = drift / max(abs(energies[0]), 1e-12) if len(energies) else 0.0
        manifest_runs.append({
            "label": label,
            "kind": "exact" if outcome.obar is None else "truncated",
            "obar": outcome.obar,
            "mode": outcome.mode,
            "termination": outcome.termination,
            "diagnostic": outcome.diagnostic,
            "t_reached": float(outcome.trajectory.records[-1].t) if outcome.trajectory.records else 0.0,
            "wall_time_s": round(outcome.wall_time_s, 3),
            "energy": {"initial": float(energies[0]) if len(energies) else None,
                       "max_abs_drift": drift, "max_rel_drift": rel},
            "files": files,
        })
    manifest = {
        "schema": 1,
        "generator": f"bbgky-bose {__version__}",
        "versions": {
            "bbgky_bose": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "config": {
            "N": cfg.N, "lambda": cfg.lam, "U": cfg.U,
            "orders": list(cfg.orders), "t_final": cfg.t_final, "dt": cfg.dt,
            "modes": list(cfg.modes), "exact": cfg.exact, "seed": cfg.seed,
            "correction": {k: v for k, v in asdict(cfg.correction).items() if k != "mode"},
            "integrator": asdict(cfg.integrator),
            "closure": cfg.closure_strategy,
            "cluster_weights": cfg.cluster_weights,
            "tracedist_orders": list(cfg.tracedist_orders),
            "cluster_orders": cfg.cluster_orders,
        },
        "runs": manifest_runs,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest


def run_command(config_path: str, out_override: str | None, threads: int | None) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if threads is None:
        env = os.environ.get("BBGKY_BOSE_THREADS")
        threads = int(env) if env else None
    if threads is not None:
        cfg = ScenarioConfig(**{**_cfg_kwargs(cfg), "threads": threads})
    out_dir = Path(out_override or cfg.out_dir or "out")
    outcomes = run_scenario(cfg)
    try:
        manifest = write_outputs(outcomes, cfg, out_dir)
    except OSError as e:
        print(f"error: could not write outputs: {e}", file=sys.stderr)
        return 3
    for run in manifest["runs"]:
        print(f"{run['label']}: {run['termination']} (t = {run['t_reached']:.1f}, "
              f"{run['wall_time_s']:.1f}s)")
    return 0


def _cfg_kwargs(cfg: ScenarioConfig) -> dict:
    return {
        "N": cfg.N, "lam": cfg.lam, "U": cfg.U, "orders": cfg.orders,
        "t_final": cfg.t_final, "dt": cfg.dt, "modes": cfg.modes,
        "exact": cfg.exact, "seed": cfg.seed, "correction": cfg.correction,
        "integrator": cfg.integrator, "cluster_orders": cfg.cluster_orders,
        "tracedist_orders": cfg.tracedist_orders,
        "closure_strategy": cfg.closure_strategy,
        "cluster_weights": cfg.cluster_weights,
        "divergence_cap": cfg.divergence_cap, "out_dir": cfg.out_dir,
        "threads": cfg.threads,
    }


def validate_command(config_path: str) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return 2
    print(f"ok: N={cfg.N}, lambda={cfg.params.lam:.6g}, orders={list(cfg.orders)}, "
          f"modes={list(cfg.modes)}, t_final={cfg.t_final}/J, runs={cfg.run_labels()}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="bbgky-bose",
        description="Truncated BBGKY hierarchy simulator for the Bose-Hubbard dimer")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="execute a scenario config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config)")
    p_run.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: BBGKY_BOSE_THREADS or core count)")
    p_val = sub.add_parser("validate", help="check a scenario config")
    p_val.add_argument("config")
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_command(args.config, args.out, args.threads)
    return validate_command(args.config)


if __name__ == "__main__":
    sys.exit(main())
