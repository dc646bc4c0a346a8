"""Command-line entry point: run orchestration and artifact emission.

Modes
-----
simulate         successive-approximation run from generated compatible data;
                 emits convergence CSV, energy CSV, and final field files.
verify-transform chain-rule oracle refinement study; emits per-term orders.
mms              manufactured-solution convergence study for one sub-solver.
energy-report    zero-forcing free-surface relaxation; emits the per-step
                 energy trace with a summary row.
gen-data         compatible initial data files plus the compatibility report.

Exit codes: 0 success, 2 configuration error, 3 compatibility failure,
4 no convergence, 5 Jacobian window violation.  Failures also write a
machine-readable JSON description to stderr (and error.json in the output
directory when possible).

The environment variable CNS_THREADS caps the worker threads used for
independent study cases (default: all cores).  Results are reduced in a
fixed order, so runs are bit-identical regardless of the thread count.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from cns import config as cfgmod
from cns import fileio
from cns.config import ConfigError, RunConfig
from cns.energy import quintuple_norm, stokes_energy
from cns.grid import SlabGrid, SurfaceField, VectorField
from cns.picard import (CompatibilityError, JacobianWindowError, PicardConfig,
                        PicardConvergenceError, check_compatibility,
                        invert_to_moving_domain, run)
from cns.solvers import (SolverConvergenceError, StokesProblem,
                         solve_stokes_step)
from cns.verify import make_compatible_data, manufactured_case, mms_study, \
    oracle_convergence

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPATIBILITY = 3
EXIT_NO_CONVERGENCE = 4
EXIT_JACOBIAN = 5


def _n_threads() -> int:
    raw = os.environ.get("CNS_THREADS", "")
    if raw.strip():
        try:
            n = int(raw)
        except ValueError as exc:
            raise ConfigError(f"CNS_THREADS must be an integer, got "
                              f"{raw!r}") from exc
        if n < 1:
            raise ConfigError("CNS_THREADS must be ≥1")
        return n
    return os.cpu_count() or 1


def _map_ordered(fn, items):
    """Map fn over items with the configured worker cap; results are
    collected in input order so the reduction is deterministic."""
    workers = min(_n_threads(), max(len(items), 1))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _picard_config(rc: RunConfig, grid: SlabGrid) -> PicardConfig:
    data = make_compatible_data(rc["data"]["seed"], rc["data"]["amplitude"],
                                grid)
    phys = rc["physics"]
    pic = rc["picard"]
    return PicardConfig(grid=grid, potential=rc.potential(),
                        c_hat=phys["c_hat"], gamma=phys["gamma"],
                        sigma=phys["sigma"], max_sweeps=pic["max_sweeps"],
                        diff_tol=pic["diff_tol"],
                        smallness_threshold=pic["smallness_threshold"],
                        compat_tol=pic["compat_tol"], **data)


def _write_bundle(out, grid, tag, w, h, v, eta, q=None):
    fileio.write_field(os.path.join(out, f"w_{tag}.cnsf1"), w, grid)
    fileio.write_field(os.path.join(out, f"h_{tag}.cnsf1"), h, grid)
    for c in range(3):
        fileio.write_field(os.path.join(out, f"v{c + 1}_{tag}.cnsf1"),
                           v[c], grid)
    if q is not None:
        fileio.write_field(os.path.join(out, f"q_{tag}.cnsf1"), q, grid)
    fileio.write_surface(os.path.join(out, f"eta_{tag}.cnss1"), eta, grid)


def _mode_gen_data(rc: RunConfig, out: str) -> int:
    grid = rc.build_grid()
    pcfg = _picard_config(rc, grid)
    _write_bundle(out, grid, "0", pcfg.w0, pcfg.h0, pcfg.v0, pcfg.eta0)
    report = check_compatibility(pcfg)
    with open(os.path.join(out, "compatibility.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    print(json.dumps({"mode": "gen-data", "out": out,
                      "compatibility": report}, sort_keys=True))
    return EXIT_OK


def _mode_simulate(rc: RunConfig, out: str) -> int:
    grid = rc.build_grid()
    pcfg = _picard_config(rc, grid)
    result = run(pcfg)
    it = result.iterate

    if rc["output"]["convergence_csv"]:
        fileio.write_csv(os.path.join(out, "convergence.csv"),
                         result.report_rows,
                         ["sweep", "iterate", "diff_norm", "ratio",
                          "jacobian_min", "jacobian_max"])
    if rc["output"]["energy_csv"]:
        rep = quintuple_norm(it.w, it.h, it.v, it.q, it.eta, grid)
        rows = [{"component": k, "value": v, "surrogate": s}
                for k, v, s in rep.rows()]
        rows.append({"component": "total", "value": rep.total,
                     "surrogate": False})
        fileio.write_csv(os.path.join(out, "energy.csv"), rows,
                         ["component", "value", "surrogate"])

    every = rc["output"]["fields_every"]
    levels = list(range(0, grid.Nt + 1, every)) if every > 0 else []
    if grid.Nt not in levels:
        levels.append(grid.Nt)
    for n in levels:
        _write_bundle(out, grid, f"{n:06d}", it.w[n], it.h[n],
                      [it.v[c][n] for c in range(3)], it.eta[n], q=it.q[n])

    moving = invert_to_moving_domain(it, pcfg)
    summary = {"mode": "simulate", "sweeps": result.sweeps,
               "final_diff_norm": result.deltas[-1],
               "ratios": result.ratios,
               "jacobian_min": it.jmin, "jacobian_max": it.jmax,
               "density_min": moving.m_min, "oxygen_min": moving.c_min}
    with open(os.path.join(out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def _mode_verify_transform(rc: RunConfig, out: str) -> int:
    nz_list = (9, 17, 33)
    case_names = ("flat", "generic")
    reports = _map_ordered(
        lambda name: oracle_convergence(manufactured_case(name),
                                        nz_list=nz_list),
        case_names)
    rows = []
    for name, rep in zip(case_names, reports):
        for term, order in rep["orders"].items():
            for dz, err in zip(rep["dz"], rep["errors"][term]):
                rows.append({"case": name, "term": term, "dz": dz,
                             "error": err, "order": order})
    fileio.write_csv(os.path.join(out, "oracle_orders.csv"), rows,
                     ["case", "term", "dz", "error", "order"])
    worst = min(o for _, rep in zip(case_names, reports)
                for o in rep["orders"].values())
    print(json.dumps({"mode": "verify-transform",
                      "worst_order": worst}, sort_keys=True))
    return EXIT_OK


def _mode_mms(rc: RunConfig, out: str) -> int:
    solver = rc["mms"]["solver"]
    kind = rc["mms"]["kind"]
    if solver == "stationary" and kind == "temporal":
        raise ConfigError("mms.kind=temporal is not defined for the "
                          "stationary solver (it has no time step)")
    table = mms_study(solver, kind)
    fileio.write_csv(os.path.join(out, "mms.csv"), table.rows())
    print(json.dumps({"mode": "mms", "solver": solver, "kind": kind,
                      "order": table.order}, sort_keys=True))
    return EXIT_OK


def _mode_energy_report(rc: RunConfig, out: str) -> int:
    grid = rc.build_grid()
    phys = rc["physics"]
    amp = rc["data"]["amplitude"]
    eta0 = amp * np.cos(2.0 * np.pi * grid.x1 / grid.L1)[:, None] \
        * np.ones((1, grid.N2))
    problem = StokesProblem(grid=grid,
                            v0=VectorField.from_arrays(
                                grid, *(np.zeros(grid.shape)
                                        for _ in range(3))),
                            eta0=SurfaceField(grid, eta0),
                            gamma=phys["gamma"], sigma=phys["sigma"])
    state = problem.initial_state()
    rows = []
    energy = stokes_energy(state.v, state.eta, phys["gamma"], phys["sigma"])
    rows.append({"step": 0, "t": 0.0, "energy": energy, "drop": 0.0})
    nonincreasing = True
    for n in range(1, grid.Nt + 1):
        state = solve_stokes_step(state, problem, n)
        new_energy = stokes_energy(state.v, state.eta, phys["gamma"],
                                   phys["sigma"])
        drop = new_energy - energy
        nonincreasing = nonincreasing and drop <= 1e-12
        rows.append({"step": n, "t": n * grid.dt, "energy": new_energy,
                     "drop": drop})
        energy = new_energy
    rows.append({"step": "summary", "t": grid.T, "energy": energy,
                 "drop": "nonincreasing" if nonincreasing else "INCREASED"})
    fileio.write_csv(os.path.join(out, "energy_trace.csv"), rows,
                     ["step", "t", "energy", "drop"])
    print(json.dumps({"mode": "energy-report",
                      "nonincreasing": nonincreasing,
                      "final_energy": energy}, sort_keys=True))
    return EXIT_OK


_MODE_RUNNERS = {
    "simulate": _mode_simulate,
    "verify-transform": _mode_verify_transform,
    "mms": _mode_mms,
    "energy-report": _mode_energy_report,
    "gen-data": _mode_gen_data,
}


def run_mode(rc: RunConfig, out: str) -> int:
    """Dispatch one validated configuration; returns the exit status."""
    if rc.mode not in _MODE_RUNNERS:
        raise ConfigError(f"mode must be one of {', '.join(cfgmod.MODES)} "
                          f"(got {rc.mode!r})")
    os.makedirs(out, exist_ok=True)
    return _MODE_RUNNERS[rc.mode](rc, out)


def _fail(out, code, kind, message):
    doc = {"error": {"code": code, "kind": kind, "message": message}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    try:
        if out:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "error.json"), "w") as f:
                json.dump(doc, f, indent=2, sort_keys=True)
    except OSError:
        pass
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cns",
        description="Free-boundary chemotaxis-fluid simulator on the "
                    "flattened slab.")
    parser.add_argument("mode", choices=cfgmod.MODES)
    parser.add_argument("--config", default=None,
                        help="JSON configuration file (defaults apply "
                             "when omitted, but grid sizes are required)")
    parser.add_argument("--set", dest="overrides", action="append",
                        default=[], metavar="KEY.PATH=VALUE",
                        help="override a configuration entry")
    parser.add_argument("--out", default="out",
                        help="output directory for artifacts")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            with open(args.config, encoding="utf-8") as f:
                doc = json.load(f)
            if not isinstance(doc, dict):
                raise ConfigError("configuration root must be a JSON object")
        else:
            doc = {}
        for assignment in args.overrides:
            cfgmod.apply_override(doc, assignment)
        doc["mode"] = args.mode
        rc = cfgmod.validate(doc)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        return _fail(args.out, EXIT_CONFIG, "config", str(exc))

    try:
        return run_mode(rc, args.out)
    except ConfigError as exc:
        return _fail(args.out, EXIT_CONFIG, "config", str(exc))
    except CompatibilityError as exc:
        return _fail(args.out, EXIT_COMPATIBILITY, "compatibility", str(exc))
    except (PicardConvergenceError, SolverConvergenceError) as exc:
        return _fail(args.out, EXIT_NO_CONVERGENCE, "no-convergence",
                     str(exc))
    except JacobianWindowError as exc:
        return _fail(args.out, EXIT_JACOBIAN, "jacobian-window", str(exc))


if __name__ == "__main__":
    sys.exit(main())
