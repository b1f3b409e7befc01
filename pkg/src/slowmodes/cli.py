"""Command-line front end.

Subcommands: ``nma``, ``slowflow``, ``direct``, ``steady``, ``project``,
``compare`` (each takes ``--config`` and ``--out``; ``--table`` where a modal
table is consumed) and ``sweep`` to fan independent configs over a worker
pool.  All outputs are UTF-8 CSV files with header rows plus a
``run.meta.json`` sidecar carrying units and provenance.

Exit codes: 0 success, 2 configuration error, 3 convergence failure,
4 incompatible artifacts.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .compare import compare_runs, load_run
from .errors import (
    ConfigError,
    ConvergenceError,
    IncompatibleArtifactsError,
    PartialTableError,
)
from .hbm import HarmonicConfig
from .manifold import project_initial_state, synthesize_state
from .model import load_model, _parse_forcing, _resolve_matrix
from .nma import ModalTable, NmaConfig, continue_modal_table, log_grid
from .reference import FullState, extract_envelope, integrate_full
from .slowflow import (
    SlowFlowConfig,
    SlowFlowState,
    integrate_slowflow,
    rest_state,
    steady_state_solutions,
    synthesize_response,
)

_TOP_KEYS = {"model", "nma", "slowflow", "direct", "steady", "project", "compare"}
_NMA_KEYS = {
    "mode", "n_harmonics", "n_samples", "amplitude_min", "amplitude_max",
    "n_points", "spacing", "newton_tol", "max_iter", "manifold_grid",
}
_SLOWFLOW_KEYS = {
    "initial", "t_end", "t_start", "n_output", "dofs", "extra_stiffness",
    "extra_damping", "forcing", "rel_tol", "abs_tol",
}
_DIRECT_KEYS = {
    "initial", "t_end", "t_start", "output_dt", "n_output", "dofs",
    "rel_tol", "abs_tol",
}
_STEADY_KEYS = {"omega"}
_PROJECT_KEYS = {"displacement", "velocity", "omega"}
_COMPARE_KEYS = {"run_a", "run_b", "dof", "amplitude_floor"}
_INITIAL_KEYS = {"displacement", "velocity", "dahl", "amplitude", "theta"}


def _check_keys(block, allowed, where):
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _load_config(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(data, _TOP_KEYS, str(path))
    return data, path.parent


def _config_digest(data):
    return hashlib.sha256(
        json.dumps(data, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _resolve_model(data, base_dir):
    if "model" not in data:
        raise ConfigError("config is missing the 'model' entry")
    entry = data["model"]
    if isinstance(entry, str):
        model_path = (base_dir / entry).resolve()
        if not model_path.exists():
            raise ConfigError(f"model file {model_path} not found")
        return load_model(model_path)
    return load_model(entry)


def _require_block(data, name):
    if name not in data:
        raise ConfigError(f"config is missing the '{name}' block")
    block = data[name]
    if not isinstance(block, dict):
        raise ConfigError(f"'{name}' block must be an object")
    return block


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_meta(out_dir, command, config_data, wallclock, model=None, extra=None):
    meta = {
        "command": command,
        "version": __version__,
        "units": "SI base units throughout; angles in radians, "
                 "frequencies in rad/s",
        "wallclock_s": wallclock,
        "config_hash": _config_digest(config_data),
    }
    if model is not None:
        meta["model_hash"] = model.full_hash()
        meta["surrogate_hash"] = model.surrogate_hash()
    if extra:
        meta.update(extra)
    (Path(out_dir) / "run.meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _load_table(args, model):
    if not getattr(args, "table", None):
        raise ConfigError("this command needs --table <modal table csv>")
    table = ModalTable.load(args.table)
    want = model.surrogate_hash()
    have = table.provenance.get("model_hash")
    if have is not None and have != want:
        raise IncompatibleArtifactsError(
            "modal table was computed for a different surrogate model "
            f"(table {have[:12]}..., model {want[:12]}...)"
        )
    return table


def _rom_config(block, table, model):
    n = table.n_dof
    extra_k = _resolve_matrix(block.get("extra_stiffness"), "extra_stiffness",
                              n, model.mass, model.base_stiffness)
    if extra_k is None and np.any(model.extra_stiffness):
        extra_k = model.extra_stiffness
    extra_c = _resolve_matrix(block.get("extra_damping"), "extra_damping",
                              n, model.mass, model.base_stiffness)
    if extra_c is None and np.any(model.extra_damping):
        extra_c = model.extra_damping
    if "forcing" in block:
        forcing = _parse_forcing(block["forcing"], n)
    else:
        forcing = model.forcing
    return SlowFlowConfig(
        table,
        extra_stiffness=extra_k,
        extra_damping=extra_c,
        forcing=forcing,
        rel_tol=block.get("rel_tol", 1e-8),
        abs_tol=block.get("abs_tol", 1e-10),
    )


def _initial_full_state(block, model, table=None):
    entry = block.get("initial", "rest")
    n = model.n_dof
    m = model.n_dahl
    if entry == "rest":
        return FullState(u=np.zeros(n), v=np.zeros(n), dahl=(0.0,) * m)
    if not isinstance(entry, dict):
        raise ConfigError("'initial' must be 'rest' or an object")
    _check_keys(entry, _INITIAL_KEYS, "initial")
    if "amplitude" in entry:
        if table is None:
            raise ConfigError("an amplitude initial state needs --table")
        point = synthesize_state(table, float(entry["amplitude"]),
                                 float(entry.get("theta", 0.0)))
        u, v = point.u, point.v
    else:
        u = np.asarray(entry.get("displacement", np.zeros(n)), dtype=float)
        v = np.asarray(entry.get("velocity", np.zeros(n)), dtype=float)
    if u.shape != (n,) or v.shape != (n,):
        raise ConfigError("initial state dimensions do not match the model")
    dahl = tuple(float(x) for x in entry.get("dahl", (0.0,) * m))
    return FullState(u=u, v=v, dahl=dahl)


def _initial_slow_state(block, rom, table, t_start):
    entry = block.get("initial", "rest")
    if entry == "rest":
        return rest_state(rom, t0=t_start)
    if not isinstance(entry, dict):
        raise ConfigError("'initial' must be 'rest' or an object")
    _check_keys(entry, _INITIAL_KEYS, "initial")
    if "amplitude" in entry:
        return SlowFlowState(a=float(entry["amplitude"]),
                             theta=float(entry.get("theta", 0.0)), t=t_start)
    u = np.asarray(entry.get("displacement", np.zeros(table.n_dof)), dtype=float)
    v = np.asarray(entry.get("velocity", np.zeros(table.n_dof)), dtype=float)
    omega = None
    if rom.is_forced:
        omega = float(rom.forcing.program.instantaneous_frequency(t_start))
        if omega <= 0.0:
            omega = None
    a0, theta0, dist = project_initial_state(table, u, v, omega=omega)
    print(f"projected initial state: a0={a0:.6g} theta0={theta0:.6g} "
          f"residual={dist:.3g}")
    return SlowFlowState(a=max(a0, rom.a_floor), theta=theta0, t=t_start)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_nma(args):
    data, base = _load_config(args.config)
    model = _resolve_model(data, base)
    block = _require_block(data, "nma")
    _check_keys(block, _NMA_KEYS, "nma")
    for key in ("amplitude_min", "amplitude_max", "n_points"):
        if key not in block:
            raise ConfigError(f"nma block is missing {key!r}")
    spacing = block.get("spacing", "log")
    if spacing == "log":
        grid = log_grid(float(block["amplitude_min"]),
                        float(block["amplitude_max"]), int(block["n_points"]))
    elif spacing == "linear":
        grid = np.linspace(float(block["amplitude_min"]),
                           float(block["amplitude_max"]), int(block["n_points"]))
    else:
        raise ConfigError("spacing must be 'log' or 'linear'")
    config = NmaConfig(
        harmonic=HarmonicConfig(int(block.get("n_harmonics", 7)),
                                block.get("n_samples")),
        amplitude_grid=grid,
        mode_index=int(block.get("mode", 0)),
        newton_tol=float(block.get("newton_tol", 1e-9)),
        max_iter=int(block.get("max_iter", 50)),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    partial = None
    try:
        table = continue_modal_table(model, config)
    except PartialTableError as err:
        partial = err
        table = err.table
    wallclock = time.perf_counter() - t0
    if table is not None:
        table.save(out / "table.csv")
        _write_csv(
            out / "backbone.csv",
            ["a", "omega0", "delta", "energy"],
            [
                (table.a[i], table.omega0[i], table.delta[i],
                 0.5 * table.omega0[i] ** 2 * table.a[i] ** 2)
                for i in range(table.n_entries)
            ],
        )
        grid_block = block.get("manifold_grid")
        if grid_block:
            _check_keys(grid_block, {"n_phases", "dofs"}, "nma.manifold_grid")
            n_phases = int(grid_block.get("n_phases", 64))
            dofs = [int(d) for d in grid_block.get("dofs",
                                                   range(table.n_dof))]
            phases = 2.0 * np.pi * np.arange(n_phases) / n_phases
            rows = []
            for a in table.a:
                for phi in phases:
                    point = synthesize_state(table, float(a), float(phi))
                    rows.append((a, phi, *point.u[dofs]))
            _write_csv(out / "manifold.csv",
                       ["a", "phi"] + [f"u_d{d}" for d in dofs], rows)
    _write_meta(out, "nma", data, wallclock, model,
                extra={"n_entries": 0 if table is None else table.n_entries,
                       "partial": partial is not None})
    if partial is not None:
        print(f"continuation failed: {partial}", file=sys.stderr)
        if table is not None:
            print(f"partial table with {table.n_entries} entries saved",
                  file=sys.stderr)
        raise partial
    print(f"modal table with {table.n_entries} entries written to "
          f"{out / 'table.csv'} ({wallclock:.2f} s)")


def cmd_slowflow(args):
    data, base = _load_config(args.config)
    model = _resolve_model(data, base)
    block = _require_block(data, "slowflow")
    _check_keys(block, _SLOWFLOW_KEYS, "slowflow")
    if "t_end" not in block:
        raise ConfigError("slowflow block is missing 't_end'")
    table = _load_table(args, model)
    rom = _rom_config(block, table, model)
    t_start = float(block.get("t_start", 0.0))
    initial = _initial_slow_state(block, rom, table, t_start)
    dofs = [int(d) for d in block.get("dofs", range(table.n_dof))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj = integrate_slowflow(rom, initial, float(block["t_end"]),
                              n_output=int(block.get("n_output", 2000)))
    resp = synthesize_response(table, traj, dofs=dofs)
    wallclock = time.perf_counter() - t0
    header = ["t", "a", "Theta", "Omega"]
    cols = [traj.t, traj.a, traj.theta, traj.omega]
    for j, d in enumerate(dofs):
        header += [f"env_upper_d{d}", f"env_lower_d{d}", f"u_synth_d{d}"]
        cols += [resp.envelope_upper[:, j], resp.envelope_lower[:, j],
                 resp.u[:, j]]
    _write_csv(out / "slowflow.csv", header, np.column_stack(cols))
    _write_meta(out, "slowflow", data, wallclock, model,
                extra={"dofs": dofs, "table": str(args.table)})
    print(f"slow-flow trajectory written to {out / 'slowflow.csv'} "
          f"({wallclock:.3f} s wallclock)")


def cmd_direct(args):
    data, base = _load_config(args.config)
    model = _resolve_model(data, base)
    block = _require_block(data, "direct")
    _check_keys(block, _DIRECT_KEYS, "direct")
    if "t_end" not in block:
        raise ConfigError("direct block is missing 't_end'")
    table = ModalTable.load(args.table) if getattr(args, "table", None) else None
    initial = _initial_full_state(block, model, table)
    t_end = float(block["t_end"])
    t_start = float(block.get("t_start", 0.0))
    if "output_dt" in block:
        t_eval = np.arange(t_start, t_end + 0.5 * float(block["output_dt"]),
                           float(block["output_dt"]))
    else:
        t_eval = np.linspace(t_start, t_end, int(block.get("n_output", 2000)))
    dofs = [int(d) for d in block.get("dofs", range(model.n_dof))]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    traj = integrate_full(
        model, initial, t_end, t_eval=t_eval, t_start=t_start,
        rel_tol=float(block.get("rel_tol", 1e-9)),
        abs_tol=float(block.get("abs_tol", 1e-12)),
    )
    wallclock = time.perf_counter() - t0
    header = (["t"] + [f"u_d{d}" for d in range(model.n_dof)]
              + [f"v_d{d}" for d in range(model.n_dof)]
              + [f"dahl_{i}" for i in range(model.n_dahl)])
    _write_csv(out / "trajectory.csv", header,
               np.column_stack([traj.t, traj.u, traj.v, traj.dahl]))
    for d in dofs:
        env = extract_envelope(traj, d)
        rows = []
        for t, u in zip(env.t_peaks, env.u_peaks):
            rows.append((t, u, 1.0))
        for t, u in zip(env.t_troughs, env.u_troughs):
            rows.append((t, u, 0.0))
        rows.sort(key=lambda r: r[0])
        _write_csv(out / f"envelope_d{d}.csv", ["t", "value", "is_peak"], rows)
    _write_meta(out, "direct", data, wallclock, model,
                extra={"dofs": dofs,
                       "state_dimension": 2 * model.n_dof + model.n_dahl})
    print(f"direct trajectory written to {out / 'trajectory.csv'} "
          f"({wallclock:.3f} s wallclock)")


def cmd_steady(args):
    data, base = _load_config(args.config)
    model = _resolve_model(data, base)
    block = _require_block(data, "steady")
    _check_keys(block, _STEADY_KEYS, "steady")
    if "omega" not in block:
        raise ConfigError("steady block is missing 'omega'")
    entry = block["omega"]
    if isinstance(entry, dict):
        _check_keys(entry, {"min", "max", "n"}, "steady.omega")
        omegas = np.linspace(float(entry["min"]), float(entry["max"]),
                             int(entry["n"]))
    elif isinstance(entry, (int, float)):
        omegas = np.array([float(entry)])
    else:
        omegas = np.asarray([float(x) for x in entry])
    table = _load_table(args, model)
    rom_block = data.get("slowflow", {})
    rom = _rom_config(rom_block, table, model)
    if not rom.is_forced:
        raise ConfigError("steady-state analysis requires forcing "
                          "(model or slowflow block)")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows = []
    for omega in omegas:
        for a, theta in steady_state_solutions(rom, omega):
            rows.append((omega, a, theta, 1.0))
    wallclock = time.perf_counter() - t0
    _write_csv(out / "steady.csv", ["Omega", "a", "Theta", "stability_unknown"],
               rows)
    _write_meta(out, "steady", data, wallclock, model)
    print(f"{len(rows)} steady states written to {out / 'steady.csv'}")


def cmd_project(args):
    data, base = _load_config(args.config)
    model = _resolve_model(data, base)
    block = _require_block(data, "project")
    _check_keys(block, _PROJECT_KEYS, "project")
    table = _load_table(args, model)
    u0 = np.asarray(block.get("displacement", np.zeros(table.n_dof)),
                    dtype=float)
    v0 = np.asarray(block.get("velocity", np.zeros(table.n_dof)), dtype=float)
    omega = block.get("omega")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    a0, theta0, dist = project_initial_state(
        table, u0, v0, omega=None if omega is None else float(omega)
    )
    wallclock = time.perf_counter() - t0
    _write_csv(out / "projection.csv", ["a0", "theta0", "residual"],
               [(a0, theta0, dist)])
    _write_meta(out, "project", data, wallclock, model)
    print(f"a0={a0:.8g} theta0={theta0:.8g} residual={dist:.6g}")
    if dist > 1e-6 * max(1.0, float(np.linalg.norm(u0))):
        print("note: nonzero residual means the initial state is off the "
              "manifold; the reduced model cannot capture the remainder")


def cmd_compare(args):
    data, _ = _load_config(args.config)
    block = _require_block(data, "compare")
    _check_keys(block, _COMPARE_KEYS, "compare")
    for key in ("run_a", "run_b", "dof"):
        if key not in block:
            raise ConfigError(f"compare block is missing {key!r}")
    base = Path(args.config).parent
    run_a = load_run((base / block["run_a"]).resolve())
    run_b = load_run((base / block["run_b"]).resolve())
    metrics = compare_runs(run_a, run_b, int(block["dof"]),
                           amplitude_floor=float(block.get("amplitude_floor",
                                                           0.0)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(
        json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    scalar_keys = [k for k, v in metrics.items() if isinstance(v, (int, float))]
    _write_csv(out / "compare.csv", scalar_keys,
               [[float(metrics[k]) for k in scalar_keys]])
    _write_meta(out, "compare", data, 0.0)
    print(f"compared DOF {block['dof']} over t in "
          f"[{metrics['span'][0]:.6g}, {metrics['span'][1]:.6g}] "
          f"({metrics['n_matched']} matched points):")
    print(f"  envelope relative L2 error : {metrics['envelope_rms_rel']:.4%}")
    print(f"  peak amplitude rel. error  : "
          f"{metrics['peak_amplitude_rel_error']:.4%}")
    print(f"  peak time error            : {metrics['peak_time_error']:.6g} s")
    if "speedup" in metrics:
        print(f"  speedup (direct / ROM)     : {metrics['speedup']:.1f}x")


def cmd_sweep(args):
    """Fan the same command over several configs with isolated outputs.

    Worker count comes from the SLOWMODES_WORKERS environment variable
    (default: CPU count); each job writes to ``out/<config stem>/``.
    """
    workers = int(os.environ.get("SLOWMODES_WORKERS", os.cpu_count() or 1))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = []
    for config in args.configs:
        sub = out / Path(config).stem
        jobs.append((args.sweep_command, config, str(sub), args.table))
    failures = 0
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {pool.submit(_run_job, job): job for job in jobs}
        for fut in concurrent.futures.as_completed(futures):
            job = futures[fut]
            code = fut.result()
            status = "ok" if code == 0 else f"exit {code}"
            print(f"[{status}] {job[0]} {job[1]} -> {job[2]}")
            if code != 0:
                failures = max(failures, code)
    sys.exit(failures)


def _run_job(job):
    command, config, out, table = job
    argv = [command, "--config", config, "--out", out]
    if table:
        argv += ["--table", table]
    return main(argv)


# ---------------------------------------------------------------------------

def _build_parser():
    parser = argparse.ArgumentParser(
        prog="slowmodes",
        description="Nonlinear modes and slow-flow reduced order models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, table=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", required=True, help="output directory")
        if table:
            p.add_argument("--table", help="modal table CSV")
        p.set_defaults(func=func)
        return p

    add("nma", cmd_nma, "compute a modal table by amplitude continuation")
    add("slowflow", cmd_slowflow, "integrate the reduced order model",
        table=True)
    add("direct", cmd_direct, "direct time integration of the full model",
        table=True)
    add("steady", cmd_steady, "steady-state amplitudes at given frequencies",
        table=True)
    add("project", cmd_project, "project an initial state onto the manifold",
        table=True)
    add("compare", cmd_compare, "compare two run outputs")

    p = sub.add_parser("sweep", help="fan independent configs over a worker pool")
    p.add_argument("sweep_command",
                   choices=["nma", "slowflow", "direct", "steady", "project"])
    p.add_argument("--configs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--table", help="modal table applied to every job")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except IncompatibleArtifactsError as exc:
        print(f"incompatible artifacts: {exc}", file=sys.stderr)
        return 4
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
