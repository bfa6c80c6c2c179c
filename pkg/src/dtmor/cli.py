"""Batch command-line front end.

Subcommands: generate, gramian, reduce, bounds, simulate, pipeline.  The
pipeline reproduces the experimental protocol end to end: build or load a
system, approximate the (time-limited) Gramians, reduce by BT and/or TLBT,
evaluate the error bounds, simulate, and emit plot-ready CSV files plus a
JSON report.  Exit codes: 0 success, 2 configuration error, 3 solver
failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import shutil
import sys as _sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io as sio

from . import balancing, bounds as bounds_mod, dense_stein, lowrank
from .exceptions import (
    BreakdownError,
    ConvergenceError,
    ModelReductionError,
    SolvabilityError,
    SystemIOError,
)
from .system import (
    DiscreteLTISystem,
    ExampleSpec,
    generate_example,
    read_system,
    simulate,
    write_system,
)

SOLVERS = ("dense", "smith", "rksm-pm1", "rksm-disc")


class ConfigError(ValueError):
    pass


@dataclass
class JobConfig:
    """Everything one pipeline run depends on; two identical configs produce
    byte-identical outputs."""
    system_path: str | None = None
    example: ExampleSpec | None = None
    tau: float = 50
    methods: tuple[str, ...] = ("bt", "tlbt")
    order: int | None = None
    hsv_tol: float | None = None
    solver: str = "dense"
    tol: float = 1e-8
    tl_term_tol: float = 1e-8
    cadence: int = 5
    max_iterations: int = 400
    sim_horizon: int | None = None
    input_kind: str = "impulse"
    input_seed: int = 0
    out_dir: str | None = None
    force: bool = False

    def validate(self):
        if (self.system_path is None) == (self.example is None):
            raise ConfigError("exactly one of a system path or an example spec is required")
        if (self.order is None) == (self.hsv_tol is None):
            raise ConfigError("exactly one of --order and --hsv-tol is required")
        if self.solver not in SOLVERS:
            raise ConfigError(f"solver must be one of {SOLVERS}")
        if not self.methods or any(m not in ("bt", "tlbt") for m in self.methods):
            raise ConfigError("methods must be a nonempty subset of {'bt','tlbt'}")
        if not math.isinf(self.tau) and int(self.tau) < 1:
            raise ConfigError("tau must be >= 1")
        if self.input_kind not in ("impulse", "seeded-random"):
            raise ConfigError("input kind must be 'impulse' or 'seeded-random'")


@dataclass
class ReportBundle:
    """In-memory result of one pipeline run."""
    system: DiscreteLTISystem
    roms: dict = field(default_factory=dict)          # method -> ReducedOrderModel
    reports: dict = field(default_factory=dict)       # method -> BoundReport
    convergence: dict = field(default_factory=dict)   # (method, side) -> records
    gramian_meta: dict = field(default_factory=dict)  # (method, side) -> solve stats
    error_header: list = field(default_factory=list)
    error_rows: list = field(default_factory=list)
    summary_rows: list = field(default_factory=list)
    e_max: dict = field(default_factory=dict)         # method -> in-window max error


def _solver_config(cfg: JobConfig) -> lowrank.SolverConfig:
    return lowrank.SolverConfig(tol=cfg.tol, tl_term_tol=cfg.tl_term_tol,
                                cadence=cfg.cadence, max_iterations=cfg.max_iterations)


def compute_gramian(system: DiscreteLTISystem, tau, side: str, solver: str,
                    cfg: JobConfig):
    """One Gramian by the selected backend; returns (object, records)."""
    if solver == "dense":
        return dense_stein.tl_gramian_dense(system, tau, side), []
    if solver == "smith":
        approx = lowrank.smith_arnoldi(system, side, tau, _solver_config(cfg))
        return approx, approx.records
    strategy = lowrank.ShiftStrategy(
        kind="alternating-pm1" if solver == "rksm-pm1" else "adaptive-disc")
    approx = lowrank.rksm(system, side, tau, strategy, _solver_config(cfg))
    return approx, approx.records


def _load_system(cfg: JobConfig) -> DiscreteLTISystem:
    if cfg.system_path is not None:
        return read_system(cfg.system_path)
    return generate_example(cfg.example)


def _impulse_input(m: int, horizon: int) -> np.ndarray:
    u = np.zeros((horizon + 1, m))
    u[0] = 1.0
    return u


def _build_input(kind: str, m: int, horizon: int, seed: int) -> np.ndarray:
    if kind == "impulse":
        return _impulse_input(m, horizon)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((horizon + 1, m))


def error_table(system: DiscreteLTISystem, roms: dict, u: np.ndarray,
                horizon: int, tau, bound_levels: dict, hsv_levels: dict):
    """Rows k, window marker, per-method error/bound/HSV-level columns."""
    for method, model in roms.items():
        msys = model.system if hasattr(model, "system") else model
        if msys.m != system.m or msys.p != system.p:
            raise ConfigError(f"model for {method} does not match system input/output counts")
    y = simulate(system, u, horizon).outputs
    methods = list(roms)
    header = ["k", "window_marker"]
    for method in methods:
        header += [f"error_{method}", f"bound_{method}", f"hsv_{method}"]
    errs = {}
    for method in methods:
        msys = roms[method].system if hasattr(roms[method], "system") else roms[method]
        yh = simulate(msys, u, horizon).outputs
        errs[method] = np.linalg.norm(y - yh, axis=1)
    rows = []
    tau_mark = None if math.isinf(tau) else int(tau)
    for k in range(horizon + 1):
        row = [k, 1 if tau_mark is not None and k == tau_mark else 0]
        for method in methods:
            row += [errs[method][k], bound_levels.get(method), hsv_levels.get(method)]
        rows.append(row)
    return header, rows, errs


def emit_error_csv(system: DiscreteLTISystem, roms: dict, input_kind: str,
                   horizon: int, tau, bound_levels: dict | None = None,
                   hsv_levels: dict | None = None, input_seed: int = 0) -> str:
    """Figure-data CSV: one row per step with per-model output errors,
    constant bound levels, HSV-tail levels, and a marker column at the
    window boundary."""
    u = _build_input(input_kind, system.m, horizon, input_seed)
    header, rows, _ = error_table(system, roms, u, horizon, tau,
                                  bound_levels or {}, hsv_levels or {})
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _solve_stats(obj, records) -> dict:
    if not isinstance(obj, lowrank.GramianApprox):
        return {}
    built = records[-1].basis_columns if records else obj.rank
    return {"columns_built": built, "rank_after_truncation": obj.rank,
            "final_residual": obj.residual, "iterations": obj.iterations}


def run_pipeline(cfg: JobConfig) -> ReportBundle:
    """Execute one reduction job in memory (no files written)."""
    cfg.validate()
    if "tlbt" in cfg.methods and math.isinf(cfg.tau):
        raise ConfigError("time-limited reduction needs a finite --tau")
    system = _load_system(cfg)
    window = cfg.tau
    bundle = ReportBundle(system=system)

    tl_reach = tl_obs = None
    inf_reach = inf_obs = None
    if "tlbt" in cfg.methods or not math.isinf(window):
        tl_reach, rec_r = compute_gramian(system, window, "reach", cfg.solver, cfg)
        tl_obs, rec_o = compute_gramian(system, window, "obs", cfg.solver, cfg)
        bundle.convergence[("tlbt", "reach")] = rec_r
        bundle.convergence[("tlbt", "obs")] = rec_o
        bundle.gramian_meta[("tlbt", "reach")] = _solve_stats(tl_reach, rec_r)
        bundle.gramian_meta[("tlbt", "obs")] = _solve_stats(tl_obs, rec_o)
    if "bt" in cfg.methods:
        inf_reach, rec_r = compute_gramian(system, math.inf, "reach", cfg.solver, cfg)
        inf_obs, rec_o = compute_gramian(system, math.inf, "obs", cfg.solver, cfg)
        bundle.convergence[("bt", "reach")] = rec_r
        bundle.convergence[("bt", "obs")] = rec_o
        bundle.gramian_meta[("bt", "reach")] = _solve_stats(inf_reach, rec_r)
        bundle.gramian_meta[("bt", "obs")] = _solve_stats(inf_obs, rec_o)

    for method in cfg.methods:
        if method == "bt":
            rom, _ = balancing.square_root_truncate(
                inf_reach, inf_obs, system, math.inf,
                order=cfg.order, hsv_tol=cfg.hsv_tol, method="bt")
        else:
            rom, _ = balancing.square_root_truncate(
                tl_reach, tl_obs, system, window,
                order=cfg.order, hsv_tol=cfg.hsv_tol, method="tlbt")
        bundle.roms[method] = rom
        bundle.reports[method] = bounds_mod.build_bound_report(
            system, rom, window, reach=tl_reach, obs=tl_obs)

    horizon = cfg.sim_horizon
    if horizon is None:
        horizon = 100 if math.isinf(window) else max(int(round(1.5 * window)), 1)
    u = _build_input(cfg.input_kind, system.m, horizon, cfg.input_seed)
    bound_levels, hsv_levels = {}, {}
    for method, report in bundle.reports.items():
        level = report.bound_level()
        energy = float(np.sqrt(np.sum(
            u[: None if math.isinf(window) else int(window) + 1] ** 2)))
        bound_levels[method] = None if level is None else level * energy
        hsv_levels[method] = report.hsv_tail
    header, rows, errs = error_table(system, bundle.roms, u, horizon, window,
                                     bound_levels, hsv_levels)
    bundle.error_header, bundle.error_rows = header, rows

    limit = horizon if math.isinf(window) else min(int(window), horizon)
    for method in cfg.methods:
        emax = float(np.max(errs[method][: limit + 1]))
        bundle.e_max[method] = emax
        rom = bundle.roms[method]
        bundle.summary_rows.append([
            method, rom.r, emax, bound_levels[method], hsv_levels[method],
            bundle.reports[method].rom_spectral_radius])
    return bundle


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, complex):
        return f"{value.real:.5e}{value.imag:+.5e}j"
    if math.isinf(value):
        return "inf"
    return f"{float(value):.5e}"


def write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _records_csv(records) -> tuple[list, list]:
    header = ["iteration", "basis_columns", "residual", "tl_term_change", "shift"]
    rows = [[r.iteration, r.basis_columns, r.residual, r.tl_term_change, r.shift]
            for r in records]
    return header, rows


def write_bundle(bundle: ReportBundle, cfg: JobConfig) -> Path:
    """Write all pipeline outputs into a job-private directory, then move it
    to the requested location in one rename."""
    out = Path(cfg.out_dir)
    if out.exists():
        if not cfg.force:
            raise SystemIOError(f"output directory {out} already exists (use --force)")
        shutil.rmtree(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=out.name + ".partial-", dir=out.parent))
    try:
        for method, rom in bundle.roms.items():
            balancing.export_rom(rom, tmp / f"rom_{method}")
        report_doc = {
            "config": _config_doc(cfg),
            "reports": {m: rep.to_dict() for m, rep in bundle.reports.items()},
            "e_max": {m: bundle.e_max[m] for m in sorted(bundle.e_max)},
            "gramian_solves": {f"{m}_{side}": stats for (m, side), stats
                               in sorted(bundle.gramian_meta.items()) if stats},
        }
        with open(tmp / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report_doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        for (method, side), records in bundle.convergence.items():
            if records:
                h, r = _records_csv(records)
                write_csv(tmp / f"convergence_{method}_{side}.csv", h, r)
        write_csv(tmp / "errors.csv", bundle.error_header, bundle.error_rows)
        write_csv(tmp / "summary.csv",
                  ["method", "r", "e_max", "bound", "hsv_tail", "rho"],
                  bundle.summary_rows)
        os.replace(tmp, out)
    except OSError as exc:
        shutil.rmtree(tmp, ignore_errors=True)
        raise SystemIOError(f"failed to write job outputs: {exc}") from exc
    return out


def _config_doc(cfg: JobConfig) -> dict:
    doc = {
        "system_path": cfg.system_path,
        "example": None if cfg.example is None else {
            "kind": cfg.example.kind, "size": cfg.example.size,
            "inputs": cfg.example.inputs, "outputs": cfg.example.outputs,
            "seed": cfg.example.seed, "target_radius": cfg.example.target_radius,
        },
        "tau": "inf" if math.isinf(cfg.tau) else int(cfg.tau),
        "methods": list(cfg.methods),
        "order": cfg.order,
        "hsv_tol": cfg.hsv_tol,
        "solver": cfg.solver,
        "tol": cfg.tol,
        "tl_term_tol": cfg.tl_term_tol,
        "cadence": cfg.cadence,
        "max_iterations": cfg.max_iterations,
        "sim_horizon": cfg.sim_horizon,
        "input_kind": cfg.input_kind,
        "input_seed": cfg.input_seed,
    }
    return doc


# ---------------------------------------------------------------------------
# argument parsing

def _parse_tau(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(int(text))


def _add_system_source(p: argparse.ArgumentParser, require: bool = True):
    p.add_argument("--system", help="directory holding a serialized system")
    p.add_argument("--kind", choices=("jacobi", "gauss-seidel", "random-stable", "laplacian-grid"))
    p.add_argument("--size", type=int, help="grid width N (n = N^2) or state order")
    p.add_argument("--inputs", type=int, default=1)
    p.add_argument("--outputs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--target-radius", type=float, default=0.95)


def _system_from_args(args) -> tuple[str | None, ExampleSpec | None]:
    if args.system is not None:
        return args.system, None
    if args.kind is None or args.size is None:
        raise ConfigError("either --system or --kind/--size is required")
    return None, ExampleSpec(kind=args.kind, size=args.size, inputs=args.inputs,
                             outputs=args.outputs, seed=args.seed,
                             target_radius=args.target_radius)


def _add_solver_flags(p: argparse.ArgumentParser):
    p.add_argument("--solver", choices=SOLVERS, default="dense")
    p.add_argument("--shifts", choices=("pm1", "disc"),
                   help="override the rksm shift strategy")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--tl-tol", type=float,
                   help="horizon-term settling tolerance (default: min(tol, 1e-8))")
    p.add_argument("--cadence", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=400)


def _resolve_solver(args) -> str:
    solver = args.solver
    if args.shifts is not None:
        solver = "rksm-pm1" if args.shifts == "pm1" else "rksm-disc"
    return solver


def _resolve_tl_tol(args) -> float:
    if args.tl_tol is not None:
        return args.tl_tol
    return min(args.tol, 1e-8)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dtmor",
        description="discrete-time model order reduction toolkit",
        epilog="The dense-solver size cap (default 2000) can be overridden "
               "through the DTMOR_DENSE_CAP environment variable.")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="build a named test system and write it")
    _add_system_source(g)
    g.add_argument("--out", required=True)

    gr = sub.add_parser("gramian", help="approximate one (time-limited) Gramian")
    _add_system_source(gr)
    gr.add_argument("--side", choices=("reach", "obs"), default="reach")
    gr.add_argument("--tau", type=_parse_tau, required=True)
    _add_solver_flags(gr)
    gr.add_argument("--out", required=True, help="output directory for factors + records")

    rd = sub.add_parser("reduce", help="balanced truncation to a reduced model")
    _add_system_source(rd)
    rd.add_argument("--tau", type=_parse_tau, required=True)
    rd.add_argument("--method", choices=("bt", "tlbt"), default="tlbt")
    rd.add_argument("--order", type=int)
    rd.add_argument("--hsv-tol", type=float)
    _add_solver_flags(rd)
    rd.add_argument("--out", required=True)

    bd = sub.add_parser("bounds", help="error bounds for a reduced model")
    _add_system_source(bd)
    bd.add_argument("--rom", required=True, help="reduced model directory")
    bd.add_argument("--tau", type=_parse_tau, required=True)
    bd.add_argument("--constants", choices=("eigen", "numerical-radius"))
    bd.add_argument("--balanced-expressions", action="store_true",
                    help="also evaluate the balanced-realization expressions (dense)")
    bd.add_argument("--out", help="write the report JSON here (default stdout)")

    sm = sub.add_parser("simulate", help="simulate a system and write the trace")
    _add_system_source(sm)
    sm.add_argument("--input", choices=("impulse", "seeded-random"), default="impulse")
    sm.add_argument("--horizon", type=int, required=True)
    sm.add_argument("--input-seed", type=int, default=0)
    sm.add_argument("--out", required=True)

    pl = sub.add_parser("pipeline", help="full generate/reduce/bounds/simulate job")
    _add_system_source(pl)
    pl.add_argument("--tau", type=_parse_tau, required=True)
    pl.add_argument("--method", choices=("bt", "tlbt", "both"), default="both")
    pl.add_argument("--order", type=int)
    pl.add_argument("--hsv-tol", type=float)
    _add_solver_flags(pl)
    pl.add_argument("--sim-horizon", type=int)
    pl.add_argument("--input", choices=("impulse", "seeded-random"), default="impulse")
    pl.add_argument("--input-seed", type=int, default=0)
    pl.add_argument("--force", action="store_true")
    pl.add_argument("--out", required=True)
    return ap


def _cmd_generate(args) -> int:
    _, spec = _system_from_args(args)
    if spec is None:
        raise ConfigError("generate requires --kind and --size")
    system = generate_example(spec)
    write_system(system, args.out)
    print(f"wrote {spec.kind} system n={system.n} m={system.m} p={system.p} to {args.out}")
    return 0


def _cmd_gramian(args) -> int:
    path, spec = _system_from_args(args)
    system = read_system(path) if path else generate_example(spec)
    cfg = JobConfig(system_path=path, example=spec, tau=args.tau, order=1,
                    solver=_resolve_solver(args), tol=args.tol,
                    tl_term_tol=_resolve_tl_tol(args), cadence=args.cadence,
                    max_iterations=args.max_iter)
    result, records = compute_gramian(system, args.tau, args.side, cfg.solver, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(result, lowrank.GramianApprox):
        sio.mmwrite(out / "basis.mtx", result.basis, precision=17)
        sio.mmwrite(out / "core.mtx", result.core, precision=17)
        if result.tl_term is not None:
            sio.mmwrite(out / "tl_term.mtx", result.tl_term, precision=17)
        summary = {"side": result.side, "rank": result.rank,
                   "iterations": result.iterations, "residual": result.residual,
                   "deflated_columns": result.deflated_columns,
                   "tau": "inf" if math.isinf(result.horizon) else int(result.horizon)}
    else:
        sio.mmwrite(out / "gramian.mtx", result.gramian, precision=17)
        if result.tl_term is not None:
            sio.mmwrite(out / "tl_term.mtx", result.tl_term, precision=17)
        summary = {"side": result.side, "rank": int(result.gramian.shape[0]),
                   "iterations": None, "residual": dense_stein.stein_residual_dense(system, result),
                   "tau": "inf" if math.isinf(result.horizon) else int(result.horizon)}
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if records:
        h, r = _records_csv(records)
        write_csv(out / "convergence.csv", h, r)
    print(f"gramian side={args.side} written to {out}")
    return 0


def _cmd_reduce(args) -> int:
    path, spec = _system_from_args(args)
    system = read_system(path) if path else generate_example(spec)
    if (args.order is None) == (args.hsv_tol is None):
        raise ConfigError("exactly one of --order and --hsv-tol is required")
    cfg = JobConfig(system_path=path, example=spec, tau=args.tau, order=args.order,
                    hsv_tol=args.hsv_tol, solver=_resolve_solver(args), tol=args.tol,
                    tl_term_tol=_resolve_tl_tol(args), cadence=args.cadence,
                    max_iterations=args.max_iter)
    tau = math.inf if args.method == "bt" else args.tau
    reach, _ = compute_gramian(system, tau, "reach", cfg.solver, cfg)
    obs, _ = compute_gramian(system, tau, "obs", cfg.solver, cfg)
    rom, _ = balancing.square_root_truncate(reach, obs, system, tau,
                                            order=args.order, hsv_tol=args.hsv_tol,
                                            method=args.method)
    balancing.export_rom(rom, args.out)
    print(f"{args.method} model of order {rom.r} written to {args.out} "
          f"(rho={rom.spectral_radius():.6f})")
    return 0


def _cmd_bounds(args) -> int:
    path, spec = _system_from_args(args)
    system = read_system(path) if path else generate_example(spec)
    rom_sys = read_system(args.rom)
    with open(Path(args.rom) / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    prov = manifest.get("provenance") or {}
    method = prov.get("method", "tlbt")
    r = rom_sys.n

    reach = dense_stein.tl_gramian_dense(system, args.tau, "reach")
    obs = dense_stein.tl_gramian_dense(system, args.tau, "obs")
    rom_model = balancing.ReducedOrderModel(
        system=rom_sys, projector_v=np.eye(system.n, r), projector_w=np.eye(system.n, r),
        hsv=_spectrum_for_bounds(system, reach, obs, args.tau), r=r,
        horizon=args.tau if method == "tlbt" else math.inf, method=method)
    bal = bal_inf = None
    if args.balanced_expressions and not math.isinf(args.tau):
        bal = balancing.balance_dense(system, reach, obs, args.tau)
        if system.spectral_radius() < 1.0:
            bal_inf = balancing.balance_dense(
                system,
                dense_stein.tl_gramian_dense(system, math.inf, "reach"),
                dense_stein.tl_gramian_dense(system, math.inf, "obs"))
    report = bounds_mod.build_bound_report(system, rom_model, args.tau,
                                           reach=reach, obs=obs, bal=bal,
                                           bal_inf=bal_inf,
                                           constants_method=args.constants)
    text = report.to_json() + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        _sys.stdout.write(text)
    return 0


def _spectrum_for_bounds(system, reach, obs, tau) -> balancing.HankelSpectrum:
    ZP = balancing._as_factor(reach)
    ZQ = balancing._as_factor(obs)
    MZP = ZP if system.M is None else system.M @ ZP
    svals = np.linalg.svd(ZQ.T @ MZP, compute_uv=False)
    return balancing.HankelSpectrum(svals, float(tau) if not math.isinf(tau) else math.inf)


def _cmd_simulate(args) -> int:
    path, spec = _system_from_args(args)
    system = read_system(path) if path else generate_example(spec)
    u = _build_input("impulse" if args.input == "impulse" else "seeded-random",
                     system.m, args.horizon, args.input_seed)
    trace = simulate(system, u, args.horizon)
    header = ["k"] + [f"u{i}" for i in range(system.m)] + [f"y{i}" for i in range(system.p)]
    rows = [[k, *trace.inputs[k], *trace.outputs[k]] for k in range(args.horizon + 1)]
    write_csv(Path(args.out), header, rows)
    print(f"trace with horizon {args.horizon} written to {args.out}")
    return 0


def _cmd_pipeline(args) -> int:
    path, spec = _system_from_args(args)
    methods = ("bt", "tlbt") if args.method == "both" else (args.method,)
    cfg = JobConfig(
        system_path=path, example=spec, tau=args.tau, methods=methods,
        order=args.order, hsv_tol=args.hsv_tol, solver=_resolve_solver(args),
        tol=args.tol, tl_term_tol=_resolve_tl_tol(args), cadence=args.cadence,
        max_iterations=args.max_iter, sim_horizon=args.sim_horizon,
        input_kind="impulse" if args.input == "impulse" else "seeded-random",
        input_seed=args.input_seed, out_dir=args.out, force=args.force)
    bundle = run_pipeline(cfg)
    out = write_bundle(bundle, cfg)
    for row in bundle.summary_rows:
        print("  ".join(_fmt(v) for v in row))
    print(f"pipeline outputs in {out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "gramian": _cmd_gramian,
    "reduce": _cmd_reduce,
    "bounds": _cmd_bounds,
    "simulate": _cmd_simulate,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2
    except (ConvergenceError, SolvabilityError, BreakdownError) as exc:
        print(f"solver failure: {exc}", file=_sys.stderr)
        return 3
    except (SystemIOError, OSError) as exc:
        print(f"I/O failure: {exc}", file=_sys.stderr)
        return 4
    except ModelReductionError as exc:
        print(f"error: {exc}", file=_sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
