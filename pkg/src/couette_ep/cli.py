"""Command-line runner: ``couette-ep simulate | verify | sweep``."""
from __future__ import annotations

import argparse
import csv
import json
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import backend_name
from .config import RunConfig, split_key
from .dynamics import coefficient_arrays, energy_arrays
from .errors import ConfigParse, CouetteEPError, DegenerateData, IoFailure, SeriesTooShort, StepSizeUnderflow, UnknownAxis
from .fields import propagate_grid
from .verify import (
    check_lemma_energy,
    check_lower_growth,
    check_upper_growth,
    check_upper_px_phi,
    check_upper_py,
    compute_series,
    degenerate_report,
    sample_modes,
)

THREADS_ENV = "COUETTE_EP_THREADS"
NORM_COLUMNS = ("t", "pux", "puy", "qu", "eta", "phi", "sym_weighted", "energy_ratio_min", "energy_ratio_max")
MODE_COLUMNS = ("t", "k", "xi", "abs_c1", "abs_c2", "state_norm", "energy")
SWEEP_FIELDS = ("status", "margin", "observed", "slope")

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERICS = 3


def _fmt(x) -> str:
    return "%.16e" % float(x)


# --------------------------------------------------------------------------
# pipeline


class Run:
    """Propagator, data and norm series for one configuration."""

    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.params = cfg.params()
        self.grid = cfg.grid()
        self.spec = cfg.initial()
        t = cfg.values["time"]
        start = time.perf_counter()
        self.propagator = propagate_grid(self.grid, self.params, cfg.times(), tol=t["tol"],
                                         step_cap=t["step_cap"], threads=threads)
        self.series = compute_series(self.spec, self.propagator, r_order=cfg.values["checks"]["r_order"])
        self.wall_time = time.perf_counter() - start


def run_checks(run: Run) -> list:
    cfg, series, spec, params = run.cfg, run.series, run.spec, run.params
    c = cfg.values["checks"]
    reports = []
    for name in cfg.checks():
        try:
            if name == "upper_px_phi":
                rep = check_upper_px_phi(series, spec, params, c["fit_start"], c["k_bound"])
            elif name == "upper_py":
                rep = check_upper_py(series, spec, params, c["fit_start"], c["k_bound"])
            elif name == "upper_growth":
                rep = check_upper_growth(series, spec, params, c["fit_start"], c["k_bound"])
            elif name == "lower_growth":
                rep = check_lower_growth(series, spec, params, c["lower_t_start"], c["c_floor"])
            else:
                modes = sample_modes(c["lemma_modes"], c["lemma_k_max"], c["lemma_xi_max"],
                                     cfg.values["initial"]["seed"])
                rep = check_lemma_energy(modes, params, t_max=c["lemma_t_max"], n_outputs=c["lemma_outputs"],
                                         tol=cfg.values["time"]["tol"], seed=cfg.values["initial"]["seed"])
        except DegenerateData as exc:
            rep = degenerate_report(name, params, str(exc), t_max=series.t_max)
        except SeriesTooShort as exc:
            rep = degenerate_report(name, params, str(exc), t_max=series.t_max, status="error")
        reports.append(rep)
    return reports


def exit_status(reports) -> int:
    bad = [r for r in reports if r.status in ("fail", "error")]
    return EXIT_CHECK_FAILED if bad else EXIT_OK


# --------------------------------------------------------------------------
# writers


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(f"cannot create output directory {out}: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise IoFailure(f"output directory {out} is not writable")
    return out


def _write_csv(path: Path, header, rows):
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def _write_json(path: Path, payload):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, ensure_ascii=False)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_norms(path: Path, series):
    cols = series.columns()
    rows = [[_fmt(cols[c][n]) for c in NORM_COLUMNS] for n in range(len(series.times))]
    _write_csv(path, NORM_COLUMNS, rows)


def write_modes(path: Path, run: Run):
    o = run.cfg.values["output"]
    prop, grid = run.propagator, run.grid
    K, XI = grid.mesh()
    xi_idx = np.arange(0, grid.n_xi, o["modes_xi_stride"])
    rows = []
    for n in range(0, len(prop.times), o["modes_t_stride"]):
        t = float(prop.times[n])
        a = prop.states(run.spec, n)
        h, m, p, _ = coefficient_arrays(t, K, XI, run.params)
        e = energy_arrays(a[..., 0], a[..., 1], h, m, p)
        for i, k in enumerate(grid.k_list):
            for j in xi_idx:
                c1, c2 = abs(a[i, j, 0]), abs(a[i, j, 1])
                rows.append([_fmt(t), str(int(k)), _fmt(grid.xi[j]), _fmt(c1), _fmt(c2),
                             _fmt(np.hypot(c1, c2)), _fmt(e[i, j])])
    _write_csv(path, MODE_COLUMNS, rows)


def _versions() -> dict:
    import numba
    import scipy

    return {"couette_ep": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__, "backend": backend_name()}


def _meta(run: Run, threads: int, extra=None) -> dict:
    meta = {"config": run.cfg.as_flat(), "versions": _versions(), "wall_time_s": run.wall_time,
            "threads": threads, "grid": run.grid.as_dict(), "params": run.params.as_dict(),
            "integrator_steps": run.propagator.n_steps}
    meta.update(extra or {})
    return meta


# --------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig, threads: int = 1) -> Run:
    out = _out_dir(cfg.values["output"]["dir"])
    run = Run(cfg, threads)
    write_norms(out / "norms.csv", run.series)
    write_modes(out / "modes.csv", run)
    _write_json(out / "meta.json", _meta(run, threads))
    return run


def cmd_verify(cfg: RunConfig, threads: int = 1) -> tuple[int, list]:
    out = _out_dir(cfg.values["output"]["dir"])
    run = Run(cfg, threads)
    reports = run_checks(run)
    status = exit_status(reports)
    payload = {"reports": [r.as_dict() for r in reports], "exit_status": status,
               "all_passed": status == EXIT_OK, "meta": _meta(run, threads)}
    _write_json(out / "report.json", payload)
    return status, reports


def _sort_values(values):
    try:
        return sorted(values, key=float)
    except ValueError:
        return sorted(values)


def sweep_header(cfg: RunConfig) -> list[str]:
    return ["value"] + [f"{c}_{f}" for c in cfg.checks() for f in SWEEP_FIELDS]


def cmd_sweep(cfg: RunConfig, axis: str, values, threads: int = 1) -> Path:
    try:
        split_key(axis)
    except KeyError:
        raise UnknownAxis(f"unknown sweep axis {axis!r}") from None
    out = _out_dir(cfg.values["output"]["dir"])
    rows = []
    for value in _sort_values([str(v).strip() for v in values if str(v).strip()]):
        row_cfg = cfg.copy()
        row_cfg.set(axis, value, where="sweep")
        row_cfg.validate()
        reports = {r.name: r for r in run_checks(Run(row_cfg, threads))}
        row = [value]
        for c in cfg.checks():
            r = reports[c]
            row += [r.status, _fmt(r.margin), _fmt(r.observed), "" if r.slope is None else _fmt(r.slope)]
        rows.append(row)
    path = out / "sweep.csv"
    _write_csv(path, sweep_header(cfg), rows)
    return path


# --------------------------------------------------------------------------
# argument handling


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat section.key = value file")
    common.add_argument("--out", help="output directory (output.dir)")
    common.add_argument("--species", choices=("ion", "electron"))
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help=f"worker threads, 0 = auto (env {THREADS_ENV})")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, repeatable")

    parser = argparse.ArgumentParser(prog="couette-ep", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write norms.csv, modes.csv, meta.json")
    sub.add_parser("verify", parents=[common], help="run checks and write report.json")
    sw = sub.add_parser("sweep", parents=[common], help="repeat verify over values of one config key")
    sw.add_argument("--axis", required=True, help="config key, e.g. physics.m_minus")
    sw.add_argument("--values", default="", help="comma-separated values (may be empty)")
    return parser


def resolve_threads(arg, cfg: RunConfig) -> int:
    if arg is None:
        env = os.environ.get(THREADS_ENV)
        if env is not None and env.strip():
            try:
                arg = int(env)
            except ValueError:
                raise ConfigParse(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    if arg is not None:
        if arg < 0:
            raise ConfigParse("--threads must be >= 0")
        cfg.values["run"]["threads"] = int(arg)
    return cfg.threads()


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    cfg.apply_overrides(args.set)
    if args.out is not None:
        cfg.set("output.dir", args.out)
    if args.species is not None:
        cfg.set("physics.species", args.species)
    if args.seed is not None:
        cfg.set("initial.seed", args.seed)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        threads = resolve_threads(args.threads, cfg)
        cfg.validate()
        if args.command == "simulate":
            cmd_simulate(cfg, threads)
            return EXIT_OK
        if args.command == "verify":
            status, reports = cmd_verify(cfg, threads)
            for r in reports:
                print(f"{r.name:14s} {r.species:8s} {r.status:10s} margin={r.margin:.3g}")
            return status
        values = [v for v in args.values.split(",")] if args.values else []
        cmd_sweep(cfg, args.axis, values, threads)
        return EXIT_OK
    except (ConfigParse, IoFailure, UnknownAxis) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StepSizeUnderflow as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICS
    except CouetteEPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
