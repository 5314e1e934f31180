"""Command-line interface: ``csrlm {generate,sweep,analyze,oracle-check}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from . import analysis as an
from ._accel import BACKEND
from .harness.config import OUT_ENV, ConfigError, config_from_dict, load_config, with_overrides
from .harness.io import (
    FSS_COLUMNS,
    HIST_COLUMNS,
    PHASE_COLUMNS,
    SCHEMA_VERSION,
    ZIPF_COLUMNS,
    OutputExists,
    SchemaError,
    check_writable,
    read_observables,
    read_table,
    write_csv,
    write_json,
)
from .harness.sweep import output_files, run_sweep, write_sweep_outputs

log = logging.getLogger("csrlm")


def _default_out() -> str:
    return os.environ.get(OUT_ENV) or "csrlm-out"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON sweep configuration")
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./csrlm-out)")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--parallel", type=int, help="worker processes")
    p.add_argument("--overwrite", action="store_true", help="replace existing output files")


def _point_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("single point (ignored with --config)")
    g.add_argument("--K", type=int, default=20)
    g.add_argument("--J", type=float, default=1.0)
    g.add_argument("--q", type=float, default=0.01)
    g.add_argument("--t", type=float, default=0.0)
    g.add_argument("--epsilon", type=float, default=0.0)
    g.add_argument("--kT", type=float, nargs="+", default=[1.0])
    g.add_argument("--N", type=int, nargs="+", default=[256])
    g.add_argument("--samples", type=int, help="sentences per point")
    g.add_argument("--sweeps", type=int, default=0, help="context sweeps after growth")


def _build_config(args, extra_outputs: dict | None = None):
    over = dict(out=args.out, seed=args.seed, parallel=args.parallel)
    if getattr(args, "samples", None) is not None:
        over["samples"] = args.samples
    if args.config:
        cfg = load_config(args.config, **over)
    else:
        doc = {
            "grid": {"K": [args.K], "J": [args.J], "q": [args.q], "t": [args.t],
                     "epsilon": [args.epsilon], "kT": args.kT, "N": args.N},
            "protocol": {"post_growth_sweeps": args.sweeps},
            "outputs": {"dir": args.out or _default_out()},
        }
        if extra_outputs:
            doc["outputs"].update(extra_outputs)
        cfg = config_from_dict(doc, **over)
    return cfg


def _progress(k, n, row):
    err = f"  [{row['error']}]" if row["error"] else ""
    log.info("%d/%d  kT=%g N=%d  <M>=%.4g%s", k, n, row["kT"], row["N"], row["mean_M"], err)


def cmd_generate(args) -> int:
    extra = {"artifacts": ["observables", "runs"]}
    if args.dump_bin:
        extra["artifacts"].append("dumps")
        extra["dump_bin"] = list(args.dump_bin)
        extra["dump_max"] = args.dump_max
    cfg = _build_config(args, extra)
    if args.config and args.dump_bin:
        arts = tuple(dict.fromkeys(cfg.artifacts + ("dumps",)))
        cfg = with_overrides(cfg, artifacts=arts, dump_bin=tuple(args.dump_bin), dump_max=args.dump_max)
    check_writable(output_files(cfg).values(), args.overwrite)
    results = run_sweep(cfg, progress=_progress)
    files = write_sweep_outputs(cfg, results, overwrite=args.overwrite)
    for f in files.values():
        print(f)
    return 0


def cmd_sweep(args) -> int:
    if not args.config:
        raise ConfigError("sweep requires --config")
    cfg = _build_config(args)
    # refuse before spending compute
    check_writable(output_files(cfg).values(), args.overwrite)
    results = run_sweep(cfg, progress=_progress)
    files = write_sweep_outputs(cfg, results, overwrite=args.overwrite)
    table = read_observables(files["observables"])
    opts = cfg.analysis
    out = Path(cfg.out)
    if "fss" in cfg.artifacts:
        files.update(_fss(table, out, opts, args.overwrite))
    if "phase_diagram" in cfg.artifacts:
        files.update(_phase(table, out, opts.get("axis", "q"), opts, args.overwrite))
    for f in files.values():
        print(f)
    bad = sum(1 for r in results if r.row["error"])
    if bad:
        log.warning("%d of %d points recorded an error", bad, len(results))
    return 0


def _grid_spec(opts: dict) -> an.GridSpec:
    g = opts.get("grid", {})
    return an.GridSpec(**{k: tuple(v) for k, v in g.items() if k in ("tc", "nu", "gamma")})


def _fss(table, out: Path, opts: dict, overwrite: bool) -> dict:
    grid = _grid_spec(opts)
    csv_path, json_path = out / "fss.csv", out / "fss_summary.json"
    check_writable([csv_path, json_path], overwrite)
    res = an.grid_search_exponents(table, grid, t_window=opts.get("t_window"), keep_landscape=True)
    tcs, nus, gms = grid.axes()
    rows = []
    for a, b, c in zip(*np.nonzero(np.isfinite(res.landscape))):
        rows.append(dict(Tc=float(tcs[a]), nu=float(nus[b]), gamma=float(gms[c]), quality=float(res.landscape[a, b, c])))
    write_csv(csv_path, FSS_COLUMNS, rows, overwrite)
    finite = res.landscape[np.isfinite(res.landscape)]
    write_json(json_path, {
        "task": "fss",
        "method": "grid_search_exponents",
        "column": "chi_tilde",
        "t_window": opts.get("t_window"),
        "minimizer": {"Tc": res.Tc, "nu": res.nu, "gamma": res.gamma, "quality": res.quality},
        "grid": grid.as_dict(),
        "landscape": {"evaluated": int(finite.size), "total": int(res.landscape.size),
                      "quality_min": float(finite.min()), "quality_max": float(finite.max())},
    }, overwrite)
    return {"fss": csv_path, "fss_summary": json_path}


def _phase(table, out: Path, axis: str, opts: dict, overwrite: bool) -> dict:
    csv_path, json_path = out / "phase_diagram.csv", out / "phase_diagram.json"
    check_writable([csv_path, json_path], overwrite)
    methods = opts.get("methods", [an.Method.BINDER_DEPARTURE.value, an.Method.SUSCEPTIBILITY_PEAK.value])
    pts = an.build_phase_diagram(table, axis, methods=methods)
    rows = [dict(axis_name=p.axis_name, axis_value=p.axis_value, Tc=p.Tc if p.Tc is not None else float("nan"),
                 method=p.method.value, no_transition=p.no_transition) for p in pts]
    write_csv(csv_path, PHASE_COLUMNS, rows, overwrite)
    write_json(json_path, {"task": "phase-diagram", "axis": axis, "methods": list(methods),
                           "points": [dict(r, Tc=p.Tc, note=p.note) for r, p in zip(rows, pts)]}, overwrite)
    return {"phase_diagram": csv_path, "phase_summary": json_path}


def _parse_where(items) -> dict:
    out = {}
    for item in items or []:
        for part in item.split(","):
            if "=" not in part:
                raise ConfigError(f"--where expects key=value, got {part!r}")
            k, v = part.split("=", 1)
            out[k.strip()] = float(v)
    return out


def _filter(df: pd.DataFrame, where: dict) -> pd.DataFrame:
    for k, v in where.items():
        if k not in df.columns:
            raise SchemaError(f"--where column {k!r} not in table columns {list(df.columns)}")
        df = df[np.isclose(df[k].astype(float), v)]
    if df.empty:
        raise SchemaError(f"no rows match {where}")
    return df


def _resolve(path: str, name: str) -> Path:
    p = Path(path)
    if p.is_dir():
        return p / name
    if p.name != name and (p.parent / name).exists() and name != "observables.csv":
        return p.parent / name
    return p


def cmd_analyze(args) -> int:
    where = _parse_where(args.where)
    out = Path(args.out) if args.out else (Path(args.input) if Path(args.input).is_dir() else Path(args.input).parent)
    opts = {"t_window": args.t_window}
    if args.grid_tc or args.grid_nu or args.grid_gamma:
        opts["grid"] = {k: v for k, v in (("tc", args.grid_tc), ("nu", args.grid_nu), ("gamma", args.grid_gamma)) if v}
    task = args.task
    if task in ("fss", "tc", "phase-diagram"):
        table = _filter(read_observables(_resolve(args.input, "observables.csv")), where)
        if task == "fss":
            files = _fss(table, out, opts, args.overwrite)
        elif task == "phase-diagram":
            files = _phase(table, out, args.axis, opts, args.overwrite)
        else:
            path = out / "tc_summary.json"
            check_writable([path], args.overwrite)
            estimates = []
            for key, g in table.groupby(an.MODEL_KEYS, sort=True):
                for m in args.method or [m.value for m in an.Method]:
                    entry = dict(zip(an.MODEL_KEYS, key), method=m)
                    try:
                        est = an.estimate_critical_temperature(g, m, grid=_grid_spec(opts), t_window=args.t_window)
                        entry.update(Tc=est.Tc, uncertainty=est.uncertainty, no_transition=est.no_transition,
                                     details=est.details)
                    except (an.RangeTooNarrow, an.InsufficientOverlap) as exc:
                        entry.update(Tc=None, no_transition=False, error=f"{type(exc).__name__}: {exc}")
                    estimates.append(entry)
                    log.info("%s", entry)
            files = {"tc": write_json(path, {"task": "tc", "estimates": estimates}, args.overwrite)}
    elif task == "zipf":
        df = _filter(read_table(_resolve(args.input, "zipf.csv"), ZIPF_COLUMNS), where)
        csv_path, json_path = out / "zipf_slopes.csv", out / "zipf_summary.json"
        check_writable([csv_path, json_path], args.overwrite)
        regions, rows = [], []
        for kT, g in df.groupby("kT", sort=True):
            g = g.sort_values("rank")
            if g["rank"].duplicated().any():
                raise SchemaError(f"zipf.csv has repeated ranks at kT={kT}; filter to one parameter set with --where")
            reg = an.zipf_power_region(g["rank"], g["rel_freq"])
            f = g["rel_freq"].to_numpy()
            slopes = np.append(reg.slopes, np.nan)
            for r, fr, sl in zip(g["rank"], f, slopes):
                rows.append(dict(kT=float(kT), rank=int(r), rel_freq=float(fr), local_slope=float(sl)))
            regions.append({"kT": float(kT), "rank_lo": reg.rank_lo, "rank_hi": reg.rank_hi,
                            "decades": reg.decades, "head_ratio_1_10": float(f[0] / f[9]) if f.size >= 10 else None})
        write_csv(csv_path, ["kT", "rank", "rel_freq", "local_slope"], rows, args.overwrite)
        files = {"zipf": csv_path,
                 "summary": write_json(json_path, {"task": "zipf", "slope_range": [-3.0, -0.3], "curves": regions},
                                       args.overwrite)}
    else:
        df = _filter(read_table(_resolve(args.input, "histograms.csv"), HIST_COLUMNS), where)
        csv_path, json_path = out / "histogram_modes.csv", out / "histogram_summary.json"
        check_writable([csv_path, json_path], args.overwrite)
        rows = []
        for (kT, N), g in df.groupby(["kT", "N"], sort=True):
            g = g.sort_values("bin_lo")
            edges = np.append(g["bin_lo"].to_numpy(), g["bin_hi"].to_numpy()[-1])
            rows.append(dict(kT=float(kT), N=int(N), typical_M=an.histogram_mode(edges, g["count"].to_numpy()),
                             samples=int(g["count"].sum())))
        write_csv(csv_path, ["kT", "N", "typical_M", "samples"], rows, args.overwrite)
        files = {"histogram": csv_path,
                 "summary": write_json(json_path, {"task": "histogram", "statistic": "mode", "rows": len(rows)}, args.overwrite)}
    for f in files.values():
        print(f)
    return 0


def cmd_oracle_check(args) -> int:
    from .oracle import check_absorption, check_equilibrium

    seed = args.seed or 0
    ok = True
    report = {"schema_version": SCHEMA_VERSION, "backend": BACKEND, "version": __version__, "checks": []}
    if args.scope in ("equilibrium", "all"):
        for kT in (0.5, 1.0, 2.0):
            r = check_equilibrium(K=2, n=12, J=1.0, kT=kT, sweeps=args.sweeps, seed=seed)
            ok &= r.passed
            z = {k: round(float(v), 3) for k, v in r.z_scores.items()}
            print(f"{'PASS' if r.passed else 'FAIL'}  equilibrium K=2 n=12 kT={kT}  z={z}")
            report["checks"].append({"check": "equilibrium", "kT": kT, "passed": r.passed, "z": r.z_scores})
    if args.scope in ("absorption", "all"):
        r = check_absorption(runs=args.runs, seed=seed)
        ok &= r.passed
        print(f"{'PASS' if r.passed else 'FAIL'}  absorption K=2 N_max=3 q=0.5 eps=0.5  TV={r.tv:.4f}")
        report["checks"].append({"check": "absorption", "passed": r.passed, "tv": r.tv})
    if args.out:
        write_json(Path(args.out) / "oracle_report.json", {k: v for k, v in report.items() if k != "schema_version"},
                   args.overwrite)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="csrlm", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({BACKEND})")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate ensembles and optional symbol dumps")
    _add_common(p)
    _point_flags(p)
    p.add_argument("--dump-bin", type=float, nargs=2, metavar=("LO", "HI"),
                   help="dump sentences with LO <= M < HI")
    p.add_argument("--dump-max", type=int, default=5, help="sentences dumped per point")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("sweep", help="run a configured parameter grid")
    _add_common(p)
    p.add_argument("--samples", type=int, help="override protocol.samples")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="post-process sweep outputs")
    p.add_argument("task", choices=["fss", "tc", "phase-diagram", "zipf", "histogram"])
    p.add_argument("input", help="run directory or CSV file")
    p.add_argument("--out", help="directory for results (default: next to the input)")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("--where", action="append", help="row filter, e.g. K=20,q=0.01")
    p.add_argument("--axis", choices=["q", "t"], default="q")
    p.add_argument("--method", action="append", choices=[m.value for m in an.Method])
    p.add_argument("--t-window", type=float, help="restrict FSS rows to |T-Tc|/Tc <= value")
    p.add_argument("--grid-tc", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
    p.add_argument("--grid-nu", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
    p.add_argument("--grid-gamma", type=float, nargs=3, metavar=("LO", "HI", "STEP"))
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("oracle-check", help="compare the engine with exact references")
    p.add_argument("--scope", choices=["equilibrium", "absorption", "all"], default="all")
    p.add_argument("--seed", type=int)
    p.add_argument("--sweeps", type=int, default=100_000)
    p.add_argument("--runs", type=int, default=100_000)
    p.add_argument("--out", help="also write oracle_report.json here")
    p.add_argument("--overwrite", action="store_true")
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, SchemaError, OutputExists) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (an.InsufficientOverlap, an.RangeTooNarrow) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
