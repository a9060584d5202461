"""``gprdd`` command line: ``fit``, ``simulate`` and ``diagnose``.

Exit codes:

    0  success, every requested output written
    1  other package error
    2  usage or invalid option value
    3  malformed input or config file
    4  a side of the boundary (or an arm) has no data
    5  too few points for a local fit
    6  factorization or optimization failure
    7  campaign failure (too many failed replications)
    8  file system error
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dgps import DGP_NAMES, get_dgp
from .errors import GprddError, ParseError
from .fit import fit_command
from .io import atomic_write, config_from_mapping, ingest_csv, parse_config_text, read_shift_table
from .plots import fit_svg, profile_svg
from .sim import (METHODS, CampaignSettings, default_window_centers, points_mle_ratio, run_campaign,
                  second_derivative_profile, sliding_window_mle_ratio)

EXIT_USAGE = 2
EXIT_IO = 8

SMOKE_REPS = 50
FULL_REPS = 1000

# option name -> (type, default); None defaults are filled per command
OPTIONS = {
    "boundary": (float, None),
    "method": (str, None),
    "assumption": (str, "same-cov"),
    "mean_order": (int, 2),
    "prior_beta_sd": (float, 100.0),
    "prior_hc_scale": (float, 5.0),
    "chains": (int, None),
    "iters": (int, None),
    "warmup": (int, None),
    "seed": (int, 0),
    "reps": (int, 200),
    "n": (int, 500),
    "dgp": (str, None),
    "parallelism": (int, 1),
    "group_by_running": (bool, False),
    "shift_table": (str, None),
    "out_dir": (str, "."),
    "format": (str, None),
    "running_column": (str, "running"),
    "cohort_column": (str, "cohort"),
    "outcomes": (str, ""),
    "trace": (bool, False),
    "smoke": (bool, False),
    "full_scale": (bool, False),
    "curve": (str, None),
}


def _add_common(p: argparse.ArgumentParser, names):
    for name in names:
        kind, _ = OPTIONS[name]
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            p.add_argument(flag, dest=name, action="store_true", default=argparse.SUPPRESS)
        else:
            p.add_argument(flag, dest=name, type=kind, default=argparse.SUPPRESS)
    p.add_argument("--config", default=None, help="key = value file; command-line flags take precedence")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gprdd", description="Gaussian-process regression discontinuity toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate the boundary effect for each outcome in a CSV file")
    p.add_argument("data", help="CSV with a header: running,outcome1[,...][,cohort]")
    _add_common(p, ["boundary", "method", "assumption", "mean_order", "prior_beta_sd", "prior_hc_scale",
                    "chains", "iters", "warmup", "seed", "group_by_running", "shift_table", "out_dir",
                    "format", "running_column", "cohort_column", "outcomes"])

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign over the registered DGPs")
    _add_common(p, ["dgp", "method", "reps", "n", "seed", "parallelism", "chains", "iters", "warmup",
                    "assumption", "mean_order", "prior_beta_sd", "prior_hc_scale", "out_dir", "format",
                    "trace", "smoke", "full_scale"])

    p = sub.add_parser("diagnose", help="curvature and MLE-ratio profiles")
    _add_common(p, ["dgp", "curve", "boundary", "out_dir", "format"])
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    """Defaults, then the config file, then explicit flags."""
    values = {k: d for k, (_, d) in OPTIONS.items()}
    if args.config:
        raw = parse_config_text(Path(args.config).read_text(), args.config)
        for key, text in raw.items():
            if key not in OPTIONS:
                raise ParseError(f"{args.config}: unknown key {key!r}")
            kind = OPTIONS[key][0]
            try:
                if kind is bool:
                    values[key] = text.lower() in ("1", "true", "yes", "on")
                else:
                    values[key] = kind(text)
            except ValueError:
                raise ParseError(f"{args.config}: key {key!r}: cannot read {text!r} as {kind.__name__}") from None
    for key in OPTIONS:
        if hasattr(args, key):
            values[key] = getattr(args, key)
    return values


def _formats(value, allowed, default) -> set:
    chosen = set(default if not value else (f.strip() for f in value.split(",") if f.strip()))
    bad = chosen - set(allowed)
    if bad:
        raise ValueError(f"--format must be from {', '.join(allowed)}; got {', '.join(sorted(bad))}")
    return chosen


def _write(out_dir: Path, name: str, text: str, written: list):
    path = out_dir / name
    atomic_write(path, text)
    written.append(path)


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


# ---------------------------------------------------------------- commands


def cmd_fit(args, v) -> list:
    config = config_from_mapping({
        "boundary": 0.0 if v["boundary"] is None else v["boundary"],
        "method": v["method"] or "gpr",
        "assumption": v["assumption"],
        "mean_order": v["mean_order"],
        "prior_beta_sd": v["prior_beta_sd"],
        "prior_hc_scale": v["prior_hc_scale"],
        "chains": v["chains"] or 4,
        "iters": v["iters"] or 2000,
        "warmup": 1000 if v["warmup"] is None else v["warmup"],
        "seed": v["seed"],
        "group_by_running": v["group_by_running"],
        "running_column": v["running_column"],
        "cohort_column": v["cohort_column"],
        "outcomes": v["outcomes"],
    })
    if v["shift_table"]:
        config = replace(config, shifts=read_shift_table(v["shift_table"]))
    formats = _formats(v["format"], ("csv", "json", "svg"), ("csv", "svg"))
    datasets = ingest_csv(args.data, config)
    report = fit_command(config, datasets)
    print(report.text())

    out_dir = Path(v["out_dir"])
    written = []
    if "csv" in formats:
        _write(out_dir, "fit_summary.csv", report.summary_csv(), written)
        _write(out_dir, "fit_curves.csv", report.curves_csv(), written)
    if "json" in formats:
        _write(out_dir, "fit.json", report.to_json(), written)
    if "svg" in formats:
        for f in report.fits:
            curves = {("treated" if c.arm == "T" else "control"): (c.grid, c.mean, c.lower, c.upper)
                      for c in f.curves}
            d = datasets[f.outcome]
            svg = fit_svg(f"{f.outcome} ({f.method})", config.boundary, curves, d.x, d.y)
            _write(out_dir, f"fit_{_safe(f.outcome)}.svg", svg, written)
    return written


def _dgp_list(value) -> list:
    if not value or value == "all":
        return list(DGP_NAMES)
    return [get_dgp(s.strip()).name for s in value.split(",") if s.strip()]


def cmd_simulate(args, v) -> list:
    methods = [m.strip() for m in (v["method"] or "gpr").split(",") if m.strip()]
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s) {unknown}; choose from {', '.join(METHODS)}")
    reps = v["reps"]
    if v["smoke"]:
        reps = SMOKE_REPS
    if v["full_scale"]:
        reps = FULL_REPS
    base = CampaignSettings()
    settings = CampaignSettings(
        chains=v["chains"] or base.chains,
        iterations=v["iters"] or base.iterations,
        warmup=base.warmup if v["warmup"] is None else v["warmup"],
        beta_prior_sd=v["prior_beta_sd"],
        hc_scale=v["prior_hc_scale"],
        mean_order=v["mean_order"],
        assumption=v["assumption"],
    )
    formats = _formats(v["format"], ("csv", "json"), ("csv", "json"))
    dgps = _dgp_list(v["dgp"])

    def progress(done, total=len(dgps) * len(methods) * reps):
        print(f"\r{done}/{total} fits", end="", file=sys.stderr, flush=True)

    report = run_campaign(dgps, methods, n=v["n"], reps=reps, seed=v["seed"],
                          parallelism=v["parallelism"], settings=settings,
                          progress=progress if sys.stderr.isatty() else None)
    print(report.summary_table())
    out_dir = Path(v["out_dir"])
    written = []
    if "csv" in formats:
        _write(out_dir, "simulation.csv", report.to_csv(), written)
    if "json" in formats:
        _write(out_dir, "simulation.json", report.to_json(), written)
    if v["trace"]:
        _write(out_dir, "simulation_trace.csv", report.trace_csv(), written)
    return written


def _profile_csv(centers, curvature, ratio) -> str:
    lines = ["center,abs_second_derivative,ratio"]
    for c, k, r in zip(centers, curvature, ratio):
        lines.append(f"{float(c)!r},{float(k)!r},{float(r)!r}")
    return "\n".join(lines) + "\n"


def curve_profiles(x, y, boundary: float, half_width: float = 0.1, step: float = 0.05):
    """Profiles for a noiseless curve given as points. Windows never straddle
    the boundary; ``|mu''|`` is twice the leading coefficient of a quadratic
    fitted to each window's points."""
    order = np.argsort(x)
    x, y = np.asarray(x, dtype=float)[order], np.asarray(y, dtype=float)[order]
    centers = np.arange(x[0] + half_width, x[-1] - half_width + 1e-12, step)
    centers = centers[np.abs(centers - boundary) >= half_width - 1e-12]
    keep, curv, ratio = [], [], []
    for c in centers:
        side = (x >= boundary) if c >= boundary else (x < boundary)
        inside = side & (np.abs(x - c) <= half_width + 1e-12)
        if inside.sum() < 4:
            continue
        coef = np.polynomial.polynomial.polyfit(x[inside] - c, y[inside], 2)
        keep.append(c)
        curv.append(abs(2.0 * coef[2]))
        try:
            ratio.append(points_mle_ratio(x[inside], y[inside]))
        except GprddError:
            ratio.append(math.nan)
    if not keep:
        raise ValueError("curve has no window of half-width 0.1 with at least four points on one side")
    return np.array(keep), np.array(curv), np.array(ratio)


def cmd_diagnose(args, v) -> list:
    formats = _formats(v["format"], ("csv", "svg"), ("csv", "svg"))
    jobs = []
    if v["curve"]:
        text = Path(v["curve"]).read_text()
        rows = [r.split(",") for r in text.strip().splitlines()]
        if [h.strip() for h in rows[0]] != ["x", "y"]:
            raise ParseError(f"{v['curve']}: row 1: header must be 'x,y'")
        try:
            pts = np.array([[float(a), float(b)] for a, b in rows[1:]])
        except ValueError as exc:
            raise ParseError(f"{v['curve']}: {exc}") from None
        b = 0.0 if v["boundary"] is None else v["boundary"]
        jobs.append((Path(v["curve"]).stem, *curve_profiles(pts[:, 0], pts[:, 1], b)))
    else:
        centers = default_window_centers()
        for name in _dgp_list(v["dgp"]):
            dgp = get_dgp(name)
            jobs.append((name, centers, second_derivative_profile(dgp, centers),
                         sliding_window_mle_ratio(dgp, centers)))
    out_dir = Path(v["out_dir"])
    written = []
    for name, centers, curv, ratio in jobs:
        print(f"{name}: max |mu''| {np.nanmax(curv):.6g} at {centers[np.nanargmax(curv)]:.6g}; "
              f"max ratio {np.nanmax(ratio):.6g} at {centers[np.nanargmax(ratio)]:.6g}")
        if "csv" in formats:
            _write(out_dir, f"diagnose_{_safe(name)}.csv", _profile_csv(centers, curv, ratio), written)
        if "svg" in formats:
            _write(out_dir, f"diagnose_{_safe(name)}.svg", profile_svg(name, centers, curv, ratio), written)
    return written


COMMANDS = {"fit": cmd_fit, "simulate": cmd_simulate, "diagnose": cmd_diagnose}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        values = _resolve(args)
        written = COMMANDS[args.command](args, values)
    except GprddError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
