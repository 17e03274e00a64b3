"""Command-line front end.

Exit codes: 0 success, 1 usage/config error, 2 runtime/validation failure.
All file outputs land under --out-dir; every command is deterministic for a
given (config, seed), so reruns produce byte-identical CSV bodies.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import coilopt, experiments, magnetics
from .config import ConfigError, ScenarioConfig, load_config, load_preset, preset_names
from .control import DiagnosticsRecorder, check_convergence_condition
from .experiments import METHODS
from .plant import write_sensor_log_csv

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the CLI contract wants 1
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self.exit_with(message))

    @staticmethod
    def exit_with(message: str) -> int:
        print(f"error: {message}", file=sys.stderr)
        return EXIT_USAGE


def _add_config_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=Path, help="scenario config file")
    src.add_argument("--preset", help="shipped preset name (see `coilsim presets`)")
    p.add_argument("--validate-only", action="store_true",
                   help="parse and validate the config, run nothing")
    p.add_argument("--out-dir", type=Path, default=Path("coilsim_out"),
                   help="output directory (default: coilsim_out)")


def _load(args) -> ScenarioConfig:
    if args.preset is not None:
        return load_preset(args.preset)
    return load_config(args.config)


def _outdir(args) -> Path:
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="coilsim",
                     description="Square-Helmholtz field testbed simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="solve the optimal side/spacing ratio")
    p.add_argument("--side-mm", type=float, required=True, help="coil side length, mm")
    p.add_argument("--csv", type=Path, help="also write uniformity vs +x position CSV")
    p.add_argument("--out-dir", type=Path, default=Path("coilsim_out"))

    p = sub.add_parser("field-map", help="evaluate the field over the configured grid")
    _add_config_args(p)

    p = sub.add_parser("sysid", help="run the identification study for all methods")
    _add_config_args(p)
    p.add_argument("--snr-db", type=float, help="override the configured SNR")
    p.add_argument("--methods", default="all", help="comma list or 'all'")

    p = sub.add_parser("step", help="run the closed-loop step response")
    _add_config_args(p)
    p.add_argument("--method", default="all", help="one method or 'all'")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--diag-csv", type=Path,
                   help="write per-step convex diagnostics (convex runs only)")
    p.add_argument("--sensor-log", type=Path, help="write t/true/disturbance/measured CSV")

    p = sub.add_parser("check", help="check the step-size convergence condition")
    _add_config_args(p)
    p.add_argument("--strict", action="store_true", help="nonzero exit on violation")
    p.add_argument("--beta-scale", type=float, default=1.0)
    p.add_argument("--c-scale", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=20000)

    sub.add_parser("presets", help="list shipped presets")
    return parser


def cmd_optimize(args) -> int:
    if args.side_mm <= 0:
        return _Parser.exit_with("--side-mm must be > 0")
    result = coilopt.solve_optimal_ratio()
    side_m = args.side_mm / 1000.0
    spacing_m = side_m / result.n
    pair = magnetics.HelmholtzPair(side=side_m, spacing=spacing_m, turns=1, current=1.0)
    curvature = coilopt.second_derivative_center(pair)
    print(f"optimal ratio n*      : {result.n:.6f}")
    print(f"polynomial residual   : {result.residual:.3e}  ({result.iterations} bisections)")
    print(f"side length           : {args.side_mm:.1f} mm")
    print(f"optimal spacing       : {spacing_m * 1000.0:.1f} mm")
    print(f"center curvature      : {curvature:.3e} T/m^2")
    if args.csv is not None:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        path = args.csv if args.csv.is_absolute() else args.out_dir / args.csv
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["pos_over_d", "uniformity_pct"])
            step = 1e-3
            r = 0.0
            while r <= 0.8 * spacing_m:
                h = magnetics.uniformity(pair, magnetics.Point(r, 0.0, 0.0))
                writer.writerow([repr(r / spacing_m), repr(h)])
                r += step
        print(f"wrote {path}")
    return EXIT_OK


def cmd_field_map(args) -> int:
    cfg = _load(args)
    if args.validate_only:
        print("config OK")
        return EXIT_OK
    pair = cfg.pair()
    grid = cfg.grid()
    samples = magnetics.field_map(pair, grid)
    out = _outdir(args) / "field_map.csv"
    magnetics.write_field_map_csv(out, samples)
    center = magnetics.onaxis_field(pair, 0.0)
    print(f"{len(samples)} grid points; center bz = {center * 1e6:.2f} uT")
    print(f"wrote {out}")
    return EXIT_OK


def _method_list(raw: str) -> list[str]:
    if raw == "all":
        return list(METHODS)
    methods = [m.strip() for m in raw.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {METHODS}")
    return methods


def cmd_sysid(args) -> int:
    cfg = _load(args)
    if args.validate_only:
        print("config OK")
        return EXIT_OK
    methods = _method_list(args.methods)
    scn = cfg.sysid_scenario(snr_override=args.snr_db)
    rows = []
    curves = {}
    for m in methods:
        params = cfg.method_params(m)
        if m == "convex":
            report = experiments.run_sysid(scn, m, params)
        else:
            report = experiments.run_sysid(scn, m, params)
        rows.append((m, report))
        curves[m] = report.mse_curve
        print(f"{m:7s} iters_to_converge={report.iters_to_converge:5d} "
              f"final_mse={report.final_mse:.4e}")
    out = _outdir(args)
    experiments.write_metrics_csv(out / "metrics.csv", rows)
    experiments.write_mse_curves_csv(out / "mse_curve.csv", curves)
    print(f"wrote {out / 'metrics.csv'} and {out / 'mse_curve.csv'}")
    return EXIT_OK


def cmd_step(args) -> int:
    cfg = _load(args)
    if args.validate_only:
        print("config OK")
        return EXIT_OK
    methods = _method_list(args.method) if args.method != "all" else list(METHODS)
    out = _outdir(args)
    rows = []
    for m in methods:
        scn = cfg.step_scenario(m, seed_override=args.seed)
        trace: list = []
        sensor_rows: list = []
        diag = DiagnosticsRecorder() if (args.diag_csv and m == "convex") else None
        report = experiments.run_step_response(
            scn, trace=trace,
            sensor_log=sensor_rows if args.sensor_log else None,
            diagnostics=diag,
        )
        rows.append((m, report))
        trace_name = "trace.csv" if len(methods) == 1 else f"trace_{m}.csv"
        experiments.write_trace_csv(out / trace_name, trace)
        if args.sensor_log and len(methods) == 1:
            write_sensor_log_csv(out / args.sensor_log, sensor_rows)
        if diag is not None:
            diag.write_csv(out / args.diag_csv)
        reach = report.reach_target_time_s
        print(f"{m:7s} reach={reach:.3f}s mean={report.mean_steady_nt:.1f}nT "
              f"rmse={report.rmse_steady_nt:.1f}nT "
              f"fluct=[{report.fluct_min_nt:.0f}, {report.fluct_max_nt:.0f}]nT")
    experiments.write_metrics_csv(out / "metrics.csv", rows)
    print(f"wrote {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _load(args)
    if args.validate_only:
        print("config OK")
        return EXIT_OK
    params = cfg.method_params("convex")
    if args.beta_scale != 1.0 or args.c_scale != 1.0:
        from dataclasses import replace

        params = replace(params, beta=params.beta * args.beta_scale,
                         c=params.c * args.c_scale)
    order = cfg.get("sysid", "order", 2)
    seed = cfg.get("sysid", "seed", cfg.get("step", "seed", 0))
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(args.samples + order - 1)
    x = np.lib.stride_tricks.sliding_window_view(u, order)[:, ::-1]
    report = check_convergence_condition(params, x)
    print(f"lambda_max            : {report.lambda_max:.6f}")
    print(f"rate bound 2/lambda   : {report.mu_max_bound:.6f}")
    print(f"slow-branch rate      : {report.nlms_rate:.6f}  "
          f"[{'ok' if report.nlms_ok else 'VIOLATION'}]")
    print(f"fast-branch rate (c)  : {report.fixed_rate:.6f}  "
          f"[{'ok' if report.fixed_ok else 'VIOLATION'}]")
    print(f"overall               : {'pass' if report.passed else 'FAIL'}")
    if args.strict and not report.passed:
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_presets(_args) -> int:
    for name in preset_names():
        print(name)
    return EXIT_OK


_COMMANDS = {
    "optimize": cmd_optimize,
    "field-map": cmd_field_map,
    "sysid": cmd_sysid,
    "step": cmd_step,
    "check": cmd_check,
    "presets": cmd_presets,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (magnetics.PointOnWire, magnetics.ZeroCenterField, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
