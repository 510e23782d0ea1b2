"""Command-line interface: ``urysohn <command> [options]``.

Exit codes: 0 success, 2 usage, 3 data or parse error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from collections import deque
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    block_column_rank, brute_rank, check_describability, classify_structure,
    enumerate_full_system, feedback_black_box, fir_black_box, model_black_box,
)
from .errors import LengthMismatch, NonFinite, UrysohnError
from .identify import (
    IdentConfig, IdentState, coverage_report, extrapolate_edges, ident_step_interpolated,
    ident_step_quantized, predict_with_validity, run_epochs,
)
from .io import (
    ParseError, RunManifest, load_checkpoint, read_pairs, read_signal, save_model,
    write_pairs, write_residuals, write_signal,
)
from .operator import SignalSeries, eval_interpolated, eval_quantized, quantize
from .bench import experiment as exp
from .bench.metrics import error_l1, error_l2_normalized
from .bench.plant import MechanicalSystemParams, simulate_plant
from .bench.signals import (
    ExperimentConfig, add_noise, downsample, gen_discrete_control, gen_reflected_walk,
    sample_holds,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _alpha(text):
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in (0, 1], got {text}")
    return v


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _manifest(args, command, config, seeds=()):
    return RunManifest(command, config, list(seeds), list(args.argv), __version__)


def _emit(obj):
    print(json.dumps(obj, indent=2, default=float))


# ---------------------------------------------------------------- simulate

def _plant_params(args):
    return MechanicalSystemParams(omega=args.omega, zeta=args.zeta, L=args.L, H=args.H, dt=args.dt)


def cmd_simulate(args):
    params = _plant_params(args)
    cfg = ExperimentConfig(delta_tau=args.delta_tau, delta_x=args.delta_x, t_max=args.tmax,
                           G=args.G, sigma=args.sigma, seed=args.seed, n=args.n,
                           m=max(1, round(2 * math.pi / args.delta_tau)))
    ctrl_ss, noise_ss = np.random.SeedSequence(args.seed).spawn(2)
    if args.control == "zero":
        x = SignalSeries(np.zeros(int(round(args.tmax / params.dt)) + 1), params.dt)
    elif args.control == "discrete":
        x = gen_discrete_control(cfg, np.random.default_rng(ctrl_ss), params)
    else:
        x = gen_reflected_walk(cfg, np.random.default_rng(ctrl_ss), params)
    y = simulate_plant(x, params)

    if args.control == "walk":
        xc, yc = downsample(SignalSeries(x.values[1:], x.dt), SignalSeries(y.values[1:], y.dt),
                            args.delta_tau, args.delta_x)
    else:
        xc, yc = sample_holds(x, y, args.delta_tau)
    if args.sigma > 0:
        yc = add_noise(yc, params.y_smax, args.sigma, np.random.default_rng(noise_ss))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    p = args.prefix
    write_signal(x, out / f"{p}_control.csv")
    write_signal(y, out / f"{p}_output.csv")
    write_pairs(xc, yc, out / f"{p}_coarse.csv")
    files = [f"{p}_control.csv", f"{p}_output.csv", f"{p}_coarse.csv"]
    if args.plot:
        from .plotting import plot_signals
        span = (0.0, min(float(x.t[-1]), 20 * args.delta_tau * 8))
        plot_signals(out / f"{p}_signals.png", {"x": x, "y": y}, xlim=span,
                     secondary=("y",))
        files.append(f"{p}_signals.png")
    config = {"control": args.control, "plant": asdict(params), "experiment": cfg.to_dict()}
    _manifest(args, "simulate", config, [args.seed]).finish().save(out / f"{p}_manifest.json")
    _emit({"files": files, "fine_samples": len(x), "coarse_samples": len(xc),
           "y_smax": params.y_smax})
    return EXIT_OK


# ---------------------------------------------------------------- identify

def _load_record(args):
    if args.pairs:
        return read_pairs(args.pairs)
    if args.input and args.output:
        x, y = read_signal(args.input), read_signal(args.output)
        return x, y
    raise UsageError("give --pairs FILE or both --input and --output")


def _parse_stream_line(line, lineno):
    parts = line.split(",")
    if len(parts) != 2:
        raise ParseError(f"expected 'x,y', got {line!r}", lineno)
    try:
        x, y = float(parts[0]), float(parts[1])
    except ValueError:
        raise ParseError(f"non-numeric pair {line!r}", lineno)
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ParseError("non-finite value", lineno)
    return x, y


def _stream(args, state, stdin):
    """Consume ``x,y`` lines, stepping once the window is full."""
    m = state.model.m
    window = deque(maxlen=m)
    step = ident_step_interpolated if args.mode == "interpolated" else ident_step_quantized
    for lineno, raw in enumerate(stdin, start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.replace(" ", "") == "x,y":
            continue
        x, y = _parse_stream_line(line, lineno)
        window.append(x if args.mode == "interpolated" else quantize(x, state.model))
        if len(window) < m:
            continue
        D = step(state, list(window), y)
        if not math.isfinite(D):
            raise NonFinite("residual is not finite", step=state.samples_seen)
        if args.checkpoint_every and state.samples_seen % args.checkpoint_every == 0:
            save_model(state.model, args.model_out, state.counters)


def cmd_identify(args):
    config = IdentConfig(alpha=args.alpha, interpolated=args.mode == "interpolated",
                         stop_tol=args.stop_tol, stop_window=args.stop_window)
    if args.resume:
        model, counters = load_checkpoint(args.resume)
        if counters is None:
            counters = np.zeros(model.matrix.shape, dtype=np.int64)
        state = IdentState(model, counters, config.alpha, config.stop_tol, config.stop_window)
    else:
        state = IdentState.fresh(args.m, args.n, args.x_min, args.x_max, config)

    if args.stream:
        _stream(args, state, sys.stdin)
    else:
        x, y = _load_record(args)
        state = run_epochs(x, y, config, state.model.m, state.model.n, state.model.x_min,
                           state.model.x_max, args.passes, state=state)
        bad = np.flatnonzero(~np.isfinite(state.model.matrix).all(axis=1))
        if bad.size:
            raise NonFinite("identified matrix is not finite", step=state.samples_seen)

    model = state.model
    if args.extrapolate:
        model = extrapolate_edges(model, state.counters)
    save_model(model, args.model_out, state.counters)
    base = Path(args.model_out)
    res_path = Path(args.residuals) if args.residuals else base.with_name(base.stem + "_residuals.csv")
    write_residuals(state.residuals, res_path)
    if args.plot:
        from .plotting import plot_matrix, plot_residuals
        plot_matrix(base.with_name(base.stem + "_matrix.png"), model)
        plot_residuals(base.with_name(base.stem + "_residuals.png"), state.residuals)
    config_d = {"alpha": args.alpha, "mode": args.mode, "m": model.m, "n": model.n,
                "x_min": model.x_min, "x_max": model.x_max, "passes": args.passes,
                "stop_tol": args.stop_tol, "stop_window": args.stop_window,
                "extrapolate": args.extrapolate, "stream": args.stream,
                "resume": args.resume}
    _manifest(args, "identify", config_d).finish().save(base.with_name(base.stem + "_manifest.json"))
    cov = coverage_report(state)
    _emit({"steps": state.samples_seen, "stopped": state.stopped,
           "pass_norms": state.pass_norms, "untouched_columns": cov.untouched_columns,
           "identified_range": cov.identified_range,
           "identified_x_range": cov.identified_x_range})
    return EXIT_OK


# ---------------------------------------------------------------- predict / validate

def _read_input(path):
    """Accept either a ``t,value`` or a ``t,x,y`` CSV and return the input series."""
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    if [h.strip() for h in header] == ["t", "x", "y"]:
        return read_pairs(path)[0]
    return read_signal(path)


def _predict(model, counters, x, mode):
    if counters is not None:
        return predict_with_validity(model, counters, x, interpolated=mode == "interpolated")
    return eval_interpolated(model, x) if mode == "interpolated" else eval_quantized(model, x)


def cmd_predict(args):
    model, counters = load_checkpoint(args.model)
    x = _read_input(args.input)
    pred = _predict(model, counters, x, args.mode)
    write_signal(pred, args.out)
    out = Path(args.out)
    if args.plot:
        from .plotting import plot_signals
        plot_signals(out.with_suffix(".png"), {"x": x, "prediction": pred},
                     secondary=("prediction",))
    _manifest(args, "predict", {"model": args.model, "input": args.input, "mode": args.mode}) \
        .finish().save(out.with_name(out.stem + "_manifest.json"))
    _emit({"samples": len(pred), "valid": int(pred.valid.sum()),
           "invalid": int((~pred.valid).sum())})
    return EXIT_OK


def cmd_validate(args):
    model, counters = load_checkpoint(args.model)
    if args.reference:
        x = _read_input(args.input)
        ref = read_signal(args.reference)
    else:
        x, ref = read_pairs(args.input)
    if len(x) != len(ref):
        raise LengthMismatch(f"input has {len(x)} samples, reference {len(ref)}")
    pred = _predict(model, counters, x, args.mode)
    m = model.m
    if args.metric == "l1":
        y_smax = args.y_smax if args.y_smax is not None else MechanicalSystemParams().y_smax
        err = error_l1(ref, pred, m, y_smax)
    else:
        err = error_l2_normalized(ref.values[m - 1:], pred.values[m - 1:])
    warm = m - 1
    report = {"metric": args.metric, "error": err, "error_percent": 100 * err,
              "samples": len(pred), "warmup": warm,
              "valid": int(pred.valid.sum()),
              "invalid": int((~pred.valid[warm:]).sum()),
              "counters": counters is not None}
    if args.manifest:
        _manifest(args, "validate", {"model": args.model, "input": args.input,
                                     "reference": args.reference, "metric": args.metric,
                                     "mode": args.mode}).finish().save(args.manifest)
    _emit(report)
    return EXIT_OK


# ---------------------------------------------------------------- table

def _parse_cell(spec):
    cell = {}
    for part in spec.split(":"):
        key, sep, val = part.partition("=")
        key = key.strip()
        if not sep or key not in ("m", "n", "sigma", "alpha"):
            raise UsageError(f"bad cell spec {spec!r}; use e.g. m=8:n=41")
        cell[key] = int(val) if key in ("m", "n") else float(val)
    return cell


TABLE_HEADER = ["scenario", "m", "n", "alpha", "sigma", "replications",
                "mean_percent", "ci95_percent", "reference_percent"]


def cmd_table(args):
    scenario, default_reps = exp.TABLES[args.table]
    overrides = {"seed": args.seed}
    if args.tmax is not None:
        overrides["t_max"] = args.tmax
    base = exp.default_config(scenario, **overrides)
    reps = args.reps or default_reps
    if args.cells:
        cells = []
        for spec in args.cells:
            cell = _parse_cell(spec)
            _, match = exp.table_cells(args.table, base, **{k: [v] for k, v in cell.items()})
            cells.extend(match if match else [exp.cell_config(scenario, base, **cell)])
    else:
        _, cells = exp.table_cells(args.table, base, m=args.m, n=args.n,
                                   sigma=args.sigma, alpha=args.alpha)
    if not cells:
        raise UsageError("no table cells selected")
    result = exp.run_grid(scenario, cells, reps, args.seed, jobs=args.jobs)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = f"table_{args.table}"
    with open(out / f"{name}_replications.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "m", "n", "alpha", "sigma", "replication", "error"])
        for r in result.rows:
            w.writerow([r.scenario, r.m, r.n, repr(r.alpha), repr(r.sigma), r.replication,
                        repr(r.error)])
    lines = []
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for s in result.summary:
            ref = exp.reference_value(args.table, s)
            ci = "" if math.isnan(s.ci95) else f"{100 * s.ci95:.4f}"
            row = [s.scenario, s.m, s.n, repr(s.alpha), repr(s.sigma), s.replications,
                   f"{100 * s.mean:.4f}", ci, "" if ref is None else ref]
            w.writerow(row)
            lines.append(row)
    if args.plot:
        from .plotting import plot_table
        ref = lambda s: exp.reference_value(args.table, s)  # noqa: E731
        if args.table == "t1":
            plot_table(out / f"{name}.png", result.summary, "m", "n", reference=ref)
        elif args.table in ("t2", "t3"):
            plot_table(out / f"{name}.png", result.summary, "sigma", "alpha", reference=ref)
    config = {"table": args.table, "scenario": scenario.value, "replications": reps,
              "cells": [c.to_dict() for c in cells]}
    _manifest(args, "table", config, [args.seed]).finish().save(out / f"{name}_manifest.json")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(TABLE_HEADER)
    w.writerows(lines)
    return EXIT_OK


# ---------------------------------------------------------------- analyze

def cmd_analyze(args):
    if args.what == "rank":
        system = enumerate_full_system(args.m, args.n)
        report = {"m": args.m, "n": args.n, "rank": brute_rank(system),
                  "expected": args.m * args.n - args.m + 1, "windows": len(system)}
        if args.blocks:
            report["blocks"] = args.blocks
            report["block_rank"] = block_column_rank(system, args.blocks)
    elif args.what == "describability":
        x_min, x_max = 0.0, 1.0
        if args.plant == "feedback":
            box = feedback_black_box(args.a)
        elif args.plant == "fir":
            box = fir_black_box(np.asarray(args.h if args.h else [1.0, 0.5, 0.25]))
        elif args.plant == "mechanical":
            box = exp.plant_black_box(2 * math.pi / args.m)
        else:
            if not args.model:
                raise UsageError("--plant model needs --model FILE")
            model, _ = load_checkpoint(args.model)
            box, x_min, x_max = model_black_box(model), model.x_min, model.x_max
        rep = check_describability(box, args.m, args.n, args.tolerance, x_min, x_max,
                                   max_pairs=args.max_pairs, seed=args.seed)
        report = {"plant": args.plant, **rep.to_dict()}
    else:
        if not args.model:
            raise UsageError("classify needs --model FILE")
        model, _ = load_checkpoint(args.model)
        report = classify_structure(model, args.tolerance).to_dict()
    if args.manifest:
        cfg = {k: v for k, v in vars(args).items() if k not in ("func", "argv")}
        _manifest(args, f"analyze {args.what}", cfg).finish().save(args.manifest)
    _emit(report)
    return EXIT_OK


# ---------------------------------------------------------------- rerun

def cmd_rerun(args):
    with open(args.manifest_file) as fh:
        manifest = json.load(fh)
    argv = manifest.get("argv")
    if not isinstance(argv, list) or not argv:
        raise ParseError("manifest has no argv")
    return main(argv)


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="urysohn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate the spring-mass plant")
    s.add_argument("--control", choices=["zero", "discrete", "walk"], default="discrete")
    s.add_argument("--tmax", type=float, default=1e4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--G", type=float, default=0.05)
    s.add_argument("--delta-tau", type=float, default=2 * math.pi / 8)
    s.add_argument("--delta-x", type=float, default=0.1)
    s.add_argument("--n", type=int, default=11, help="number of control levels")
    s.add_argument("--sigma", type=float, default=0.0, help="coarse output noise level")
    s.add_argument("--omega", type=float, default=1.0)
    s.add_argument("--zeta", type=float, default=1.0)
    s.add_argument("--L", type=float, default=1.0)
    s.add_argument("--H", type=float, default=0.5)
    s.add_argument("--dt", type=float, default=2 * math.pi / 128)
    s.add_argument("--out", default=".")
    s.add_argument("--prefix", default="sim")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("identify", help="identify a matrix from input/output data")
    s.add_argument("--pairs", help="t,x,y CSV")
    s.add_argument("--input", help="t,value CSV of inputs")
    s.add_argument("--output", help="t,value CSV of outputs")
    s.add_argument("--stream", action="store_true", help="read 'x,y' lines from stdin")
    s.add_argument("--checkpoint-every", type=_positive_int, default=0)
    s.add_argument("--resume", help="continue from a saved model with counters")
    s.add_argument("--m", type=_positive_int, default=8)
    s.add_argument("--n", type=int, default=11)
    s.add_argument("--x-min", type=float, default=0.0)
    s.add_argument("--x-max", type=float, default=1.0)
    s.add_argument("--alpha", type=_alpha, default=1.0)
    s.add_argument("--mode", choices=["quantized", "interpolated"], default="quantized")
    s.add_argument("--passes", type=_positive_int, default=1)
    s.add_argument("--stop-tol", type=float, default=0.0)
    s.add_argument("--stop-window", type=_positive_int, default=1)
    s.add_argument("--extrapolate", action="store_true",
                   help="fill never-updated entries from their neighbours")
    s.add_argument("--model-out", default="model.json")
    s.add_argument("--residuals")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_identify)

    s = sub.add_parser("predict", help="evaluate a saved model on an input signal")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True, help="t,value or t,x,y CSV")
    s.add_argument("--mode", choices=["quantized", "interpolated"], default="quantized")
    s.add_argument("--out", default="prediction.csv")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("validate", help="score a saved model against reference output")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True, help="t,x,y CSV, or t,value with --reference")
    s.add_argument("--reference", help="t,value CSV of reference output")
    s.add_argument("--metric", choices=["l1", "l2"], default="l1")
    s.add_argument("--y-smax", type=float, help="scale of the l1 metric (plant default)")
    s.add_argument("--mode", choices=["quantized", "interpolated"], default="quantized")
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("table", help="reproduce an error table of the benchmark")
    s.add_argument("table", choices=sorted(exp.TABLES))
    s.add_argument("--cells", action="append", help="cell such as m=8:n=41 (repeatable)")
    s.add_argument("--m", type=int, nargs="+")
    s.add_argument("--n", type=int, nargs="+")
    s.add_argument("--sigma", type=float, nargs="+")
    s.add_argument("--alpha", type=_alpha, nargs="+")
    s.add_argument("--reps", type=_positive_int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--tmax", type=float)
    s.add_argument("--jobs", type=_positive_int, default=1)
    s.add_argument("--out", default=".")
    s.add_argument("--plot", action="store_true")
    s.set_defaults(func=cmd_table)

    s = sub.add_parser("analyze", help="rank, describability and structure checks")
    s.add_argument("what", choices=["rank", "describability", "classify"])
    s.add_argument("--m", type=_positive_int, default=2)
    s.add_argument("--n", type=int, default=3)
    s.add_argument("--blocks", type=int, nargs="+", help="1-based blocks for a column rank")
    s.add_argument("--plant", choices=["feedback", "fir", "mechanical", "model"], default="feedback")
    s.add_argument("--a", type=float, default=0.5, help="feedback coefficient")
    s.add_argument("--h", type=float, nargs="+", help="FIR taps")
    s.add_argument("--model")
    s.add_argument("--tolerance", type=float, default=1e-6)
    s.add_argument("--max-pairs", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--manifest")
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("rerun", help="repeat the command recorded in a manifest")
    s.add_argument("manifest_file")
    s.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = argv
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"urysohn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        step = getattr(exc, "step", None)
        where = f" (step {step})" if step is not None else ""
        print(f"urysohn: numeric failure{where}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UrysohnError, ParseError, OSError, ValueError) as exc:
        print(f"urysohn: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
