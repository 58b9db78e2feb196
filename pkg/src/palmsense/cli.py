"""``palmsense`` command line: simulate, calibrate, train, eval, localize, accuracy.

Every option can also come from a TOML file given with ``--config``. Top-level
keys apply to any command that has the option; a ``[train]`` (etc.) table
applies to that command only. Precedence is flags > file > built-in defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .dataset_io import (
    load_geometry,
    load_model,
    load_profile,
    read_dataset,
    read_stream,
    record_stream,
    save_model,
    save_profile,
    write_csv,
    write_dataset,
)
from .errors import FormatError, LengthMismatch, PalmSenseError
from .experiments import ACCURACY_FORCE, HOLD_FRAMES, electrode_accuracy, line_trace, point_accuracy
from .localization import DEFAULT_TAU, calibrate_baseline, estimate_positions
from .mixture import FORCE_REGULARIZATION, EmConfig, fit_force_model, gmr_predict_many, rmse, rmse_per_axis
from .simulator import PalmSimulator, SimConfig
from .types import TactileFrame, geometry_default
from .wire import decode_stream

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

COMMANDS = ("simulate", "calibrate", "train", "eval", "localize", "accuracy")


class CliError(Exception):
    pass


# -- parser -------------------------------------------------------------------

def _positive_int(text) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _positive_float(text) -> float:
    value = float(text)
    if not value > 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _nonneg_float(text) -> float:
    value = float(text)
    if not value >= 0 or not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {text}")
    return value


def _point(text) -> tuple[float, float]:
    parts = str(text).split(",")
    if len(parts) != 2:
        raise argparse.ArgumentTypeError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _add_sim_flags(p):
    g = p.add_argument_group("simulator")
    g.add_argument("--noise-std", type=_nonneg_float, default=2.0, help="channel noise std in counts (default 2)")
    g.add_argument("--gain", type=_positive_float, default=800.0, help="counts per newton at the footprint centre")
    g.add_argument("--footprint-radius", type=_positive_float, default=6.0, help="Gaussian footprint radius, mm")
    g.add_argument("--force-per-mm", type=_positive_float, default=2.0, help="normal force per mm of depth, N")
    g.add_argument("--baseline-level", type=_nonneg_float, default=300.0, help="idle channel level, counts")
    g.add_argument("--geometry", help="geometry JSON (default: built-in 4x4 grid)")


def _add_em_flags(p):
    g = p.add_argument_group("EM")
    g.add_argument("--k-min", type=_positive_int, default=1, help="smallest K tried (default 1)")
    g.add_argument("--k-max", type=_positive_int, default=10, help="largest K tried (default 10)")
    g.add_argument("--max-iterations", type=_positive_int, default=200)
    g.add_argument("--tolerance", type=_positive_float, default=1e-6, help="relative log-likelihood change to stop")
    g.add_argument("--regularization", type=_positive_float, default=FORCE_REGULARIZATION,
                   help=f"diagonal added to each covariance, standardized units (default {FORCE_REGULARIZATION:g})")
    g.add_argument("--restarts", type=_positive_int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="palmsense", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="TOML file with option defaults")
        return p

    p = command("simulate", "generate a labeled dataset or a raw stream recording from the palm simulator")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--protocol", action="store_true", help="calibration protocol dataset (CSV, default)")
    mode.add_argument("--idle", action="store_true", help="no-contact stream recording")
    mode.add_argument("--trace", choices=("line", "points"), help="contact trace stream recording")
    p.add_argument("--out", help="output path (required)")
    p.add_argument("--truth", help="with --trace: per-frame true contact positions (CSV)")
    p.add_argument("--points", type=_positive_int, default=28, help="protocol contact points (default 28)")
    p.add_argument("--repeats", type=_nonneg_int, default=5, help="presses per point (default 5)")
    p.add_argument("--samples-per-press", type=_positive_int, default=700, help="rows per press (default 700)")
    p.add_argument("--depth", type=_positive_float, default=4.0, help="final press depth, mm (default 4)")
    p.add_argument("--frames", type=_positive_int, default=100, help="idle frames, or frames per trace point/line")
    p.add_argument("--idle-lead", type=_nonneg_int, default=0, help="idle frames before a trace")
    p.add_argument("--start", type=_point, default=(-10.0, -10.0), help="line trace start 'x,y'")
    p.add_argument("--end", type=_point, default=(10.0, 10.0), help="line trace end 'x,y'")
    p.add_argument("--contact-force", type=_nonneg_float, default=ACCURACY_FORCE, help="trace normal force, N")
    p.add_argument("--seed", type=int, default=0)
    _add_sim_flags(p)

    p = command("calibrate", "estimate per-channel baselines and variations from an idle recording")
    p.add_argument("--idle", help="idle stream recording, '-' for stdin (required)")
    p.add_argument("--out", help="profile JSON (required)")
    p.add_argument("--sigma-floor", type=_positive_float, default=1.0)

    p = command("train", "fit a force model (BIC over K) to a labeled dataset")
    p.add_argument("--data", help="training dataset CSV (required)")
    p.add_argument("--out", help="model JSON (required)")
    p.add_argument("--profile", help="profile JSON whose baselines shift the inputs (default: channel means)")
    p.add_argument("--seed", type=int, default=0)
    _add_em_flags(p)

    p = command("eval", "score a force model on a labeled dataset")
    p.add_argument("--model", help="model JSON (required)")
    p.add_argument("--data", help="test dataset CSV (required)")
    p.add_argument("--per-sample", help="write per-sample predictions to this CSV")

    p = command("localize", "estimate the contact position of every frame in a recording")
    p.add_argument("--stream", help="stream recording, '-' for stdin (required)")
    p.add_argument("--profile", help="profile JSON (required)")
    p.add_argument("--geometry", help="geometry JSON (default: built-in 4x4 grid)")
    p.add_argument("--out", default="-", help="per-frame CSV (default stdout)")
    p.add_argument("--truth", help="true positions CSV from 'simulate --trace --truth'; adds error stats")
    p.add_argument("--tau", type=_positive_float, default=DEFAULT_TAU, help="activation gate in sigmas")

    p = command("accuracy", "simulated localization accuracy experiment")
    p.add_argument("--mode", choices=("point", "line", "electrode", "midpoint"), default="point")
    p.add_argument("--contacts", type=_positive_int, default=100)
    p.add_argument("--half-width", type=_positive_float, default=10.0, help="contacts drawn from [-w, w]^2 mm")
    p.add_argument("--force", type=_positive_float, default=ACCURACY_FORCE, help="contact force, N")
    p.add_argument("--hold", type=_positive_int, default=HOLD_FRAMES, help="frames averaged per contact")
    p.add_argument("--steps", type=_positive_int, default=200, help="line mode: frames per trial")
    p.add_argument("--trials", type=_positive_int, default=3, help="line mode: repetitions")
    p.add_argument("--start", type=_point, default=(-10.0, -10.0))
    p.add_argument("--end", type=_point, default=(10.0, 10.0))
    p.add_argument("--profile", help="profile JSON (default: calibrated from simulated idle frames)")
    p.add_argument("--tau", type=_positive_float, default=DEFAULT_TAU)
    p.add_argument("--out", help="per-contact (point) or per-frame (line) CSV")
    p.add_argument("--seed", type=int, default=0)
    _add_sim_flags(p)
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _options(subparser) -> dict:
    return {a.dest: a for a in subparser._actions if a.option_strings and a.dest not in ("help", "config")}


# -- config file ------------------------------------------------------------------

def _coerce(action, key, value, path):
    try:
        if action.nargs == 0:                       # store_true
            if not isinstance(value, bool):
                raise ValueError("expected true or false")
            return value
        if isinstance(value, bool):
            raise ValueError("unexpected boolean")
        if isinstance(value, list) and action.type is _point:
            value = ",".join(str(v) for v in value)
        out = action.type(str(value)) if action.type else str(value)
        if action.choices is not None and out not in action.choices:
            raise ValueError(f"expected one of {', '.join(action.choices)}")
        return out
    except (ValueError, TypeError, argparse.ArgumentTypeError) as exc:
        raise CliError(f"{path}: bad value for '{key}': {exc}") from None


def load_config(path: str, command: str, options: dict) -> dict:
    """Settings for ``command`` from a TOML file, keyed by argparse dest."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: {exc}") from None
    known = set()
    for name in COMMANDS:
        known |= set(_options(_subparser(build_parser(), name)))
    out = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            if key not in COMMANDS:
                raise CliError(f"{path}: unknown section [{key}]")
            if key != command:
                continue
            for sub_key, sub_value in value.items():
                dest = sub_key.replace("-", "_")
                if dest not in options:
                    raise CliError(f"{path}: unknown option '{sub_key}' in [{key}]")
                out[dest] = _coerce(options[dest], sub_key, sub_value, path)
            continue
        dest = key.replace("-", "_")
        if dest not in known:
            raise CliError(f"{path}: unknown option '{key}'")
        if dest in options and dest not in out:
            out[dest] = _coerce(options[dest], key, value, path)
    # section entries override top-level ones
    section = doc.get(command, {})
    for sub_key, sub_value in section.items():
        dest = sub_key.replace("-", "_")
        out[dest] = _coerce(options[dest], sub_key, sub_value, path)
    return out


# options that must end up set, from a flag or the config file
REQUIRED = {
    "simulate": ("out",),
    "calibrate": ("idle", "out"),
    "train": ("data", "out"),
    "eval": ("model", "data"),
    "localize": ("stream", "profile"),
    "accuracy": (),
}


def _validate(args) -> argparse.Namespace:
    missing = [f"--{d.replace('_', '-')}" for d in REQUIRED[args.command] if getattr(args, d) in (None, False)]
    if missing:
        raise CliError(f"{args.command}: missing required option(s) {', '.join(missing)}")
    if args.command == "simulate" and sum(map(bool, (args.protocol, args.idle, args.trace))) > 1:
        raise CliError("simulate: --protocol, --idle and --trace are mutually exclusive")
    return args


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.config:
        return _validate(args)
    options = _options(_subparser(parser, args.command))
    file_values = load_config(args.config, args.command, options)
    # re-parse with no defaults to learn which flags were given explicitly
    quiet = build_parser()
    for action in _subparser(quiet, args.command)._actions:
        action.default = argparse.SUPPRESS
    explicit = vars(quiet.parse_args(argv))
    for dest, value in file_values.items():
        if dest not in explicit:
            setattr(args, dest, value)
    return _validate(args)


# -- helpers --------------------------------------------------------------------

def _emit(doc) -> None:
    json.dump(doc, sys.stdout, indent=1, sort_keys=True, allow_nan=False, default=_json_default)
    sys.stdout.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _finite(x: float):
    return x if math.isfinite(x) else None


def _sim_config(args) -> SimConfig:
    geometry = load_geometry(args.geometry) if args.geometry else geometry_default()
    return SimConfig(
        geometry=geometry,
        footprint_radius=args.footprint_radius,
        gain=args.gain,
        force_per_mm=args.force_per_mm,
        baseline_level=args.baseline_level,
        noise_std=args.noise_std,
        rng_seed=args.seed,
    )


# -- commands -------------------------------------------------------------------

def cmd_simulate(args) -> None:
    config = _sim_config(args)
    sim = PalmSimulator(config)
    if args.idle:
        n = record_stream(sim.idle_frames(args.frames), args.out)
        _emit({"kind": "idle", "frames": n, "out": args.out})
        return
    if args.trace:
        _simulate_trace(args, sim)
        return
    data = sim.run_calibration_protocol(args.points, args.repeats, args.samples_per_press, args.depth)
    write_dataset(data, args.out)
    _emit({"kind": "protocol", "rows": len(data), "points": args.points, "repeats": args.repeats,
           "samples_per_press": args.samples_per_press, "out": args.out})


def _simulate_trace(args, sim: PalmSimulator) -> None:
    if args.trace == "line":
        path = np.linspace(args.start, args.end, args.frames)
    else:
        # hold each electrode-grid cell centre for --frames frames
        g = sim.config.geometry.positions
        cells = np.array([(g[i] + g[j] + g[k] + g[l]) / 4 for i, j, k, l in _grid_cells(g)])
        path = np.repeat(cells, args.frames, axis=0)
    truth = [None] * args.idle_lead + [(float(p[0]), float(p[1])) for p in path]
    forces = np.array([0.0 if t is None else args.contact_force for t in truth])
    points = np.array([(0.0, 0.0) if t is None else t for t in truth])
    for p in points:
        sim._check_position(p)
    channels = sim.respond(points, forces) if len(points) else np.empty((0, 16), dtype=int)
    rate = sim.config.sample_rate
    frames = [TactileFrame(i, i / rate, tuple(row)) for i, row in enumerate(channels)]
    n = record_stream(frames, args.out)
    if args.truth:
        write_csv(args.truth, ["seq", "x", "y"],
                  ([i, "", ""] if t is None else [i, repr(t[0]), repr(t[1])] for i, t in enumerate(truth)))
    _emit({"kind": f"trace-{args.trace}", "frames": n, "out": args.out, "truth": args.truth})


def _grid_cells(positions):
    """Index quadruples of unit cells of a rectangular electrode grid."""
    xs = np.unique(positions[:, 0])
    ys = np.unique(positions[:, 1])
    index = {(float(x), float(y)): i for i, (x, y) in enumerate(positions)}
    cells = []
    for y0, y1 in zip(ys[:-1], ys[1:]):
        for x0, x1 in zip(xs[:-1], xs[1:]):
            corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
            if all((float(x), float(y)) in index for x, y in corners):
                cells.append([index[(float(x), float(y))] for x, y in corners])
    if not cells:
        raise CliError("geometry is not a rectangular grid; point traces need grid cells")
    return cells


def _read_recording(path):
    """Decode a recording file, or raw wire octets on stdin for '-'."""
    if path == "-":
        return decode_stream(sys.stdin.buffer.read())
    return read_stream(path)


def cmd_calibrate(args) -> None:
    frames, state = _read_recording(args.idle)
    profile = calibrate_baseline(frames, sigma_floor=args.sigma_floor)
    save_profile(profile, args.out)
    _emit({
        "frames": state.frames_decoded,
        "corrupted": state.corrupted,
        "baselines": profile.baselines.tolist(),
        "variations": profile.variations.tolist(),
        "out": args.out,
    })


def cmd_train(args) -> None:
    if args.k_max < args.k_min:
        raise CliError(f"--k-max ({args.k_max}) is smaller than --k-min ({args.k_min})")
    data = read_dataset(args.data)
    baselines = load_profile(args.profile).baselines if args.profile else None
    em = EmConfig(max_iterations=args.max_iterations, loglik_tolerance=args.tolerance,
                  covariance_regularization=args.regularization, restarts=args.restarts, rng_seed=args.seed)
    model, reports = fit_force_model(data.tactile, data.force, (args.k_min, args.k_max), em,
                                     baselines=baselines, geometry_hash=data.geometry_hash)
    save_model(model, args.out)
    pred, _ = gmr_predict_many(model, data.tactile)
    _emit({
        "selected_k": model.n_components,
        "samples": len(data),
        "train_rmse": rmse(pred, data.force),
        "table": [{**r.summary(), "selected": r.k == model.n_components} for r in reports],
        "out": args.out,
    })


def cmd_eval(args) -> None:
    model = load_model(args.model)
    data = read_dataset(args.data)
    if len(data) == 0:
        raise CliError(f"{args.data}: dataset is empty")
    if data.force.shape[1] != model.output_dim:
        raise LengthMismatch(f"model predicts {model.output_dim} outputs, dataset has {data.force.shape[1]}")
    pred, _ = gmr_predict_many(model, data.tactile)
    if args.per_sample:
        rows = ([i, *map(repr, p.tolist()), *map(repr, t.tolist())]
                for i, (p, t) in enumerate(zip(pred, data.force)))
        write_csv(args.per_sample, ["index", "pred_fx", "pred_fy", "pred_fz", "fx", "fy", "fz"], rows)
    _emit({
        "samples": len(data),
        "k": model.n_components,
        "rmse": rmse(pred, data.force),
        "rmse_axis": dict(zip(("fx", "fy", "fz"), rmse_per_axis(pred, data.force).tolist())),
    })


def _read_truth(path) -> dict[int, tuple[float, float]]:
    truth = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["seq", "x", "y"]:
            raise FormatError(f"expected header seq,x,y, got {','.join(header or [])}", 1, path)
        for lineno, row in enumerate(reader, start=2):
            try:
                seq, x, y = row
                if x != "":
                    truth[int(seq)] = (float(x), float(y))
            except ValueError:
                raise FormatError("expected seq,x,y", lineno, path) from None
    return truth


def cmd_localize(args) -> None:
    geometry = load_geometry(args.geometry) if args.geometry else geometry_default()
    profile = load_profile(args.profile)
    frames, state = _read_recording(args.stream)
    channels = np.array([f.channels for f in frames], dtype=float).reshape(-1, 16)
    est = estimate_positions(channels, profile, geometry, args.tau)
    rows = []
    for f, p in zip(frames, est):
        contact = not np.isnan(p[0])
        rows.append([f.sequence, repr(f.timestamp), int(contact),
                     repr(float(p[0])) if contact else "", repr(float(p[1])) if contact else ""])
    write_csv(args.out, ["seq", "time", "contact", "x", "y"], rows)
    if args.out in (None, "-"):
        return
    summary = {"frames": len(frames), "corrupted": state.corrupted, "contact_frames": int((~np.isnan(est[:, 0])).sum())}
    if args.truth:
        truth = _read_truth(args.truth)
        errors = [float(np.hypot(p[0] - truth[f.sequence][0], p[1] - truth[f.sequence][1]))
                  for f, p in zip(frames, est) if f.sequence in truth and not np.isnan(p[0])]
        missed = sum(1 for f, p in zip(frames, est) if f.sequence in truth and np.isnan(p[0]))
        summary.update({
            "scored_frames": len(errors),
            "missed_frames": missed,
            "mean_error_mm": _finite(float(np.mean(errors))) if errors else None,
            "max_error_mm": _finite(float(np.max(errors))) if errors else None,
        })
    _emit(summary)


def cmd_accuracy(args) -> None:
    config = _sim_config(args)
    profile = load_profile(args.profile) if args.profile else None
    if args.mode == "line":
        rows = line_trace(config, args.start, args.end, args.steps, args.trials, args.force, args.tau)
        if args.out:
            write_csv(args.out, ["trial", "seq", "time", "true_x", "true_y", "est_x", "est_y", "error"],
                      ([*r[:2], *(repr(v) if not math.isnan(v) else "" for v in r[2:])] for r in rows))
        errors = np.array([r[-1] for r in rows])
        hit = errors[~np.isnan(errors)]
        _emit({"mode": "line", "frames": len(rows), "missed": int(np.isnan(errors).sum()),
               "mean_error_mm": _finite(float(hit.mean())) if hit.size else None,
               "max_error_mm": _finite(float(hit.max())) if hit.size else None})
        return
    if args.mode == "point":
        report = point_accuracy(config, args.contacts, args.half_width, args.force, args.hold, args.tau, profile)
    else:
        report = electrode_accuracy(config, args.contacts, midpoints=args.mode == "midpoint", seed=args.seed)
    if args.out:
        hit = ~np.isnan(report.estimates[:, 0])
        err = np.full(len(hit), np.nan)
        err[hit] = report.errors
        write_csv(args.out, ["index", "true_x", "true_y", "est_x", "est_y", "error"],
                  ([i, repr(t[0]), repr(t[1]), *(repr(v) if not math.isnan(v) else "" for v in (e[0], e[1], r))]
                   for i, (t, e, r) in enumerate(zip(report.truths.tolist(), report.estimates.tolist(), err))))
    summary = {k: (_finite(v) if isinstance(v, float) else v) for k, v in report.summary().items()}
    _emit({"mode": args.mode, **summary})


HANDLERS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "train": cmd_train,
    "eval": cmd_eval,
    "localize": cmd_localize,
    "accuracy": cmd_accuracy,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as exc:
        print(f"palmsense: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")
    try:
        HANDLERS[args.command](args)
    except (PalmSenseError, CliError, OSError, ValueError) as exc:
        msg = " ".join(str(exc).split())
        if isinstance(exc, OSError) and exc.filename:
            msg = f"{exc.filename}: {exc.strerror}"
        print(f"palmsense: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
