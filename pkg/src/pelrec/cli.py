"""Command-line front end: ``pelrec {estimate,synth,compare,cluster}``.

Every subcommand also accepts ``--config FILE`` holding ``key=value`` lines
whose keys are long option names (``mask-half-width=2``); options given on the
command line win over the file.  Exit status is 0 on success, 2 for usage or
configuration errors (nothing is written), 1 for failures during computation.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .clustering import classify, ellipse_parameters, fit_classes, project_dvs, samples_from_field
from .engine import EngineConfig, estimate_sequence
from .errors import ConfigurationError, FormatError, PelrecError
from .fields import Status
from .image import MaskSpec
from .io import read_flow, read_manifest, read_pgm, write_csv, write_flow, write_manifest, write_pgm
from .metrics import endpoint_error, imc_frame, imc_sequence, interior_mask
from .solvers import ESTIMATORS
from .synth import NoiseSpec, Region, SceneSpec, make_sequence

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    """Bad command-line or config input; maps to exit status 2."""


def _pair(text: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    return a, b


def _region(text: str) -> Region:
    try:
        rect, vel = text.split(":")
        x0, y0, x1, y1 = (int(v) for v in rect.split(","))
        return Region(x0, y0, x1, y1, _pair(vel))
    except (ValueError, argparse.ArgumentTypeError, ConfigurationError) as exc:
        raise argparse.ArgumentTypeError(f"expected 'x0,y0,x1,y1:dx,dy', got {text!r} ({exc})") from None


def _region_text(r: Region) -> str:
    return f"{r.x0},{r.y0},{r.x1},{r.y1}:{r.velocity[0]!r},{r.velocity[1]!r}"


def _add_engine_options(p: argparse.ArgumentParser, estimator=True):
    g = p.add_argument_group("estimator")
    if estimator:
        g.add_argument("--estimator", choices=ESTIMATORS, default="pcr2")
    g.add_argument("--mask-half-width", type=int, default=2, help="observation window half-width (px)")
    g.add_argument("--mask-kind", choices=("square", "causal"), default="square")
    g.add_argument("--lambda", dest="lam", type=float, default=10.0, help="RLS penalty (scalar)")
    g.add_argument("--xi", type=float, default=10.0, help="PCR2 penalty in the PC domain (scalar)")
    g.add_argument("--components", type=int, default=2, help="principal components kept by PCR1/PCR2")
    g.add_argument("--max-iters", type=int, default=10)
    g.add_argument("--eps", type=float, default=0.01, help="convergence threshold on |u| (px)")
    g.add_argument("--clamp", type=float, default=None, help="displacement clamp (px); default half-width")
    g.add_argument("--init", choices=("zero", "causal"), default="zero")
    g.add_argument("--no-fallback", action="store_true", help="disable the RLS fallback on singular systems")


def _add_scene_options(p: argparse.ArgumentParser):
    g = p.add_argument_group("synthetic scene")
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=64)
    g.add_argument("--frames", type=int, default=3, dest="frame_count")
    g.add_argument("--seed", type=int, default=0, help="texture seed")
    g.add_argument("--noise-seed", type=int, default=0)
    g.add_argument("--snr-db", type=float, default=math.inf, help="noise level; inf disables noise")
    g.add_argument("--smoothness", type=float, default=2.0)
    g.add_argument("--contrast", type=float, default=45.0)
    g.add_argument("--velocity", type=_pair, default=(1.0, 0.5), help="'dx,dy' when no --region is given")
    g.add_argument(
        "--region",
        type=_region,
        action="append",
        default=None,
        help="'x0,y0,x1,y1:dx,dy' moving rectangle (repeatable)",
    )
    g.add_argument("--accumulate", choices=("sequential", "cumulative"), default="sequential")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pelrec", description="Pel-recursive motion estimation toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate flow between consecutive PGM frames")
    p.add_argument("inputs", nargs="+", metavar="FRAME.pgm")
    p.add_argument("--truth", nargs="*", default=None, metavar="TRUTH.flo", help="one truth field per pair")
    p.add_argument("--epe-margin", type=int, default=0, help="border excluded from endpoint error (px)")
    _add_engine_options(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("synth", help="write a synthetic sequence with ground truth")
    _add_scene_options(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("compare", help="run all four estimators on one sequence")
    p.add_argument("inputs", nargs="*", metavar="FRAME.pgm", help="frames; synthesised when omitted")
    p.add_argument("--truth", nargs="*", default=None, metavar="TRUTH.flo")
    p.add_argument("--epe-margin", type=int, default=0)
    _add_engine_options(p, estimator=False)
    _add_scene_options(p)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("cluster", help="PCA clustering of a flow field")
    p.add_argument("--flow", required=True)
    p.add_argument("--labels", default=None, help="whitespace-separated class id per pixel (row-major)")
    p.add_argument("--pcs", type=int, default=2, help="principal components retained (1 or 2)")
    p.add_argument("--quantile", type=float, default=0.975)
    p.add_argument("--residual-quantile", type=float, default=0.975)
    p.add_argument("--out-dir", required=True)

    for action in sub.choices.values():
        action.add_argument("--config", default=None, help="key=value file of option defaults")
    return parser


def _config_argv(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Expand ``--config FILE`` into option tokens placed before the explicit ones."""
    if "--config" not in argv and not any(a.startswith("--config=") for a in argv):
        return argv
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    sub = parser._subparsers._group_actions[0].choices.get(known.command)
    if sub is None or known.config is None:
        return argv
    path = Path(known.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    try:
        items = read_manifest(path)
    except FormatError as exc:
        raise UsageError(str(exc)) from None

    options = {}
    for action in sub._actions:
        for opt in action.option_strings:
            if opt.startswith("--") and opt != "--config":
                options[opt[2:]] = action
    given = {a.split("=", 1)[0] for a in argv if a.startswith("--")}
    tokens = []
    for key, value in items.items():
        name = key.replace("_", "-")
        if name not in options:
            raise UsageError(f"unknown config key {key!r} in {path}")
        flag = f"--{name}"
        if flag in given:
            continue
        action = options[name]
        if action.nargs == 0:
            if value.lower() in ("1", "true", "yes", "on"):
                tokens.append(flag)
            elif value.lower() not in ("0", "false", "no", "off", ""):
                raise UsageError(f"config key {key!r} expects a boolean, got {value!r}")
        elif isinstance(action, argparse._AppendAction):
            tokens += [t for v in value.split(";") if v.strip() for t in (flag, v.strip())]
        elif action.nargs in ("*", "+"):
            tokens += [flag, *value.split()]
        else:
            tokens += [f"{flag}={value}"]
    i = argv.index(known.command) + 1
    return argv[:i] + tokens + argv[i:]


def _engine_config(args, estimator=None) -> EngineConfig:
    return EngineConfig(
        estimator=estimator or args.estimator,
        mask=MaskSpec(args.mask_kind, args.mask_half_width),
        lam=args.lam,
        xi=args.xi,
        components=args.components,
        max_iterations=args.max_iters,
        eps=args.eps,
        clamp=args.clamp,
        init=args.init,
        fallback=not args.no_fallback,
    )


def _scene(args) -> tuple[SceneSpec, NoiseSpec]:
    scene = SceneSpec(
        width=args.width,
        height=args.height,
        texture_seed=args.seed,
        smoothness=args.smoothness,
        contrast=args.contrast,
        velocity=args.velocity,
        motion=tuple(args.region or ()),
        frame_count=args.frame_count,
        accumulate=args.accumulate,
    )
    return scene, NoiseSpec(args.snr_db, args.noise_seed)


def _require_files(paths):
    missing = [p for p in paths if not Path(p).is_file()]
    if missing:
        raise UsageError(f"input not found: {missing[0]}")


def _out_dir(path) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise UsageError(f"--out-dir is not a directory: {out}")
    return out


def _load_inputs(args):
    _require_files(list(args.inputs) + list(args.truth or []))
    frames = [read_pgm(p) for p in args.inputs]
    truths = [read_flow(p) for p in args.truth] if args.truth else None
    if truths is not None and len(truths) != len(frames) - 1:
        raise ConfigurationError(f"{len(frames)} frames need {len(frames) - 1} truth fields, got {len(truths)}")
    return frames, truths


def _mean_epe(fields, truths, margin):
    if truths is None:
        return [None] * len(fields)
    mask = interior_mask(fields[0].shape, margin)
    return [endpoint_error(f, t, mask)[0] for f, t in zip(fields, truths)]


def run_estimate(args) -> int:
    if len(args.inputs) < 2:
        raise UsageError("estimate needs at least two frames")
    out = _out_dir(args.out_dir)
    config = _engine_config(args)
    frames, truths = _load_inputs(args)
    fields = estimate_sequence(frames, config)
    epe = _mean_epe(fields, truths, args.epe_margin)

    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for j, field in enumerate(fields):
        write_flow(out / f"flow_{j:03d}.flo", field)
        rows.append(
            (
                j + 1,
                imc_frame(frames[j + 1], frames[j], field),
                epe[j],
                float(field.valid.mean()),
                float(np.mean(field.status == Status.CONVERGED)),
            )
        )
    write_csv(out / "metrics.csv", ["frame_index", "imc_db", "mean_epe", "valid_fraction", "converged_fraction"], rows)
    print(f"sequence_imc_db={imc_sequence(frames, fields):.6f} pairs={len(fields)} estimator={config.estimator}")
    return 0


def run_synth(args) -> int:
    out = _out_dir(args.out_dir)
    scene, noise = _scene(args)
    frames, truths = make_sequence(scene, noise)
    out.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(frames):
        write_pgm(out / f"frame_{k:03d}.pgm", frame)
    for j, truth in enumerate(truths):
        write_flow(out / f"truth_{j:03d}.flo", truth)
    manifest = {
        "width": scene.width,
        "height": scene.height,
        "frames": scene.frame_count,
        "seed": scene.texture_seed,
        "noise-seed": noise.seed,
        "snr-db": noise.snr_db,
        "smoothness": scene.smoothness,
        "contrast": scene.contrast,
        "velocity": f"{scene.velocity[0]!r},{scene.velocity[1]!r}",
        "accumulate": scene.accumulate,
    }
    if scene.motion:
        manifest["region"] = ";".join(_region_text(r) for r in scene.motion)
    write_manifest(out / "manifest.txt", manifest)
    print(f"wrote {len(frames)} frames and {len(truths)} truth fields to {out}")
    return 0


def run_compare(args) -> int:
    out = _out_dir(args.out_dir)
    base = _engine_config(args, estimator="ols")
    if args.inputs:
        if len(args.inputs) < 2:
            raise UsageError("compare needs at least two frames")
        frames, truths = _load_inputs(args)
    else:
        frames, truths = make_sequence(*_scene(args))
        if len(frames) < 2:
            raise UsageError("compare needs --frames >= 2")

    rows = []
    summary = []
    for est in ESTIMATORS:
        fields = estimate_sequence(frames, base.with_(estimator=est))
        epe = _mean_epe(fields, truths, args.epe_margin)
        for j, field in enumerate(fields):
            rows.append((est, j + 1, imc_frame(frames[j + 1], frames[j], field), epe[j]))
        summary.append(f"{est}={imc_sequence(frames, fields):.6f}")
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "compare.csv", ["estimator", "frame_index", "imc_db", "mean_epe"], rows)
    print("sequence_imc_db " + " ".join(summary))
    return 0


def _read_labels(path, shape) -> np.ndarray:
    try:
        labels = np.array(Path(path).read_text().split(), dtype=np.int64)
    except ValueError as exc:
        raise FormatError(f"labels file {path}: {exc}") from None
    if labels.size != shape[0] * shape[1]:
        raise ConfigurationError(f"labels file has {labels.size} entries, flow has {shape[0] * shape[1]} pixels")
    return labels.reshape(shape)


def run_cluster(args) -> int:
    out = _out_dir(args.out_dir)
    _require_files([args.flow] + ([args.labels] if args.labels else []))
    field = read_flow(args.flow)
    samples, coords = samples_from_field(field)
    labels = None
    if args.labels:
        grid = _read_labels(args.labels, field.shape)
        labels = grid[coords[:, 1], coords[:, 0]]
    proj = project_dvs(samples, args.pcs)
    model = fit_classes(proj, labels, quantile=args.quantile, residual_quantile=args.residual_quantile)
    fitted = labels if labels is not None else np.zeros(len(samples), dtype=int)

    score_rows = []
    for s, lab in zip(proj.scores, fitted):
        score_rows.append((s[0], s[1] if s.shape[0] > 1 else None, lab))
    ellipse_rows = []
    for i, cls in enumerate(model.classes):
        if proj.n_components == 2:
            e = ellipse_parameters(cls)
            ellipse_rows.append(
                (i, cls.label, e["center"][0], e["center"][1], e["axis_major"], e["axis_minor"], e["orientation"], e["threshold"])
            )
        else:
            half = cls.mahalanobis_threshold * math.sqrt(cls.covariance[0, 0])
            ellipse_rows.append((i, cls.label, cls.center[0], None, half, None, 0.0, cls.mahalanobis_threshold))
    verdict_rows = []
    for (x, y), dv in zip(coords, samples):
        c = classify(dv, proj, model)
        members = " ".join(str(model.classes[m].label) for m in c.memberships)
        verdict_rows.append((x, y, c.verdict, members, model.classes[c.nearest].label))

    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "scores.csv", ["pc1", "pc2", "label"], score_rows)
    write_csv(
        out / "ellipses.csv",
        ["class", "label", "center_pc1", "center_pc2", "axis_major", "axis_minor", "orientation", "threshold"],
        ellipse_rows,
    )
    write_csv(out / "verdicts.csv", ["x", "y", "verdict", "memberships", "nearest"], verdict_rows)
    print(f"classes={len(model)} samples={len(samples)}")
    return 0


COMMANDS = {"estimate": run_estimate, "synth": run_synth, "compare": run_compare, "cluster": run_cluster}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_config_argv(parser, argv))
    except UsageError as exc:
        print(f"pelrec: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigurationError) as exc:
        print(f"pelrec {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (PelrecError, OSError, ArithmeticError) as exc:
        print(f"pelrec {args.command}: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
