"""headswap command-line interface.

Exit status: 0 success, 1 usage error, 2 runtime error.  Every command takes
``--config FILE`` (``key = value`` lines named like the long flags) and
``--seed``; explicit flags override the config file.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import formats
from .config import load_config, parse_floats
from .errors import HeadswapError
from .evaluate import pose_error
from .facebank import GridSpec, build_bank, load_bank, save_bank
from .geometry import CameraModel, EllipsoidModel
from .pipeline import DETERMINISTIC, LIVE, PipelineConfig, run_pipeline
from .synth import Renderer, TextureSpec, render_sequence, script_from_dict, script_to_dict, standard_script
from .tracker import HeadTracker, TrackerConfig, calibrate_template

log = logging.getLogger("headswap")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser, model: bool = True):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    if model:
        p.add_argument("--ax", type=float, default=EllipsoidModel.ax)
        p.add_argument("--ay", type=float, default=EllipsoidModel.ay)
        p.add_argument("--az", type=float, default=EllipsoidModel.az)


def _tracker_flags(p: argparse.ArgumentParser):
    p.add_argument("--particles", type=int, default=TrackerConfig.n_particles)
    p.add_argument("--sigma", type=float, default=TrackerConfig.sigma)
    p.add_argument("--tau", type=float, default=TrackerConfig.tau)
    p.add_argument("--motion-std", type=parse_floats, default=None, help="10 stds in state order")
    p.add_argument("--lost-residual", type=float, default=TrackerConfig.lost_residual)
    p.add_argument("--lost-frames", type=int, default=TrackerConfig.lost_frames)


def build_parser() -> _Parser:
    parser = _Parser(prog="headswap", description="Real-time face swapping on video frame streams.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="frontal image -> template CSV")
    _common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--points", type=int, default=200)

    p = sub.add_parser("build-bank", help="frontal image -> face bank directory")
    _common(p)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    for name, default in dataclasses.asdict(GridSpec()).items():
        p.add_argument("--" + name.replace("_", "-"), type=float, default=default)

    p = sub.add_parser("synth", help="scene script -> frames + truth CSV")
    _common(p)
    p.add_argument("--script", help="JSON scene script (default: the +/-40 degree benchmark)")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--duration", type=int, default=None, help="override the script duration")

    p = sub.add_parser("track", help="frames + template -> pose CSV")
    _common(p, model=False)
    _tracker_flags(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("swap", help="frames + template + bank -> swapped frames, poses, latency")
    _common(p, model=False)
    _tracker_flags(p)
    p.add_argument("--frames", required=True)
    p.add_argument("--template", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--out", required=True, help="output frame directory")
    p.add_argument("--poses", help="pose CSV (default: OUT/poses.csv)")
    p.add_argument("--latency", help="latency JSON (default: OUT/latency.json)")
    p.add_argument("--delay", type=int, default=0)
    p.add_argument("--mode", choices=(LIVE, DETERMINISTIC), default=DETERMINISTIC)
    p.add_argument("--queue-capacity", type=int, default=2)
    p.add_argument("--feather", type=int, default=5)
    p.add_argument("--blend", action="store_true")

    p = sub.add_parser("eval", help="estimated + truth pose CSVs -> metrics JSON")
    _common(p, model=False)
    p.add_argument("--estimate", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", help="metrics JSON (default: stdout)")

    p = sub.add_parser("bench", help="synthetic clip end to end -> latency JSON")
    _common(p)
    _tracker_flags(p)
    p.add_argument("--out", help="latency JSON (default: stdout)")
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--fps", type=float, default=30.0, help="source frame rate; 0 = unpaced")
    p.add_argument("--mode", choices=(LIVE, DETERMINISTIC), default=LIVE)
    p.add_argument("--queue-capacity", type=int, default=2)
    return parser


def _prescan(argv):
    """Find the subcommand and any --config path before the real parse."""
    command, config = None, None
    it = iter(argv)
    for tok in it:
        if tok == "--config":
            config = next(it, None)
        elif tok.startswith("--config="):
            config = tok.split("=", 1)[1]
        elif command is None and not tok.startswith("-"):
            command = tok
    return command, config


def _apply_config(parser: _Parser, argv):
    """Parse ``argv`` with config-file values installed as defaults."""
    argv = list(sys.argv[1:] if argv is None else argv)
    command, config = _prescan(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    if config and command in subparsers:
        sub = subparsers[command]
        values = load_config(config)
        known = {a.dest for a in sub._actions}
        for key in sorted(set(values) - known):
            log.warning("config key %r is not used by %s", key, command)
        defaults = {}
        for action in sub._actions:
            if action.dest not in values or action.dest == "config":
                continue
            raw = values[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                value = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    value = action.type(raw)
                except ValueError as exc:
                    raise UsageError(f"config {action.dest}: {exc}") from exc
            else:
                value = raw
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"config {action.dest}: {value!r} not in {sorted(action.choices)}")
            action.required = False
            defaults[action.dest] = value
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _model(args) -> EllipsoidModel:
    return EllipsoidModel(args.ax, args.ay, args.az)


def _tracker_cfg(args) -> TrackerConfig:
    cfg = TrackerConfig(
        n_particles=args.particles,
        sigma=args.sigma,
        tau=args.tau,
        lost_residual=args.lost_residual,
        lost_frames=args.lost_frames,
    )
    if args.motion_std is not None:
        cfg = cfg.replace(motion_std=tuple(args.motion_std))
    return cfg


def _camera_for(image) -> CameraModel:
    h, w = image.shape[:2]
    return CameraModel.centered(w, h)


def cmd_calibrate(args) -> None:
    image = formats.read_image(args.image)
    tmpl = calibrate_template(image, _model(args), _camera_for(image), args.points, seed=args.seed, source=str(args.image))
    formats.write_template(args.out, tmpl)
    log.info("wrote %d template points to %s", len(tmpl), args.out)


def cmd_build_bank(args) -> None:
    image = formats.read_image(args.image)
    grid = GridSpec(args.pitch_min, args.pitch_max, args.yaw_min, args.yaw_max, args.step)
    bank = build_bank(image, _model(args), _camera_for(image), grid)
    save_bank(bank, args.out)
    log.info("wrote %d bank entries to %s", len(bank), args.out)


def cmd_synth(args) -> None:
    if args.script:
        script = script_from_dict(json.loads(Path(args.script).read_text()))
    else:
        script = standard_script(seed=args.seed)
    if args.duration is not None:
        script = dataclasses.replace(script, duration=args.duration)
    model = _model(args)
    cam = CameraModel.centered(args.width, args.height)
    frames, trace = render_sequence(script, model, cam)
    out = Path(args.out)
    formats.write_frames(out, frames)
    formats.write_trace(out / "truth.csv", trace)
    formats.write_image(out / "frontal.ppm", Renderer(script, model, cam).frontal())
    formats.write_json(out / "script.json", script_to_dict(script))
    log.info("wrote %d frames to %s", len(frames), out)


def _read_frames(directory):
    frames = formats.read_frames(directory)
    if not frames:
        raise HeadswapError(f"no frame_*.ppm files in {directory}")
    return frames


def cmd_track(args) -> None:
    frames = _read_frames(args.frames)
    tmpl = formats.read_template(args.template)
    tracker = HeadTracker(tmpl, _camera_for(frames[0]), _tracker_cfg(args), seed=args.seed)
    results = tracker.track(frames)
    formats.write_trace(args.out, [r.pose for r in results], [r.status for r in results])


def cmd_swap(args) -> None:
    frames_dir = Path(args.frames)
    paths = formats.list_frames(frames_dir)
    if not paths:
        raise HeadswapError(f"no frame_*.ppm files in {frames_dir}")
    first = formats.read_image(paths[0])
    cam = _camera_for(first)
    tmpl = formats.read_template(args.template)
    bank = load_bank(args.bank)
    cfg = PipelineConfig(
        mode=args.mode,
        queue_capacity=args.queue_capacity,
        delay_frames=args.delay,
        seed=args.seed,
        feather=args.feather,
        blend=args.blend,
        tracker=_tracker_cfg(args),
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def write(msg):
        formats.write_image(formats.frame_path(out, msg.frame_index), msg.output)

    result = run_pipeline(frames_dir, tmpl, bank, cam, cfg, on_output=write)
    indices = [k for k, _, _ in result.trace]
    formats.write_trace(args.poses or out / "poses.csv", result.poses, result.statuses, indices)
    formats.write_json(args.latency or out / "latency.json", result.report.to_json())


def cmd_eval(args) -> None:
    fe, est = formats.read_trace(args.estimate)
    ft, truth = formats.read_trace(args.truth)
    metrics = pose_error(est, truth, fe, ft).to_json()
    if args.out:
        formats.write_json(args.out, metrics)
    else:
        print(json.dumps(metrics, indent=2))


def bench_setup(frames: int, width: int, height: int, model: EllipsoidModel, seed: int = 0):
    """Standard clip for subject A plus a differently textured frontal view of subject B."""
    cam = CameraModel.centered(width, height)
    script = standard_script(duration=frames, seed=seed)
    clip, trace = render_sequence(script, model, cam)
    frontal_a = Renderer(script, model, cam).frontal()
    script_b = dataclasses.replace(script, texture=TextureSpec(seed=seed + 7, tint=(1.0, 0.8, 0.65)))
    frontal_b = Renderer(script_b, model, cam).frontal()
    return cam, clip, trace, frontal_a, frontal_b


def cmd_bench(args) -> None:
    model = _model(args)
    cam, clip, _, frontal_a, frontal_b = bench_setup(args.frames, args.width, args.height, model, args.seed)
    tmpl = calibrate_template(frontal_a, model, cam, seed=args.seed)
    bank = build_bank(frontal_b, model, cam)
    cfg = PipelineConfig(
        mode=args.mode,
        queue_capacity=args.queue_capacity,
        seed=args.seed,
        fps=args.fps or None,
        tracker=_tracker_cfg(args),
    )
    report = run_pipeline(clip, tmpl, bank, cam, cfg).report.to_json()
    if args.out:
        formats.write_json(args.out, report)
    else:
        print(json.dumps(report, indent=2))


COMMANDS = {
    "calibrate": cmd_calibrate,
    "build-bank": cmd_build_bank,
    "synth": cmd_synth,
    "track": cmd_track,
    "swap": cmd_swap,
    "eval": cmd_eval,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, HeadswapError) as exc:
        print(f"headswap: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (HeadswapError, OSError, ValueError) as exc:
        print(f"headswap {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
