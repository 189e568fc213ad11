"""Command-line entry point: ``voxplane {simulate,run,replay,ablate,score}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as C
from .frames import FrameFormatError, InvalidPoseError

EXIT_OK = 0
EXIT_MISSING_INPUT = 3
EXIT_BAD_CONFIG = 4
EXIT_UNWRITABLE = 5
EXIT_BAD_FRAMES = 6

SENSOR_PRESETS = {
    "d435": {"kind": "pinhole"},
    "rosette": {"kind": "ray_pattern", "pattern": {"type": "rosette"}},
    "spherical": {"kind": "ray_pattern", "pattern": {"type": "spherical"}},
}


class CliError(Exception):
    def __init__(self, code, msg):
        super().__init__(msg)
        self.code = code


def _overrides(args) -> dict:
    o: dict = {}
    if getattr(args, "scene", None):
        o["scene"] = {"kind": args.scene}
    if getattr(args, "sensor", None):
        o["sensor"] = dict(SENSOR_PRESETS[args.sensor])
    if getattr(args, "seed", None) is not None:
        o["seed"] = args.seed
    if getattr(args, "frames", None) is not None:
        o["trajectory"] = {"frames": args.frames}
    if getattr(args, "faithful", False):
        o["faithful"] = True
    if getattr(args, "baseline", False):
        o["mode"] = "heightmap"
    if getattr(args, "out_dir", None):
        o["output"] = {"dir": args.out_dir}
    if getattr(args, "trials", None) is not None:
        o["ablation"] = {"trials": args.trials}
    return o


def _config(args) -> dict:
    try:
        if args.config:
            return C.load_config(args.config, _overrides(args), getattr(args, "preset", None))
        return C.make_config(_overrides(args), getattr(args, "preset", None))
    except FileNotFoundError as exc:
        raise CliError(EXIT_MISSING_INPUT, f"config not found: {exc.filename}") from exc
    except C.ConfigError as exc:
        raise CliError(EXIT_BAD_CONFIG, f"bad config: {exc}") from exc


def _out_dir(cfg) -> Path:
    out = Path(cfg["output"]["dir"])
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(EXIT_UNWRITABLE, f"cannot write to {out}: {exc}") from exc
    return out


def _need(path):
    if path is not None and not Path(path).exists():
        raise CliError(EXIT_MISSING_INPUT, f"input not found: {path}")


def _setup(args):
    cfg = _config(args)
    from .pipeline import set_threads
    set_threads(C.resolve_threads(cfg, args.threads))
    return cfg


def _print_summary(res):
    print(f"frames={res.frames}")
    print(f"polygons={len(res.polygons)}")
    if res.report is not None:
        for k, v in res.report.as_dict().items():
            print(f"{k}={v}")
    if res.timing.rows:
        print(f"mean_frame_ms={res.timing.mean_ms.get('total_ms', 0.0):.2f}")
    print(f"out_dir={res.out_dir}")


def cmd_simulate(args) -> int:
    cfg = _setup(args)
    from .pipeline import write_simulation
    fp, tp = write_simulation(cfg, _out_dir(cfg))
    print(f"frames={fp}")
    print(f"ground_truth={tp}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _setup(args)
    from .pipeline import run_pipeline
    res = run_pipeline(cfg, _out_dir(cfg), baseline=args.baseline,
                       figures=False if args.no_figures else None)
    _print_summary(res)
    return EXIT_OK


def cmd_replay(args) -> int:
    _need(args.frames_file)
    _need(args.truth)
    cfg = _setup(args)
    from .pipeline import replay
    res = replay(args.frames_file, cfg, _out_dir(cfg), args.truth, baseline=args.baseline,
                 figures=False if args.no_figures else None)
    _print_summary(res)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _setup(args)
    from .ablation import COLUMNS, run_ablation
    rows = run_ablation(cfg, _out_dir(cfg), figures=not args.no_figures)
    print(",".join(COLUMNS))
    for r in rows:
        print(",".join(f"{r[c]:.4f}" if isinstance(r[c], float) else str(r[c]) for c in COLUMNS))
    return EXIT_OK


def cmd_score(args) -> int:
    _need(args.detected)
    _need(args.truth)
    from .report import write_iou_report
    from .pipeline import score_files
    slope = None if args.all_planes else C.DEFAULTS["segmentation"]["max_slope_deg"]
    try:
        rep = score_files(args.detected, args.truth, slope)
    except (KeyError, ValueError) as exc:
        raise CliError(EXIT_BAD_CONFIG, f"bad polygon file: {exc}") from exc
    for k, v in rep.as_dict().items():
        print(f"{k}={v}")
    if args.output:
        try:
            write_iou_report(args.output, rep)
        except OSError as exc:
            raise CliError(EXIT_UNWRITABLE, str(exc)) from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voxplane", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, sim=True):
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--preset", choices=sorted(C.PRESETS), help="built-in config preset")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, help=f"worker threads (default ${C.THREADS_ENV})")
        sp.add_argument("--out-dir", help="output directory")
        sp.add_argument("--no-figures", action="store_true", help="skip matplotlib figures")
        if sim:
            sp.add_argument("--scene", choices=["stair5", "single_stage", "overhang",
                                                "small_obstacle", "box_on_floor"])
            sp.add_argument("--sensor", choices=sorted(SENSOR_PRESETS))
            sp.add_argument("--frames", type=int, help="number of frames to simulate")

    s = sub.add_parser("simulate", help="render a frame file and ground truth")
    common(s)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="simulate and process end to end")
    common(r)
    r.add_argument("--faithful", action="store_true", help="skip least-squares plane polish")
    r.add_argument("--baseline", action="store_true", help="use the height-map baseline")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="process a recorded frame file")
    rp.add_argument("frames_file")
    rp.add_argument("--truth", help="ground-truth polygon file")
    common(rp, sim=False)
    rp.add_argument("--faithful", action="store_true")
    rp.add_argument("--baseline", action="store_true")
    rp.set_defaults(func=cmd_replay)

    a = sub.add_parser("ablate", help="cluster-parallel scaling benchmark")
    common(a, sim=False)
    a.add_argument("--trials", type=int)
    a.set_defaults(func=cmd_ablate)

    sc = sub.add_parser("score", help="IoU of a polygon file against ground truth")
    sc.add_argument("detected")
    sc.add_argument("truth")
    sc.add_argument("--output", help="write the report here")
    sc.add_argument("--all-planes", action="store_true", help="score non-horizontal truth too")
    sc.set_defaults(func=cmd_score)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (FrameFormatError, InvalidPoseError) as exc:
        print(f"error: bad frame data: {exc}", file=sys.stderr)
        return EXIT_BAD_FRAMES
    except FileNotFoundError as exc:
        print(f"error: input not found: {exc.filename}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except PermissionError as exc:
        print(f"error: cannot write: {exc}", file=sys.stderr)
        return EXIT_UNWRITABLE


if __name__ == "__main__":
    sys.exit(main())
