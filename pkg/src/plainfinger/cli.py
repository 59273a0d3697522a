"""Command-line interface.

Exit codes: 0 success, 1 check failure, 2 I/O, parse or config error,
3 pipeline or domain error.
"""
import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .enhancement import to_display
from .errors import ConfigError, FingerError, ParseError, PipelineError
from .evaluation import (DEFAULT_THRESHOLDS, MatchCriteria, match_minutiae, pr_curve,
                         summary_line, write_curve_csv)
from .losses import gradcheck_suite
from .minutiae import read_minutiae, write_minutiae
from .orientation import write_orientation
from .pipeline import DEFAULTS, config_from_dict, load_config, parse_value, run
from .raster import read_pgm, upsample_nearest, write_pgm
from .synth import SynthSpec, ellipse_mask, random_minutiae, synth_print

EXIT_OK, EXIT_CHECK, EXIT_IO, EXIT_PIPELINE = 0, 1, 2, 3
GRADCHECK_TOL = 1e-5


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _fail(message, code):
    raise CliError(message, code)


# --- config handling ------------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="key=value config file")
    g = p.add_argument_group("config overrides (flag wins over file)")
    for key, default in DEFAULTS.items():
        g.add_argument(f"--{key}", dest=key, metavar=type(default).__name__.upper(), default=None,
                       help=f"default {default}")


def _config(args):
    overrides = {}
    for key in DEFAULTS:
        raw = getattr(args, key, None)
        if raw is not None:
            try:
                overrides[key] = parse_value(key, raw)
            except ValueError:
                _fail(f"bad value for --{key}: {raw!r}", EXIT_IO)
    try:
        if args.config:
            return load_config(args.config, overrides)
        return config_from_dict(overrides)
    except OSError as exc:
        _fail(f"cannot read config: {exc}", EXIT_IO)
    except (ParseError, ConfigError) as exc:
        _fail(str(exc), EXIT_IO)


def _read_image(path):
    try:
        return read_pgm(path)
    except OSError as exc:
        _fail(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO)
    except ParseError as exc:
        _fail(str(exc), EXIT_IO)


def _run(image, cfg):
    try:
        return run(image, cfg)
    except PipelineError as exc:
        _fail(str(exc), EXIT_PIPELINE)


def _mask_image(art, shape):
    h, w = shape
    full = upsample_nearest(art.seg_mask, art.seg.stride)[:h, :w]
    return full.astype(np.float64) * 255.0


# --- subcommands ------------------------------------------------------------------

def _extract_one(src, out_dir, cfg):
    image = _read_image(src)
    art = _run(image, cfg)
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_orientation(out / "orientation.txt", art.field)
        write_pgm(out / "seg.pgm", _mask_image(art, image.shape))
        write_pgm(out / "enhanced.pgm", to_display(art.enhanced))
        write_minutiae(out / "minutiae.txt", art.minutiae)
    except OSError as exc:
        _fail(f"cannot write to {out}: {exc.strerror or exc}", EXIT_IO)
    return len(art.minutiae)


def _extract_job(item):
    src, out_dir, cfg = item
    try:
        return src, _extract_one(src, out_dir, cfg), None, EXIT_OK
    except CliError as exc:
        return src, 0, str(exc), exc.code


def cmd_extract(args):
    cfg = _config(args)
    src = Path(args.input)
    if src.is_dir():
        inputs = sorted(p for p in src.iterdir() if p.suffix.lower() == ".pgm")
        jobs = [(p, Path(args.out_dir) / p.stem, cfg) for p in inputs]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_extract_job, jobs))
        else:
            results = [_extract_job(j) for j in jobs]
        worst = EXIT_OK
        for path, count, err, code in results:
            if err is None:
                print(f"{path.name} {count}")
            else:
                print(f"{path.name} error: {err}", file=sys.stderr)
                worst = max(worst, code)
        return worst
    if not src.exists():
        _fail(f"input not found: {src}", EXIT_IO)
    print(_extract_one(src, args.out_dir, cfg))
    return EXIT_OK


def cmd_enhance(args):
    cfg = _config(args)
    art = _run(_read_image(args.input), cfg)
    _write(write_pgm, args.output, to_display(art.enhanced))
    return EXIT_OK


def cmd_orientation(args):
    cfg = _config(args)
    art = _run(_read_image(args.input), cfg)
    _write(write_orientation, args.output, art.field)
    return EXIT_OK


def cmd_segment(args):
    cfg = _config(args)
    image = _read_image(args.input)
    art = _run(image, cfg)
    _write(write_pgm, args.output, _mask_image(art, image.shape))
    return EXIT_OK


def _write(fn, path, *payload):
    try:
        fn(path, *payload)
    except OSError as exc:
        _fail(f"cannot write {path}: {exc.strerror or exc}", EXIT_IO)


def _parse_planted(text):
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        try:
            x, y, pol = item.split(",")
            out.append((float(x), float(y), int(pol)))
        except ValueError:
            _fail(f"bad minutia {item!r}; expected x,y,polarity", EXIT_IO)
    return out


def synth_to_gray(image, amplitude, noise_sigma):
    """Map a synthetic print to [0, 255]: ``+/-(amplitude + 3 sigma)`` spans the range."""
    scale = amplitude + 3.0 * noise_sigma
    return 127.5 + 127.5 * np.clip(image / scale, -1.0, 1.0)


def cmd_synth(args):
    rng = np.random.default_rng(args.seed)
    if args.minutiae is not None:
        planted = _parse_planted(args.minutiae)
    else:
        margin = min(40, args.width // 4, args.height // 4)
        planted = random_minutiae(rng, args.width, args.height, args.count, margin=margin,
                                  min_dist=min(40, margin))
    try:
        spec = SynthSpec(width=args.width, height=args.height, orientation=args.orientation,
                         period=args.period, global_phase=args.phase, minutiae=planted,
                         noise_sigma=args.noise, amplitude=args.amplitude,
                         foreground=ellipse_mask(args.width, args.height) if args.ellipse else None)
        image, truth = synth_print(spec, seed=args.seed)
    except FingerError as exc:
        _fail(str(exc), EXIT_PIPELINE)
    except ValueError as exc:
        _fail(str(exc), EXIT_IO)
    _write(write_pgm, args.image, synth_to_gray(image, args.amplitude, args.noise))
    _write(write_minutiae, args.truth, truth)
    print(len(truth))
    return EXIT_OK


def _read_list(path):
    try:
        return read_minutiae(path)
    except OSError as exc:
        _fail(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO)
    except ParseError as exc:
        _fail(str(exc), EXIT_IO)


def cmd_eval(args):
    pred = _read_list(args.pred)
    gt = _read_list(args.gt)
    try:
        crit = MatchCriteria(args.dist_thr, args.angle_thr)
    except ValueError as exc:
        _fail(str(exc), EXIT_IO)
    print(summary_line(match_minutiae(pred, gt, crit)))
    if args.curve:
        _write(write_curve_csv, args.curve, pr_curve(pred, gt, crit, DEFAULT_THRESHOLDS))
    return EXIT_OK


def cmd_gradcheck(args):
    results = gradcheck_suite(seed=args.seed, perturb=args.perturb)
    code = EXIT_OK
    for r in results:
        print(f"{r.name} {r.max_error:.3e}")
    for r in results:
        if not r.max_error < GRADCHECK_TOL:
            print(f"FAIL {r.name} at {r.worst_index}: relative error {r.max_error:.3e}",
                  file=sys.stderr)
            code = EXIT_CHECK
    return code


# --- parser ---------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="plainfinger", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("extract", help="full pipeline; writes orientation, seg, enhanced, minutiae")
    e.add_argument("input", help="PGM image, or a directory of them (batch mode)")
    e.add_argument("out_dir")
    e.add_argument("--jobs", type=int, default=1, help="worker processes in batch mode")
    _add_config_flags(e)
    e.set_defaults(func=cmd_extract)

    for name, fn, what in (("enhance", cmd_enhance, "enhanced PGM"),
                           ("orientation", cmd_orientation, "orientation text file"),
                           ("segment", cmd_segment, "binary mask PGM")):
        s = sub.add_parser(name, help=f"write the {what}")
        s.add_argument("input")
        s.add_argument("output")
        _add_config_flags(s)
        s.set_defaults(func=fn)

    s = sub.add_parser("synth", help="render a synthetic print and its ground truth")
    s.add_argument("image")
    s.add_argument("truth")
    s.add_argument("--width", type=int, default=256)
    s.add_argument("--height", type=int, default=256)
    s.add_argument("--orientation", type=float, default=0.0)
    s.add_argument("--period", type=float, default=9.0)
    s.add_argument("--phase", type=float, default=0.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--amplitude", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--count", type=int, default=5, help="random minutiae when --minutiae is absent")
    s.add_argument("--minutiae", help="explicit 'x,y,pol;x,y,pol' list")
    s.add_argument("--ellipse", action="store_true", help="elliptical foreground, flat background")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("eval", help="match predicted against ground-truth minutiae")
    v.add_argument("pred")
    v.add_argument("gt")
    v.add_argument("--dist-thr", type=float, default=15.0)
    v.add_argument("--angle-thr", type=float, default=30.0)
    v.add_argument("--curve", help="write threshold,precision,recall CSV here")
    v.set_defaults(func=cmd_eval)

    g = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--perturb", type=float, default=0.0, help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except FingerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    sys.exit(main())
