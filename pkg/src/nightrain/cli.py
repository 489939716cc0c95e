"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 verify-csc
threshold failure.
"""

import argparse
import logging
import os
import sys
from dataclasses import replace

from . import builder, compositor, imagecore
from ._validation import ContractError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_THRESHOLD = 3


def _config(args):
    cfg = builder.load_config(args.config) if args.config else compositor.SynthesisConfig()
    if getattr(args, "kind", None):
        cfg = replace(cfg, kind=args.kind.upper())
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_synth(args):
    cfg = _config(args)
    bg = builder.load_background(args.input)
    rainy, clean = compositor.synthesize(bg, cfg)
    parent = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(parent, exist_ok=True)
    imagecore.save_png(rainy, args.out)
    if args.clean:
        imagecore.save_png(clean, args.clean)
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_build(args):
    cfg = _config(args)
    manifest = builder.build_dataset(cfg, args.input, args.out, jobs=args.jobs)
    print(f"built {len(manifest.entries)} {manifest.subset} pairs -> "
          f"{os.path.join(args.out, builder.MANIFEST_NAME)}")
    return EXIT_OK


def cmd_analyze(args):
    spaces = [s.strip() for s in args.spaces.split(",") if s.strip()]
    report = builder.analyze(args.input, spaces)
    print(report.render())
    return EXIT_OK


def cmd_evaluate(args):
    report = builder.evaluate(args.input, args.gt)
    print(report.render())
    return EXIT_OK


def cmd_verify_csc(args):
    report = builder.verify_csc(seed=args.seed or 0, epochs=args.epochs)
    print(report.render())
    return EXIT_OK if report.passed else EXIT_THRESHOLD


def make_parser():
    parser = argparse.ArgumentParser(prog="nightrain", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render one rainy image")
    p.add_argument("--in", dest="input", required=True, help="background PNG")
    p.add_argument("--out", required=True, help="rainy PNG to write")
    p.add_argument("--clean", help="also write the clean reference here")
    p.add_argument("--config")
    p.add_argument("--kind", choices=["RS", "RD", "SD", "rs", "rd", "sd"])
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build", help="synthesize a dataset from a folder of backgrounds")
    p.add_argument("--in", dest="input", required=True, help="directory of background PNGs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("analyze", help="histogram distances of rainy vs clean pairs")
    p.add_argument("--in", dest="input", required=True, help="manifest.jsonl of a build")
    p.add_argument("--spaces", default="ycbcr", help="comma list, e.g. ycbcr,hsv,lab")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of predictions against ground truth")
    p.add_argument("--in", dest="input", required=True, help="directory of predicted PNGs")
    p.add_argument("--gt", required=True, help="directory of ground-truth PNGs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("verify-csc", help="gradient check and canonical-matrix recovery")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=5000)
    p.set_defaults(func=cmd_verify_csc)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ContractError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
