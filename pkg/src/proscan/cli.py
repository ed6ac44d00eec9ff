"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime or physics error,
4 fit failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .exceptions import ConfigError, FitFailure, ParseError, ProscanError
from .io import format_value
from .scenarios import ANALYSES, OUTPUT_ROOT_ENV, analyze, list_presets, load_preset, reproduce, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_FIT = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _window(text):
    lo, _, hi = text.partition(",")
    conv = lambda s: None if s.strip() in ("", "none") else float(s)
    return conv(lo), conv(hi)


def build_parser():
    p = _Parser(prog="proscan", description="Digital twin of a press-and-roll near-field positioner.",
                epilog=f"Default output root: ${OUTPUT_ROOT_ENV} or ./proscan-output")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a scenario from a JSON config")
    run.add_argument("--config", required=True, help="scenario JSON file")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--out", help="output directory")
    run.add_argument("--no-plots", action="store_true", help="skip SVG plots")

    rep = sub.add_parser("reproduce", help="run a bundled preset")
    rep.add_argument("preset")
    rep.add_argument("--out", help="output directory")
    rep.add_argument("--no-plots", action="store_true", help="skip SVG plots")

    ana = sub.add_parser("analyze", help="re-run an analysis on saved files")
    ana.add_argument("kind", choices=sorted(ANALYSES))
    ana.add_argument("files", nargs="+")
    ana.add_argument("--out", help="report directory")
    ana.add_argument("--wavelength", type=float, default=532.0, help="monitor wavelength for fringe-count (nm)")
    ana.add_argument("--window", type=_window, default=(None, None),
                     help="lifetime fit window 'lo,hi' in ns (either side may be empty)")
    ana.add_argument("--irf-sigma", type=float, help="IRF width for lifetime-fit (ns)")

    sub.add_parser("list-presets", help="list bundled presets")
    return p


def _print_summary(summary):
    print(json.dumps(summary, indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "list-presets":
            for name in list_presets():
                print(f"{name}\t{load_preset(name).get('description', '')}")
        elif args.command == "run":
            bundle = run_scenario(args.config, args.out, plots=not args.no_plots, seed=args.seed)
            _print_summary(bundle.summary)
            print(f"bundle: {bundle.out_dir}", file=sys.stderr)
        elif args.command == "reproduce":
            bundle = reproduce(args.preset, args.out, plots=not args.no_plots)
            _print_summary(bundle.summary)
            print(f"bundle: {bundle.out_dir}", file=sys.stderr)
        else:
            opts = {"wavelength": args.wavelength, "window": args.window}
            if args.irf_sigma is not None:
                opts["irf_sigma"] = args.irf_sigma
            header, rows = analyze(args.kind, args.files, args.out, **opts)
            print(",".join(header))
            for row in rows:
                print(",".join(format_value(v) for v in row))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FitFailure as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return EXIT_FIT
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ProscanError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
