"""Command line entry point: ``lisce <subcommand> [--config PATH] ...``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O or file-format error.
"""

import argparse
import logging
import sys

from ..errors import ConfigError, FileFormatError, NumericalError, SchemaMismatch
from .chart import ChartSpec, emit_chart
from .config import ParseError, load_config, parse_config
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# subcommand -> (default experiment, experiments it accepts)
SUBCOMMANDS = {
    "analyze": ("mse-vs-snr", ("mse-vs-snr", "mse-vs-rho")),
    "simulate-mse": ("mse-vs-snr", ("mse-vs-snr", "mse-vs-rho")),
    "optimize-phi": ("mm-trace", ("mm-trace",)),
    "gen-data": ("gen-data", ("gen-data",)),
    "train": ("train", ("train", "table-hyperparams")),
    "eval-cnn": ("mse-vs-snr", ("mse-vs-snr", "mse-vs-rho")),
    "eval-rate": ("rate-vs-snr", ("rate-vs-snr", "rate-vs-k")),
}


def _common(sp):
    sp.add_argument("--config", help="experiment config file (key = value lines)")
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--out", help="output directory (overrides out_dir)")
    sp.add_argument("--threads", type=int, help="worker threads for Monte Carlo trials")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config key; may be repeated")


def build_parser():
    ap = argparse.ArgumentParser(prog="lisce", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "analyze": "closed-form LS/LMMSE MSE curves only",
        "simulate-mse": "Monte Carlo MSE versus SNR or correlation",
        "optimize-phi": "MM phase-matrix optimization traces",
        "gen-data": "generate and save a training dataset",
        "train": "train a DnCNN/FFDNet estimator (or a hyperparameter table)",
        "eval-cnn": "Monte Carlo MSE including trained CNN estimators",
        "eval-rate": "downlink achievable rate versus SNR or K",
    }
    for name, text in helps.items():
        _common(sub.add_parser(name, help=text))
    ch = sub.add_parser("chart", help="render an experiment CSV as an SVG line chart")
    ch.add_argument("csv")
    ch.add_argument("--x", required=True)
    ch.add_argument("--y", required=True)
    ch.add_argument("--series", default="method")
    ch.add_argument("--title", default="")
    ch.add_argument("--log-x", action="store_true")
    ch.add_argument("--log-y", action="store_true")
    ch.add_argument("--db", action="store_true", help="plot 10*log10 of the y column")
    ch.add_argument("--where", action="append", default=[], metavar="COL=VALUE",
                    help="keep only rows where COL equals VALUE")
    ch.add_argument("-o", "--output", help="SVG path (default: next to the CSV)")
    return ap


def _pairs(items, what):
    out = {}
    for item in items:
        if "=" not in item:
            raise ParseError(f"{what} expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def config_from_args(args):
    default_exp, allowed = SUBCOMMANDS[args.command]
    overrides = _pairs(args.set, "--set")
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.threads is not None:
        overrides["threads"] = str(args.threads)
    defaults = {"experiment": default_exp}
    if args.command == "eval-cnn":
        defaults["methods"] = "ls, lmmse, dncnn, ffdnet"
    if args.config:
        cfg = load_config(args.config, overrides, defaults)
    else:
        cfg = parse_config("", overrides, defaults)
    if cfg.experiment not in allowed:
        raise ConfigError(f"'{args.command}' runs {', '.join(allowed)}, "
                          f"not {cfg.experiment!r}")
    return cfg


def _run(args):
    if args.command == "chart":
        spec = ChartSpec(args.x, args.y, args.series, args.title, args.log_x, args.log_y,
                         args.db, tuple(_pairs(args.where, "--where").items()))
        print(emit_chart(args.csv, spec, args.output))
        return EXIT_OK
    cfg = config_from_args(args)
    manifest = run_experiment(cfg, analytic_only=args.command == "analyze")
    for entry in manifest.outputs:
        print(f"{cfg.out_dir}/{entry['file']}  crc32={entry['crc32']}")
    for note in manifest.notes:
        print(f"note: {note}")
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FileFormatError, SchemaMismatch, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # Remaining ValueErrors come from inconsistent settings (shapes, paths).
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
