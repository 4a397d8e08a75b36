#!/usr/bin/env python3
"""
CLI interface for jafar
"""

import argparse
import logging
import sys

from . import __version__
from .config import read_config_file
from .errors import JafarError
from .parallel import THREADS_ENV
from .pipeline import PipelineRunner

COMMANDS = ["simulate", "fit", "align", "predict", "metrics"]
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jafar",
        description="jafar - Bayesian multiview factor regression with adaptive-rank Gibbs sampling",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=f"""
Examples:
  jafar simulate --config simulate.toml --out run/          # Dataset + truth
  jafar fit --config fit.toml --data run/train --out run/    # Chain archive
  jafar align --archive run/archive --out run/               # Varimax + MatchAlign
  jafar predict --archive run/aligned --test run/test --out run/
  jafar metrics --archive run/aligned --truth run/truth --test run/test --out run/

Short alias: jf
Threads default to ${THREADS_ENV} or the number of cores.
""",
    )
    parser.add_argument("command", nargs="?", choices=COMMANDS, help="Command to run")
    parser.add_argument("--version", action="store_true", help="Show version information")
    parser.add_argument("--config", type=str, help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, help="Override the config seed")
    parser.add_argument("--out", type=str, default=".", help="Output directory (default: current)")
    parser.add_argument("--threads", type=int, help="Worker threads for per-view and per-sample work")
    parser.add_argument("--data", type=str, help="Training dataset directory (fit)")
    parser.add_argument("--archive", type=str, help="Chain archive directory (align, predict, metrics)")
    parser.add_argument("--truth", type=str, help="Simulation truth directory (metrics)")
    parser.add_argument("--test", type=str, help="Test dataset directory (predict, metrics)")
    parser.add_argument("--copula", action="store_true", default=None,
                        help="Fit on the Gaussian-copula latent scale")
    parser.add_argument("--monotone", choices=["exp", "cube"],
                        help="Monotone-transform simulated views (simulate)")
    parser.add_argument("--target-view", type=int,
                        help="Predict the features of this view (1-based) instead of the response")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("-q", "--quiet", action="store_true", help="Warnings and errors only")
    return parser


def configure_logging(verbose=False, quiet=False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


def run_command(args):
    tree = read_config_file(args.config) if args.config else {}
    runner = PipelineRunner(tree, out_dir=args.out, seed=args.seed, threads=args.threads)
    if args.command == "simulate":
        summary = runner.simulate(monotone=args.monotone)
        print(f"✅ Simulated {summary['train']} training and {summary['test']} test subjects, p={summary['p']}")
    elif args.command == "fit":
        summary = runner.fit(args.data, copula=args.copula)
        print(f"✅ Chain finished: {summary['stored']} stored states, final ranks {summary['final_ranks']}")
    elif args.command == "align":
        report = runner.align(args.archive)
        print(f"✅ Aligned {report['n_aligned']} states at ranks {report['modal_ranks']}")
        if report["n_excluded"]:
            print(f"   Excluded {report['n_excluded']} states off the modal rank")
    elif args.command == "predict":
        target = None if args.target_view is None else args.target_view - 1
        runner.predict(args.archive, args.test, target_view=target)
        print(f"✅ Predictions written to {runner.out_dir}")
    else:
        report = runner.metrics(args.archive, truth_dir=args.truth, test_dir=args.test)
        counts = report["active_factors"]
        print(f"📊 Shared factors: {counts['shared_total']:.2f} (one-view only {counts['one_only']:.2f})")
        print(f"📊 Specific factors: {[round(k, 2) for k in counts['specific']]}")
        if "prediction" in report:
            pred = report["prediction"]
            print(f"📊 MSE {pred['mse']:.4f}  R² {pred['r2']:.3f}  coverage {pred['coverage']:.3f}")
        print(f"✅ Metrics written to {runner.out_dir / 'metrics.json'}")
    return 0


def main(argv=None):
    """Main CLI entry point"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        print(f"jafar v{__version__}")
        return 0
    if args.command is None:
        parser.print_help()
        return 0
    if args.verbose and args.quiet:
        parser.error("--verbose and --quiet are mutually exclusive")
    if args.threads is not None and args.threads < 1:
        parser.error("--threads must be at least 1")

    configure_logging(args.verbose, args.quiet)
    try:
        return run_command(args)
    except JafarError as e:
        print(f"❌ {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
