"""``bmlab`` command line entry point."""
from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .exceptions import BMLabError, ConfigError
from .experiment import SUBCOMMANDS, load_config, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bmlab",
        description="Rates of convergence in the Breuer-Major CLT: simulation, "
                    "functionals, distances, bounds and rate studies.")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="JSON experiment config")
    parser.add_argument("--out", help="output directory (default: config output_dir or ./bmlab_out)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads (results do not depend on it)")
    parser.add_argument("--level", choices=("fast", "full"), default="fast", help="verify level")
    parser.add_argument("--mutate", type=float, default=None, help=argparse.SUPPRESS)
    return parser


def _verify(args):
    from .verify import verify_suite

    results = verify_suite(args.level, mutate=args.mutate)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(
            {"subcommand": "verify", "level": args.level,
             "rows": [r.to_dict() for r in results]}, indent=2, sort_keys=True) + "\n")
        (out / "manifest.json").write_text(json.dumps(
            {"subcommand": "verify", "level": args.level,
             "timings_s": {r.name: round(r.seconds, 6) for r in results},
             "started_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())},
            indent=2, sort_keys=True) + "\n")
        with open(out / "report.csv", "w", newline="") as fh:
            import csv

            w = csv.writer(fh)
            w.writerow(["check", "passed", "detail"])
            for r in results:
                w.writerow([r.name, r.passed, r.detail])
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"verify: {len(failed)} check(s) failed: {', '.join(failed)}", file=sys.stderr)
        return 3
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("bmlab: config error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        if args.subcommand == "verify":
            return _verify(args)
        if not args.config:
            raise ConfigError("--config is required", field="--config")
        cfg = load_config(args.config, args.subcommand)
        out = args.out or cfg.raw.get("output_dir")
        if out is None:
            out = "bmlab_out"
        elif not Path(out).is_absolute() and args.out is None:
            out = str(Path(args.config).parent / out)
        report = run_experiment(cfg, args.subcommand, out, args.threads)
    except BMLabError as exc:
        kind = {2: "config error", 3: "numerical failure", 4: "budget exceeded"}.get(
            exc.exit_code, "error")
        print(f"bmlab: {kind}: {exc}", file=sys.stderr)
        return exc.exit_code
    print(f"bmlab {args.subcommand}: {len(report.rows)} row(s) written to {out}")
    for name, fit in sorted(report.fits.items()):
        if "slope" in fit:
            lo, hi = fit["ci_95"]
            print(f"  slope[{name}] = {fit['slope']:+.4f}  (95% CI {lo:+.4f} .. {hi:+.4f})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
