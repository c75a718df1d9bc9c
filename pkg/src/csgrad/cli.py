"""Command-line entry point.

    csgrad run|sweep-noise|recon-bench|diag --config <path> [--out <dir>]

Exit codes: 0 ok, 1 config error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import sys

from . import experiments
from .config import COMMANDS, ConfigError, parse_config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="csgrad",
                                description="Compressed-sensing gradient compression experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="key=value config file")
    p.add_argument("--out", default=None, help="output directory (overrides output_path)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            text = fh.read()
        cfg = parse_config(text, command=args.command, output_path=args.out)
    except (OSError, ConfigError) as exc:
        print(f"csgrad: config error: {exc}", file=sys.stderr)
        return 1
    try:
        experiments.thread_count()
        summary = experiments.run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - any engine failure maps to exit 2
        print(f"csgrad: {cfg.command} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2

    if cfg.command == "diag":
        print(experiments.format_diag(summary))
    elif cfg.command == "run":
        print(f"mean final f {summary['mean_final_f']:.6g}  "
              f"compression rate {summary['compression_rate']:.6g}")
    elif cfg.command == "sweep-noise":
        for e in summary["entries"]:
            print(f"W={e['noise_std']:g}  mean final f {e['mean_final_f']:.6g}")
    else:
        print(json.dumps(summary["entries"], indent=1))
    return 0


if __name__ == "__main__":
    sys.exit(main())
