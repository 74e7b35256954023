"""Command-line entry point.

    semichain run <config.json> [--output-dir DIR] [--seed N]
    semichain resume <checkpoint.bin> [--output-dir DIR]
    semichain validate <config.json>

Progress and diagnostics go to standard error; data files are written
to the output directory.
"""

import argparse
import json
import sys

from .config import validate_config
from .errors import ConfigError, SemichainError
from .runner import resume as _resume
from .runner import run as _run


def _load_raw(path):
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="semichain",
        description="Semiclassical chain Monte Carlo and its fully "
                    "quantized cross-check")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a run described by a config")
    p_run.add_argument("config", help="path to the JSON run config")
    p_run.add_argument("--output-dir", default="out",
                       help="directory for CSV, manifest and checkpoints")
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's RNG seed")

    p_res = sub.add_parser("resume", help="continue from a checkpoint")
    p_res.add_argument("checkpoint", help="path to checkpoint.bin")
    p_res.add_argument("--output-dir", default="out",
                       help="directory for CSV, manifest and checkpoints")

    p_val = sub.add_parser("validate", help="check a config and report "
                                            "every problem")
    p_val.add_argument("config", help="path to the JSON run config")

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            raw = _load_raw(args.config)
            cfg = validate_config(raw)
            print(f"ok: {len(cfg.observables)} observables, engine="
                  f"{cfg.engine}, t_final={cfg.t_final}", file=sys.stderr)
            return 0
        if args.command == "run":
            raw = _load_raw(args.config)
            if args.seed is not None:
                raw["seed"] = args.seed
            cfg = validate_config(raw)
            _run(cfg, args.output_dir)
            return 0
        if args.command == "resume":
            _resume(args.checkpoint, args.output_dir)
            return 0
    except ConfigError as e:
        print("config errors:", file=sys.stderr)
        for problem in e.problems:
            print(f"  - {problem}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except SemichainError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
