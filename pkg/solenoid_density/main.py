# solenoid_density/main.py
from __future__ import annotations
import argparse
import logging
from pathlib import Path
import sys

import yaml

from solenoid_density.core.config import RunCfg, load_config
from solenoid_density.core.pipeline import COMMANDS, run_command

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="solenoid_density",
        description="Denjoy solenoids, Ruelle-Sullivan currents and their density experiments.")
    p.add_argument("command", choices=sorted(COMMANDS), help="experiment to run")
    p.add_argument("--config", type=Path, default=None, help="YAML/JSON document merged over the defaults")
    p.add_argument("--out", type=Path, default=Path("./out"), help="output root directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads (0 = auto)")
    p.add_argument("--verbose", action="store_true", help="debug logging")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)

    # ---------- config ----------
    try:
        raw = load_config(args.config)
        if args.threads is not None:
            raw.setdefault("runtime", {})["threads"] = args.threads
        if args.verbose:
            raw.setdefault("logging", {})["verbose"] = True
        cfg = RunCfg.from_config(raw)
    except (OSError, ValueError, TypeError, yaml.YAMLError) as e:
        print(f"[config] {e}", file=sys.stderr)
        return EXIT_CONFIG

    logging.basicConfig(level=logging.DEBUG if cfg.runtime.verbose else logging.INFO,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    log = logging.getLogger("solenoid_density")
    log.info("command=%s out=%s threads=%d", args.command, args.out, cfg.runtime.workers())

    # ---------- run ----------
    try:
        result = run_command(args.command, cfg, args.out.resolve())
    except ValueError as e:
        print(f"[error] {args.command}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as e:
        # numerical breakdown mid-run, e.g. a level curve that does not close
        log.error("%s aborted: %s", args.command, e)
        print(f"[error] {args.command}: {e}", file=sys.stderr)
        return EXIT_FAIL

    if result.passed:
        print(f"[summary] {args.command}: all checks passed")
    else:
        failed = ", ".join(k for k, ok in result.checks.items() if not ok)
        print(f"[summary] {args.command}: FAILED ({failed})")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
