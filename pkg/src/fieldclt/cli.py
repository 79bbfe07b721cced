"""Command-line entry point: ``fieldclt <kind> --config FILE [options]``.

Exit status is 0 on success, 1 when the configuration is invalid and 2 when
the experiment fails at run time.
"""

from __future__ import annotations

import argparse
import sys

from .config import KINDS, load_config
from .errors import ConfigError, FieldCLTError
from .runner import run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fieldclt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} experiment")
        p.add_argument("--config", required=True, help="path to a section.key = value file")
        p.add_argument("--seed", type=int, help="override experiment.seed (unsigned 64-bit)")
        p.add_argument("--out", help="output directory (overrides output.dir)")
        p.add_argument("--workers", type=int, help="worker threads (overrides experiment.workers)")
        p.add_argument("--raw", action="store_true", help="also write per-replicate samples")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        overrides = {}
        if cfg.kind != args.kind:
            raise ConfigError([f"config: experiment.kind = {cfg.kind!r} does not match subcommand {args.kind!r}"])
        if args.seed is not None:
            if not 0 <= args.seed < 1 << 64:
                raise ConfigError(["--seed: must be an unsigned 64-bit integer"])
            overrides["experiment__seed"] = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(["--workers: must be >= 1"])
            overrides["experiment__workers"] = args.workers
        if args.raw:
            overrides["output__raw"] = True
        if args.out:
            overrides["output__dir"] = args.out
        cfg = cfg.replace(**overrides) if overrides else cfg
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = run_experiment(cfg)
    except (FieldCLTError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"wrote {', '.join(str(p) for p in report.files)}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
