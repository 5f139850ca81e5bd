"""Command line entry point: ``esgkg <stage> --config <path> [--force] [--seed N]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .errors import ConfigInvalid
from .pipeline import STAGES, load_config, run


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="esgkg", description="Build and analyze ESG knowledge graphs.")
    p.add_argument("stage", choices=(*STAGES, "all"))
    p.add_argument("--config", required=True, help="YAML run config")
    p.add_argument("--force", action="store_true", help="rerun stages that are already complete")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config).with_seed(args.seed)
    except ConfigInvalid as exc:
        logging.getLogger("esgkg").error("%s", exc)
        return 2
    return run(args.stage, cfg, force=args.force)


if __name__ == "__main__":
    sys.exit(main())
