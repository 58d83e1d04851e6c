"""Command line: ``mcflab run|list|validate``.

Exit codes: 0 success, 2 when a run completes but an acceptance flag fails,
1 on configuration or runtime errors.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional, Sequence

from .config import ConfigError, ScenarioConfig, load, schema
from .scenarios import BUILTIN, builtin_config, list_scenarios, run_scenario

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_ACCEPTANCE = 2


def resolve_config(name_or_path: str) -> ScenarioConfig:
    """A builtin scenario name or a path to an INI file."""
    if name_or_path in BUILTIN and not os.path.exists(name_or_path):
        return builtin_config(name_or_path)
    return load(name_or_path)


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcflab", description="Arrival-time analysis of mean-convex level set flows.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario (builtin name or config file)")
    run.add_argument("config")
    run.add_argument("--output", help="output directory (overrides [output] directory)")
    run.add_argument("--emit-every", type=int, default=None, metavar="N",
                     help="write a level-function snapshot every N steps")
    run.add_argument("--threads", type=int, default=0, metavar="N", help="numba worker threads")
    sub.add_parser("list", help="list builtin scenarios")
    val = sub.add_parser("validate", help="parse and check a config without running it")
    val.add_argument("config", nargs="?")
    val.add_argument("--schema", action="store_true", help="print every section and key with its default")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list":
        for name in list_scenarios():
            desc = builtin_config(name).scenario.description
            print(f"{name:12s} {desc}")
        return EXIT_OK
    if args.command == "validate":
        if args.schema:
            print(schema())
            if not args.config:
                return EXIT_OK
        if not args.config:
            print("error: validate needs a config (or --schema)", file=sys.stderr)
            return EXIT_ERROR
        try:
            cfg = resolve_config(args.config)
        except (ConfigError, OSError) as e:
            print(f"invalid: {e}", file=sys.stderr)
            return EXIT_ERROR
        print(f"OK {cfg.scenario.name}")
        return EXIT_OK
    # run
    if args.emit_every is not None and args.emit_every < 0:
        print("error: --emit-every must be non-negative", file=sys.stderr)
        return EXIT_ERROR
    try:
        cfg = resolve_config(args.config)
        rep, _ = run_scenario(cfg, output=args.output, emit_every=args.emit_every, threads=args.threads)
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR
    except Exception as e:  # noqa: BLE001 - any pipeline failure maps to exit code 1
        logging.getLogger("mcflab").exception("run failed")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_ERROR
    print(f"scenario {rep.scenario}: extinction time {rep.extinction_time:.6g}, "
          f"{len(rep.records)} singular points, {len(rep.models)} clusters")
    for m in rep.models:
        print(f"  {m.kind} ({len(m.points)} points) {m.diagnostics.get('labels', '')}")
    for a in rep.analyses:
        v = a.lojasiewicz.verdict if a.lojasiewicz is not None else "-"
        print(f"  {a.local.label} at {' '.join('%.4f' % c for c in a.local.location)}: {v}")
    for line in rep.acceptance_lines():
        print(line)
    out = args.output or cfg.output.directory
    print(f"artifacts in {out}")
    return EXIT_OK if rep.passed else EXIT_ACCEPTANCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
