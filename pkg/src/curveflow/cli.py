"""Command-line entry point: ``curveflow run|scenario|diag|list-scenarios|sweep``.

Exit codes: 0 success, 2 parse or validation error, 3 solver failure,
4 input/output error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .config import _key_lines, apply_overrides, load_raw, resolve_config
from .diagnostics import diag_report, format_summary
from .errors import MissingArtifact, ParseError, ValidationError
from .scenarios import BUILTIN_SCENARIOS, builtin_raw, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4

log = logging.getLogger("curveflow")


def _config_from_file(path: str, overrides: list[str]):
    text = Path(path).read_text(encoding="utf-8")
    raw = load_raw(text)
    lines = _key_lines(text)
    if overrides:
        raw = apply_overrides(raw, overrides)
    return resolve_config(raw, lines)


def _config_from_builtin(name: str, overrides: list[str]):
    if name not in BUILTIN_SCENARIOS:
        raise ValidationError(f"unknown scenario {name!r}; available: "
                              f"{', '.join(sorted(BUILTIN_SCENARIOS))}", field="name")
    return resolve_config(apply_overrides(builtin_raw(name), overrides))


def _execute(cfg, out) -> int:
    art = run_scenario(cfg, out_dir=out)
    print(f"{cfg.name}: {art.status}, {len(art.snapshots)} snapshots in {art.directory}")
    if not art.ok:
        print(f"{cfg.name}: {art.error['type']}: {art.error['message']}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _guarded(fn, *args) -> int:
    try:
        return fn(*args)
    except (ParseError, ValidationError) as exc:
        where = []
        if getattr(exc, "line", None) is not None:
            where.append(f"line {exc.line}")
        if getattr(exc, "field", None):
            where.append(f"field {exc.field}")
        suffix = f" ({', '.join(where)})" if where else ""
        print(f"error: {exc}{suffix}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def cmd_run(args) -> int:
    return _guarded(lambda: _execute(_config_from_file(args.config, args.set), args.out))


def cmd_scenario(args) -> int:
    return _guarded(lambda: _execute(_config_from_builtin(args.name, args.set), args.out))


def cmd_diag(args) -> int:
    def go():
        summary = diag_report(args.run_dir)
        sys.stdout.write(format_summary(summary))
        return EXIT_OK
    return _guarded(go)


def cmd_list(args) -> int:
    for name in sorted(BUILTIN_SCENARIOS):
        print(f"{name:22s} {BUILTIN_SCENARIOS[name]['description']}")
    return EXIT_OK


def _sweep_one(item: str, overrides: list[str], out_root: str | None) -> tuple[str, int]:
    if item in BUILTIN_SCENARIOS:
        build = lambda: _config_from_builtin(item, overrides)  # noqa: E731
    else:
        build = lambda: _config_from_file(item, overrides)  # noqa: E731

    def go():
        cfg = build()
        out = Path(out_root) / cfg.name if out_root else None
        return _execute(cfg, out)
    return item, _guarded(go)


def cmd_sweep(args) -> int:
    """Run independent scenarios concurrently; each writes to its own directory."""
    items = args.items or sorted(BUILTIN_SCENARIOS)
    worst = EXIT_OK
    with ProcessPoolExecutor(max_workers=args.jobs) as pool:
        futures = [pool.submit(_sweep_one, it, args.set, args.out) for it in items]
        for fut in futures:
            item, code = fut.result()
            print(f"{item}: exit {code}")
            worst = max(worst, code)
    return worst


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="curveflow",
                                description="Curve shortening flows on surfaces in R^3.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a scenario from a YAML config file")
    r.add_argument("config")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field, e.g. solver.M=400 (repeatable)")
    r.add_argument("--out", default=None, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("scenario", help="run a builtin scenario")
    s.add_argument("name")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_scenario)

    d = sub.add_parser("diag", help="analyse a run directory")
    d.add_argument("run_dir")
    d.set_defaults(func=cmd_diag)

    ls = sub.add_parser("list-scenarios", help="list builtin scenarios")
    ls.set_defaults(func=cmd_list)

    sw = sub.add_parser("sweep", help="run several scenarios or configs concurrently")
    sw.add_argument("items", nargs="*", help="builtin names or config paths (default: all builtins)")
    sw.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sw.add_argument("--out", default=None, help="root directory; each run gets <out>/<name>")
    sw.add_argument("-j", "--jobs", type=int, default=None)
    sw.set_defaults(func=cmd_sweep)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
