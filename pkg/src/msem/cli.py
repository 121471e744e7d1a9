"""Command line entry point: ``msem run --case NAME --order N --levels 8,16,32``.

Options may also come from a ``key=value`` config file given with
``--config``; keys mirror the long flag names and explicit flags win.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, IllPosedError, MsemError
from .forms import QUAD_EXTRA
from .harness import builtin_cases, convergence_study, get_case, write_reports
from .solver import BCType

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

CASE_NAMES = [c.name for c in builtin_cases()]
_KEYS = {"case", "order", "levels", "bc", "out", "quad-extra"}

log = logging.getLogger("msem")


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key=value`` lines; ``#`` starts a comment, blank lines are skipped."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("_", "-")
        if key not in _KEYS:
            raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def parse_levels(text: str) -> list[int]:
    try:
        levels = [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError as exc:
        raise ConfigurationError(f"levels must be comma-separated integers, got {text!r}") from exc
    if not levels:
        raise ConfigurationError("at least one level is required")
    return levels


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="msem", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a convergence study and write CSV")
    run.add_argument("--config", help="key=value file with defaults for the flags below")
    run.add_argument("--case", choices=CASE_NAMES)
    run.add_argument("--order", type=int, help="polynomial order N")
    run.add_argument("--levels", help="comma-separated element counts per direction")
    run.add_argument("--bc", choices=[b.value for b in BCType], help="same type on all sides")
    run.add_argument("--out", help="CSV output path (default: stdout)")
    run.add_argument("--quad-extra", type=int, dest="quad_extra", help="extra Gauss points")
    return parser


def _resolve(args: argparse.Namespace) -> dict:
    cfg = read_config(args.config) if args.config else {}
    case = args.case or cfg.get("case")
    if case is None:
        raise ConfigurationError("--case is required")
    if case not in CASE_NAMES:
        raise ConfigurationError(f"unknown case {case!r}; choose one of {', '.join(CASE_NAMES)}")
    order = args.order if args.order is not None else cfg.get("order")
    if order is None:
        raise ConfigurationError("--order is required")
    levels = args.levels or cfg.get("levels")
    if levels is None:
        raise ConfigurationError("--levels is required")
    bc = args.bc or cfg.get("bc")
    if bc is not None and bc not in [b.value for b in BCType]:
        raise ConfigurationError(f"unknown boundary type {bc!r}")
    quad = args.quad_extra if args.quad_extra is not None else cfg.get("quad-extra", QUAD_EXTRA)
    try:
        order, quad = int(order), int(quad)
    except ValueError as exc:
        raise ConfigurationError(f"order and quad-extra must be integers: {exc}") from exc
    if order < 1:
        raise ConfigurationError(f"order must be >= 1, got {order}")
    if quad < 0:
        raise ConfigurationError(f"quad-extra must be >= 0, got {quad}")
    return {
        "case": case,
        "order": order,
        "levels": parse_levels(str(levels)),
        "bc": bc,
        "out": args.out or cfg.get("out"),
        "quad_extra": quad,
    }


def run(opts: dict) -> int:
    case = get_case(opts["case"])
    if opts["bc"] is None and case.name == "bc-sweep":
        bcs = [b.value for b in BCType]
    else:
        bcs = [opts["bc"]]
    reports = []
    for bc in bcs:
        report = convergence_study(
            case, opts["order"], opts["levels"], bc=bc, quad_extra=opts["quad_extra"]
        )
        reports.append(report)
        if not report.complete:
            break
    text = write_reports(reports, opts["out"])
    if opts["out"] is None:
        sys.stdout.write(text)
    failed = [r for r in reports if not r.complete]
    if failed:
        done = len(failed[0].levels)
        print(
            f"msem: solver failure after {done} completed level(s), results are partial: "
            f"{failed[0].failed}",
            file=sys.stderr,
        )
        return EXIT_SOLVER
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return run(_resolve(args))
    except IllPosedError as exc:
        print(f"msem: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (MsemError, ValueError) as exc:
        print(f"msem: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
