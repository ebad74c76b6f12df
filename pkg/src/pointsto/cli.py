"""Command-line entry point.

    pointsto analyze prog.mc [--json out.json] [--filter-iterations N]
                             [--deref-offbyone error|warn|allow] [-k N]
    pointsto check-oracle [--universe N] [--depth N]

Exit status: 0 clean, 1 diagnostics found, 2 usage/parse error,
3 internal error or enumeration cap exceeded.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass
from typing import Optional

from .domain import DEFAULT_GAMMA_CAP, EnumerationCapError
from .frontend.analyzer import AnalysisConfig, AnalysisError, OffByOnePolicy, analyze
from .frontend.lower import LoweringError, lower
from .frontend.report import render_json, render_text
from .frontend.syntax import SyntaxErrors, parse
from .oracle import check_soundness

EXIT_CLEAN, EXIT_FINDINGS, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


@dataclass
class CliConfig:
    command: str
    input: Optional[str] = None
    json_path: Optional[str] = None
    filter_iterations: int = 2
    deref_offbyone: OffByOnePolicy = OffByOnePolicy.ERROR
    k: int = 1
    gamma_cap: int = DEFAULT_GAMMA_CAP
    universe: int = 3
    depth: int = 2


def _positive(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="pointsto", description="Flow-sensitive points-to analysis for mini-C.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="analyze a source file")
    a.add_argument("input")
    a.add_argument("--json", dest="json_path", metavar="PATH", help="write the JSON report here ('-' for stdout)")
    a.add_argument("--filter-iterations", type=_positive, default=2)
    a.add_argument("--deref-offbyone", choices=[p.value for p in OffByOnePolicy], default="error")
    a.add_argument("-k", type=_positive, default=1, help="call contexts tracked precisely")

    o = sub.add_parser("check-oracle", help="brute-force soundness checks on small universes")
    o.add_argument("--universe", type=_positive, default=3)
    o.add_argument("--depth", type=_positive, default=2)
    o.add_argument("--gamma-cap", type=_positive, default=DEFAULT_GAMMA_CAP)
    return p


def parse_args(argv) -> CliConfig:
    ns = build_parser().parse_args(argv)
    if ns.command == "analyze":
        return CliConfig(
            "analyze",
            input=ns.input,
            json_path=ns.json_path,
            filter_iterations=ns.filter_iterations,
            deref_offbyone=OffByOnePolicy(ns.deref_offbyone),
            k=ns.k,
        )
    return CliConfig("check-oracle", universe=ns.universe, depth=ns.depth, gamma_cap=ns.gamma_cap)


def _analyze(cfg: CliConfig) -> int:
    try:
        with open(cfg.input, encoding="utf-8") as fh:
            source = fh.read()
    except OSError as exc:
        print(f"pointsto: cannot read {cfg.input}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    try:
        lowered = lower(parse(source))
    except SyntaxErrors as exc:
        for line, col, msg in exc.errors:
            print(f"{cfg.input}:{line}:{col}: syntax error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except LoweringError as exc:
        print(f"{cfg.input}:{exc.line}: {exc.message}", file=sys.stderr)
        return EXIT_USAGE
    config = AnalysisConfig(filter_iterations=cfg.filter_iterations, deref_offbyone=cfg.deref_offbyone, k=cfg.k)
    try:
        result = analyze(lowered, config)
    except AnalysisError as exc:
        print(f"pointsto: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL

    if cfg.json_path == "-":
        sys.stdout.write(render_json(result))
    else:
        sys.stdout.write(render_text(result))
        if cfg.json_path:
            with open(cfg.json_path, "w", encoding="utf-8") as fh:
                fh.write(render_json(result))
    for d in result.diagnostics:
        print(f"{cfg.input}:{d.line}: {d.kind}: {d.expr}", file=sys.stderr)
    return EXIT_FINDINGS if result.diagnostics else EXIT_CLEAN


def _check_oracle(cfg: CliConfig) -> int:
    # expressions get one extra level of nesting: assignments and conditions
    # already contain a dereference of their operands
    suites = (("eval", cfg.depth + 1), ("assign", cfg.depth), ("filter", cfg.depth))
    failed = 0
    try:
        for kind, depth in suites:
            report = check_soundness(kind, cfg.universe, depth, cap=cfg.gamma_cap)
            print(report.to_text())
            failed += len(report.violations)
    except EnumerationCapError as exc:
        print(f"pointsto: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    print(f"{len(suites)} suites, {failed} violations")
    if failed:
        print(f"pointsto: {failed} soundness violations", file=sys.stderr)
        return EXIT_FINDINGS
    return EXIT_CLEAN


def run(argv=None) -> int:
    try:
        cfg = parse_args(sys.argv[1:] if argv is None else argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    if cfg.command == "analyze":
        return _analyze(cfg)
    return _check_oracle(cfg)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
