"""Command-line front end.

Subcommands:

* ``verify FILE``  — run the abstraction-refinement verifier on a program.
* ``check FILE CERT`` — validate a decomposition certificate for a program.
* ``oracle FILE``  — compute the exact violation probability by state-space
  exploration over a finite initial-state domain.
* ``bench DIR``    — run every ``*.prob`` program in a directory and print a
  result table (Result / #Iteration / Upper Bound / #Traces).

Exit codes: 0 = satisfied (bound at or below the threshold), 1 = refuted
(validated counterexample), 2 = inconclusive, 3 = usage/input error,
4 = internal error.

All probabilities are exact rationals; a decimal approximation is appended
for readability.  A config file (``key = value`` lines, ``#`` comments) can
set defaults for ``solver``, ``timeout``, ``max_iters``, ``trace_budget``,
``beta``, ``refutational`` and ``step_bound``; command-line flags override
the file.
"""

from __future__ import annotations

import argparse
import json
import re
import signal
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .cegar import (
    Certified,
    Inconclusive,
    Rejected,
    Sat,
    Unsat,
    check_decomposition,
    load_certificate,
    verify,
    verify_refutational,
)
from .evidence import validate_counterexample
from .lang import ParseError, parse, to_pcfa
from .oracle import StateDomain, exact_violation_probability
from .solver import Solver, SolverUnknown

EXIT_SAT = 0
EXIT_UNSAT = 1
EXIT_INCONCLUSIVE = 2
EXIT_ERROR = 3
EXIT_INTERNAL = 4


class CliError(Exception):
    """Usage or input problem; message is printed and exit code is 3."""


# ---------------------------------------------------------------------------
# rendering helpers


def render_fraction(f: Fraction) -> str:
    """Exact rational with a decimal approximation appended."""
    if f.denominator == 1:
        return str(f)
    return f"{f} (~{float(f):.6g})"


def render_trace(trace) -> str:
    return "; ".join(str(lab) for lab in trace)


def parse_fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(f"not an exact rational: {text!r} ({exc})") from exc


_DOM_RE = re.compile(r"^([A-Za-z_][A-Za-z_0-9]*)=(-?\d+)\.\.(-?\d+)$")


def parse_domain(entries: list[str]) -> Optional[StateDomain]:
    """Each entry has the shape ``VAR=a..b`` (inclusive integer range)."""
    if not entries:
        return None
    ranges: dict[str, tuple[int, int]] = {}
    for entry in entries:
        m = _DOM_RE.match(entry)
        if not m:
            raise CliError(f"bad --dom entry {entry!r}; expected VAR=a..b")
        lo, hi = int(m.group(2)), int(m.group(3))
        if lo > hi:
            raise CliError(f"empty range in --dom entry {entry!r}")
        ranges[m.group(1)] = (lo, hi)
    return StateDomain.of(ranges)


# ---------------------------------------------------------------------------
# config file

_CONFIG_KEYS = {
    "beta",
    "solver",
    "timeout",
    "max_iters",
    "trace_budget",
    "refutational",
    "step_bound",
}


def load_config(path: str) -> dict:
    """Parse a ``key = value`` config file; unknown keys are rejected."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split("//", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise CliError(
                f"{path}:{lineno}: unknown config key {key!r} "
                f"(known: {', '.join(sorted(_CONFIG_KEYS))})"
            )
        values[key] = value
    return values


def _merge_settings(args: argparse.Namespace) -> dict:
    """Config-file defaults overridden by any explicitly given flags."""
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    merged = {
        "beta": parse_fraction(cfg["beta"]) if "beta" in cfg else None,
        "solver": cfg.get("solver"),
        "timeout": float(cfg["timeout"]) if "timeout" in cfg else None,
        "max_iters": int(cfg["max_iters"]) if "max_iters" in cfg else 500,
        "trace_budget": int(cfg["trace_budget"]) if "trace_budget" in cfg else 10_000,
        "refutational": cfg.get("refutational", "").lower() in ("1", "true", "yes"),
        "step_bound": int(cfg["step_bound"]) if "step_bound" in cfg else 64,
    }
    if getattr(args, "beta", None) is not None:
        merged["beta"] = parse_fraction(args.beta)
    if getattr(args, "solver", None) is not None:
        merged["solver"] = args.solver
    if getattr(args, "timeout", None) is not None:
        merged["timeout"] = args.timeout
    if getattr(args, "max_iters", None) is not None:
        merged["max_iters"] = args.max_iters
    if getattr(args, "trace_budget", None) is not None:
        merged["trace_budget"] = args.trace_budget
    if getattr(args, "refutational", False):
        merged["refutational"] = True
    if getattr(args, "step_bound", None) is not None:
        merged["step_bound"] = args.step_bound
    return merged


# ---------------------------------------------------------------------------
# timeout guard


class _Timeout(Exception):
    pass


class time_limit:
    """Wall-clock limit for a block, via SIGALRM (main thread only)."""

    def __init__(self, seconds: Optional[float]):
        self.seconds = seconds

    def __enter__(self):
        if self.seconds and self.seconds > 0:
            signal.signal(signal.SIGALRM, self._raise)
            signal.setitimer(signal.ITIMER_REAL, self.seconds)
        return self

    @staticmethod
    def _raise(signum, frame):
        raise _Timeout()

    def __exit__(self, exc_type, exc, tb):
        if self.seconds and self.seconds > 0:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, signal.SIG_DFL)
        return False


# ---------------------------------------------------------------------------
# shared run plumbing


def _load_program(path: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc
    try:
        return parse(text)
    except ParseError as exc:
        raise CliError(f"{path}: {exc}") from exc


def run_verify(path: str, settings: dict) -> dict:
    """Run the verifier on one file and return a report dictionary.

    Report fields (stable): verdict, bound_num, bound_den, iterations,
    traces, error_pre — plus beta, file, time_s, reason and solver stats.
    """
    program, spec = _load_program(path)
    p = to_pcfa(program)
    beta = settings["beta"] if settings["beta"] is not None else spec.beta
    solver = Solver(path=settings["solver"])
    runner = verify_refutational if settings["refutational"] else verify

    report = {
        "file": path,
        "verdict": None,
        "bound_num": None,
        "bound_den": None,
        "iterations": 0,
        "traces": None,
        "error_pre": None,
        "beta": f"{beta.numerator}/{beta.denominator}",
        "reason": None,
    }
    t0 = time.monotonic()
    try:
        with time_limit(settings["timeout"]):
            if settings["refutational"]:
                result = runner(p, spec, beta, solver, max_iters=settings["max_iters"])
            else:
                result = runner(
                    p,
                    spec,
                    beta,
                    solver,
                    max_iters=settings["max_iters"],
                    trace_budget=settings["trace_budget"],
                )
    except _Timeout:
        result = Inconclusive(f"timeout after {settings['timeout']}s", 0)
    except SolverUnknown as exc:
        result = Inconclusive(f"solver gave up: {exc}", 0)
    report["time_s"] = round(time.monotonic() - t0, 3)

    if isinstance(result, Sat):
        report["verdict"] = "sat"
        report["bound_num"] = result.upper_bound.numerator
        report["bound_den"] = result.upper_bound.denominator
        report["iterations"] = result.iterations
    elif isinstance(result, Unsat):
        cex = result.counterexample
        ok, reasons = validate_counterexample(p, spec, beta, cex, solver)
        if not ok:
            raise RuntimeError(
                "internal error: counterexample failed revalidation: "
                + "; ".join(reasons)
            )
        report["verdict"] = "unsat"
        report["bound_num"] = cex.total_vp.numerator
        report["bound_den"] = cex.total_vp.denominator
        report["iterations"] = result.iterations
        report["traces"] = [[str(lab) for lab in tr] for tr in cex.traces]
        report["error_pre"] = str(cex.error_pre)
    else:
        report["verdict"] = "inconclusive"
        report["iterations"] = result.iterations
        report["reason"] = result.reason
    report["solver"] = solver.stats()
    return report


def _print_verify_report(report: dict) -> None:
    verdict = report["verdict"]
    bound = (
        Fraction(report["bound_num"], report["bound_den"])
        if report["bound_num"] is not None
        else None
    )
    if verdict == "sat":
        print("verdict: Sat (violation probability within threshold)")
        print(f"upper bound: {render_fraction(bound)}  <=  beta {report['beta']}")
    elif verdict == "unsat":
        print("verdict: Unsat (threshold exceeded; counterexample validated)")
        print(
            f"counterexample probability: {render_fraction(bound)}  >  "
            f"beta {report['beta']}"
        )
        print(f"error precondition: {report['error_pre']}")
        traces = report["traces"] or []
        print(f"traces ({len(traces)}):")
        for tr in traces:
            print("  " + "; ".join(tr))
    else:
        print("verdict: Inconclusive")
        print(f"reason: {report['reason']}")
    print(f"iterations: {report['iterations']}")
    stats = report.get("solver", {})
    if stats:
        print(
            f"solver: {stats['backend']}, {stats['queries']} queries "
            f"({stats['cache_hits']} cache hits)"
        )
    print(f"time: {report['time_s']}s")


_VERDICT_EXIT = {"sat": EXIT_SAT, "unsat": EXIT_UNSAT, "inconclusive": EXIT_INCONCLUSIVE}


def cmd_verify(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    report = run_verify(args.file, settings)
    if args.json:
        print(json.dumps(report, indent=2))
    else:
        _print_verify_report(report)
    return _VERDICT_EXIT[report["verdict"]]


# ---------------------------------------------------------------------------
# check


def cmd_check(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    program, spec = _load_program(args.file)
    p = to_pcfa(program)
    try:
        cert_text = Path(args.cert).read_text()
    except OSError as exc:
        raise CliError(f"cannot read {args.cert}: {exc}") from exc
    try:
        cert_beta, a, qs = load_certificate(cert_text, program)
    except (ParseError, ValueError) as exc:
        raise CliError(f"{args.cert}: {exc}") from exc
    beta = settings["beta"] if settings["beta"] is not None else cert_beta
    solver = Solver(path=settings["solver"])

    t0 = time.monotonic()
    try:
        with time_limit(settings["timeout"]):
            result = check_decomposition(p, spec, beta, qs, a, solver)
    except _Timeout:
        result = Rejected(f"timeout after {settings['timeout']}s")
    elapsed = round(time.monotonic() - t0, 3)

    report = {
        "file": args.file,
        "certificate": args.cert,
        "beta": f"{beta.numerator}/{beta.denominator}",
        "components": len(qs),
        "time_s": elapsed,
        "solver": solver.stats(),
    }
    if isinstance(result, Certified):
        report["verdict"] = "certified"
        report["bound_num"] = result.upper_bound.numerator
        report["bound_den"] = result.upper_bound.denominator
        exit_code = EXIT_SAT
    else:
        report["verdict"] = "rejected"
        report["bound_num"] = None
        report["bound_den"] = None
        report["reason"] = result.reason
        exit_code = EXIT_UNSAT

    if args.json:
        print(json.dumps(report, indent=2))
    elif isinstance(result, Certified):
        print("certificate: accepted")
        print(
            f"certified bound: {render_fraction(result.upper_bound)}  <=  "
            f"beta {report['beta']}"
        )
        print(f"time: {elapsed}s")
    else:
        print("certificate: rejected")
        print(f"reason: {result.reason}")
        print(f"time: {elapsed}s")
    return exit_code


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    program, spec = _load_program(args.file)
    p = to_pcfa(program)
    if not p.is_deterministic():
        raise CliError(
            "the oracle requires an unambiguous control-flow automaton "
            "(one target per location and label)"
        )
    dom = parse_domain(args.dom or [])
    beta = settings["beta"] if settings["beta"] is not None else spec.beta

    t0 = time.monotonic()
    try:
        with time_limit(settings["timeout"]):
            lo, hi = exact_violation_probability(
                p, spec, dom, step_bound=settings["step_bound"]
            )
    except _Timeout:
        raise CliError(f"oracle timeout after {settings['timeout']}s")
    except ValueError as exc:
        raise CliError(str(exc))
    elapsed = round(time.monotonic() - t0, 3)

    decision = None
    if beta is not None:
        if lo > beta:
            decision = "exceeds"
        elif hi <= beta:
            decision = "within"
        else:
            decision = "unresolved"

    if args.json:
        print(
            json.dumps(
                {
                    "file": args.file,
                    "lo_num": lo.numerator,
                    "lo_den": lo.denominator,
                    "hi_num": hi.numerator,
                    "hi_den": hi.denominator,
                    "exact": lo == hi,
                    "beta": f"{beta.numerator}/{beta.denominator}" if beta else None,
                    "decision": decision,
                    "time_s": elapsed,
                }
            )
        )
    else:
        if lo == hi:
            print(f"violation probability: {render_fraction(lo)} (exact)")
        else:
            print(
                f"violation probability in [{render_fraction(lo)}, "
                f"{render_fraction(hi)}]"
            )
        if decision is not None:
            print(f"threshold {beta}: {decision}")
        print(f"time: {elapsed}s")
    return EXIT_SAT


# ---------------------------------------------------------------------------
# bench


def _bench_row(report: dict) -> dict:
    verdict = report["verdict"]
    result = {"sat": "Sat", "unsat": "Unsat"}.get(verdict, "Inconclusive")
    if report["bound_num"] is not None:
        bound = render_fraction(Fraction(report["bound_num"], report["bound_den"]))
    else:
        bound = "-"
    n_traces = str(len(report["traces"])) if report["traces"] is not None else "-"
    return {
        "Benchmark": Path(report["file"]).stem,
        "Result": result,
        "#Iteration": str(report["iterations"]),
        "Upper Bound": bound,
        "#Traces": n_traces,
        "Time": f"{report['time_s']}s",
    }


_BENCH_COLUMNS = ["Benchmark", "Result", "#Iteration", "Upper Bound", "#Traces", "Time"]


def cmd_bench(args: argparse.Namespace) -> int:
    settings = _merge_settings(args)
    bench_dir = Path(args.dir)
    if not bench_dir.is_dir():
        raise CliError(f"not a directory: {args.dir}")
    files = sorted(bench_dir.glob("*.prob"))
    if not files:
        raise CliError(f"no .prob files in {args.dir}")

    reports = []
    for path in files:
        try:
            reports.append(run_verify(str(path), settings))
        except (CliError, RuntimeError) as exc:
            reports.append(
                {
                    "file": str(path),
                    "verdict": "error",
                    "bound_num": None,
                    "bound_den": None,
                    "iterations": 0,
                    "traces": None,
                    "error_pre": None,
                    "beta": "-",
                    "reason": str(exc),
                    "time_s": 0.0,
                }
            )

    if args.json:
        print(json.dumps(reports, indent=2))
        return EXIT_SAT if all(r["verdict"] in ("sat", "unsat") for r in reports) else EXIT_INCONCLUSIVE

    rows = [_bench_row(r) for r in reports]
    widths = {
        col: max(len(col), *(len(row[col]) for row in rows)) for col in _BENCH_COLUMNS
    }
    header = "  ".join(col.ljust(widths[col]) for col in _BENCH_COLUMNS)
    print(header)
    print("  ".join("-" * widths[col] for col in _BENCH_COLUMNS))
    for row in rows:
        print("  ".join(row[col].ljust(widths[col]) for col in _BENCH_COLUMNS))
    ok = all(r["verdict"] in ("sat", "unsat") for r in reports)
    return EXIT_SAT if ok else EXIT_INCONCLUSIVE


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="probtrace",
        description=(
            "Verify threshold properties of probabilistic programs via "
            "trace abstraction, or refute them with validated "
            "counterexamples."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, budget: bool = False) -> None:
        p.add_argument("--beta", help="violation threshold p/q (overrides the file)")
        p.add_argument("--solver", help="path to an SMT-LIB 2 solver binary")
        p.add_argument("--timeout", type=float, help="wall-clock limit in seconds")
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--json", action="store_true", help="machine-readable output")
        if budget:
            p.add_argument("--max-iters", type=int, help="refinement iteration cap")
            p.add_argument(
                "--trace-budget", type=int, help="trace enumeration budget per round"
            )
            p.add_argument(
                "--refutational",
                action="store_true",
                help="use the refutation-oriented loop (counterexample search first)",
            )

    p_verify = sub.add_parser("verify", help="verify or refute a program")
    p_verify.add_argument("file", help="program file (.prob)")
    common(p_verify, budget=True)
    p_verify.set_defaults(func=cmd_verify)

    p_check = sub.add_parser("check", help="check a decomposition certificate")
    p_check.add_argument("file", help="program file (.prob)")
    p_check.add_argument("cert", help="certificate file")
    common(p_check)
    p_check.set_defaults(func=cmd_check)

    p_oracle = sub.add_parser(
        "oracle", help="exact violation probability over a finite domain"
    )
    p_oracle.add_argument("file", help="program file (.prob)")
    p_oracle.add_argument(
        "--dom",
        action="append",
        metavar="VAR=a..b",
        help="inclusive initial range for a variable (repeatable)",
    )
    p_oracle.add_argument(
        "--step-bound", type=int, help="exploration depth bound (default 64)"
    )
    common(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)

    p_bench = sub.add_parser("bench", help="run a directory of benchmarks")
    p_bench.add_argument("dir", help="directory containing .prob files")
    common(p_bench, budget=True)
    p_bench.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except SolverUnknown as exc:
        print(f"error: solver gave up: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except RuntimeError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
