"""``laxcheck`` command line.

Exit codes: 0 when every check passes, 1 when any check fails, 2 for usage
or parse errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from . import verify as V
from .dsl import DslError, parse_theory_form, read_forms
from .plan import (
    THEORY_SUITES,
    Plan,
    check_entry,
    emit_report,
    parse_plan,
    run_plan,
    suite_entries,
)
from .sexpr import SList
from .theories import PACKAGE_NAMES, THEORY_NAMES, builtin_package, builtin_theory

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _parity(text: str) -> int:
    if text not in ("0", "1"):
        raise argparse.ArgumentTypeError("d parity is 0 or 1")
    return int(text)


def _sign(text: str) -> int:
    if text not in ("1", "+1", "-1"):
        raise argparse.ArgumentTypeError("expected +1 or -1")
    return int(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="laxcheck", description="Exact verification of lax BV-BFV theories.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list built-in theories, packages and checks")

    v = sub.add_parser("verify", help="run a verification suite or plan")
    src = v.add_mutually_exclusive_group(required=True)
    src.add_argument("--theory", metavar="NAME", help="built-in theory or package name")
    src.add_argument("--file", metavar="PATH", help="theory or plan file")
    v.add_argument("--suite", choices=("all", "lax", "equivalence", "kernel"), default="all")
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--format", choices=("json", "text"), default="text")
    v.add_argument("--oracle", type=int, default=0, metavar="N",
                   help="cross-check recorded identities with the numeric oracle at N points")
    v.add_argument("--timings", action="store_true", help="include elapsed times (breaks byte-identity)")
    _flag_args(v)

    k = sub.add_parser("kernel", help="pre-boundary kernel of a coordinate theory")
    k.add_argument("--theory", metavar="NAME", required=True)
    k.add_argument("--pre-morphism", choices=("chi",))
    k.add_argument("--format", choices=("json", "text"), default="text")
    return p


def _flag_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dt-sign", type=_sign, default=1)
    p.add_argument("--d-parity", type=_parity, default=None)
    p.add_argument("--epsilon-s", type=_sign, default=None)


def cmd_list(out) -> int:
    out.write("theories:\n")
    for n in THEORY_NAMES:
        t = builtin_theory(n)
        fields = getattr(t, "fields", ())
        out.write(f"  {n:18} {len(fields)} generators\n")
    out.write("packages:\n")
    for n in PACKAGE_NAMES:
        pkg = builtin_package(n)
        out.write(f"  {n:18} {pkg.theory1.name} ~ {pkg.theory2.name}\n")
    out.write("theory checks: " + " ".join(V.THEORY_CHECKS) + "\n")
    out.write("package checks: " + " ".join(V.PACKAGE_CHECKS) + "\n")
    out.write("suites: all lax equivalence kernel\n")
    return EXIT_OK


def _plan_from_args(args) -> Plan:
    if args.theory is not None:
        name = args.theory
        if name not in THEORY_NAMES and name not in PACKAGE_NAMES:
            raise UsageError(f"unknown theory or package {name}")
        return Plan(f"{args.suite}/{name}", suite_entries(args.suite, name))
    path = Path(args.file)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(str(exc)) from None
    forms = read_forms(text)
    if any(isinstance(f, SList) and f.head() == "plan" for f in forms):
        return parse_plan(text)
    if args.suite not in THEORY_SUITES:
        raise UsageError(f"suite {args.suite} needs a package")
    custom = {}
    entries = []
    for f in forms:
        t = parse_theory_form(f)
        custom[t.name] = t
        entries += [check_entry(c, t.name, None, custom) for c in THEORY_SUITES[args.suite]]
    return Plan(path.stem, entries, custom)


def cmd_verify(args, out) -> int:
    plan = _plan_from_args(args)
    flags = V.Flags(args.dt_sign, args.d_parity, args.epsilon_s)
    doc = run_plan(plan, max(1, args.jobs), args.seed, flags, args.oracle, args.timings)
    out.write(emit_report(doc, args.format).decode("utf-8"))
    return doc.exit_code


def cmd_kernel(args, out) -> int:
    if args.theory not in THEORY_NAMES:
        raise UsageError(f"unknown theory {args.theory}")
    t = builtin_theory(args.theory)
    if not isinstance(t, V.Theory):
        raise UsageError(f"{args.theory} is not a coordinate theory")
    try:
        m = V.kernel_pre_morphism(t, args.pre_morphism) if args.pre_morphism else None
    except V.VerifyError as exc:
        raise UsageError(str(exc)) from None
    rep = V.preboundary_kernel(t, m, morphism_name=args.pre_morphism)
    if args.format == "json":
        out.write(json.dumps(rep.to_dict(), indent=2, ensure_ascii=False) + "\n")
    else:
        out.write(format_kernel(rep))
    return EXIT_OK if rep.annihilates else EXIT_FAIL


def format_kernel(rep: V.KernelReport) -> str:
    title = rep.theory + (f" with {rep.pre_morphism}*" if rep.pre_morphism else "")
    lines = [f"kernel of the pre-boundary form of {title}",
             f"basis: {' '.join(rep.basis)}",
             f"rank: {rep.rank}",
             f"constant rank: {'yes' if rep.constant_rank else 'no'}"]
    for p in rep.pivots:
        cond = f"  if {p.condition}" if p.condition else ""
        lines.append(f"pivot {p.row} x {p.col}{cond}")
    for c in rep.degeneracy:
        lines.append(f"degeneracy: {c}")
    for h in rep.higher_jets:
        lines.append(f"higher jet: {h}")
    for c in rep.non_eliminable:
        lines.append(f"non-eliminable: {c if len(c) <= 240 else c[:240] + f' … ({len(c)} chars)'}")
    for g in rep.generators:
        lines.append("kernel: " + " + ".join(f"({v})·∂{b}" if v != "1" else f"∂{b}" for b, v in g.items()))
    lines.append(f"generators annihilate the form: {'yes' if rep.annihilates else 'no'}")
    return "\n".join(lines) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    out = sys.stdout
    try:
        if args.command == "list":
            return cmd_list(out)
        if args.command == "verify":
            return cmd_verify(args, out)
        return cmd_kernel(args, out)
    except (DslError, UsageError) as exc:
        where = f"{args.file}:" if getattr(args, "file", None) else ""
        sys.stderr.write(f"laxcheck: {where}{exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
