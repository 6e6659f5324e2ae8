"""Verification plans, their execution and report documents.

    (plan NAME
      (suite all jac-gr)
      (check kernel gr1d :pre-morphism chi)
      (check transform/phi cm))

A plan file may also carry ``(theory ...)`` forms; their names become valid
check targets.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Mapping

from . import verify as V
from .dsl import DslError, DslSyntaxError, parse_theory_form, read_forms
from .sexpr import NOSPAN, SList, Span, Sym
from .theories import PACKAGE_NAMES, THEORY_NAMES, Theory, builtin_package, builtin_theory

SCHEMA = "laxcheck-report/1"


class UnknownCheck(DslError):
    """A plan names a check or suite that does not exist."""


class UnresolvedReference(DslError):
    """A plan names a theory, package or pre-morphism that cannot be resolved."""


@dataclass(frozen=True)
class PlanEntry:
    check: str
    target: str
    pre_morphism: str | None = None
    span: Span = field(default=NOSPAN, compare=False)

    @property
    def label(self) -> str:
        return f"{self.check} {self.target}" + (f" :pre-morphism {self.pre_morphism}" if self.pre_morphism else "")


@dataclass
class Plan:
    name: str
    entries: list[PlanEntry]
    theories: dict[str, Theory] = field(default_factory=dict)


THEORY_SUITES: dict[str, tuple[str, ...]] = {
    "lax": V.LAX_SUITE,
    "kernel": V.KERNEL_SUITE,
    "all": V.LAX_SUITE + V.KERNEL_SUITE,
}
PACKAGE_SUITES = ("all", "equivalence", "lax", "kernel")


def _is_theory(name: str, custom: Mapping[str, Theory]) -> bool:
    return name in custom or name in THEORY_NAMES


def _chi_target(theory: str) -> bool:
    try:
        V.kernel_pre_morphism(builtin_theory(theory), "chi")
    except Exception:
        return False
    return True


def suite_entries(suite: str, target: str, custom: Mapping[str, Theory] | None = None,
                  span: Span = NOSPAN) -> list[PlanEntry]:
    """Expand a named suite for a theory or a package."""
    custom = custom or {}
    if _is_theory(target, custom):
        if suite not in THEORY_SUITES:
            raise UnknownCheck(f"suite {suite} needs an equivalence package, {target} is a theory", span)
        return [PlanEntry(c, target, None, span) for c in THEORY_SUITES[suite]]
    if target not in PACKAGE_NAMES:
        raise UnresolvedReference(f"no theory or package named {target}", span)
    if suite not in PACKAGE_SUITES:
        raise UnknownCheck(f"unknown suite {suite}", span)
    pkg = builtin_package(target)
    t1, t2 = pkg.theory1.name, pkg.theory2.name
    if suite in ("all", "equivalence"):
        return [PlanEntry(c, target, None, span) for c in V.EQUIVALENCE_SUITE]
    if suite == "lax":
        return [PlanEntry("lax-axioms", t, None, span) for t in (t1, t2)]
    out = [PlanEntry("kernel", t, None, span) for t in (t1, t2)]
    if t1 in THEORY_NAMES and _chi_target(t1):
        out.append(PlanEntry("kernel", t1, "chi", span))
    return out


def check_entry(check: str, target: str, pre_morphism: str | None = None,
                custom: Mapping[str, Theory] | None = None, span: Span = NOSPAN) -> PlanEntry:
    """Validate one named check against its target."""
    custom = custom or {}
    if check in V.THEORY_CHECKS:
        if not _is_theory(target, custom):
            raise UnresolvedReference(f"no theory named {target}", span)
        if pre_morphism is not None:
            if check != "kernel":
                raise UnknownCheck(f"{check} takes no pre-morphism", span)
            if pre_morphism != "chi" or target in custom or not _chi_target(target):
                raise UnresolvedReference(f"no pre-morphism {pre_morphism} for {target}", span)
        return PlanEntry(check, target, pre_morphism, span)
    if check in V.PACKAGE_CHECKS:
        if target not in PACKAGE_NAMES:
            raise UnresolvedReference(f"no package named {target}", span)
        if pre_morphism is not None:
            raise UnknownCheck(f"{check} takes no pre-morphism", span)
        return PlanEntry(check, target, None, span)
    raise UnknownCheck(f"unknown check {check}", span)


def parse_plan(text: str, theories: Mapping[str, Theory] | None = None) -> Plan:
    """Parse plan text; inline theory forms are registered before checks resolve."""
    forms = read_forms(text)
    custom: dict[str, Theory] = dict(theories or {})
    plans = []
    for f in forms:
        if isinstance(f, SList) and f.head() == "theory":
            t = parse_theory_form(f)
            custom[t.name] = t
        elif isinstance(f, SList) and f.head() == "plan":
            plans.append(f)
        else:
            raise DslSyntaxError("expected (plan ...) or (theory ...)", getattr(f, "span", NOSPAN))
    if len(plans) != 1:
        raise DslSyntaxError(f"expected one (plan ...) form, found {len(plans)}")
    form = plans[0]
    items = form.items[1:]
    name = "plan"
    if items and isinstance(items[0], Sym):
        name = items[0].name
        items = items[1:]
    entries: list[PlanEntry] = []
    for it in items:
        if not isinstance(it, SList) or it.head() not in ("suite", "check"):
            raise DslSyntaxError("expected (suite NAME TARGET) or (check NAME TARGET ...)",
                                 getattr(it, "span", NOSPAN))
        args = it.items[1:]
        if len(args) < 2 or not all(isinstance(a, Sym) for a in args[:2]):
            raise DslSyntaxError(f"({it.head()} NAME TARGET) expected", it.span)
        cname, target = args[0].name, args[1].name
        if it.head() == "suite":
            if len(args) != 2:
                raise DslSyntaxError("(suite NAME TARGET) takes no options", it.span)
            entries.extend(suite_entries(cname, target, custom, it.span))
            continue
        pre = None
        rest = args[2:]
        if rest:
            if len(rest) != 2 or not isinstance(rest[0], Sym) or rest[0].name != ":pre-morphism" \
                    or not isinstance(rest[1], Sym):
                raise DslSyntaxError("only :pre-morphism NAME is accepted", it.span)
            pre = rest[1].name
        entries.append(check_entry(cname, target, pre, custom, it.span))
    return Plan(name, entries, custom)


def print_plan(plan: Plan) -> str:
    body = "".join(f"\n  (check {e.check} {e.target}" + (f" :pre-morphism {e.pre_morphism}" if e.pre_morphism else "")
                   + ")" for e in plan.entries)
    return f"(plan {plan.name}{body})\n"


# ---------------------------------------------------------------------------
# execution


@dataclass
class ReportDocument:
    plan: str
    flags: V.Flags
    seed: int
    reports: list[V.CheckReport]
    oracle_trials: int = 0
    timings: bool = False

    @property
    def counts(self) -> dict[str, int]:
        out = {V.PASS: 0, V.FAIL: 0, V.SKIP: 0}
        for r in self.reports:
            out[r.status] += 1
        return out

    @property
    def exit_code(self) -> int:
        return 1 if self.counts[V.FAIL] else 0

    def to_dict(self) -> dict[str, object]:
        c = self.counts
        return {
            "schema": SCHEMA,
            "plan": self.plan,
            "flags": self.flags.as_dict(),
            "seed": self.seed,
            "oracle_trials": self.oracle_trials,
            "checks": [r.to_dict(self.timings) for r in self.reports],
            "summary": {"total": len(self.reports), "pass": c[V.PASS], "fail": c[V.FAIL], "skip": c[V.SKIP]},
        }


def _target(entry: PlanEntry, custom: Mapping[str, Theory]):
    if entry.check in V.THEORY_CHECKS:
        return custom.get(entry.target) or builtin_theory(entry.target)
    return builtin_package(entry.target)


def run_entry(entry: PlanEntry, custom: Mapping[str, Theory], flags: V.Flags, seed: int,
              oracle_trials: int) -> V.CheckReport:
    """Run one entry; errors become FAIL reports rather than aborting the run."""
    start = time.perf_counter()
    try:
        target = _target(entry, custom)
        if entry.check == "kernel":
            rep = V.check_kernel(target, flags, entry.pre_morphism)
        else:
            fn = V.THEORY_CHECKS.get(entry.check) or V.PACKAGE_CHECKS[entry.check]
            rep = fn(target, flags)
        if oracle_trials and rep.identities:
            bad = V.oracle_agrees(rep, oracle_trials, seed)
            note = f"oracle: {len(rep.identities) - len(bad)}/{len(rep.identities)} identities agree " \
                   f"at {oracle_trials} points"
            rep.details = rep.details + (note,) + tuple(bad)
            if bad:
                rep.status = V.FAIL
                rep.residual = "\n".join(filter(None, [rep.residual, *bad]))
    except Exception as exc:  # a broken check must not abort the run
        cid = f"{entry.check}/{entry.target}"
        rep = V.CheckReport(cid, V.FAIL, f"error: {type(exc).__name__}: {exc}", time.perf_counter() - start, flags)
    return replace(rep, identities=())


_ACTIVE: tuple | None = None


def _worker(i: int) -> V.CheckReport:
    plan, flags, seed, trials = _ACTIVE  # type: ignore[misc]
    return run_entry(plan.entries[i], plan.theories, flags, seed, trials)


def run_plan(plan: Plan, jobs: int = 1, seed: int = 0, flags: V.Flags = V.DEFAULT_FLAGS,
             oracle_trials: int = 0, timings: bool = False) -> ReportDocument:
    """Execute every entry (in parallel up to ``jobs``); results keep plan order."""
    global _ACTIVE
    n = len(plan.entries)
    if jobs > 1 and n > 1:
        _ACTIVE = (plan, flags, seed, oracle_trials)
        try:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(jobs, n), mp_context=ctx) as pool:
                reports = list(pool.map(_worker, range(n)))
        finally:
            _ACTIVE = None
    else:
        reports = [run_entry(e, plan.theories, flags, seed, oracle_trials) for e in plan.entries]
    return ReportDocument(plan.name, flags, seed, reports, oracle_trials, timings)


def emit_report(doc: ReportDocument, fmt: str = "json") -> bytes:
    if fmt == "json":
        return (json.dumps(doc.to_dict(), indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt}")
    f = doc.flags.as_dict()
    lines = [f"laxcheck {doc.plan}: dt-sign {f['dt_sign']:+d}, d-parity {f['d_parity']}, "
             f"epsilon-s {f['epsilon_s']}, seed {doc.seed}"]
    for r in doc.reports:
        t = f"  ({r.elapsed:.3f}s)" if doc.timings else ""
        lines.append(f"{r.status:4}  {r.check_id}{t}")
        for d in r.details:
            lines.append(f"      {d}")
        if r.status == V.FAIL:
            for res in r.residual.splitlines():
                lines.append(f"      residual {res}")
    c = doc.counts
    lines.append(f"{len(doc.reports)} checks: {c[V.PASS]} pass, {c[V.FAIL]} fail, {c[V.SKIP]} skip")
    return ("\n".join(lines) + "\n").encode("utf-8")
