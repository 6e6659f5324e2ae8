"""The verification suite.

Every check reduces a claimed identity to an exact zero test and returns a
:class:`CheckReport`.  Coordinate theories are decided by ``is_zero``; the
Yang-Mills pair is decided by replaying shipped proof scripts, one verdict
per convention case (d mod 2, ε_s).
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from importlib import resources
from itertools import combinations
from math import isqrt
from typing import Callable, Iterable, Mapping, Sequence, Union

from . import ncdga as nc
from .gca import (
    DT,
    U,
    ZERO,
    Atom,
    Expr,
    GcaError,
    A,
    C,
    Kind,
    definition,
    esum,
    expand_definitions,
    expr_str,
    gmul,
    is_zero,
    jet,
    mono_atoms,
    mono_parity,
    var,
)
from .theories import EquivalencePackage, Theory, builtin_package, builtin_theory
from .varcalc import (
    Derivation,
    EvolutionaryVF,
    GammaData,
    Morphism,
    _power,
    compose,
    contract,
    euler_operator,
    gamma_action,
    horizontal_d,
    lie_derivative,
    s_derivative,
    s_limit,
    strip_dt,
    total_derivative,
    vertical_delta,
)

AnyTheory = Union[Theory, nc.NCTheory]
AnyPackage = Union[EquivalencePackage, nc.NCPackage]

PASS, FAIL, SKIP = "PASS", "FAIL", "SKIP"
RESIDUAL_LIMIT = 4000


class VerifyError(GcaError):
    """A check could not be set up."""


class NonEliminable(VerifyError):
    """Graded elimination stopped with nonzero entries and no admissible pivot."""


class SampleRejected(VerifyError):
    """The numeric oracle could not draw a sample meeting the invertibility assumptions."""


class OracleUnsupported(VerifyError):
    """The identity contains an atom the numeric oracle cannot evaluate."""


# ---------------------------------------------------------------------------
# reports


@dataclass(frozen=True)
class Flags:
    """Convention flags.  ``None`` for d parity or ε_s means every case."""

    dt_sign: int = 1
    d_parity: int | None = None
    epsilon_s: int | None = None

    def components(self) -> list[tuple[int, int]]:
        return [(dp, e) for dp, e in nc.COMPONENTS
                if (self.d_parity is None or dp == self.d_parity % 2)
                and (self.epsilon_s is None or e == self.epsilon_s)]

    def as_dict(self) -> dict[str, object]:
        return {
            "dt_sign": self.dt_sign,
            "d_parity": "all" if self.d_parity is None else self.d_parity % 2,
            "epsilon_s": "all" if self.epsilon_s is None else self.epsilon_s,
        }


DEFAULT_FLAGS = Flags()


@dataclass
class CheckReport:
    check_id: str
    status: str
    residual: str = ""
    elapsed: float = 0.0
    flags: Flags = DEFAULT_FLAGS
    details: tuple[str, ...] = ()
    identities: tuple[tuple[str, Expr], ...] = field(default=(), repr=False, compare=False)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self, timings: bool = False) -> dict[str, object]:
        out: dict[str, object] = {
            "id": self.check_id,
            "status": self.status,
            "residual": self.residual,
            "flags": self.flags.as_dict(),
            "details": list(self.details),
        }
        if timings:
            out["elapsed"] = round(self.elapsed, 6)
        return out


def render(x: Expr | nc.NCExpr | nc.NCOpen) -> str:
    """Canonical residual text (definitions expanded for coordinate expressions)."""
    s = expr_str(expand_definitions(x)) if isinstance(x, Expr) else str(x)
    if len(s) > RESIDUAL_LIMIT:
        s = s[:RESIDUAL_LIMIT] + f" … ({len(s)} chars)"
    return s


class _Recorder:
    """Collects labelled zero tests for one check."""

    def __init__(self, check_id: str, flags: Flags):
        self.check_id = check_id
        self.flags = flags
        self.failures: list[str] = []
        self.details: list[str] = []
        self.identities: list[tuple[str, Expr]] = []
        self.start = time.perf_counter()

    def zero(self, label: str, x: Expr) -> bool:
        self.identities.append((label, x))
        if is_zero(x):
            return True
        self.failures.append(f"{label}: {render(x)}")
        return False

    def nc_zero(self, label: str, lhs, rhs, script: nc.ProofScript) -> bool:
        rep = nc.nc_check_script((lhs, rhs), script)
        comps = self.flags.components()
        bad = [c for c in comps if not rep.passed(*c)]
        if not bad:
            return True
        if not rep.degree_consistent:
            self.failures.append(f"{label}: degree-inconsistent residual {rep.residual}")
        else:
            shown = "; ".join(f"(d≡{dp}, ε={e:+d}) {rep.residual.component(dp, e)}" for dp, e in bad)
            self.failures.append(f"{label}: {shown}")
        return False

    def fail(self, label: str, message: str) -> None:
        self.failures.append(f"{label}: {message}")

    def note(self, text: str) -> None:
        self.details.append(text)

    def report(self) -> CheckReport:
        status = FAIL if self.failures else PASS
        return CheckReport(self.check_id, status, "\n".join(self.failures), time.perf_counter() - self.start,
                           self.flags, tuple(self.details), tuple(self.identities))


def skip(check_id: str, reason: str, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    return CheckReport(check_id, SKIP, "", 0.0, flags, (reason,))


def _guard(rec: _Recorder, label: str, fn: Callable[[], None]) -> None:
    try:
        fn()
    except GcaError as exc:
        rec.fail(label, f"{type(exc).__name__}: {exc}")


# ---------------------------------------------------------------------------
# proof scripts for the trace-word sector


def parse_scripts(text: str) -> dict[str, nc.ProofScript]:
    """Read ``(script NAME (goal ID) (step RULE TERM POS) ...)`` forms, keyed by goal id."""
    from .sexpr import NOSPAN, Num, SexpError, SList, Sym, read_all

    out: dict[str, nc.ProofScript] = {}
    for form in read_all(text):
        if not isinstance(form, SList) or form.head() != "script" or len(form.items) < 3:
            raise SexpError("expected (script NAME (goal ID) (step ...) ...)", getattr(form, "span", NOSPAN))
        name = form.items[1]
        goal = form.items[2]
        if not isinstance(name, Sym) or not (isinstance(goal, SList) and goal.head() == "goal"
                                             and len(goal.items) == 2 and isinstance(goal.items[1], Sym)):
            raise SexpError("malformed script header", form.span)
        steps = []
        for st in form.items[3:]:
            if not (isinstance(st, SList) and st.head() == "step" and len(st.items) == 4):
                raise SexpError("expected (step RULE TERM POS)", st.span)
            rule = st.items[1]
            if not isinstance(rule, Sym) or rule.name not in nc.RULES:
                raise SexpError(f"unknown rule {getattr(rule, 'name', rule)}", st.span)
            addr = []
            for a in st.items[2:]:
                if isinstance(a, Sym) and a.name == "*":
                    addr.append("*")
                elif isinstance(a, Num) and a.value.denominator == 1 and a.value >= 0:
                    addr.append(int(a.value))
                else:
                    raise SexpError("step address must be * or a non-negative integer", a.span)
            steps.append(nc.ScriptStep(rule.name, addr[0], addr[1]))
        out[goal.items[1].name] = nc.ProofScript(name.name, goal.items[1].name, tuple(steps))
    return out


def print_script(s: nc.ProofScript) -> str:
    steps = "".join(f"\n  (step {st.rule} {st.term} {st.position})" for st in s.steps)
    return f"(script {s.name} (goal {s.goal}){steps})"


@lru_cache(maxsize=None)
def shipped_scripts() -> dict[str, nc.ProofScript]:
    text = resources.files("laxcheck").joinpath("data/ym_scripts.lax").read_text(encoding="utf-8")
    return parse_scripts(text)


def script_for(goal: str) -> nc.ProofScript:
    try:
        return shipped_scripts()[goal]
    except KeyError:
        raise VerifyError(f"no shipped proof script for goal {goal}") from None


# ---------------------------------------------------------------------------
# convention helpers


def _orient(x: Expr, flags: Flags) -> Expr:
    """Under dt sign −1 a printed codim-0 density Y·dt is read as dt·Y."""
    if flags.dt_sign == 1 or not x.terms or not any(DT in m[1] for m in x.terms):
        return x
    return gmul(A(DT), strip_dt(x))


def _comp(seq: Sequence, k: int, zero):
    return seq[k] if k < len(seq) else zero


def _theta(t: Theory, k: int, flags: Flags) -> Expr:
    return _orient(t.theta_k(k), flags)


def _lag(t: Theory, k: int, flags: Flags) -> Expr:
    return _orient(t.L_k(k), flags)


def generators(t: Theory) -> list[tuple[str, Expr]]:
    return [(f.name, A(jet(f.name, 0, f.gh))) for f in t.fields]


def resolve_theory(name: str | AnyTheory) -> AnyTheory:
    return builtin_theory(name) if isinstance(name, str) else name


def resolve_package(name: str | AnyPackage) -> AnyPackage:
    return builtin_package(name) if isinstance(name, str) else name


# ---------------------------------------------------------------------------
# lax axioms


def check_lax_axioms(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """Structure equations per codimension, Q² = 0 and the two consequence identities."""
    t = resolve_theory(t)
    rec = _Recorder(f"lax-axioms/{t.name}", flags)
    if isinstance(t, nc.NCTheory):
        _nc_lax(t, rec)
    else:
        _guard(rec, "lax", lambda: _coord_lax(t, rec, flags))
    return rec.report()


def _coord_lax(t: Theory, rec: _Recorder, flags: Flags) -> None:
    Q = t.vf()
    K = t.codims()
    for k in range(K + 1):
        th, th1 = _theta(t, k, flags), _theta(t, k + 1, flags)
        Lk, L1 = _lag(t, k, flags), _lag(t, k + 1, flags)
        w, w1 = vertical_delta(th), vertical_delta(th1)
        iw = contract(Q, w)
        rec.zero(f"ι_Qϖ^{k} = δL^{k} + dθ^{k + 1}", iw - vertical_delta(Lk) - horizontal_d(th1))
        rec.zero(f"ι_Qι_Qϖ^{k} = 2dL^{k + 1}", contract(Q, iw) - horizontal_d(L1).scale(2))
        rec.zero(f"L_Qϖ^{k} = dϖ^{k + 1}", lie_derivative(Q, w) - horizontal_d(w1))
        rec.zero(f"L_QL^{k} = d(2L^{k + 1} − ι_Qθ^{k + 1})",
                 lie_derivative(Q, Lk) - horizontal_d(L1.scale(2) - contract(Q, th1)))
    for name, x in generators(t):
        rec.zero(f"Q²{name} = 0", Q(Q(x)))


def _nc_lax(t: nc.NCTheory, rec: _Recorder) -> None:
    script = script_for("lax-axioms")
    Q, iQ = t.vf(), t.iota_Q()
    K = t.codims()
    for k in range(K + 1):
        th, th1 = t.theta_k(k), t.theta_k(k + 1)
        Lk, L1 = t.L_k(k), t.L_k(k + 1)
        w, w1 = nc.tr_delta(th), nc.tr_delta(th1)
        iw = nc.tr_apply(iQ, w)
        rec.nc_zero(f"ι_Qϖ^{k} = δL^{k} + dθ^{k + 1}", iw, nc.tr_delta(Lk) + nc.tr_d(th1), script)
        rec.nc_zero(f"ι_Qι_Qϖ^{k} = 2dL^{k + 1}", nc.tr_apply(iQ, iw), nc.tr_d(L1).scale(2), script)
        # δϖ = 0, so L_Qϖ = −δι_Qϖ; this keeps Q off δ-letters
        rec.nc_zero(f"L_Qϖ^{k} = dϖ^{k + 1}", nc.tr_delta(iw).scale(-1), nc.tr_d(w1), script)
        rec.nc_zero(f"L_QL^{k} = d(2L^{k + 1} − ι_Qθ^{k + 1})", nc.tr_apply(Q, Lk),
                    nc.tr_d(L1.scale(2) - nc.tr_apply(iQ, th1)), script)
    qscript = script_for("q-squared")
    for f in t.fields:
        x = nc.L(f)
        rec.nc_zero(f"Q²{f} = 0", Q(Q(x)), nc.OZERO, qscript)


# ---------------------------------------------------------------------------
# codimension-k Lagrangians from θ


def euler_vf(t: Theory) -> EvolutionaryVF:
    """The grading vector field E with E(φ) = gh(φ)·φ."""
    return EvolutionaryVF({f.name: A(jet(f.name, 0, f.gh)).scale(f.gh) for f in t.fields if f.gh}, 0, "E")


def compute_codim_L(t: str | AnyTheory, k: int) -> Expr | nc.NCExpr:
    """L^k = (1/k) ι_E(ι_Q δθ^k − dθ^{k+1}) for k ≥ 1."""
    if k < 1:
        raise ValueError("the formula holds in codimension k ≥ 1")
    t = resolve_theory(t)
    if isinstance(t, nc.NCTheory):
        inner = nc.tr_apply(t.iota_Q(), nc.tr_delta(t.theta_k(k))) - nc.tr_d(t.theta_k(k + 1))
        return nc.tr_apply(nc.euler_contraction(), inner).scale(Fraction(1, k))
    Q = t.vf()
    inner = contract(Q, vertical_delta(t.theta_k(k))) - horizontal_d(t.theta_k(k + 1))
    return contract(euler_vf(t), inner).scale(Fraction(1, k))


def check_codim_L(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    t = resolve_theory(t)
    rec = _Recorder(f"codim-L/{t.name}", flags)
    K = t.codims()
    for k in range(1, K + 1):
        got = compute_codim_L(t, k)
        if isinstance(t, nc.NCTheory):
            rec.nc_zero(f"L^{k} from θ", got, t.L_k(k), script_for("codim-L"))
        else:
            rec.zero(f"L^{k} from θ", got - t.L_k(k))
    return rec.report()


# ---------------------------------------------------------------------------
# Q = γ + δ_KT


def antifield_number(m, t: Theory) -> int:
    n = 0
    for a in mono_atoms(m):
        if a.kind in (Kind.JET, Kind.VAR):
            try:
                d = t.decl(a.name)
            except KeyError:
                continue
            if d.is_antifield:
                n -= d.gh
    return n


def koszul_tate(t: Theory, f: str) -> Expr:
    """δ_KT on an antifield: Euler derivative of the matching antifield-number part of L⁰."""
    d = t.decl(f)
    if not d.is_antifield:
        return ZERO
    want = -d.gh - 1
    L0 = t.L_k(0)
    part = Expr({m: c for m, c in L0.terms.items() if antifield_number(m, t) == want})
    partner = t.decl(d.partner)
    return euler_operator(part, partner.name, partner.gh)


def check_Q_decomposition(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    t = resolve_theory(t)
    cid = f"Q-decomposition/{t.name}"
    if isinstance(t, nc.NCTheory):
        return skip(cid, "no reparametrization data in the trace-word sector", flags)
    rec = _Recorder(cid, flags)
    data = t.gamma_data()
    Q = t.vf()

    def run() -> None:
        for name, x in generators(t):
            g = gamma_action(x, data) if data is not None else ZERO
            kt = koszul_tate(t, name)
            rec.zero(f"Q{name} = γ{name} + δ_KT{name}", Q(x) - g - kt)
            if t.koszul is not None and name in t.koszul:
                rec.zero(f"δ_KT{name} table", t.koszul[name] - kt)

    _guard(rec, "decomposition", run)
    return rec.report()


def check_tensor_calculus(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """Both computations of γ agree on the generators, their first jets and on L⁰."""
    t = resolve_theory(t)
    cid = f"gamma-paths/{t.name}"
    if isinstance(t, nc.NCTheory) or t.gamma_data() is None:
        return skip(cid, "no reparametrization data", flags)
    rec = _Recorder(cid, flags)
    data = t.gamma_data()

    def run() -> None:
        for f in t.fields:
            for k in (0, 1, 2):
                x = A(jet(f.name, k, f.gh))
                rec.zero(f"γ{x} paths", data.table(x) - data.shortcut()(x))
        L0 = strip_dt(t.L_k(0))
        rec.zero("γL⁰ paths", data.table(L0) - data.shortcut()(L0))

    _guard(rec, "gamma", run)
    return rec.report()


# ---------------------------------------------------------------------------
# equivalence packages


def _direction(pkg, direction: str):
    if direction not in ("phi", "psi"):
        raise VerifyError(f"direction must be phi or psi, not {direction}")
    if direction == "phi":
        return pkg.phi, pkg.theory1, pkg.theory2
    return pkg.psi, pkg.theory2, pkg.theory1


def check_chain_map(pkg: str | AnyPackage, direction: str = "phi", flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """m(Q_src x) = Q_tgt(m x) on every generator x of the source theory."""
    pkg = resolve_package(pkg)
    m, src, tgt = _direction(pkg, direction)
    rec = _Recorder(f"chain-map/{pkg.name}/{direction}", flags)
    if isinstance(pkg, nc.NCPackage):
        script = script_for("chain-map")
        Qs, Qt = src.vf(), tgt.vf()
        for f in src.fields:
            x = nc.L(f)
            rec.nc_zero(f"{m.name}Q{f} = Q{m.name}{f}", m.open(Qs(x)), Qt(m.open(x)), script)
    else:
        _guard(rec, "chain", lambda: chain_map_residuals(m, src, tgt, rec))
    return rec.report()


def chain_map_residuals(m: Morphism, src: Theory, tgt: Theory, rec: _Recorder) -> None:
    Qs, Qt = src.vf(), tgt.vf()
    for name, x in generators(src):
        rec.zero(f"{m.name}Q{name} = Q{m.name}{name}", m(Qs(x)) - Qt(m(x)))


def check_transform(pkg: str | AnyPackage, direction: str = "phi", flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """m*θ^k = θ^k + L_Qβ^k − dβ^{k+1} + δf^k and m*L^k = L^k + L_Qζ^k − dζ^{k+1} + df^{k+1}, ζ = ι_Qβ."""
    pkg = resolve_package(pkg)
    m, src, tgt = _direction(pkg, direction)
    rec = _Recorder(f"transform/{pkg.name}/{direction}", flags)
    if direction == "phi":
        beta, ff = pkg.beta2, pkg.f2
    else:
        beta, ff = pkg.beta1, pkg.f1
    if isinstance(pkg, nc.NCPackage):
        _nc_transform(m, src, tgt, beta, ff, rec)
    else:
        _guard(rec, "transform", lambda: _coord_transform(m, src, tgt, beta, ff, rec, flags))
    return rec.report()


def _coord_transform(m: Morphism, src: Theory, tgt: Theory, beta, ff, rec: _Recorder, flags: Flags) -> None:
    Q = tgt.vf()
    beta = [_orient(b, flags) for b in beta]
    ff = [_orient(x, flags) for x in ff]
    zeta = [contract(Q, b) for b in beta]
    K = max(src.codims(), tgt.codims(), len(beta))
    for k in range(K + 1):
        b, b1 = _comp(beta, k, ZERO), _comp(beta, k + 1, ZERO)
        z, z1 = _comp(zeta, k, ZERO), _comp(zeta, k + 1, ZERO)
        f, f1 = _comp(ff, k, ZERO), _comp(ff, k + 1, ZERO)
        rec.zero(f"Δθ^{k}", m(_theta(src, k, flags)) - _theta(tgt, k, flags) - lie_derivative(Q, b)
                 + horizontal_d(b1) - vertical_delta(f))
        rec.zero(f"ΔL^{k}", m(_lag(src, k, flags)) - _lag(tgt, k, flags) - lie_derivative(Q, z)
                 + horizontal_d(z1) - horizontal_d(f1))


def _nc_transform(m: nc.NCMorphism, src: nc.NCTheory, tgt: nc.NCTheory, beta, ff, rec: _Recorder) -> None:
    script = script_for("transform")
    Q, iQ = tgt.vf(), tgt.iota_Q()
    zeta = [nc.tr_apply(iQ, b) for b in beta]
    K = max(src.codims(), tgt.codims(), len(beta))
    Z = nc.NCZERO
    for k in range(K + 1):
        b, b1 = _comp(beta, k, Z), _comp(beta, k + 1, Z)
        z, z1 = _comp(zeta, k, Z), _comp(zeta, k + 1, Z)
        f, f1 = _comp(ff, k, Z), _comp(ff, k + 1, Z)
        rec.nc_zero(f"Δθ^{k}", m(src.theta_k(k)),
                    tgt.theta_k(k) + nc.tr_apply(Q, b) - nc.tr_d(b1) + nc.tr_delta(f), script)
        rec.nc_zero(f"ΔL^{k}", m(src.L_k(k)),
                    tgt.L_k(k) + nc.tr_apply(Q, z) - nc.tr_d(z1) + nc.tr_d(f1), script)


def check_classical_reduction(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS,
                              solution: Mapping[str, Expr] | None = None) -> CheckReport:
    """L⁰₁ on the partial solution (antifields and ghosts set to 0) equals the classical pullback of L⁰₂."""
    pkg = resolve_package(pkg)
    cid = f"classical-reduction/{pkg.name}"
    if pkg.classical is None:
        return skip(cid, "no classical solution shipped", flags)
    rec = _Recorder(cid, flags)
    if isinstance(pkg, nc.NCPackage):
        sub = nc.NCMorphism(dict(solution or pkg.classical), "sol")
        kill2 = nc.NCMorphism({f: nc.OZERO for f in pkg.theory2.fields if nc.BASES[f][1] != 0}, "cl")
        rec.nc_zero("L⁰₁|sol = L⁰₂|cl", sub(pkg.theory1.L_k(0)), kill2(pkg.theory2.L_k(0)),
                    script_for("classical-reduction"))
        return rec.report()
    t1, t2 = pkg.theory1, pkg.theory2
    images: dict[str, Expr] = {f.name: ZERO for f in t1.fields if f.gh != 0}
    images.update(solution or pkg.classical)
    sub = Morphism(images, name="sol", identity=True)
    cl_images = {f.name: ZERO for f in t2.fields if f.gh != 0}
    cl_images.update(pkg.classical_map.images if pkg.classical_map else {})
    cl = Morphism(cl_images, name="φcl", identity=pkg.classical_map is None)

    def run() -> None:
        rec.zero("L⁰₁|sol = φcl*L⁰₂", sub(t1.L_k(0)) - cl(t2.L_k(0)))

    _guard(rec, "classical", run)
    return rec.report()


def homotopy_D(pkg: EquivalencePackage) -> dict[str, Expr]:
    """D = [Q, R] on the generators of theory 1."""
    Q, R = pkg.theory1.vf(), pkg.R_vf()
    return {name: Q(R(x)) + R(Q(x)) for name, x in generators(pkg.theory1)}


def check_commutator_D(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """[D, Q] = 0 with D = [Q, R]; with reparametrization data also [R, γ] = 0 and D = [R, δ_KT]."""
    pkg = resolve_package(pkg)
    rec = _Recorder(f"commutator-D/{pkg.name}", flags)
    if isinstance(pkg, nc.NCPackage):
        script = script_for("commutator-D")
        Q, R = pkg.theory1.vf(), pkg.R_vf()
        Dt = {f: nc.open_normal(Q(R(nc.L(f))) + R(Q(nc.L(f)))) for f in pkg.theory1.fields}
        D = nc.vector_field("D", 0, Dt)
        for f in pkg.theory1.fields:
            x = nc.L(f)
            rec.note(f"D{f} = {Dt[f]}")
            rec.nc_zero(f"[D,Q]{f}", D(Q(x)), Q(D(x)), script)
        return rec.report()

    def run() -> None:
        t1 = pkg.theory1
        Q, R = t1.vf(), pkg.R_vf()
        Dt = homotopy_D(pkg)
        D = EvolutionaryVF(Dt, 0, "D")
        for name, x in generators(t1):
            rec.note(f"D{name} = {expr_str(Dt[name])}")
            rec.zero(f"[D,Q]{name}", D(Q(x)) - Q(D(x)))
        if t1.gamma is not None and t1.koszul is not None:
            gam = EvolutionaryVF(dict(t1.gamma), 1, "γ")
            kt = EvolutionaryVF(dict(t1.koszul), 1, "δKT")
            for name, x in generators(t1):
                rec.zero(f"[R,γ]{name}", R(gam(x)) + gam(R(x)))
                rec.zero(f"D{name} = [R,δKT]{name}", Dt[name] - R(kt(x)) - kt(R(x)))

    _guard(rec, "commutator", run)
    return rec.report()


def check_flow(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """Per generator: χ_s at s = 0 is the identity, ∂_sχ_s = χ_s∘D, χ_∞ = χ and χ_s commutes with Q."""
    pkg = resolve_package(pkg)
    rec = _Recorder(f"flow/{pkg.name}", flags)
    if isinstance(pkg, nc.NCPackage):
        _nc_flow(pkg, rec)
        return rec.report()
    t1 = pkg.theory1
    Q, R = t1.vf(), pkg.R_vf()
    chis = pkg.flow_morphism()
    for name, x in generators(t1):
        def run(name: str = name, x: Expr = x) -> None:
            D = Q(R(x)) + R(Q(x))
            fx = chis(x)
            rec.zero(f"(a) χ_0{name} = {name}", s_limit(fx, "0") - x)
            rec.zero(f"(b) ∂_sχ_s{name} = χ_s D{name}", s_derivative(fx) - chis(D))
            rec.zero(f"(c) χ_∞{name} = χ{name}", s_limit(fx, "inf") - pkg.chi.get(name, x))
            rec.zero(f"(d) χ_sQ{name} = Qχ_s{name}", chis(Q(x)) - Q(fx))

        _guard(rec, f"flow {name}", run)
    return rec.report()


def _nc_flow(pkg: nc.NCPackage, rec: _Recorder) -> None:
    script = script_for("flow")
    Q, R = pkg.theory1.vf(), pkg.R_vf()
    chis = pkg.flow_morphism()
    for f in pkg.theory1.fields:
        x = nc.L(f)
        D = Q(R(x)) + R(Q(x))
        fx = chis.open(x)
        rec.nc_zero(f"(a) χ_0{f} = {f}", nc.o_s_limit(fx, "0"), x, script)
        rec.nc_zero(f"(b) ∂_sχ_s{f} = χ_s D{f}", nc.o_s_derivative(fx), chis.open(D), script)
        rec.nc_zero(f"(c) χ_∞{f} = χ{f}", nc.o_s_limit(fx, "inf"), pkg.chi.get(f, x), script)
        rec.nc_zero(f"(d) χ_sQ{f} = Qχ_s{f}", chis.open(Q(x)), Q(fx), script)


def check_hchi(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """h_χ from shipped antiderivatives: ∂_sA = χ_s(Rφ) and A(∞) − A(0) = h_χφ."""
    pkg = resolve_package(pkg)
    rec = _Recorder(f"hchi/{pkg.name}", flags)
    if isinstance(pkg, nc.NCPackage):
        script = script_for("hchi")
        R, chis = pkg.R_vf(), pkg.flow_morphism()
        for f in pkg.theory1.fields:
            x = nc.L(f)
            Rx = nc.open_normal(R(x))
            h = pkg.hchi.get(f, nc.OZERO)
            if Rx.is_zero():
                rec.nc_zero(f"h_χ{f} = 0", h, nc.OZERO, script)
                continue
            anti = pkg.antiderivatives[f]
            rec.nc_zero(f"∂_sA_{f} = χ_sR{f}", nc.o_s_derivative(anti), chis.open(Rx), script)
            rec.nc_zero(f"A_{f}(∞) − A_{f}(0) = h_χ{f}", nc.o_s_limit(anti, "inf") - nc.o_s_limit(anti, "0"), h,
                        script)
        return rec.report()
    R, chis = pkg.R_vf(), pkg.flow_morphism()
    for name, x in generators(pkg.theory1):
        def run(name: str = name, x: Expr = x) -> None:
            Rx = R(x)
            h = pkg.hchi.get(name, ZERO)
            if Rx.is_zero():
                rec.zero(f"h_χ{name} = 0", h)
                return
            anti = pkg.antiderivatives.get(name)
            if anti is None:
                rec.fail(name, "no antiderivative shipped")
                return
            rec.zero(f"∂_sA_{name} = χ_sR{name}", s_derivative(anti) - chis(Rx))
            rec.zero(f"A_{name}(∞) − A_{name}(0) = h_χ{name}", s_limit(anti, "inf") - s_limit(anti, "0") - h)
            rec.note(f"h_χ{name} = {expr_str(h)}")

        _guard(rec, f"hchi {name}", run)
    return rec.report()


def check_composition(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """λ* = φ*∘ψ* is the identity and ψ*∘φ* equals the declared χ*."""
    pkg = resolve_package(pkg)
    rec = _Recorder(f"composition/{pkg.name}", flags)
    if isinstance(pkg, nc.NCPackage):
        script = script_for("composition")
        lam = nc.compose(pkg.psi, pkg.phi, "λ")
        chi = nc.compose(pkg.phi, pkg.psi, "χ")
        for f in pkg.theory2.fields:
            rec.nc_zero(f"λ{f} = {f}", lam.open(nc.L(f)), nc.L(f), script)
        for f in pkg.theory1.fields:
            rec.nc_zero(f"ψφ{f} = χ{f}", chi.open(nc.L(f)), pkg.chi.get(f, nc.L(f)), script)
        return rec.report()

    def run() -> None:
        lam = compose(pkg.psi, pkg.phi, "λ")
        chi = compose(pkg.phi, pkg.psi, "χ")
        for name, x in generators(pkg.theory2):
            rec.zero(f"λ{name} = {name}", lam(x) - x)
        for name, x in generators(pkg.theory1):
            rec.zero(f"ψφ{name} = χ{name}", chi(x) - pkg.chi.get(name, x))

    _guard(rec, "composition", run)
    return rec.report()


# ---------------------------------------------------------------------------
# descent and f-transformations


def check_descent(tower: Sequence[Expr], Q: EvolutionaryVF, name: str = "tower",
                  flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """L_Q O^k = dO^{k+1} for every level of the tower."""
    rec = _Recorder(f"descent/{name}", flags)
    for k in range(len(tower)):
        rec.zero(f"L_QO^{k} = dO^{k + 1}", lie_derivative(Q, tower[k]) - horizontal_d(_comp(tower, k + 1, ZERO)))
    return rec.report()


def check_theory_descent(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """The tower ϖ^k = δθ^k descends: L_Qϖ^k = dϖ^{k+1}."""
    t = resolve_theory(t)
    if isinstance(t, nc.NCTheory):
        return skip(f"descent/{t.name}", "covered by the lax-axioms scripts", flags)
    tower = [vertical_delta(_theta(t, k, flags)) for k in range(t.codims())]
    return check_descent(tower, t.vf(), t.name, flags)


def f_transform(t: Theory, f: Sequence[Expr]) -> Theory:
    """θ^k → θ^k + δf^k and L^k → L^k + df^{k+1}."""
    K = max(t.codims(), len(f))
    theta = tuple(t.theta_k(k) + vertical_delta(_comp(f, k, ZERO)) for k in range(K))
    lag = tuple(t.L_k(k) + horizontal_d(_comp(f, k + 1, ZERO)) for k in range(K))
    return t.with_data(name=f"{t.name}+f", theta=theta, L=lag)


def check_f_transform(t: str | Theory, f: Sequence[Expr], flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """Re-run the lax axioms on θ + δf, L + df."""
    t = resolve_theory(t)
    rep = check_lax_axioms(f_transform(t, f), flags)
    rep.check_id = f"f-transform/{t.name}"
    return rep


def check_package_f_transform(pkg: str | AnyPackage, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
    """f-transform each theory of a package by its shipped f."""
    pkg = resolve_package(pkg)
    cid = f"f-transform/{pkg.name}"
    if isinstance(pkg, nc.NCPackage):
        return skip(cid, "coordinate theories only", flags)
    start = time.perf_counter()
    parts = [check_f_transform(pkg.theory1, pkg.f1, flags), check_f_transform(pkg.theory2, pkg.f2, flags)]
    status = FAIL if any(p.status == FAIL for p in parts) else PASS
    residual = "\n".join(f"{p.check_id}: {p.residual}" for p in parts if p.residual)
    return CheckReport(cid, status, residual, time.perf_counter() - start, flags,
                       tuple(p.check_id for p in parts), sum((p.identities for p in parts), ()))


# ---------------------------------------------------------------------------
# pre-boundary kernel


@dataclass
class Pivot:
    row: str
    col: str
    entry: str
    condition: str | None

    @property
    def unconditional(self) -> bool:
        return self.condition is None


@dataclass
class KernelReport:
    theory: str
    basis: tuple[str, ...]
    matrix: tuple[tuple[str, ...], ...]
    pivots: tuple[Pivot, ...]
    generators: tuple[dict[str, str], ...]
    constant_rank: bool
    degeneracy: tuple[str, ...]
    non_eliminable: tuple[str, ...]
    higher_jets: tuple[str, ...]
    annihilates: bool
    pre_morphism: str | None = None
    form: Expr | None = field(default=None, repr=False)
    kernel_exprs: tuple[dict[Atom, Expr], ...] = field(default=(), repr=False)

    @property
    def rank(self) -> int:
        return len(self.pivots)

    def to_dict(self) -> dict[str, object]:
        return {
            "theory": self.theory,
            "pre_morphism": self.pre_morphism,
            "basis": list(self.basis),
            "matrix": [list(r) for r in self.matrix],
            "pivots": [{"row": p.row, "col": p.col, "entry": p.entry, "condition": p.condition}
                       for p in self.pivots],
            "rank": self.rank,
            "kernel": [dict(g) for g in self.generators],
            "constant_rank": self.constant_rank,
            "degeneracy": list(self.degeneracy),
            "non_eliminable": list(self.non_eliminable),
            "higher_jets": list(self.higher_jets),
            "annihilates": self.annihilates,
        }


def variation_partial(b: Atom) -> Derivation:
    """The coordinate vector field dual to the boundary variation ``b``."""

    def rule(a: Atom) -> Expr | None:
        if a.kind is Kind.VAR:
            return C(1) if a is b else ZERO
        if a.kind in (Kind.JET, Kind.DT, Kind.CONST, Kind.PARAM):
            return ZERO
        return None

    return Derivation(b.parity, rule, f"∂/∂{b}")


def _body_map(t: Theory) -> Morphism:
    return Morphism({f.name: ZERO for f in t.fields if f.gh != 0}, name="body", identity=True)


def _is_unit(x: Expr) -> bool:
    if len(x.terms) != 1:
        return False
    (m, _), = x.terms.items()
    return all(a.invertible for a in mono_atoms(m))


def _split_units(x: Expr) -> tuple[Expr, Expr]:
    """For a monomial: (invertible part with coefficient, remaining core)."""
    (m, c), = x.terms.items()
    unit = Expr.mono((tuple((a, e) for a, e in m[0] if a.invertible), m[1]), c)
    core = Expr.mono((tuple((a, e) for a, e in m[0] if not a.invertible), ()), 1)
    return unit, core


def _graded_inverse(p: Expr, body: Expr) -> Expr:
    """p⁻¹ = b⁻¹Σ(−N b⁻¹)ⁿ with b the body of p and N = p − b nilpotent."""
    if len(body.terms) == 1:
        unit, core = _split_units(body)
        binv = unit.inverse()
        if core != C(1):
            binv = gmul(binv, _power(core, -1, "pivot"))
    else:
        binv = _power(body, -1, "pivot")
    nil = p - body
    out, term = binv, binv
    for _ in range(64):
        term = -gmul(gmul(term, nil), binv)
        if is_zero(term):
            return out
        out = out + term
    raise VerifyError("nilpotent part of a pivot did not terminate")


def _condition_text(body: Expr) -> str:
    """Nonvanishing condition with invertible factors stripped from a monomial."""
    if len(body.terms) == 1:
        (m, _), = body.terms.items()
        keep = [(a, e) for a, e in m[0] if not a.invertible]
        core = Expr.mono((tuple(keep), m[1]), 1)
        return f"{expr_str(core)} ≠ 0"
    return f"{expr_str(body)} ≠ 0"


def preboundary_kernel(t: str | Theory, pre_morphism: Morphism | None = None, jet_order: int = 1,
                       morphism_name: str | None = None, strict: bool = False) -> KernelReport:
    """Kernel of ϖ¹ = δθ¹ over boundary variations by graded elimination.

    Pivots must have a nonzero ghost-number-zero body; a pivot whose body is
    not a monomial in invertible atoms is used under the recorded condition
    that the body does not vanish.
    """
    t = resolve_theory(t)
    if isinstance(t, nc.NCTheory):
        raise VerifyError("the kernel computation needs a coordinate theory")
    theta1 = t.theta_k(1)
    if pre_morphism is not None:
        theta1 = pre_morphism(theta1)
    w = vertical_delta(theta1)
    found = [a for m in w.terms for a in mono_atoms(m) if a.kind is Kind.VAR]
    higher = sorted({str(a) for a in found if a.order > jet_order})
    if higher and strict:
        raise NonEliminable(f"variations beyond jet order {jet_order}: {', '.join(higher)}")
    top = max([jet_order] + [a.order for a in found])
    basis = [var(f.name, k, f.gh) for f in t.fields for k in range(top + 1)]
    wpar = mono_parity(next(iter(w.terms))) if w.terms else 0
    partials = [variation_partial(b) for b in basis]
    wb = [p(w) for p in partials]
    K: list[list[Expr]] = []
    for i, b in enumerate(basis):
        row = []
        for j, a in enumerate(basis):
            s = -1 if a.parity and (wpar + b.parity + a.parity) % 2 else 1
            e = partials[j](wb[i]).scale(s)
            row.append(ZERO if is_zero(e) else e)
        K.append(row)
    matrix = tuple(tuple(expr_str(e) for e in row) for row in K)
    body = _body_map(t)
    rows, cols = list(range(len(basis))), list(range(len(basis)))
    steps: list[tuple[int, int, Expr, dict[int, Expr]]] = []
    pivots: list[Pivot] = []
    degeneracy: list[str] = []
    while True:
        best = None
        for b in rows:
            for a in cols:
                e = K[b][a]
                if not e.terms:
                    continue
                bd = body(e)
                if is_zero(bd):
                    continue
                rank_key = (0 if _is_unit(bd) else 1, len(e.terms), b, a)
                if best is None or rank_key < best[0]:
                    best = (rank_key, b, a, bd)
        if best is None:
            break
        (unit, _, _, _), b0, a0, bd = best
        p = K[b0][a0]
        pinv = _graded_inverse(p, bd)
        cond = None if unit == 0 else _condition_text(bd)
        if cond is not None and cond not in degeneracy:
            degeneracy.append(cond)
        pivots.append(Pivot(str(basis[b0]), str(basis[a0]), expr_str(p), cond))
        rows.remove(b0)
        cols.remove(a0)
        column = {b: K[b][a0] for b in rows}
        steps.append((b0, a0, pinv, column))
        for b in rows:
            if not column[b].terms:
                continue
            lead = gmul(column[b], pinv)
            for a in cols:
                if K[b0][a].terms:
                    e = K[b][a] - gmul(lead, K[b0][a])
                    K[b][a] = ZERO if is_zero(e) else e
    leftover = [(b, a) for b in rows for a in cols if K[b][a].terms]
    non_elim = tuple(f"{basis[b]}·{basis[a]}: {expr_str(K[b][a])}" for b, a in leftover)
    bad_rows = {b for b, _ in leftover}
    kernel: list[dict[Atom, Expr]] = []
    for free in rows:
        if free in bad_rows:
            continue
        x: dict[int, Expr] = {free: C(1)}
        for b0, a0, pinv, column in reversed(steps):
            acc = esum(gmul(x[b], column[b]) for b in column if b in x and column[b].terms)
            if acc.terms:
                x[b0] = -gmul(acc, pinv)
        kernel.append({basis[i]: v for i, v in sorted(x.items()) if v.terms})
    annihilates = all(is_zero(esum(gmul(v, wb[basis.index(b)]) for b, v in g.items())) for g in kernel)
    gens = tuple({str(b): expr_str(v) for b, v in g.items()} for g in kernel)
    const = not degeneracy and not non_elim
    return KernelReport(t.name, tuple(str(b) for b in basis), matrix, tuple(pivots), gens, const,
                        tuple(degeneracy), non_elim, tuple(higher), annihilates, morphism_name, w, tuple(kernel))


def kernel_pre_morphism(t: Theory, name: str) -> Morphism:
    """Named pre-morphisms: ``chi`` is the homotopy composite χ* of the package containing ``t``."""
    if name != "chi":
        raise VerifyError(f"unknown pre-morphism {name}")
    for pname in ("jac-gr", "cm", "cp"):
        pkg = builtin_package(pname)
        if pkg.theory1.name == t.name:
            return Morphism(dict(pkg.chi), name="χ", identity=True)
    raise VerifyError(f"no χ* available for {t.name}")


def check_kernel(t: str | AnyTheory, flags: Flags = DEFAULT_FLAGS, pre_morphism: str | None = None) -> CheckReport:
    """Run the kernel computation; PASS iff every reported generator annihilates ϖ¹."""
    t = resolve_theory(t)
    cid = f"kernel/{t.name}" + (f"/{pre_morphism}" if pre_morphism else "")
    if isinstance(t, nc.NCTheory):
        return skip(cid, "kernel computation runs on coordinate theories", flags)
    rec = _Recorder(cid, flags)

    def run() -> None:
        m = kernel_pre_morphism(t, pre_morphism) if pre_morphism else None
        rep = preboundary_kernel(t, m, morphism_name=pre_morphism)
        rec.note(f"rank {rep.rank}; constant rank: {'yes' if rep.constant_rank else 'no'}")
        for c in rep.degeneracy:
            rec.note(f"degeneracy: {c}")
        for c in rep.higher_jets:
            rec.note(f"higher jet: {c}")
        for c in rep.non_eliminable:
            rec.note(f"non-eliminable: {c[:200]}")
        for g in rep.kernel_exprs:
            rec.zero("ι_Gϖ¹ = 0", esum(gmul(v, variation_partial(b)(rep.form)) for b, v in g.items()))

    _guard(rec, "kernel", run)
    return rec.report()


# ---------------------------------------------------------------------------
# numeric oracle


class _Surd:
    """Exact element of Q(√a_1, …, √a_n) for fixed independent positive rationals a_i.

    Components are keyed by the set of radicals in the basis monomial.
    """

    __slots__ = ("rads", "c")

    def __init__(self, rads: tuple[Fraction, ...], c: dict[frozenset, Fraction]):
        self.rads = rads
        self.c = {k: v for k, v in c.items() if v}

    @classmethod
    def rational(cls, rads, q) -> "_Surd":
        return cls(rads, {frozenset(): Fraction(q)})

    def is_zero(self) -> bool:
        return not self.c

    def __add__(self, o: "_Surd") -> "_Surd":
        out = dict(self.c)
        for k, v in o.c.items():
            out[k] = out.get(k, 0) + v
        return _Surd(self.rads, out)

    def __neg__(self) -> "_Surd":
        return _Surd(self.rads, {k: -v for k, v in self.c.items()})

    def __mul__(self, o: "_Surd") -> "_Surd":
        out: dict[frozenset, Fraction] = {}
        for k1, v1 in self.c.items():
            for k2, v2 in o.c.items():
                v = v1 * v2
                for i in k1 & k2:
                    v *= self.rads[i]
                k = k1 ^ k2
                out[k] = out.get(k, 0) + v
        return _Surd(self.rads, out)

    def scale(self, q: Fraction) -> "_Surd":
        return _Surd(self.rads, {k: v * q for k, v in self.c.items()})

    def conj(self, i: int) -> "_Surd":
        return _Surd(self.rads, {k: (-v if i in k else v) for k, v in self.c.items()})

    def inverse(self) -> "_Surd":
        if not self.c:
            raise ZeroDivisionError("inverse of zero")
        present = set().union(*self.c)
        if not present:
            return _Surd.rational(self.rads, 1 / self.c[frozenset()])
        i = max(present)
        cj = self.conj(i)
        return cj * (self * cj).inverse()

    def __pow__(self, n: int) -> "_Surd":
        base = self if n >= 0 else self.inverse()
        out = _Surd.rational(self.rads, 1)
        for _ in range(abs(n)):
            out = out * base
        return out

    def as_rational(self) -> Fraction | None:
        if set(self.c) <= {frozenset()}:
            return self.c.get(frozenset(), Fraction(0))
        return None


def _is_square(q: Fraction) -> bool:
    n, d = q.numerator, q.denominator
    return n >= 0 and isqrt(n) ** 2 == n and isqrt(d) ** 2 == d


def _reachable(x: Expr) -> set[Atom]:
    seen: set[Atom] = set()
    stack = list(x.atoms())
    while stack:
        a = stack.pop()
        if a in seen:
            continue
        seen.add(a)
        if a.kind is Kind.DEF:
            stack.extend(definition(a).atoms())
        elif a.kind is Kind.RAD:
            stack.append(a.base)
        elif a.kind is Kind.FUN:
            stack.append(jet(a.base, 0, 0))
    return seen


def _is_formal(a: Atom) -> bool:
    return a.parity == 1 or a.kind in (Kind.VAR, Kind.DT)


class _Sample:
    """One random instantiation: fields are polynomials in t evaluated at t0."""

    DEGREE = 5

    def __init__(self, rng: random.Random, atoms: set[Atom]):
        self.rng = rng
        self.t0 = Fraction(rng.randint(-9, 9), rng.randint(1, 5))
        self.polys: dict[str, list[Fraction]] = {}
        self.funs: dict[str, list[Fraction]] = {}
        self.consts: dict[Atom, Fraction] = {}
        self.values: dict[Atom, _Surd] = {}
        radicands = sorted({a.base for a in atoms if a.kind is Kind.RAD}, key=lambda a: a.key)
        self.rad_index = {r: i for i, r in enumerate(radicands)}
        self.rads: tuple[Fraction, ...] = ()
        base_vals = []
        for r in radicands:
            v = self._scalar(r, base=True)
            q = v.as_rational()
            if q is None:
                raise OracleUnsupported(f"radicand {r} does not evaluate to a rational")
            if q <= 0:
                raise SampleRejected(f"radicand {r} is not positive")
            base_vals.append(q)
        for n in range(1, len(base_vals) + 1):
            for combo in combinations(base_vals, n):
                prod = Fraction(1)
                for q in combo:
                    prod *= q
                if _is_square(prod):
                    raise SampleRejected("radicands are not independent")
        self.rads = tuple(base_vals)
        self.values = {}
        for a in atoms:
            if a.invertible and not _is_formal(a) and a.kind is not Kind.PARAM and self.value(a).is_zero():
                raise SampleRejected(f"invertible atom {a} vanishes")

    def _poly(self, table: dict, key: str, positive: bool = False) -> list[Fraction]:
        p = table.get(key)
        if p is None:
            p = [Fraction(self.rng.randint(-6, 6), self.rng.randint(1, 4)) for _ in range(self.DEGREE + 1)]
            if positive:
                p[0] = Fraction(self.rng.randint(1, 9))
            table[key] = p
        return p

    @staticmethod
    def _deriv_at(p: list[Fraction], k: int, x: Fraction) -> Fraction:
        total = Fraction(0)
        for j in range(k, len(p)):
            coef = p[j]
            for r in range(k):
                coef *= j - r
            total += coef * x ** (j - k)
        return total

    def _scalar(self, a: Atom, base: bool = False) -> _Surd:
        rads = self.rads
        if a.kind is Kind.JET:
            return _Surd.rational(rads, self._deriv_at(self._poly(self.polys, a.name), a.order, self.t0))
        if a.kind is Kind.CONST:
            if a not in self.consts:
                self.consts[a] = Fraction(self.rng.randint(1, 12), self.rng.randint(1, 5))
            return _Surd.rational(rads, self.consts[a])
        if a.kind is Kind.PARAM:
            if a not in self.consts:
                self.consts[a] = Fraction(self.rng.randint(1, 9), 10)
            return _Surd.rational(rads, self.consts[a])
        if a.kind is Kind.FUN:
            x = self._deriv_at(self._poly(self.polys, a.base), 0, self.t0)
            return _Surd.rational(rads, self._deriv_at(self._poly(self.funs, a.name, positive=True), a.order, x))
        if a.kind is Kind.DEF:
            return self.evaluate_scalar(definition(a))
        if a.kind is Kind.RAD:
            i = self.rad_index[a.base]
            return _Surd(rads, {frozenset({i}): Fraction(1)})
        raise OracleUnsupported(f"cannot evaluate {a}")

    def value(self, a: Atom) -> _Surd:
        v = self.values.get(a)
        if v is None:
            v = self._scalar(a)
            self.values[a] = v
        return v

    def evaluate(self, x: Expr) -> dict[tuple, _Surd]:
        """Group by the formal (odd, variation, dt) part; each group gets an exact value."""
        out: dict[tuple, _Surd] = {}
        for (evens, odds), c in x.terms.items():
            val = _Surd.rational(self.rads, c)
            formal_evens = []
            for a, e in evens:
                if _is_formal(a):
                    formal_evens.append((a, e))
                else:
                    val = val * self.value(a) ** e
            key = (tuple(formal_evens), odds)
            cur = out.get(key)
            out[key] = val if cur is None else cur + val
        return out

    def evaluate_scalar(self, x: Expr) -> _Surd:
        groups = self.evaluate(x)
        if any(k != ((), ()) for k, v in groups.items() if not v.is_zero()):
            raise OracleUnsupported(f"definition {x} has a formal part")
        return groups.get(((), ()), _Surd.rational(self.rads, 0))


def numeric_oracle(identity: Expr, trials: int = 20, seed: int = 0, label: str = "identity",
                   max_retries: int = 200) -> CheckReport:
    """Evaluate ``identity`` at random exact points; PASS iff it vanishes at all of them.

    Even scalar atoms become values of random rational polynomials in t (or
    in the argument, for function atoms); odd atoms, variations and dt stay
    formal, so each formal monomial's coefficient must vanish separately.
    """
    rec = _Recorder(f"oracle/{label}", DEFAULT_FLAGS)
    atoms = _reachable(identity)
    rng = random.Random(seed)
    done = 0
    retries = 0
    while done < trials:
        try:
            s = _Sample(rng, atoms)
            groups = s.evaluate(identity)
        except (SampleRejected, ZeroDivisionError):
            retries += 1
            if retries > max_retries:
                raise SampleRejected(f"{label}: no admissible sample after {max_retries} retries") from None
            continue
        done += 1
        bad = [k for k, v in groups.items() if not v.is_zero()]
        if bad:
            rec.fail(f"t0={s.t0}", f"{len(bad)} nonzero formal coefficient(s)")
            break
    rec.note(f"{done} exact points, {retries} rejected samples")
    return rec.report()


def oracle_agrees(report: CheckReport, trials: int = 20, seed: int = 0) -> list[str]:
    """Labels of recorded identities where the oracle and is_zero disagree."""
    out = []
    for i, (label, x) in enumerate(report.identities):
        sym = is_zero(x)
        num = numeric_oracle(x, trials, seed + i, label).passed
        if sym != num:
            out.append(f"{report.check_id}: {label} (is_zero={sym}, oracle={num})")
    return out


# ---------------------------------------------------------------------------
# suites and the check registry

THEORY_CHECKS: dict[str, Callable[..., CheckReport]] = {
    "lax-axioms": check_lax_axioms,
    "codim-L": check_codim_L,
    "Q-decomposition": check_Q_decomposition,
    "gamma-paths": check_tensor_calculus,
    "kernel": check_kernel,
    "descent": check_theory_descent,
}


def _dir(fn: Callable[..., CheckReport], direction: str) -> Callable[..., CheckReport]:
    def run(pkg, flags: Flags = DEFAULT_FLAGS) -> CheckReport:
        return fn(pkg, direction, flags)

    return run


PACKAGE_CHECKS: dict[str, Callable[..., CheckReport]] = {
    "chain-map/phi": _dir(check_chain_map, "phi"),
    "chain-map/psi": _dir(check_chain_map, "psi"),
    "transform/phi": _dir(check_transform, "phi"),
    "transform/psi": _dir(check_transform, "psi"),
    "commutator-D": check_commutator_D,
    "flow": check_flow,
    "hchi": check_hchi,
    "composition": check_composition,
    "classical-reduction": check_classical_reduction,
    "f-transform": check_package_f_transform,
}

EQUIVALENCE_SUITE = ("chain-map/phi", "chain-map/psi", "transform/phi", "transform/psi", "commutator-D", "flow",
                     "hchi", "composition")
LAX_SUITE = ("lax-axioms", "codim-L", "Q-decomposition", "gamma-paths")
KERNEL_SUITE = ("kernel",)
