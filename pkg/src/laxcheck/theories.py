"""Built-in catalog of lax theories and equivalence packages.

Coordinate theories live on a one-dimensional source with ``dt`` written
to the right of codimension-0 densities.  The Yang-Mills pair is built in
:mod:`laxcheck.ncdga` and re-exported here.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Mapping, Sequence

from .gca import (
    DT,
    U,
    ZERO,
    Atom,
    Expr,
    GcaError,
    A,
    C,
    const,
    declare_invertible,
    define,
    esum,
    fun,
    gmul,
    jet,
    rad,
    var,
)
from .varcalc import (
    EvolutionaryVF,
    GammaData,
    Morphism,
    total_derivative,
)


class UnknownTheory(GcaError):
    """No built-in theory has the requested name."""


class UnknownPackage(GcaError):
    """No built-in equivalence package has the requested name."""


@dataclass(frozen=True)
class FieldDecl:
    """A generator: name, ghost number, tensor number and its dual field (for antifields)."""

    name: str
    gh: int
    tensor: Fraction | None = None
    partner: str | None = None
    invertible: bool = False

    @property
    def is_antifield(self) -> bool:
        return self.partner is not None


@dataclass(eq=False)
class Theory:
    """A lax theory on a one-dimensional source.

    ``theta[k]`` and ``L[k]`` are the codimension-k components; the
    codimension-0 components carry a right factor ``dt``.
    """

    name: str
    fields: tuple[FieldDecl, ...]
    Q: Mapping[str, Expr]
    theta: tuple[Expr, ...]
    L: tuple[Expr, ...]
    target_dim: int = 1
    dim_m: int = 1
    constants: tuple[str, ...] = ()
    ghost: str | None = None
    gamma: Mapping[str, Expr] | None = None
    koszul: Mapping[str, Expr] | None = None
    functions: tuple[tuple[str, str], ...] = ()
    _vf: EvolutionaryVF | None = field(default=None, repr=False)

    def decl(self, name: str) -> FieldDecl:
        for f in self.fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def field_gh(self) -> dict[str, int]:
        return {f.name: f.gh for f in self.fields}

    def tensors(self) -> dict[str, Fraction]:
        return {f.name: f.tensor for f in self.fields if f.tensor is not None}

    def generator(self, name: str, order: int = 0) -> Expr:
        return A(jet(name, order, self.decl(name).gh))

    def vf(self) -> EvolutionaryVF:
        if self._vf is None:
            self._vf = EvolutionaryVF(dict(self.Q), 1, "Q")
        return self._vf

    def gamma_data(self) -> GammaData | None:
        if self.gamma is None or self.ghost is None:
            return None
        return GammaData(EvolutionaryVF(dict(self.gamma), 1, "γ"), self.tensors(), self.ghost, self.field_gh())

    def codims(self) -> int:
        return max(len(self.theta), len(self.L))

    def theta_k(self, k: int) -> Expr:
        return self.theta[k] if k < len(self.theta) else ZERO

    def L_k(self, k: int) -> Expr:
        return self.L[k] if k < len(self.L) else ZERO

    def with_data(self, **changes) -> "Theory":
        changes.setdefault("_vf", None)
        return replace(self, **changes)

    def negate_term(self, slot: str, key: str | int, index: int) -> "Theory":
        """Flip the sign of one monomial (in canonical term order) of a Q image, θ or L component."""
        if slot == "Q":
            q = dict(self.Q)
            q[key] = _negate_term(q[key], index)
            return self.with_data(Q=q)
        if slot in ("theta", "L"):
            comps = list(getattr(self, slot))
            comps[int(key)] = _negate_term(comps[int(key)], index)
            return self.with_data(**{slot: tuple(comps)})
        raise ValueError(slot)


def _negate_term(e: Expr, index: int) -> Expr:
    terms = e.sorted_terms()
    m, c = terms[index]
    out = dict(e.terms)
    out[m] = -c
    return Expr(out)


@dataclass(eq=False)
class EquivalencePackage:
    """Data certifying that ``theory1`` and ``theory2`` are lax equivalent.

    ``phi`` pulls functions on ``theory1`` back to ``theory2`` and ``psi``
    the other way.  ``beta1``/``f1`` live on ``theory1`` (the ψ direction),
    ``beta2``/``f2`` on ``theory2``.  ``R`` is the homotopy vector field
    on ``theory1``; ``flow`` holds the closed forms of χ*_s with the flow
    parameter ``u = e^{-s}``.
    """

    name: str
    theory1: Theory
    theory2: Theory
    phi: Morphism
    psi: Morphism
    beta1: tuple[Expr, ...]
    f1: tuple[Expr, ...]
    beta2: tuple[Expr, ...]
    f2: tuple[Expr, ...]
    R: Mapping[str, Expr]
    flow: Mapping[str, Expr]
    chi: Mapping[str, Expr]
    hchi: Mapping[str, Expr]
    antiderivatives: Mapping[str, Expr]
    classical: Mapping[str, Expr] | None = None
    classical_map: Morphism | None = None
    notes: tuple[str, ...] = ()

    def R_vf(self) -> EvolutionaryVF:
        return EvolutionaryVF(dict(self.R), -1, "R")

    def flow_morphism(self) -> Morphism:
        return Morphism(dict(self.flow), name="χs", identity=True)

    def zeta1(self) -> tuple[Expr, ...]:
        from .varcalc import contract

        Q = self.theory1.vf()
        return tuple(contract(Q, b) for b in self.beta1)

    def zeta2(self) -> tuple[Expr, ...]:
        from .varcalc import contract

        Q = self.theory2.vf()
        return tuple(contract(Q, b) for b in self.beta2)


# ---------------------------------------------------------------------------
# helpers


def _suffix(n: int) -> str:
    return "" if n == 2 else f"_{n}"


def _dot(a: Sequence[Expr], b: Sequence[Expr]) -> Expr:
    return esum(gmul(x, y) for x, y in zip(a, b))


def _half(x: Expr) -> Expr:
    return x.scale(Fraction(1, 2))


class _Fields:
    """Convenience constructors for jets and variations of declared fields."""

    def __init__(self, decls: Sequence[FieldDecl]):
        self.gh = {d.name: d.gh for d in decls}
        for d in decls:
            if d.invertible:
                declare_invertible(d.name)

    def __call__(self, name: str, order: int = 0) -> Expr:
        return A(jet(name, order, self.gh[name]))

    def d(self, name: str, order: int = 0) -> Expr:
        return A(var(name, order, self.gh[name]))

    def vec(self, stem: str, n: int, order: int = 0) -> list[Expr]:
        return [self(f"{stem}{i}", order) for i in range(1, n + 1)]

    def dvec(self, stem: str, n: int, order: int = 0) -> list[Expr]:
        return [self.d(f"{stem}{i}", order) for i in range(1, n + 1)]


DTE = A(DT)
E_ = A(const("E"))
M_ = A(const("m"))
SQRT_E = A(rad(const("E")))


# ---------------------------------------------------------------------------
# contractible pair


def _contractible_pair() -> Theory:
    decls = (
        FieldDecl("a", 0),
        FieldDecl("v", 0),
        FieldDecl("a+", -1, partner="a"),
        FieldDecl("v+", -1, partner="v"),
    )
    f = _Fields(decls)
    Q = {"a": ZERO, "v": ZERO, "a+": -f("a", 2), "v+": f("v")}
    theta0 = (gmul(f("a+"), f.d("a")) + gmul(f("v+"), f.d("v"))) * DTE
    theta1 = gmul(f("a", 1), f.d("a"))
    L0 = (_half(f("a", 1) ** 2) + _half(f("v") ** 2)) * DTE
    return Theory("contractible-pair", decls, Q, (theta0, theta1), (L0,))


def _free_particle() -> Theory:
    decls = (FieldDecl("at", 0), FieldDecl("at+", -1, partner="at"))
    f = _Fields(decls)
    Q = {"at": ZERO, "at+": -f("at", 2)}
    theta0 = gmul(f("at+"), f.d("at")) * DTE
    theta1 = gmul(f("at", 1), f.d("at"))
    L0 = _half(f("at", 1) ** 2) * DTE
    return Theory("free-particle", decls, Q, (theta0, theta1), (L0,))


def _cp_package() -> EquivalencePackage:
    t1, t2 = _contractible_pair(), _free_particle()
    f = _Fields(t1.fields + t2.fields)
    phi = Morphism({"a": f("at"), "a+": f("at+"), "v": ZERO, "v+": ZERO}, name="φ")
    psi = Morphism({"at": f("a"), "at+": f("a+")}, name="ψ")
    beta1 = (-_half(gmul(f("v+"), f.d("v+"))) * DTE, ZERO)
    f1 = (_half(gmul(f("v+"), f("v"))) * DTE, ZERO)
    R = {"v": -f("v+")}
    flow = {"a": f("a"), "a+": f("a+"), "v": A(U) * f("v"), "v+": A(U) * f("v+")}
    chi = {"a": f("a"), "a+": f("a+"), "v": ZERO, "v+": ZERO}
    hchi = {"a": ZERO, "a+": ZERO, "v": -f("v+"), "v+": ZERO}
    anti = {"v": A(U) * f("v+")}
    return EquivalencePackage("cp", t1, t2, phi, psi, beta1, f1, (ZERO, ZERO), (ZERO, ZERO), R, flow, chi,
                              hchi, anti)


# ---------------------------------------------------------------------------
# classical mechanics on a curved background (target dimension 1)


def _metric(arg: str, k: int = 0) -> Expr:
    return A(fun("g", arg, k))


def _cm1() -> Theory:
    decls = (
        FieldDecl("q", 0),
        FieldDecl("p", 0),
        FieldDecl("q+", -1, partner="q"),
        FieldDecl("p+", -1, partner="p"),
    )
    f = _Fields(decls)
    g, g1 = _metric("q"), _metric("q", 1)
    ginv = g ** -1
    Q = {
        "q": ZERO,
        "p": ZERO,
        "q+": -f("p", 1) + _half(g1 * f("p") ** 2 * ginv ** 2),
        "p+": f("q", 1) - f("p") * ginv,
    }
    theta0 = (gmul(f("q+"), f.d("q")) + gmul(f("p+"), f.d("p"))) * DTE
    theta1 = f("p") * f.d("q")
    L0 = (f("p") * f("q", 1) - _half(f("p") ** 2 * ginv)) * DTE
    return Theory("cm1", decls, Q, (theta0, theta1), (L0,), functions=(("g", "q"),))


def _cm2() -> Theory:
    decls = (FieldDecl("qt", 0), FieldDecl("qt+", -1, partner="qt"))
    f = _Fields(decls)
    g, g1 = _metric("qt"), _metric("qt", 1)
    qd = f("qt", 1)
    Q = {"qt": ZERO, "qt+": _half(g1 * qd * qd) - g1 * qd * qd - g * f("qt", 2)}
    theta0 = gmul(f("qt+"), f.d("qt")) * DTE
    theta1 = g * qd * f.d("qt")
    L0 = _half(g * qd * qd) * DTE
    return Theory("cm2", decls, Q, (theta0, theta1), (L0,), functions=(("g", "qt"),))


def _cm_package() -> EquivalencePackage:
    t1, t2 = _cm1(), _cm2()
    f = _Fields(t1.fields + t2.fields)
    g, g1 = _metric("q"), _metric("q", 1)
    gt = _metric("qt")
    u = A(U)
    qd, p, pp = f("q", 1), f("p"), f("p+")
    Qpp = qd - p * g ** -1
    phi = Morphism({"q": f("qt"), "p": gt * f("qt", 1), "q+": f("qt+"), "p+": ZERO}, name="φ")
    psi_qt = f("q+") - _half(g1 * pp * Qpp) - total_derivative(g * pp) + g1 * qd * pp
    psi = Morphism({"qt": f("q"), "qt+": psi_qt}, name="ψ")
    beta1 = (_half(g * gmul(pp, f.d("p+"))) * DTE, g * gmul(pp, f.d("q")))
    f1 = (-_half(g * pp * Qpp) * DTE, ZERO)
    R = {"p": g * pp}
    flow = {
        "q": f("q"),
        "p": u * p - (u - 1) * g * qd,
        "p+": u * pp,
        "q+": f("q+") + _half((u * u - 1) * g1 * pp * Qpp) + (u - 1) * (total_derivative(g * pp) - g1 * qd * pp),
    }
    chi = {"q": f("q"), "p": g * qd, "p+": ZERO, "q+": psi_qt}
    hchi = {"q": ZERO, "p": g * pp, "q+": ZERO, "p+": ZERO}
    anti = {"p": -u * g * pp}
    classical = {"p": g * qd}
    classical_map = Morphism({"qt": f("q")}, name="φcl")
    return EquivalencePackage("cm", t1, t2, phi, psi, beta1, f1, (ZERO, ZERO), (ZERO, ZERO), R, flow, chi,
                              hchi, anti, classical, classical_map)


# ---------------------------------------------------------------------------
# Jacobi theory and one-dimensional gravity


@dataclass(frozen=True)
class _Kin:
    """Kinetic quantities of a target-space curve at dimension n."""

    q1: list[Expr]
    q2: list[Expr]
    T: Expr
    sT: Expr

    def par(self, v: Sequence[Expr]) -> list[Expr]:
        """Component of ``v`` along the velocity: (v·q̇) m q̇ / 2T."""
        s = _dot(v, self.q1)
        return [gmul(s, w) for w in self.w()]

    def perp(self, v: Sequence[Expr]) -> list[Expr]:
        return [x - y for x, y in zip(v, self.par(v))]

    def w(self) -> list[Expr]:
        Tinv = self.T ** -1
        return [_half(M_ * x * Tinv) for x in self.q1]


def _kin(f: _Fields, stem: str, tname: str, n: int) -> _Kin:
    q1 = f.vec(stem, n, 1)
    q2 = f.vec(stem, n, 2)
    T_atom = define(tname + _suffix(n), _half(M_ * _dot(q1, q1)), tensor=2)
    return _Kin(q1, q2, A(T_atom), A(rad(T_atom)))


def _jacobi_decls(n: int) -> tuple[FieldDecl, ...]:
    out = [FieldDecl(f"qt{i}", 0, Fraction(0)) for i in range(1, n + 1)]
    out.append(FieldDecl("xit", 1, Fraction(-1)))
    out += [FieldDecl(f"qt+{i}", -1, Fraction(1), partner=f"qt{i}") for i in range(1, n + 1)]
    out.append(FieldDecl("xit+", -2, Fraction(2), partner="xit"))
    return tuple(out)


def _gr_decls(n: int) -> tuple[FieldDecl, ...]:
    out = [FieldDecl(f"q{i}", 0, Fraction(0)) for i in range(1, n + 1)]
    out.append(FieldDecl("g", 0, Fraction(2), invertible=True))
    out.append(FieldDecl("xi", 1, Fraction(-1)))
    out += [FieldDecl(f"q+{i}", -1, Fraction(1), partner=f"q{i}") for i in range(1, n + 1)]
    out.append(FieldDecl("g+", -1, Fraction(-1), partner="g"))
    out.append(FieldDecl("xi+", -2, Fraction(2), partner="xi"))
    return tuple(out)


def _jacobi(n: int = 2) -> Theory:
    decls = _jacobi_decls(n)
    f = _Fields(decls)
    k = _kin(f, "qt", "Tt", n)
    xi, xi1 = f("xit"), f("xit", 1)
    qp = f.vec("qt+", n)
    qp1 = f.vec("qt+", n, 1)
    xp, xp1 = f("xit+"), f("xit+", 1)
    dq = f.dvec("qt", n)
    root = SQRT_E * k.sT ** -1  # √(E/T)
    mom = [root * M_ * x for x in k.q1]
    Q: dict[str, Expr] = {}
    gamma: dict[str, Expr] = {}
    koszul: dict[str, Expr] = {}
    for i in range(n):
        Q[f"qt{i + 1}"] = gmul(xi, k.q1[i])
        Q[f"qt+{i + 1}"] = -total_derivative(mom[i] + gmul(qp[i], xi))
        gamma[f"qt+{i + 1}"] = gmul(xi, qp1[i]) + gmul(xi1, qp[i])
        koszul[f"qt+{i + 1}"] = -total_derivative(mom[i])
    Q["xit"] = gmul(xi, xi1)
    Q["xit+"] = -_dot(qp, k.q1) + gmul(xi, xp1) + 2 * gmul(xi1, xp)
    gamma.update({key: Q[key] for key in Q if not key.startswith("qt+") and key != "xit+"})
    gamma["xit+"] = gmul(xi, xp1) + 2 * gmul(xi1, xp)
    koszul["xit+"] = -_dot(qp, k.q1)
    theta0 = (_dot(qp, dq) + gmul(xp, f.d("xit"))) * DTE
    theta1 = _dot(mom, dq) + esum(gmul(gmul(qp[i], xi), dq[i]) for i in range(n)) - gmul(gmul(xp, xi), f.d("xit"))
    L0 = (2 * SQRT_E * k.sT + esum(gmul(gmul(qp[i], xi), k.q1[i]) for i in range(n)) + gmul(gmul(xp, xi), xi1)) * DTE
    return Theory("jacobi", decls, Q, (theta0, theta1), (L0, ZERO), target_dim=n, constants=("E", "m"),
                  ghost="xit", gamma=gamma, koszul=koszul)


def _gr_scalars(n: int):
    g_atom = declare_invertible("g")
    g = A(g_atom)
    sg = A(rad(g_atom))
    return g, sg


def _el_g(g: Expr, sg: Expr, T: Expr) -> Expr:
    return _half(E_ * sg ** -1) - _half(T * g ** -1 * sg ** -1)


def _gr1d(n: int = 2) -> Theory:
    decls = _gr_decls(n)
    f = _Fields(decls)
    k = _kin(f, "q", "T", n)
    g, sg = _gr_scalars(n)
    g1 = f("g", 1)
    xi, xi1 = f("xi"), f("xi", 1)
    qp = f.vec("q+", n)
    qp1 = f.vec("q+", n, 1)
    gp, gp1 = f("g+"), f("g+", 1)
    xp, xp1 = f("xi+"), f("xi+", 1)
    dq = f.dvec("q", n)
    mom = [M_ * x * sg ** -1 for x in k.q1]
    elg = _el_g(g, sg, k.T)
    Q: dict[str, Expr] = {}
    gamma: dict[str, Expr] = {}
    koszul: dict[str, Expr] = {}
    for i in range(n):
        Q[f"q{i + 1}"] = gmul(xi, k.q1[i])
        Q[f"q+{i + 1}"] = -total_derivative(mom[i] + gmul(qp[i], xi))
        gamma[f"q{i + 1}"] = Q[f"q{i + 1}"]
        gamma[f"q+{i + 1}"] = gmul(xi, qp1[i]) + gmul(xi1, qp[i])
        koszul[f"q+{i + 1}"] = -total_derivative(mom[i])
    Q["g"] = gmul(xi, g1) + 2 * gmul(xi1, g)
    Q["xi"] = gmul(xi, xi1)
    Q["g+"] = elg + gmul(xi, gp1) - gmul(xi1, gp)
    ksz_xp = -_dot(qp, k.q1) + gmul(gp, g1) + 2 * gmul(gp1, g)
    Q["xi+"] = ksz_xp + gmul(xi, xp1) + 2 * gmul(xi1, xp)
    gamma["g"] = Q["g"]
    gamma["xi"] = Q["xi"]
    gamma["g+"] = gmul(xi, gp1) - gmul(xi1, gp)
    gamma["xi+"] = gmul(xi, xp1) + 2 * gmul(xi1, xp)
    koszul["g+"] = elg
    koszul["xi+"] = ksz_xp
    theta0 = (_dot(qp, dq) + gmul(xp, f.d("xi")) + gmul(gp, f.d("g"))) * DTE
    theta1 = (_dot(mom, dq) + esum(gmul(gmul(qp[i], xi), dq[i]) for i in range(n)) + gmul(gmul(gp, xi), f.d("g"))
              - gmul(2 * gmul(gp, g) + gmul(xp, xi), f.d("xi")))
    L0 = (k.T * sg ** -1 + sg * E_ + esum(gmul(gmul(qp[i], xi), k.q1[i]) for i in range(n))
          + gmul(gp, gmul(xi, g1) + 2 * gmul(g, xi1)) + gmul(gmul(xp, xi), xi1)) * DTE
    L1 = (k.T * g ** -1 - E_) * sg * xi
    return Theory("gr1d", decls, Q, (theta0, theta1), (L0, L1), target_dim=n, constants=("E", "m"),
                  ghost="xi", gamma=gamma, koszul=koszul)


@dataclass(frozen=True)
class GRSymbols:
    """Named composite scalars of the Jacobi/gravity package at dimension n."""

    g: Expr
    sg: Expr
    T: Expr
    sT: Expr
    Omega: Expr
    eta: Expr
    eta32: Expr
    sqrt_eta: Expr
    rho: Expr
    P: Expr
    sP: Expr
    Delta: Expr
    elg: Expr


def gr_symbols(n: int = 2) -> GRSymbols:
    f = _Fields(_gr_decls(n))
    k = _kin(f, "q", "T", n)
    g, sg = _gr_scalars(n)
    sfx = _suffix(n)
    omega = A(define("Ω" + sfx, sg * k.T + g * k.sT * SQRT_E, tensor=3))
    eta = g * E_ * k.T ** -1
    sqrt_eta = sg * SQRT_E * k.sT ** -1
    eta32 = eta * sqrt_eta
    rho = A(define("ρ" + sfx, sqrt_eta + 1, tensor=0))
    P_atom = define("P" + sfx, A(U) * g + (1 - A(U)) * k.T * E_ ** -1, tensor=2)
    delta = A(define("Δ" + sfx, g - k.T * E_ ** -1, tensor=2))
    return GRSymbols(g, sg, k.T, k.sT, omega, eta, eta32, sqrt_eta, rho, A(P_atom), A(rad(P_atom)), delta,
                     _el_g(g, sg, k.T))


def _jac_gr_package(n: int = 2) -> EquivalencePackage:
    t1, t2 = _gr1d(n), _jacobi(n)
    f = _Fields(t1.fields + t2.fields)
    s = gr_symbols(n)
    kt = _kin(f, "qt", "Tt", n)
    k = _kin(f, "q", "T", n)
    g, sg, T, elg = s.g, s.sg, s.T, s.elg
    g32 = g * sg
    u = A(U)
    g1 = f("g", 1)
    xi = f("xi")
    qp = f.vec("q+", n)
    gp, gp1 = f("g+"), f("g+", 1)
    xp = f("xi+")
    dq = f.dvec("q", n)
    w = k.w()
    elg1 = total_derivative(elg)
    Einv = E_ ** -1

    # φ*: gravity functions to Jacobi functions
    phi_im: dict[str, Expr] = {f"q{i}": f(f"qt{i}") for i in range(1, n + 1)}
    phi_im.update({f"q+{i}": f(f"qt+{i}") for i in range(1, n + 1)})
    phi_im.update({"g": kt.T * Einv, "xi": f("xit"), "g+": ZERO, "xi+": f("xit+")})
    phi = Morphism(phi_im, name="φ")

    # ψ*: Jacobi functions to gravity functions
    kt_bracket = gmul(gp, g1) + 2 * gmul(gp1, g)
    el_bracket = gmul(elg1, gp) - gmul(elg, gp1)
    par_extra = [-(kt_bracket + g32 * Einv * el_bracket) * wi for wi in w]
    qp_par = k.par(qp)
    qp_perp = k.perp(qp)
    q2_perp = k.perp(k.q2)
    psi_qp = [s.eta32 * (qp_par[i] + par_extra[i] + qp_perp[i] + 2 * M_ * Einv * gmul(gp, q2_perp[i])) for i in range(n)]
    ghg = gmul(gp1, gp)
    psi_xp = s.eta32 * (xp + g32 * Einv * ghg)
    psi_im: dict[str, Expr] = {f"qt{i}": f(f"q{i}") for i in range(1, n + 1)}
    psi_im.update({f"qt+{i + 1}": psi_qp[i] for i in range(n)})
    psi_im.update({"xit": xi, "xit+": psi_xp})
    psi = Morphism(psi_im, name="ψ")

    # β and f on the gravity side
    Om = s.Omega
    Om_inv = Om ** -1
    c1 = -4 * g ** 3 * sg * Om_inv ** 2 * T
    c_perp = 2 * g * g * Om_inv + s.eta32 * 2 * sg * Einv
    c2 = 4 * g ** 3 * sg * Om_inv ** 2 * T - s.eta32 * g32 * Einv
    b0 = (c1 * gmul(gp, f.d("g+"))
          + c_perp * esum(gmul(gmul(gp, qp_perp[i]), dq[i]) for i in range(n))
          + c2 * esum(gmul(gmul(ghg, w[i]), dq[i]) for i in range(n))
          - (s.eta32 - 1) * esum(gmul(gmul(xp, w[i]), dq[i]) for i in range(n)))
    b1 = gmul(xi, b0) + 2 * g32 * Om_inv * esum(gmul(gmul(gp, M_ * k.q1[i]), dq[i]) for i in range(n))
    f0 = 2 * gmul(gp, g - 2 * g32 * Om_inv * T)
    beta1 = (b0 * DTE, b1)
    f1 = (f0 * DTE, gmul(xi, f0))

    # homotopy data
    R: dict[str, Expr] = {"g": -2 * g32 * Einv * gp}
    for i in range(n):
        R[f"q+{i + 1}"] = (-3 * sg * Einv * elg * gmul(xp, w[i])) + 3 * sg * Einv * gmul(gp, qp_perp[i])

    gP32 = g32 * (s.P * s.sP) ** -1  # (g/P)^{3/2}
    sigma = _sigma_factory(g32, gp)
    flow: dict[str, Expr] = {f"q{i}": f(f"q{i}") for i in range(1, n + 1)}
    flow.update({"xi": xi, "g": s.P, "g+": u * gP32 * gp})
    flow["xi+"] = gP32 * (xp - (u * u - 1) * g32 * Einv * ghg)
    sig_T = sigma(T * Einv)
    sig_el = sigma(g32 * elg)
    for i in range(n):
        par_i = (qp_par[i] + (u - 1) * 2 * (g32 ** -1) * gmul(sig_T, w[i])
                 + (u * u - 1) * 3 * Einv * (g32 ** -1) * gmul(sig_el, w[i]))
        perp_i = qp_perp[i] - (u - 1) * 2 * M_ * Einv * gmul(gp, q2_perp[i])
        flow[f"q+{i + 1}"] = gP32 * (par_i + perp_i)

    chi: dict[str, Expr] = {f"q{i}": f(f"q{i}") for i in range(1, n + 1)}
    chi.update({"xi": xi, "g": T * Einv, "g+": ZERO, "xi+": psi_xp})
    chi.update({f"q+{i + 1}": psi_qp[i] for i in range(n)})

    hchi: dict[str, Expr] = {name: ZERO for name in t1.field_gh()}
    hchi["g"] = -2 * g32 * Einv * gp
    rho_inv = s.rho ** -1
    for i in range(n):
        h_par = ((1 - s.eta32) * gmul(xp + g32 * Einv * ghg, w[i])
                 + (3 * s.eta - 2 * s.sqrt_eta - 1) * rho_inv ** 2 * g32 * Einv * gmul(ghg, w[i]))
        h_perp = 2 * T ** -1 * (s.eta * rho_inv + 1) * g32 * gmul(gp, qp_perp[i])
        hchi[f"q+{i + 1}"] = h_par + h_perp

    F_perp, F_1, F_2 = flow_antiderivatives(s)
    anti: dict[str, Expr] = {"g": 2 * Einv * u * g32 * gp}
    for i in range(n):
        anti[f"q+{i + 1}"] = (3 * Einv * g ** 3 * F_perp * gmul(gp, qp_perp[i])
                              + Fraction(3, 2) * gmul(gmul(g32 * xp + g ** 3 * Einv * ghg, w[i]), F_1)
                              - Fraction(3, 2) * gmul(gmul(g ** 3 * Einv * ghg, w[i]), F_2))
    return EquivalencePackage("jac-gr", t1, t2, phi, psi, beta1, f1, (ZERO, ZERO), (ZERO, ZERO), R, flow, chi,
                              hchi, anti)


def flow_antiderivatives(s: GRSymbols) -> tuple[Expr, Expr, Expr]:
    """Antiderivatives in s of u·P^{-5/2}, -uΔP^{-5/2} and -u³ΔP^{-5/2}."""
    u = A(U)
    P32_inv = (s.P * s.sP) ** -1
    D_inv = s.Delta ** -1
    F_perp = Fraction(2, 3) * D_inv * P32_inv
    F_1 = Fraction(-2, 3) * P32_inv
    F_2 = (Fraction(-2, 3) * u * u * P32_inv - Fraction(8, 3) * u * D_inv * s.sP ** -1
           + Fraction(16, 3) * s.sP * D_inv ** 2)
    return F_perp, F_1, F_2


def _sigma_factory(g32: Expr, gp: Expr) -> Callable[[Expr], Expr]:
    base = gmul(g32, gp)
    base1 = total_derivative(base)

    def sigma(phi: Expr) -> Expr:
        return gmul(phi, base1) - gmul(total_derivative(phi), base)

    return sigma


# ---------------------------------------------------------------------------
# catalog

THEORY_NAMES = ("contractible-pair", "cm1", "cm2", "ym1", "ym2", "jacobi", "gr1d")
PACKAGE_NAMES = ("cp", "cm", "ym", "jac-gr")


@lru_cache(maxsize=None)
def builtin_theory(name: str, n: int | None = None):
    if name == "contractible-pair":
        return _contractible_pair()
    if name == "free-particle":
        return _free_particle()
    if name == "cm1":
        return _cm1()
    if name == "cm2":
        return _cm2()
    if name == "jacobi":
        return _jacobi(n or 2)
    if name == "gr1d":
        return _gr1d(n or 2)
    if name in ("ym1", "ym2"):
        from .ncdga import ym_theory

        return ym_theory(name)
    raise UnknownTheory(name)


@lru_cache(maxsize=None)
def builtin_package(name: str, n: int | None = None):
    if name == "cp":
        return _cp_package()
    if name == "cm":
        return _cm_package()
    if name == "jac-gr":
        return _jac_gr_package(n or 2)
    if name == "ym":
        from .ncdga import ym_package

        return ym_package()
    raise UnknownPackage(name)
