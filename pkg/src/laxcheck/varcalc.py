"""Variational bicomplex operators on a one-dimensional source.

Conventions: ``d = dt ∧ ∂_t`` acts from the left, ``δ`` is the odd vertical
differential, an evolutionary vector field ``X`` of ghost shift ``s``
contracts as a derivation of parity ``s + 1`` and its Lie derivative is a
derivation of parity ``s`` with ``L_X δφ = (-1)^s δ(Xφ)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Mapping

from .gca import (
    DT,
    ONE_EXPR,
    U,
    ZERO,
    Atom,
    Degree,
    Derivation,
    Expr,
    GcaError,
    Kind,
    NonInvertibleDenominator,
    def_by_value,
    def_tensor,
    define,
    definition,
    degree_of,
    esum,
    fun,
    gmul,
    is_zero,
    jet,
    mono_atoms,
    rad,
    var,
)


class DegreeMismatch(GcaError):
    """A vector field image has the wrong degree."""


class MissingImage(GcaError):
    """A morphism has no image for a field that occurs in its argument."""


class SingularLimit(GcaError):
    """An endpoint substitution makes a denominator vanish."""


class UndefinedTensorNumber(GcaError):
    """No tensor number is available, or the expression is not homogeneous."""


class TensorMismatch(GcaError):
    """The two computations of the gauge action disagree."""


# ---------------------------------------------------------------------------
# total derivative, d and δ


def _dt_rule(a: Atom) -> Expr | None:
    if a.kind is Kind.JET:
        return Expr.atom(jet(a.name, a.order + 1, a.gh))
    if a.kind is Kind.VAR:
        return Expr.atom(var(a.name, a.order + 1, a.gh))
    if a.kind in (Kind.DT, Kind.CONST, Kind.PARAM):
        return ZERO
    return None


def _delta_rule(a: Atom) -> Expr | None:
    if a.kind is Kind.JET:
        return Expr.atom(var(a.name, a.order, a.gh))
    if a.kind in (Kind.VAR, Kind.DT, Kind.CONST, Kind.PARAM):
        return ZERO
    return None


def _s_rule(a: Atom) -> Expr | None:
    if a.kind is Kind.PARAM:
        return -Expr.atom(a) if a is U else ZERO
    if a.kind in (Kind.JET, Kind.VAR, Kind.DT, Kind.CONST):
        return ZERO
    return None


TOTAL_DERIVATIVE = Derivation(0, _dt_rule, "∂t")
VERTICAL_DELTA = Derivation(1, _delta_rule, "δ")
S_DERIVATIVE = Derivation(0, _s_rule, "∂s")


def total_derivative(a: Expr, times: int = 1) -> Expr:
    for _ in range(times):
        a = TOTAL_DERIVATIVE(a)
    return a


def horizontal_d(a: Expr) -> Expr:
    return gmul(Expr.atom(DT), TOTAL_DERIVATIVE(a))


def vertical_delta(a: Expr) -> Expr:
    return VERTICAL_DELTA(a)


def s_derivative(a: Expr) -> Expr:
    return S_DERIVATIVE(a)


def strip_dt(a: Expr) -> Expr:
    """Remove a right factor ``dt`` from every term (terms without dt are an error)."""
    out: dict = {}
    for (evens, odds), c in a.terms.items():
        if DT not in odds:
            raise GcaError("term without dt in a top-form density")
        i = odds.index(DT)
        after = len(odds) - i - 1
        sign = -1 if after % 2 else 1
        m = (evens, odds[:i] + odds[i + 1:])
        out[m] = out.get(m, 0) + sign * c
    return Expr({m: c for m, c in out.items() if c})


def split_dt(a: Expr) -> tuple[Expr, Expr]:
    """Split into (terms containing dt, terms without dt)."""
    top: dict = {}
    rest: dict = {}
    for m, c in a.terms.items():
        (top if DT in m[1] else rest)[m] = c
    return Expr(top), Expr(rest)


# ---------------------------------------------------------------------------
# Evolutionary vector fields


@dataclass(eq=False)
class EvolutionaryVF:
    """Vertical vector field commuting with ∂_t, given by its values on 0-jets."""

    action: Mapping[str, Expr]
    shift: int = 0
    name: str = "X"
    _jets: dict = field(default_factory=dict, repr=False)
    _derivs: dict = field(default_factory=dict, repr=False)

    @property
    def parity(self) -> int:
        return self.shift % 2

    def on_jet(self, f: str, k: int) -> Expr:
        key = (f, k)
        hit = self._jets.get(key)
        if hit is None:
            base = self.action.get(f)
            hit = ZERO if base is None else total_derivative(base, k)
            self._jets[key] = hit
        return hit

    def derivation(self, mode: str) -> Derivation:
        d = self._derivs.get(mode)
        if d is not None:
            return d
        sgn = -1 if self.parity else 1
        if mode == "vf":
            def rule(a: Atom) -> Expr | None:
                if a.kind is Kind.JET:
                    return self.on_jet(a.name, a.order)
                if a.kind in (Kind.VAR, Kind.DT, Kind.CONST, Kind.PARAM):
                    return ZERO
                return None
            d = Derivation(self.parity, rule, self.name)
        elif mode == "contract":
            def rule(a: Atom) -> Expr | None:
                if a.kind is Kind.VAR:
                    return self.on_jet(a.name, a.order)
                if a.kind in (Kind.JET, Kind.DT, Kind.CONST, Kind.PARAM, Kind.FUN, Kind.RAD, Kind.DEF):
                    return ZERO
                return None
            d = Derivation(self.parity + 1, rule, "ι" + self.name)
        elif mode == "lie":
            def rule(a: Atom) -> Expr | None:
                if a.kind is Kind.JET:
                    return self.on_jet(a.name, a.order)
                if a.kind is Kind.VAR:
                    return vertical_delta(self.on_jet(a.name, a.order)).scale(sgn)
                if a.kind in (Kind.DT, Kind.CONST, Kind.PARAM):
                    return ZERO
                return None
            d = Derivation(self.parity, rule, "L" + self.name)
        else:
            raise ValueError(mode)
        self._derivs[mode] = d
        return d

    def __call__(self, a: Expr) -> Expr:
        """Apply as a derivation on variation-free expressions."""
        return self.derivation("vf")(a)


def prolong_vf(action: Mapping[str, Expr], shift: int = 0, field_gh: Mapping[str, int] | None = None,
               name: str = "X") -> EvolutionaryVF:
    """Build an evolutionary vector field, checking image degrees when ``field_gh`` is given."""
    if field_gh is not None:
        for f, img in action.items():
            if f not in field_gh:
                raise DegreeMismatch(f"{name}: unknown field {f}")
            deg = degree_of(img)
            want = Degree(field_gh[f] + shift, 0, 0)
            if deg is not None and deg != want:
                raise DegreeMismatch(f"{name}({f}) has degree {deg}, expected {want}")
    return EvolutionaryVF(dict(action), shift, name)


def contract(X: EvolutionaryVF, a: Expr) -> Expr:
    return X.derivation("contract")(a)


def lie_derivative(X: EvolutionaryVF, a: Expr) -> Expr:
    return X.derivation("lie")(a)


def commutator_on(X: EvolutionaryVF, Y: EvolutionaryVF, a: Expr) -> Expr:
    """Graded commutator ``[X, Y] a = X(Y a) - (-1)^{|X||Y|} Y(X a)`` on variation-free ``a``."""
    sign = -1 if (X.parity and Y.parity) else 1
    return X(Y(a)) - Y(X(a)).scale(sign)


def euler_operator_fn(density: Expr, f: str, gh: int = 0) -> Expr:
    """Euler-Lagrange expression of a density given without dt."""
    reach = _reachable_atoms(density)
    orders = [a.order for a in reach if a.kind is Kind.JET and a.name == f]
    if not orders:
        return ZERO
    parts = []
    for k in range(max(orders) + 1):
        target = jet(f, k, gh)

        def rule(a: Atom, target: Atom = target) -> Expr | None:
            if a is target:
                return ONE_EXPR
            if a.kind in (Kind.JET, Kind.VAR, Kind.DT, Kind.CONST, Kind.PARAM):
                return ZERO
            return None

        partial = Derivation(target.parity, rule, "∂")(density)
        term = total_derivative(partial, k)
        parts.append(term if k % 2 == 0 else -term)
    return esum(parts)


def euler_operator(density: Expr, f: str, gh: int = 0) -> Expr:
    """Euler operator of a top-form density ``L·dt`` with respect to field ``f``."""
    return euler_operator_fn(strip_dt(density), f, gh)


def _reachable_atoms(a: Expr) -> set[Atom]:
    seen: set[Atom] = set()
    stack = list(a.atoms())
    while stack:
        x = stack.pop()
        if x in seen:
            continue
        seen.add(x)
        if x.kind is Kind.DEF:
            stack.extend(definition(x).atoms())
        elif x.kind is Kind.RAD:
            stack.append(x.base)
        elif x.kind is Kind.FUN:
            stack.append(jet(x.base, 0, 0))
    return seen


def depends_on_param(a: Atom, p: Atom = U) -> bool:
    return p in _reachable_atoms(Expr.atom(a)) if a.kind in (Kind.DEF, Kind.RAD) else a is p


# ---------------------------------------------------------------------------
# Morphisms


@dataclass(eq=False)
class Morphism:
    """Pullback along a map of field spaces, given by images of 0-jets.

    With ``identity=True`` fields without an explicit image map to
    themselves; ``params`` substitutes parameter atoms such as ``u``.
    """

    images: Mapping[str, Expr]
    name: str = "φ"
    identity: bool = False
    params: Mapping[Atom, Expr] = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)
    _mono: dict = field(default_factory=dict, repr=False)

    def field_image(self, f: str, gh: int) -> Expr:
        img = self.images.get(f)
        if img is None:
            if self.identity:
                return Expr.atom(jet(f, 0, gh))
            raise MissingImage(f"{self.name}: no image for field {f}")
        return img

    def atom_power(self, a: Atom, e: int) -> Expr:
        key = (a, e)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        v = self._atom_power(a, e)
        self._cache[key] = v
        return v

    def _atom_power(self, a: Atom, e: int) -> Expr:
        k = a.kind
        if k is Kind.JET:
            if self.identity and a.name not in self.images:
                return Expr.atom(a, e)
            img = total_derivative(self.field_image(a.name, a.gh), a.order)
            return _power(img, e, self.name)
        if k is Kind.VAR:
            if self.identity and a.name not in self.images:
                return Expr.atom(a, e)
            img = vertical_delta(total_derivative(self.field_image(a.name, a.gh), a.order))
            return img ** e
        if k in (Kind.DT, Kind.CONST):
            return Expr.atom(a, e)
        if k is Kind.PARAM:
            img = self.params.get(a)
            if img is None:
                return Expr.atom(a, e)
            return _power(img, e, self.name)
        if k is Kind.FUN:
            argimg = self.field_image(a.base, 0)
            if self.identity and a.base not in self.images:
                return Expr.atom(a, e)
            single = _single_atom(argimg)
            if single is None or single.kind is not Kind.JET or single.order != 0:
                raise MissingImage(f"{self.name}: function atom {a} needs a field image")
            return Expr.atom(fun(a.name, single.name, a.order), e)
        if k is Kind.RAD:
            inner = self.atom_power(a.base, 1)
            return _power(sqrt_expr(inner), e, self.name)
        if k is Kind.DEF:
            value = definition(a)
            img = self(value)
            if img == value:
                return Expr.atom(a, e)
            known = def_by_value(img)
            if known is not None:
                return Expr.atom(known, e)
            return _power(img, e, self.name)
        raise GcaError(f"unsupported atom {a}")

    def __call__(self, x: Expr) -> Expr:
        parts = []
        for m, c in x.terms.items():
            img = self._mono.get(m)
            if img is None:
                img = ONE_EXPR
                for a, e in m[0]:
                    img = gmul(img, self.atom_power(a, e))
                    if not img.terms:
                        break
                if img.terms:
                    for a in m[1]:
                        img = gmul(img, self.atom_power(a, 1))
                        if not img.terms:
                            break
                self._mono[m] = img
            if img.terms:
                parts.append(img.scale(c))
        return esum(parts)


def _single_atom(x: Expr) -> Atom | None:
    if len(x.terms) != 1:
        return None
    (m, c), = x.terms.items()
    if c != 1:
        return None
    atoms = list(mono_atoms(m))
    if len(atoms) != 1:
        return None
    if m[0] and m[0][0][1] != 1:
        return None
    return atoms[0]


_WRAP_COUNTER: dict[Expr, Atom] = {}


def _power(img: Expr, e: int, who: str) -> Expr:
    if e >= 0:
        return img ** e
    try:
        return img ** e
    except NonInvertibleDenominator:
        pass
    if is_zero(img):
        raise NonInvertibleDenominator(f"{who}: image of an invertible atom vanishes")
    wrapped = _WRAP_COUNTER.get(img)
    if wrapped is None:
        wrapped = define(f"⟨{img}⟩", img)
        _WRAP_COUNTER[img] = wrapped
    return Expr.atom(wrapped, e)


def sqrt_expr(x: Expr) -> Expr:
    """Square root of a monomial in invertible atoms or of a known definitional value."""
    if len(x.terms) == 1:
        (m, c), = x.terms.items()
        if not m[1]:
            rc = _rational_sqrt(c)
            if rc is not None:
                out = Expr.const(rc)
                for a, e in m[0]:
                    if a.kind is Kind.RAD:
                        raise NonInvertibleDenominator(f"nested radical over {a}")
                    q, b = divmod(e, 2)
                    out = gmul(out, Expr.atom(a, q))
                    if b:
                        out = gmul(out, Expr.atom(rad(a)))
                return out
    known = def_by_value(x)
    if known is not None:
        return Expr.atom(rad(known))
    raise NonInvertibleDenominator(f"no square root available for {x}")


def _rational_sqrt(c: Fraction) -> Fraction | None:
    from math import isqrt

    if c <= 0:
        return None
    n, d = c.numerator, c.denominator
    rn, rd = isqrt(n), isqrt(d)
    if rn * rn == n and rd * rd == d:
        return Fraction(rn, rd)
    return None


def apply_morphism(m: Morphism, a: Expr) -> Expr:
    return m(a)


def compose(outer: Morphism, inner: Morphism, name: str = "∘") -> Morphism:
    """The pullback ``inner* ∘ outer*`` as a morphism (apply ``outer`` first)."""
    images = {f: inner(img) for f, img in outer.images.items()}
    return Morphism(images, name=name, identity=outer.identity and inner.identity)


# ---------------------------------------------------------------------------
# s-parametric calculus


def s_limit(a: Expr, endpoint: str) -> Expr:
    """Substitute ``u → 0`` (s → ∞) or ``u → 1`` (s = 0)."""
    if endpoint in ("inf", "∞"):
        value = ZERO
    elif endpoint == "0":
        value = ONE_EXPR
    else:
        raise ValueError(endpoint)
    sub = Morphism({}, name=f"u→{endpoint}", identity=True, params={U: value})
    try:
        return sub(a)
    except NonInvertibleDenominator as exc:
        raise SingularLimit(str(exc)) from exc


# ---------------------------------------------------------------------------
# Tensor numbers and the reparametrization action


def tensor_number(a: Expr, tensors: Mapping[str, Fraction | int]) -> Fraction:
    """Common tensor number of all monomials of ``a``."""
    found: Fraction | None = None
    for m in a.terms:
        t = Fraction(0)
        for at, e in m[0]:
            t += e * _atom_tensor(at, tensors)
        for at in m[1]:
            t += _atom_tensor(at, tensors)
        if found is None:
            found = t
        elif t != found:
            raise UndefinedTensorNumber(f"{a} is not homogeneous in tensor number")
    if found is None:
        raise UndefinedTensorNumber("zero has no tensor number")
    return found


def _atom_tensor(a: Atom, tensors: Mapping[str, Fraction | int]) -> Fraction:
    if a.kind in (Kind.JET, Kind.VAR):
        if a.name not in tensors:
            raise UndefinedTensorNumber(f"no tensor number for field {a.name}")
        return Fraction(tensors[a.name]) + a.order
    if a.kind in (Kind.DT, Kind.CONST, Kind.PARAM):
        return Fraction(0)
    if a.kind is Kind.RAD:
        return _atom_tensor(a.base, tensors) / 2
    if a.kind is Kind.DEF:
        t = def_tensor(a)
        return t if t is not None else tensor_number(definition(a), tensors)
    raise UndefinedTensorNumber(f"no tensor number for {a}")


@dataclass(eq=False)
class GammaData:
    """The gauge part of Q for reparametrizations: its table and tensor numbers."""

    table: EvolutionaryVF
    tensors: Mapping[str, Fraction | int]
    ghost: str
    field_gh: Mapping[str, int]
    _shortcut: Derivation | None = field(default=None, repr=False)

    def shortcut(self) -> Derivation:
        if self._shortcut is None:
            xi_gh = self.field_gh[self.ghost]

            def rule(a: Atom) -> Expr | None:
                if a.kind is Kind.JET:
                    return _tensor_rule(a, self.tensors, self.ghost, xi_gh)
                if a.kind in (Kind.DT, Kind.CONST, Kind.PARAM):
                    return ZERO
                if a.kind in (Kind.VAR, Kind.FUN):
                    raise UndefinedTensorNumber(f"the shortcut does not act on {a}")
                return None

            self._shortcut = Derivation(1, rule, "γ♯")
        return self._shortcut


def _tensor_rule(a: Atom, tensors: Mapping[str, Fraction | int], ghost: str, xi_gh: int) -> Expr:
    if a.name not in tensors:
        raise UndefinedTensorNumber(f"no tensor number for field {a.name}")
    t = Fraction(tensors[a.name])
    k = a.order
    f, gh = a.name, a.gh
    weight = Fraction(1, 2) if f == ghost else Fraction(1)
    parts = [gmul(Expr.atom(jet(ghost, 0, xi_gh)), Expr.atom(jet(f, k + 1, gh)))]
    for n in range(1, k + 2):
        c = comb(k, n) + t * comb(k, n - 1)
        if c:
            parts.append(gmul(Expr.atom(jet(ghost, n, xi_gh)), Expr.atom(jet(f, k - n + 1, gh))).scale(c))
    return esum(parts).scale(weight)


def gamma_action(a: Expr, data: GammaData) -> Expr:
    """The reparametrization action on a variation-free expression, computed two ways."""
    full = data.table(a)
    short = data.shortcut()(a)
    if not is_zero(full - short):
        raise TensorMismatch(f"gauge action paths disagree on {a}")
    return full


def strip_forms(a: Expr) -> Expr:
    """Drop variations and dt from every monomial (keeps coefficient functions)."""
    out = []
    for (evens, odds), c in a.terms.items():
        ev = tuple((x, e) for x, e in evens if x.kind is not Kind.VAR)
        od = tuple(x for x in odds if x.kind not in (Kind.VAR, Kind.DT))
        out.append(Expr.mono((ev, od), c))
    return esum(out)
