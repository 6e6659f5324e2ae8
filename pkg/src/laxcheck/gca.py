"""Graded-commutative algebra of local forms on a one-dimensional source.

Elements are exact rational combinations of monomials in interned atoms:
jets and variations of fields, the horizontal one-form ``dt``, constants,
function atoms ``g^(k)(q)``, square roots of single atoms, definitional
atoms (named composite scalars such as ``T``) and the flow parameter ``u``.

Signs follow the total-degree rule: the parity of an atom is
``gh + fdM + fdF`` modulo 2, and swapping two homogeneous factors costs
``(-1)^(|a||b|)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Iterator, Mapping, Union

Number = Union[int, Fraction]


class GcaError(Exception):
    """Base class for errors raised by the algebra engine."""


class UndeclaredAtom(GcaError):
    """A raw expression refers to an atom that is not in scope."""


class NonInvertibleDenominator(GcaError):
    """A negative power was requested of something that is not invertible."""


# ---------------------------------------------------------------------------
# Degrees


@dataclass(frozen=True, order=True)
class Degree:
    gh: int
    fdM: int = 0
    fdF: int = 0

    @property
    def total(self) -> int:
        return self.gh + self.fdM + self.fdF

    @property
    def parity(self) -> int:
        return self.total % 2

    def lax(self, dim_m: int = 1) -> int:
        return self.gh - (dim_m - self.fdM)

    def __add__(self, other: Degree) -> Degree:
        return Degree(self.gh + other.gh, self.fdM + other.fdM, self.fdF + other.fdF)

    def scale(self, n: int) -> Degree:
        return Degree(self.gh * n, self.fdM * n, self.fdF * n)


ZERO_DEGREE = Degree(0, 0, 0)
INHOMOGENEOUS = "inhomogeneous"

# ---------------------------------------------------------------------------
# Atoms


class Kind(IntEnum):
    JET = 0
    VAR = 1
    DT = 2
    CONST = 3
    FUN = 4
    RAD = 5
    DEF = 6
    PARAM = 7


_INTERN: dict[tuple, "Atom"] = {}
_DEFS: dict["Atom", "Expr"] = {}
_DEF_BY_VALUE: dict["Expr", "Atom"] = {}
_DEF_TENSOR: dict["Atom", Fraction] = {}


class Atom:
    """An interned generator of the algebra.

    ``name`` is the field name for jets and variations, ``order`` the jet
    order (or derivative order for function atoms), ``base`` the argument
    field name of a function atom or the radicand atom of a radical.
    """

    __slots__ = ("kind", "name", "order", "gh", "base", "invertible", "parity", "degree", "key", "_hash")

    kind: Kind
    name: str
    order: int
    gh: int
    base: object
    invertible: bool
    parity: int
    degree: Degree
    key: tuple

    def __new__(cls, kind: Kind, name: str, order: int = 0, gh: int = 0, base: object = None,
                invertible: bool = False) -> "Atom":
        base_key = base.key if isinstance(base, Atom) else base
        ident = (int(kind), name, order, gh, base_key)
        found = _INTERN.get(ident)
        if found is not None:
            return found
        self = object.__new__(cls)
        self.kind = kind
        self.name = name
        self.order = order
        self.gh = gh
        self.base = base
        self.invertible = invertible
        if kind is Kind.JET:
            self.degree = Degree(gh, 0, 0)
        elif kind is Kind.VAR:
            self.degree = Degree(gh, 0, 1)
        elif kind is Kind.DT:
            self.degree = Degree(0, 1, 0)
        else:
            self.degree = ZERO_DEGREE
        self.parity = self.degree.parity
        anti = 1 if gh < 0 else 0
        self.key = (int(kind), anti, order, name, gh, repr(base_key))
        self._hash = hash(ident)
        return _INTERN.setdefault(ident, self)

    def __reduce__(self):
        if self.kind is Kind.DEF:
            return (_restore_def, (self.name, _DEFS[self], self.invertible, _DEF_TENSOR.get(self)))
        return (Atom, (self.kind, self.name, self.order, self.gh, self.base, self.invertible))

    def __hash__(self) -> int:
        return self._hash

    def __eq__(self, other: object) -> bool:
        return self is other

    def __lt__(self, other: "Atom") -> bool:
        return self.key < other.key

    def __repr__(self) -> str:
        return f"Atom({self})"

    def __str__(self) -> str:
        return atom_str(self)

    @property
    def is_odd(self) -> bool:
        return self.parity == 1


def _restore_def(name: str, value: "Expr", invertible: bool, tensor: Fraction | None) -> Atom:
    return define(name, value, invertible=invertible, tensor=tensor)


def atom_str(a: Atom) -> str:
    if a.kind is Kind.JET:
        return a.name + _order_suffix(a.order)
    if a.kind is Kind.VAR:
        return "δ" + a.name + _order_suffix(a.order)
    if a.kind is Kind.DT:
        return "dt"
    if a.kind is Kind.FUN:
        return f"{a.name}{_order_suffix(a.order)}({a.base})"
    if a.kind is Kind.RAD:
        return f"√{a.base}"
    return a.name


def _order_suffix(k: int) -> str:
    if k == 0:
        return ""
    if k <= 3:
        return "'" * k
    return f"^({k})"


def jet(field: str, order: int = 0, gh: int = 0) -> Atom:
    return Atom(Kind.JET, field, order, gh)


def var(field: str, order: int = 0, gh: int = 0) -> Atom:
    return Atom(Kind.VAR, field, order, gh)


DT = Atom(Kind.DT, "dt")


def const(name: str, invertible: bool = True) -> Atom:
    return Atom(Kind.CONST, name, invertible=invertible)


def fun(name: str, arg: str, order: int = 0) -> Atom:
    """Function atom ``name^(order)(arg)``; only the underived one is invertible."""
    return Atom(Kind.FUN, name, order, 0, arg, invertible=(order == 0))


def rad(radicand: Atom) -> Atom:
    if radicand.parity or not radicand.invertible or radicand.kind is Kind.RAD:
        raise NonInvertibleDenominator(f"radicand {radicand} must be an even invertible non-radical atom")
    return Atom(Kind.RAD, "√", 0, 0, radicand, invertible=True)


def declare_invertible(field: str) -> Atom:
    """Mark the underived jet of an even field as invertible (e.g. a metric)."""
    a = jet(field, 0, 0)
    a.invertible = True
    return a


def param(name: str = "u") -> Atom:
    return Atom(Kind.PARAM, name, invertible=True)


U = param("u")


def define(name: str, value: "Expr", invertible: bool = True, tensor: Number | None = None) -> Atom:
    """Register a definitional atom ``name := value`` (idempotent for equal values)."""
    a = Atom(Kind.DEF, name, invertible=invertible)
    old = _DEFS.get(a)
    if old is not None:
        if old != value:
            raise GcaError(f"definitional atom {name} redefined with a different value")
        return a
    if value.odd_terms():
        raise GcaError(f"definitional atom {name} must be even")
    _DEFS[a] = value
    _DEF_BY_VALUE.setdefault(value, a)
    if tensor is not None:
        _DEF_TENSOR[a] = Fraction(tensor)
    return a


def definition(a: Atom) -> "Expr":
    return _DEFS[a]


def def_by_value(value: "Expr") -> Atom | None:
    return _DEF_BY_VALUE.get(value)


def def_tensor(a: Atom) -> Fraction | None:
    return _DEF_TENSOR.get(a)


# ---------------------------------------------------------------------------
# Monomials: (evens, odds) with evens a sorted tuple of (atom, exponent) pairs
# and odds a sorted tuple of distinct odd atoms.

Evens = tuple[tuple[Atom, int], ...]
Odds = tuple[Atom, ...]
Mono = tuple[Evens, Odds]
ONE: Mono = ((), ())


def _reduce_evens(exps: dict[Atom, int]) -> Evens:
    """Apply ``r^2 = radicand`` and drop zero exponents."""
    changed = True
    while changed:
        changed = False
        for a, e in list(exps.items()):
            if a.kind is Kind.RAD and (e < 0 or e > 1):
                q, b = divmod(e, 2)
                exps[a] = b
                exps[a.base] = exps.get(a.base, 0) + q
                changed = True
    return tuple(sorted(((a, e) for a, e in exps.items() if e != 0), key=lambda p: p[0].key))


def _merge_odds(a: Odds, b: Odds) -> tuple[int, Odds] | None:
    if not a:
        return 1, b
    if not b:
        return 1, a
    out: list[Atom] = []
    i = j = 0
    sign = 1
    na = len(a)
    while i < na and j < len(b):
        x, y = a[i], b[j]
        if x is y:
            return None
        if x.key < y.key:
            out.append(x)
            i += 1
        else:
            out.append(y)
            if (na - i) % 2:
                sign = -sign
            j += 1
    out.extend(a[i:])
    out.extend(b[j:])
    return sign, tuple(out)


@lru_cache(maxsize=1 << 18)
def mono_mul(m1: Mono, m2: Mono) -> tuple[int, Mono] | None:
    merged = _merge_odds(m1[1], m2[1])
    if merged is None:
        return None
    sign, odds = merged
    if not m1[0]:
        evens = m2[0]
    elif not m2[0]:
        evens = m1[0]
    else:
        exps = dict(m1[0])
        for a, e in m2[0]:
            exps[a] = exps.get(a, 0) + e
        evens = _reduce_evens(exps)
    return sign, (evens, odds)


def mono_degree(m: Mono) -> Degree:
    gh = fdm = fdf = 0
    for a, e in m[0]:
        d = a.degree
        gh += d.gh * e
        fdm += d.fdM * e
        fdf += d.fdF * e
    for a in m[1]:
        d = a.degree
        gh += d.gh
        fdm += d.fdM
        fdf += d.fdF
    return Degree(gh, fdm, fdf)


def mono_parity(m: Mono) -> int:
    return len(m[1]) % 2


def mono_key(m: Mono) -> tuple:
    return (len(m[1]), tuple(a.key for a in m[1]), tuple((a.key, e) for a, e in m[0]))


def mono_atoms(m: Mono) -> Iterator[Atom]:
    for a, _ in m[0]:
        yield a
    yield from m[1]


# ---------------------------------------------------------------------------
# Expressions


def _frac(c: Number) -> Fraction:
    return c if isinstance(c, Fraction) else Fraction(c)


class Expr:
    """Exact rational combination of canonical monomials (immutable by convention)."""

    __slots__ = ("terms", "_hash")

    terms: dict[Mono, Fraction]

    def __init__(self, terms: Mapping[Mono, Fraction] | None = None):
        self.terms = dict(terms) if terms else {}
        self._hash = None

    @classmethod
    def _raw(cls, terms: dict[Mono, Fraction]) -> "Expr":
        e = object.__new__(cls)
        e.terms = terms
        e._hash = None
        return e

    # constructors -----------------------------------------------------------
    @classmethod
    def const(cls, c: Number) -> "Expr":
        c = _frac(c)
        return cls._raw({ONE: c} if c else {})

    @classmethod
    def atom(cls, a: Atom, exponent: int = 1) -> "Expr":
        if exponent == 0:
            return cls.const(1)
        if a.parity:
            if exponent != 1:
                return cls._raw({}) if exponent > 1 else _raise_noninv(a)
            return cls._raw({((), (a,)): Fraction(1)})
        if exponent < 0 and not a.invertible:
            _raise_noninv(a)
        return cls._raw({(_reduce_evens({a: exponent}), ()): Fraction(1)})

    @classmethod
    def mono(cls, m: Mono, c: Number = 1) -> "Expr":
        c = _frac(c)
        return cls._raw({m: c} if c else {})

    # basic protocol -------------------------------------------------------------
    def __bool__(self) -> bool:
        return bool(self.terms)

    def __len__(self) -> int:
        return len(self.terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Expr.const(other)
        if not isinstance(other, Expr):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def __repr__(self) -> str:
        return f"Expr({self})"

    def __str__(self) -> str:
        return expr_str(self)

    def sorted_terms(self) -> list[tuple[Mono, Fraction]]:
        return sorted(self.terms.items(), key=lambda kv: mono_key(kv[0]))

    # arithmetic ---------------------------------------------------------------
    def __add__(self, other: Union["Expr", Number]) -> "Expr":
        other = _coerce(other)
        if not other.terms:
            return self
        if not self.terms:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            v = out.get(m)
            if v is None:
                out[m] = c
            else:
                v += c
                if v:
                    out[m] = v
                else:
                    del out[m]
        return Expr._raw(out)

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        return Expr._raw({m: -c for m, c in self.terms.items()})

    def __sub__(self, other: Union["Expr", Number]) -> "Expr":
        return self + (-_coerce(other))

    def __rsub__(self, other: Union["Expr", Number]) -> "Expr":
        return _coerce(other) - self

    def __mul__(self, other: Union["Expr", Number]) -> "Expr":
        if isinstance(other, (int, Fraction)):
            return self.scale(other)
        return gmul(self, other)

    def __rmul__(self, other: Number) -> "Expr":
        return self.scale(other)

    def __truediv__(self, other: Union["Expr", Number]) -> "Expr":
        if isinstance(other, (int, Fraction)):
            return self.scale(Fraction(1) / _frac(other))
        return gmul(self, other ** -1)

    def __rtruediv__(self, other: Number) -> "Expr":
        return _coerce(other) * self ** -1

    def scale(self, c: Number) -> "Expr":
        c = _frac(c)
        if not c:
            return ZERO
        if c == 1:
            return self
        return Expr._raw({m: v * c for m, v in self.terms.items()})

    def __pow__(self, n: int) -> "Expr":
        if n == 0:
            return ONE_EXPR
        if n < 0:
            return self.inverse() ** (-n)
        result = ONE_EXPR
        base = self
        while n:
            if n & 1:
                result = gmul(result, base)
            n >>= 1
            if n:
                base = gmul(base, base)
        return result

    def inverse(self) -> "Expr":
        """Inverse of a single even monomial in invertible atoms, or of a known definitional value."""
        if len(self.terms) == 1:
            (m, c), = self.terms.items()
            if not m[1] and all(a.invertible for a, _ in m[0]):
                exps = {a: -e for a, e in m[0]}
                return Expr._raw({(_reduce_evens(exps), ()): 1 / c})
        known = _DEF_BY_VALUE.get(self)
        if known is not None and known.invertible:
            return Expr.atom(known, -1)
        raise NonInvertibleDenominator(f"cannot invert {self}")

    # queries ------------------------------------------------------------------
    def odd_terms(self) -> list[Mono]:
        return [m for m in self.terms if len(m[1]) % 2]

    def atoms(self) -> set[Atom]:
        out: set[Atom] = set()
        for m in self.terms:
            out.update(mono_atoms(m))
        return out

    def coefficient(self, m: Mono) -> Fraction:
        return self.terms.get(m, Fraction(0))

    def is_zero(self) -> bool:
        return is_zero(self)


def _raise_noninv(a: Atom):
    raise NonInvertibleDenominator(f"atom {a} is not invertible")


def _coerce(x: Union[Expr, Number]) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, Fraction)):
        return Expr.const(x)
    raise TypeError(f"cannot coerce {x!r} to Expr")


ZERO = Expr._raw({})
ONE_EXPR = Expr._raw({ONE: Fraction(1)})


def A(a: Atom, exponent: int = 1) -> Expr:
    """Shorthand: the expression consisting of a single atom power."""
    return Expr.atom(a, exponent)


def C(c: Number) -> Expr:
    return Expr.const(c)


def gmul(a: Expr, b: Expr) -> Expr:
    """Graded-commutative product with Koszul signs from sorting odd factors."""
    if not a.terms or not b.terms:
        return ZERO
    out: dict[Mono, Fraction] = {}
    get = out.get
    for m1, c1 in a.terms.items():
        for m2, c2 in b.terms.items():
            r = mono_mul(m1, m2)
            if r is None:
                continue
            sign, m = r
            v = c1 * c2 if sign > 0 else -(c1 * c2)
            old = get(m)
            if old is None:
                out[m] = v
            else:
                v = old + v
                if v:
                    out[m] = v
                else:
                    del out[m]
    return Expr._raw(out)


def esum(items: Iterable[Expr]) -> Expr:
    out: dict[Mono, Fraction] = {}
    for e in items:
        for m, c in e.terms.items():
            v = out.get(m)
            if v is None:
                out[m] = c
            else:
                v += c
                if v:
                    out[m] = v
                else:
                    del out[m]
    return Expr._raw(out)


def eprod(items: Iterable[Expr]) -> Expr:
    out = ONE_EXPR
    for e in items:
        out = gmul(out, e)
    return out


# ---------------------------------------------------------------------------
# normalize: raw trees to canonical form

Raw = Union[Expr, Atom, int, Fraction, str, tuple]


def normalize(raw: Raw, scope: Mapping[str, Union[Atom, Expr]] | None = None) -> Expr:
    """Build a canonical Expr from a raw tree.

    Trees are atoms, numbers, names resolved through ``scope``, or tuples
    ``("+", *xs)``, ``("*", *xs)`` (factor order significant), ``("-", x)``,
    ``("^", x, n)`` and ``("/", x, y)``.
    """
    if isinstance(raw, Expr):
        return raw
    if isinstance(raw, Atom):
        return Expr.atom(raw)
    if isinstance(raw, bool):
        raise TypeError("booleans are not expressions")
    if isinstance(raw, (int, Fraction)):
        return Expr.const(raw)
    if isinstance(raw, str):
        if scope is None or raw not in scope:
            raise UndeclaredAtom(raw)
        v = scope[raw]
        return v if isinstance(v, Expr) else Expr.atom(v)
    if isinstance(raw, tuple) and raw:
        op, *args = raw
        if op == "+":
            return esum(normalize(x, scope) for x in args)
        if op == "*":
            return eprod(normalize(x, scope) for x in args)
        if op == "-":
            if len(args) == 1:
                return -normalize(args[0], scope)
            return normalize(args[0], scope) - esum(normalize(x, scope) for x in args[1:])
        if op == "^":
            base, n = args
            return normalize(base, scope) ** int(n)
        if op == "/":
            num, den = args
            return normalize(num, scope) * normalize(den, scope) ** -1
    raise TypeError(f"malformed raw expression {raw!r}")


# ---------------------------------------------------------------------------
# Degrees


def degree_of(a: Expr) -> Union[Degree, str, None]:
    """Common degree of all terms, ``INHOMOGENEOUS``, or None for zero."""
    deg: Degree | None = None
    for m in a.terms:
        d = mono_degree(m)
        if deg is None:
            deg = d
        elif d != deg:
            return INHOMOGENEOUS
    return deg


def parity_of(a: Expr) -> int | None:
    ps = {len(m[1]) % 2 for m in a.terms}
    if len(ps) == 1:
        return ps.pop()
    return None


# ---------------------------------------------------------------------------
# Derivations


class Derivation:
    """A graded derivation acting from the left.

    ``rule`` returns the image of a jet, variation, dt, constant or
    parameter atom (or None for zero).  Function atoms, radicals and
    definitional atoms are handled by the chain rule unless ``rule``
    returns a value for them.
    """

    def __init__(self, parity: int, rule: Callable[[Atom], Expr | None], name: str = "D"):
        self.parity = parity % 2
        self.rule = rule
        self.name = name
        self._cache: dict[Atom, Expr] = {}
        self._mono_cache: dict[Mono, Expr] = {}

    def of_atom(self, a: Atom) -> Expr:
        hit = self._cache.get(a)
        if hit is not None:
            return hit
        v = self.rule(a)
        if v is None:
            if a.kind is Kind.FUN:
                arg = jet(a.base, 0, 0)
                v = gmul(Expr.atom(fun(a.name, a.base, a.order + 1)), self.of_atom(arg))
            elif a.kind is Kind.RAD:
                r = a.base
                dr = self.of_atom(r)
                v = gmul(dr, Expr.mono(_mono_of({a: 1, r: -1}), Fraction(1, 2))) if dr else ZERO
            elif a.kind is Kind.DEF:
                v = self(_DEFS[a])
            else:
                v = ZERO
        self._cache[a] = v
        return v

    def __call__(self, x: Expr) -> Expr:
        parts: list[Expr] = []
        for m, c in x.terms.items():
            dm = self._mono_cache.get(m)
            if dm is None:
                dm = self._apply_mono(m)
                if len(self._mono_cache) < 200000:
                    self._mono_cache[m] = dm
            if dm.terms:
                parts.append(dm.scale(c))
        return esum(parts)

    def _apply_mono(self, m: Mono) -> Expr:
        evens, odds = m
        parts: list[Expr] = []
        for i, (a, e) in enumerate(evens):
            da = self.of_atom(a)
            if not da.terms:
                continue
            rest = dict(evens)
            rest[a] = e - 1
            rest_m: Mono = (_reduce_evens(rest), odds)
            parts.append(gmul(da, Expr.mono(rest_m, e)))
        if odds:
            evens_e = Expr.mono((evens, ()))
            for i, o in enumerate(odds):
                do = self.of_atom(o)
                if not do.terms:
                    continue
                sign = -1 if (self.parity and i % 2) else 1
                prefix = Expr.mono(((), odds[:i]))
                suffix = Expr.mono(((), odds[i + 1:]))
                parts.append(gmul(gmul(gmul(evens_e, prefix), do), suffix).scale(sign))
        return esum(parts)


def _mono_of(exps: dict[Atom, int]) -> Mono:
    return (_reduce_evens(dict(exps)), ())


# ---------------------------------------------------------------------------
# Zero test


def expand_definitions(a: Expr, max_rounds: int = 64) -> Expr:
    """Replace definitional atoms by their values after clearing their denominators.

    The result differs from ``a`` by an invertible monomial factor, so it is
    zero exactly when ``a`` is.
    """
    cur = a
    for _ in range(max_rounds):
        defs: dict[Atom, int] = {}
        for m in cur.terms:
            for at, e in m[0]:
                if at.kind is Kind.DEF:
                    defs[at] = min(defs.get(at, 0), e)
        if not defs:
            return cur
        clear = {at: -e for at, e in defs.items() if e < 0}
        if clear:
            cur = gmul(cur, Expr.mono(_mono_of(clear)))
        cache: dict[tuple[Atom, int], Expr] = {}
        parts: list[Expr] = []
        for (evens, odds), c in cur.terms.items():
            keep: dict[Atom, int] = {}
            factors: list[Expr] = []
            for at, e in evens:
                if at.kind is Kind.DEF:
                    key = (at, e)
                    p = cache.get(key)
                    if p is None:
                        p = _DEFS[at] ** e
                        cache[key] = p
                    factors.append(p)
                else:
                    keep[at] = e
            term = Expr.mono((_reduce_evens(keep), odds), c)
            for f in factors:
                term = gmul(f, term)
            parts.append(term)
        cur = esum(parts)
    raise GcaError("definition expansion did not terminate")


def is_zero(a: Expr) -> bool:
    """Decide whether ``a`` is zero in the localized radical extension."""
    if not a.terms:
        return True
    return not expand_definitions(a).terms


# ---------------------------------------------------------------------------
# Printing


def _fmt_coeff(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def mono_str(m: Mono) -> str:
    parts: list[str] = []
    for a, e in m[0]:
        s = atom_str(a)
        parts.append(s if e == 1 else f"{s}^{e}")
    parts.extend(atom_str(a) for a in m[1])
    return "·".join(parts)


def expr_str(a: Expr) -> str:
    if not a.terms:
        return "0"
    out: list[str] = []
    for m, c in a.sorted_terms():
        body = mono_str(m)
        if not body:
            s = _fmt_coeff(c)
        elif c == 1:
            s = body
        elif c == -1:
            s = "-" + body
        else:
            s = f"{_fmt_coeff(c)}·{body}"
        out.append(s)
    text = " + ".join(out)
    return text.replace("+ -", "- ")
