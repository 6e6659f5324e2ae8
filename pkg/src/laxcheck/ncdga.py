"""Cyclic trace-words over decorated Lie-algebra valued forms.

Every coefficient is a 4-vector indexed by the parity of the source
dimension d and the signature sign ε_s, so one computation covers all four
convention cases.  Letters carry a base field and up to three decorations
(δ, ⋆, d_A); the automatic normal form expands brackets, resolves ⋆⋆ and
rotates trace words, and the remaining identities are applied by replayable
proof scripts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

from .gca import GcaError

# ---------------------------------------------------------------------------
# convention components and coefficient vectors

COMPONENTS: tuple[tuple[int, int], ...] = ((0, 1), (0, -1), (1, 1), (1, -1))
"""(d mod 2, ε_s) for each coefficient slot."""

Vec = tuple[Fraction, Fraction, Fraction, Fraction]

_F0, _F1 = Fraction(0), Fraction(1)
ONE: Vec = (_F1, _F1, _F1, _F1)
NIL: Vec = (_F0, _F0, _F0, _F0)


def component_index(d_parity: int, eps: int) -> int:
    return COMPONENTS.index((d_parity % 2, 1 if eps > 0 else -1))


def vec_of(fn: Callable[[int, int], int | Fraction]) -> Vec:
    return tuple(Fraction(fn(dp, e)) for dp, e in COMPONENTS)  # type: ignore[return-value]


def vscale(v: Vec, c: Fraction | int) -> Vec:
    return tuple(x * c for x in v)  # type: ignore[return-value]


def vmul(a: Vec, b: Vec) -> Vec:
    return (a[0] * b[0], a[1] * b[1], a[2] * b[2], a[3] * b[3])


def vadd(a: Vec, b: Vec) -> Vec:
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3])


def vsign(bits: Sequence[int]) -> Vec:
    """Sign vector (-1)^bits[i] per component."""
    return tuple(_F1 if b % 2 == 0 else -_F1 for b in bits)  # type: ignore[return-value]


def is_nil(v: Vec) -> bool:
    return not any(v)


EPS: Vec = vec_of(lambda dp, e: e)


class NCError(GcaError):
    """Malformed noncommutative expression."""


class RuleMismatch(NCError):
    """The requested rewrite does not apply at the given address."""


class ScriptStalls(NCError):
    """A proof script ended with a nonzero residual."""


class UnknownRule(NCError):
    """Rule id not in the rule table."""


# ---------------------------------------------------------------------------
# letters

Affine = tuple[int, int]  # a + b·d

BASES: dict[str, tuple[Affine, int]] = {
    "A": ((1, 0), 0),
    "B": ((-2, 1), 0),
    "c": ((0, 0), 1),
    "F": ((2, 0), 0),
    "A†": ((-1, 1), -1),
    "B†": ((2, 0), -1),
    "c†": ((0, 1), -2),
}
BASE_ORDER = ("A", "B", "c", "F", "A†", "B†", "c†")
DECOS = ("δ", "⋆", "dA")
MAX_DECOS = 4


@dataclass(frozen=True, order=False)
class Letter:
    """A base field with decorations listed innermost first."""

    base: str
    decos: tuple[str, ...] = ()

    @property
    def form(self) -> Affine:
        return _letter_form(self)

    @property
    def gh(self) -> int:
        return BASES[self.base][1]

    @property
    def fdF(self) -> int:
        return self.decos.count("δ")

    @property
    def internal(self) -> int:
        return self.gh + self.fdF

    @property
    def parity(self) -> tuple[int, ...]:
        return _letter_parity(self)

    @property
    def key(self) -> tuple:
        return _letter_key(self)

    def __str__(self) -> str:
        return letter_str(self)


@lru_cache(maxsize=None)
def _letter_form(l: Letter) -> Affine:
    a, b = BASES[l.base][0]
    for d in l.decos:
        if d == "⋆":
            a, b = -a, 1 - b
        elif d == "dA":
            a += 1
    return (a, b)


def _form_parity(f: Affine, dp: int) -> int:
    return (f[0] + f[1] * dp) % 2


@lru_cache(maxsize=None)
def _letter_parity(l: Letter) -> tuple[int, ...]:
    f = l.form
    return tuple((_form_parity(f, dp) + l.internal) % 2 for dp, _ in COMPONENTS)


@lru_cache(maxsize=None)
def _letter_key(l: Letter) -> tuple:
    return (BASE_ORDER.index(l.base), tuple(DECOS.index(d) + 1 for d in l.decos))


_DECO_STR = {"δ": "δ", "⋆": "⋆", "dA": "d_A"}


def letter_str(l: Letter) -> str:
    return "".join(_DECO_STR[d] for d in reversed(l.decos)) + l.base


def word_parity(word: Sequence[Letter]) -> tuple[int, ...]:
    out = [0, 0, 0, 0]
    for l in word:
        p = l.parity
        for i in range(4):
            out[i] += p[i]
    return tuple(x % 2 for x in out)


def word_degree(word: Sequence[Letter]) -> tuple[Affine, int, int]:
    a = b = gh = fd = 0
    for l in word:
        fa, fb = l.form
        a, b, gh, fd = a + fa, b + fb, gh + l.gh, fd + l.fdF
    return ((a, b), gh, fd)


def _kdk(k: Affine) -> tuple[int, ...]:
    """k(d−k) mod 2 per component."""
    out = []
    for dp, _ in COMPONENTS:
        kk = _form_parity(k, dp)
        out.append(kk * ((dp - kk) % 2))
    return tuple(out)


# ---------------------------------------------------------------------------
# open (non-traced) expressions

OKey = tuple[int, tuple[Letter, ...]]  # (power of u, word)


@dataclass(frozen=True)
class NCOpen:
    """Linear combination of words; keys are (u-power, word)."""

    terms: Mapping[OKey, Vec] = field(default_factory=dict)

    def __add__(self, other: "NCOpen") -> "NCOpen":
        out = dict(self.terms)
        for k, v in other.terms.items():
            _acc(out, k, v)
        return NCOpen(_clean(out))

    def __neg__(self) -> "NCOpen":
        return NCOpen({k: vscale(v, -1) for k, v in self.terms.items()})

    def __sub__(self, other: "NCOpen") -> "NCOpen":
        return self + (-other)

    def __mul__(self, other: "NCOpen") -> "NCOpen":
        return omul(self, other)

    def scale(self, c: Fraction | int | Vec) -> "NCOpen":
        if isinstance(c, tuple):
            return NCOpen(_clean({k: vmul(v, c) for k, v in self.terms.items()}))
        return NCOpen(_clean({k: vscale(v, c) for k, v in self.terms.items()}))

    def upow(self, n: int) -> "NCOpen":
        return NCOpen({(p + n, w): v for (p, w), v in self.terms.items()})

    def is_zero(self) -> bool:
        return not self.terms

    def component(self, d_parity: int, eps: int) -> "NCOpen":
        i = component_index(d_parity, eps)
        return NCOpen({k: tuple(v[j] if j == i else _F0 for j in range(4)) for k, v in self.terms.items()
                       if v[i]})

    def zero_in(self, d_parity: int, eps: int) -> bool:
        i = component_index(d_parity, eps)
        return all(not v[i] for v in self.terms.values())

    def sorted_keys(self) -> list[OKey]:
        return [k for k, _ in sorted(self.terms.items(), key=_okey_sort)]

    def __str__(self) -> str:
        return _terms_str((((k[0], None, k[1]), v) for k, v in sorted(self.terms.items(), key=_okey_sort)),
                          traced=False)


def _acc(d: dict, k, v: Vec) -> None:
    cur = d.get(k)
    d[k] = v if cur is None else vadd(cur, v)


def _clean(d: dict) -> dict:
    return {k: v for k, v in d.items() if not is_nil(v)}


def _okey_sort(item):
    (p, w), _ = item
    return (p, tuple(l.key for l in w))


OZERO = NCOpen({})


def L(base: str, *decos: str) -> NCOpen:
    """Open expression of a single letter, decorations given innermost first."""
    if base not in BASES:
        raise NCError(f"unknown base field {base}")
    cur = NCOpen({(0, (Letter(base),)): ONE})
    for d in decos:
        cur = _apply_deco_open(cur, d)
    return cur


def ounit() -> NCOpen:
    return NCOpen({(0, ()): ONE})


def oconst(c: Fraction | int, u_power: int = 0) -> NCOpen:
    return NCOpen({(u_power, ()): vscale(ONE, c)}) if c else OZERO


def omul(x: NCOpen, y: NCOpen) -> NCOpen:
    out: dict = {}
    for (p1, w1), v1 in x.terms.items():
        for (p2, w2), v2 in y.terms.items():
            _acc(out, (p1 + p2, w1 + w2), vmul(v1, v2))
    return NCOpen(_clean(out))


def oprod(items: Iterable[NCOpen]) -> NCOpen:
    out = ounit()
    for x in items:
        out = omul(out, x)
    return out


def osum(items: Iterable[NCOpen]) -> NCOpen:
    out: dict = {}
    for x in items:
        for k, v in x.terms.items():
            _acc(out, k, v)
    return NCOpen(_clean(out))


def bracket(x: NCOpen, y: NCOpen) -> NCOpen:
    """Graded commutator [x, y] = xy − (−1)^{|x||y|} yx, termwise."""
    out: dict = {}
    for (p1, w1), v1 in x.terms.items():
        q1 = word_parity(w1)
        for (p2, w2), v2 in y.terms.items():
            q2 = word_parity(w2)
            v = vmul(v1, v2)
            _acc(out, (p1 + p2, w1 + w2), v)
            _acc(out, (p1 + p2, w2 + w1), vmul(v, vsign([1 + a * b for a, b in zip(q1, q2)])))
    return NCOpen(_clean(out))


# ---------------------------------------------------------------------------
# decorations


@lru_cache(maxsize=None)
def apply_deco(l: Letter, deco: str) -> tuple[Vec, Letter] | None:
    """Decorate a letter; None when the result vanishes (δδ)."""
    if deco == "δ":
        # δ commutes with ⋆: keep δ inside trailing stars
        n = len(l.decos)
        j = n
        while j > 0 and l.decos[j - 1] == "⋆":
            j -= 1
        if j > 0 and l.decos[j - 1] == "δ":
            return None
        decos = l.decos[:j] + ("δ",) + l.decos[j:]
        if "δ" in l.decos:
            raise NCError(f"second variation of {letter_str(l)} is not supported")
        return _checked(ONE, Letter(l.base, decos))
    if deco == "⋆":
        if l.decos and l.decos[-1] == "⋆":
            inner = Letter(l.base, l.decos[:-1])
            bits = _kdk(inner.form)
            return (vmul(EPS, vsign(bits)), inner)
        return _checked(ONE, Letter(l.base, l.decos + ("⋆",)))
    if deco == "dA":
        return _checked(ONE, Letter(l.base, l.decos + ("dA",)))
    raise NCError(f"unknown decoration {deco}")


def _checked(v: Vec, l: Letter) -> tuple[Vec, Letter]:
    if len(l.decos) > MAX_DECOS:
        raise NCError(f"more than {MAX_DECOS} decorations on {letter_str(l)}")
    return (v, l)


def _apply_deco_open(x: NCOpen, deco: str) -> NCOpen:
    if deco == "δ":
        return odelta(x)
    if deco == "⋆":
        return ostar(x)
    if deco == "dA":
        return od_A(x)
    raise NCError(deco)


def _letter_open(l: Letter) -> NCOpen:
    return NCOpen({(0, (l,)): ONE})


def ostar(x: NCOpen) -> NCOpen:
    """⋆ of words with exactly one letter of nonzero form degree."""
    out: dict = {}
    for (p, w), v in x.terms.items():
        idx = [i for i, l in enumerate(w) if l.form != (0, 0)]
        if len(idx) != 1:
            raise NCError("⋆ applies only to words with one letter of nonzero form degree")
        j = idx[0]
        res = apply_deco(w[j], "⋆")
        if res is None:
            continue
        sv, nl = res
        after = sum(l.internal for l in w[j + 1:])
        sgn = vsign([dp * after for dp, _ in COMPONENTS])
        _acc(out, (p, w[:j] + (nl,) + w[j + 1:]), vmul(vmul(v, sv), sgn))
    return NCOpen(_clean(out))


# ---------------------------------------------------------------------------
# derivations on letters


@dataclass(eq=False)
class NCDerivation:
    """Graded derivation determined by its values on letters."""

    name: str
    parity: int
    letter_rule: Callable[[Letter], NCOpen]
    _cache: dict = field(default_factory=dict, repr=False)

    def on_letter(self, l: Letter) -> NCOpen:
        hit = self._cache.get(l)
        if hit is None:
            hit = self.letter_rule(l)
            self._cache[l] = hit
        return hit

    def __call__(self, x: NCOpen) -> NCOpen:
        out: dict = {}
        for (p, w), v in x.terms.items():
            running = [0, 0, 0, 0]
            for j, l in enumerate(w):
                img = self.on_letter(l)
                if img.terms:
                    sgn = vsign([self.parity * r for r in running])
                    pre, post = w[:j], w[j + 1:]
                    for (p2, w2), v2 in img.terms.items():
                        _acc(out, (p + p2, pre + w2 + post), vmul(vmul(v, v2), sgn))
                lp = l.parity
                for i in range(4):
                    running[i] += lp[i]
        return NCOpen(_clean(out))


def _deco_rule(deco: str) -> Callable[[Letter], NCOpen]:
    def rule(l: Letter) -> NCOpen:
        res = apply_deco(l, deco)
        if res is None:
            return OZERO
        return NCOpen({(0, (res[1],)): res[0]})

    return rule


D_A = NCDerivation("d_A", 1, _deco_rule("dA"))
DELTA = NCDerivation("δ", 1, _deco_rule("δ"))


def od_A(x: NCOpen) -> NCOpen:
    return D_A(x)


def odelta(x: NCOpen) -> NCOpen:
    return DELTA(x)


def field_derivation(name: str, parity: int, table: Mapping[str, NCOpen],
                     on_delta: Callable[[Letter], NCOpen]) -> NCDerivation:
    """Derivation with images of base fields from ``table`` and a rule for δ-letters.

    Rules: V(⋆X) = ⋆VX, V(d_A X) = (−1)^p d_A VX + [VA, X],
    V(F) = (−1)^p d_A VA.
    """
    sign = -1 if parity else 1

    def rule(l: Letter) -> NCOpen:
        if not l.decos:
            if l.base == "F":
                return open_rewrite(od_A(table.get("A", OZERO)), ("dA-squared",)).scale(sign)
            return table.get(l.base, OZERO)
        outer = l.decos[-1]
        inner = Letter(l.base, l.decos[:-1])
        if outer == "⋆":
            return ostar(der.on_letter(inner))
        if outer == "dA":
            return od_A(der.on_letter(inner)).scale(sign) + bracket(table.get("A", OZERO), _letter_open(inner))
        return on_delta(inner)

    der = NCDerivation(name, parity, rule)
    return der


def vector_field(name: str, shift: int, table: Mapping[str, NCOpen]) -> NCDerivation:
    """Evolutionary vector field acting as its Lie derivative (L_X δ = (−1)^{|X|} δ L_X)."""
    parity = shift % 2
    sign = -1 if parity else 1
    holder: list[NCDerivation] = []

    def on_delta(inner: Letter) -> NCOpen:
        return odelta(holder[0].on_letter(inner)).scale(sign)

    der = field_derivation(name, parity, table, on_delta)
    holder.append(der)
    return der


def contraction(name: str, shift: int, table: Mapping[str, NCOpen]) -> NCDerivation:
    """ι_X for an evolutionary X: ι_X δY = X(Y), zero on δ-free letters."""
    X = vector_field(name, shift, table)
    return field_derivation("ι" + name, (shift + 1) % 2, {}, lambda inner: X.on_letter(inner))


def euler_contraction() -> NCDerivation:
    """ι_E for the ghost-number Euler field: ι_E δY = gh(Y)·Y."""
    return field_derivation("ιE", 1, {}, lambda inner: _letter_open(inner).scale(inner.gh))


# ---------------------------------------------------------------------------
# trace expressions

TKey = tuple[int, str | None, tuple[Letter, ...]]  # (u-power, marker, word)


def _word_key(w: Sequence[Letter]) -> tuple:
    return tuple(l.key for l in w)


def tkey_sort(k: TKey) -> tuple:
    return (k[0], k[1] or "", _word_key(k[2]))


@lru_cache(maxsize=65536)
def canonical_word(word: tuple[Letter, ...]) -> tuple[Vec, tuple[Letter, ...]]:
    """Least rotation of a trace word with its Koszul sign; components forced to 0 by symmetry vanish."""
    n = len(word)
    if n == 0:
        return ONE, word
    pars = [l.parity for l in word]
    best = None
    candidates = []
    for j in range(n):
        rot = word[j:] + word[:j]
        head = [sum(pars[i][c] for i in range(j)) % 2 for c in range(4)]
        tail = [sum(pars[i][c] for i in range(j, n)) % 2 for c in range(4)]
        sgn = vsign([a * b for a, b in zip(head, tail)])
        candidates.append((rot, sgn))
        k = _word_key(rot)
        if best is None or k < best[0]:
            best = (k, rot, sgn)
    _, rot, sgn = best
    mask = list(sgn)
    for other, s2 in candidates:
        if other == rot:
            for c in range(4):
                if s2[c] != sgn[c]:
                    mask[c] = _F0
    return tuple(mask), rot  # type: ignore[return-value]


@dataclass(frozen=True)
class NCExpr:
    """Linear combination of canonical trace words (with optional unexpanded d/δ markers)."""

    terms: Mapping[TKey, Vec] = field(default_factory=dict)

    def __add__(self, other: "NCExpr") -> "NCExpr":
        out = dict(self.terms)
        for k, v in other.terms.items():
            _acc(out, k, v)
        return NCExpr(_clean(out))

    def __neg__(self) -> "NCExpr":
        return NCExpr({k: vscale(v, -1) for k, v in self.terms.items()})

    def __sub__(self, other: "NCExpr") -> "NCExpr":
        return self + (-other)

    def scale(self, c: Fraction | int | Vec) -> "NCExpr":
        if isinstance(c, tuple):
            return NCExpr(_clean({k: vmul(v, c) for k, v in self.terms.items()}))
        return NCExpr(_clean({k: vscale(v, c) for k, v in self.terms.items()}))

    def is_zero(self) -> bool:
        return not self.terms

    def component(self, d_parity: int, eps: int) -> "NCExpr":
        """Terms surviving in one convention case."""
        i = component_index(d_parity, eps)
        return NCExpr({k: tuple(v[j] if j == i else _F0 for j in range(4)) for k, v in self.terms.items()
                       if v[i]})

    def zero_in(self, d_parity: int, eps: int) -> bool:
        i = component_index(d_parity, eps)
        return all(not v[i] for v in self.terms.values())

    def sorted_keys(self) -> list[TKey]:
        return sorted(self.terms, key=tkey_sort)

    def __str__(self) -> str:
        return _terms_str((k, self.terms[k]) for k in self.sorted_keys())


NCZERO = NCExpr({})


def trace(x: NCOpen, marker: str | None = None) -> NCExpr:
    out: dict = {}
    for (p, w), v in x.terms.items():
        sv, cw = canonical_word(w)
        vv = vmul(v, sv)
        if not is_nil(vv):
            _acc(out, (p, marker, cw), vv)
    return NCExpr(_clean(out))


def Tr(*factors: NCOpen) -> NCExpr:
    return trace(oprod(factors))


def nc_normalize(e: NCExpr) -> NCExpr:
    """Re-run the automatic phase (bracket expansion, ⋆⋆, cyclic rotation); idempotent."""
    out: dict = {}
    for (p, m, w), v in e.terms.items():
        opened = oprod(_letter_open_normal(l) for l in w)
        for (p2, w2), v2 in opened.terms.items():
            sv, cw = canonical_word(w2)
            vv = vmul(vmul(v, v2), sv)
            if not is_nil(vv):
                _acc(out, (p + p2, m, cw), vv)
    return NCExpr(_clean(out))


def _letter_open_normal(l: Letter) -> NCOpen:
    cur = _letter_open(Letter(l.base))
    for d in l.decos:
        cur = _apply_deco_open(cur, d)
    return cur


def _word_open(w: Sequence[Letter]) -> NCOpen:
    return NCOpen({(0, tuple(w)): ONE})


def tr_apply(der: NCDerivation, e: NCExpr) -> NCExpr:
    """Apply a letter derivation inside every trace (markers must be expanded first)."""
    out = NCZERO
    for (p, m, w), v in e.terms.items():
        if m is not None:
            raise NCError("expand marked terms before applying further operators")
        out = out + trace(der(_word_open(w)).upow(p)).scale(v)
    return out


def tr_d(e: NCExpr) -> NCExpr:
    """d Tr[w] = Tr[d_A w]."""
    return tr_apply(D_A, e)


def tr_delta(e: NCExpr) -> NCExpr:
    return tr_apply(DELTA, e)


def nc_differential(op: str, e: NCExpr, theory: "NCTheory | None" = None, expand: bool = True) -> NCExpr:
    """Apply d, δ, ι_Q or L_Q to a trace expression.

    With ``expand=False`` d and δ only mark each term; the leibniz-d and
    leibniz-delta rules expand marked terms.
    """
    if op in ("d", "δ") and not expand:
        out: dict = {}
        for (p, m, w), v in e.terms.items():
            if m is not None:
                raise NCError("term already marked")
            _acc(out, (p, op, w), v)
        return NCExpr(out)
    if op == "d":
        return tr_d(e)
    if op == "δ":
        return tr_delta(e)
    if theory is None:
        raise NCError(f"{op} needs a theory")
    if op == "ι_Q":
        return tr_apply(theory.iota_Q(), e)
    if op == "L_Q":
        return tr_apply(theory.vf(), e)
    raise NCError(f"unknown operator {op}")


# ---------------------------------------------------------------------------
# morphisms


@dataclass(eq=False)
class NCMorphism:
    """Algebra map fixing A (hence commuting with d_A and fixing F), given on base fields."""

    images: Mapping[str, NCOpen]
    name: str = "φ"
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if "A" in self.images and self.images["A"].terms != {(0, (Letter("A"),)): ONE}:
            raise NCError("morphisms must fix the connection")

    def on_letter(self, l: Letter) -> NCOpen:
        hit = self._cache.get(l)
        if hit is None:
            if not l.decos:
                hit = self.images.get(l.base, _letter_open(l)) if l.base != "F" else _letter_open(l)
            else:
                inner = self.on_letter(Letter(l.base, l.decos[:-1]))
                hit = _apply_deco_open(inner, l.decos[-1])
            self._cache[l] = hit
        return hit

    def open(self, x: NCOpen) -> NCOpen:
        out = OZERO
        for (p, w), v in x.terms.items():
            out = out + oprod(self.on_letter(l) for l in w).upow(p).scale(v)
        return out

    def __call__(self, e: NCExpr) -> NCExpr:
        out = NCZERO
        for (p, m, w), v in e.terms.items():
            if m is not None:
                raise NCError("expand marked terms before applying a morphism")
            out = out + trace(oprod(self.on_letter(l) for l in w).upow(p)).scale(v)
        return out


def compose(outer: NCMorphism, inner: NCMorphism, name: str = "∘") -> NCMorphism:
    """Apply ``outer`` first, then ``inner`` to the images."""
    bases = set(outer.images) | set(inner.images)
    return NCMorphism({b: inner.open(outer.on_letter(Letter(b))) for b in bases if b != "A"}, name)


# s-parameter calculus on u = e^{-s}


def o_s_derivative(x: NCOpen) -> NCOpen:
    return NCOpen(_clean({(p, w): vscale(v, -p) for (p, w), v in x.terms.items()}))


def o_s_limit(x: NCOpen, endpoint: str) -> NCOpen:
    out: dict = {}
    for (p, w), v in x.terms.items():
        if p < 0:
            from .varcalc import SingularLimit

            raise SingularLimit(f"negative power of u in {x}")
        if endpoint in ("inf", "∞"):
            if p == 0:
                _acc(out, (0, w), v)
        elif endpoint == "0":
            _acc(out, (0, w), v)
        else:
            raise ValueError(endpoint)
    return NCOpen(_clean(out))


# ---------------------------------------------------------------------------
# rewrite rules

RULES = ("bracket-expand", "trace-cyclic", "trace-of-bracket-zero", "star-swap", "star-involution", "bianchi",
         "dA-squared", "delta-F", "delta-dA-commute", "leibniz-d", "leibniz-delta")
AUTOMATIC = ("bracket-expand", "trace-cyclic", "trace-of-bracket-zero", "star-involution")


def _rebuild(core: NCOpen, outer: Sequence[str]) -> NCOpen:
    for d in outer:
        core = _apply_deco_open(core, d)
    return core


def _letter_rewrite(rule: str, l: Letter) -> NCOpen | None:
    """Rewrite the innermost matching decoration pattern of one letter."""
    ds = l.decos
    if rule == "delta-F":
        if l.base == "F" and ds[:1] == ("δ",):
            core = -od_A(L("A", "δ"))
            return _rebuild(core, ds[1:])
        return None
    if rule == "bianchi":
        if l.base == "F" and ds[:1] == ("dA",):
            return OZERO
        return None
    for i in range(len(ds) - 1):
        pair = ds[i:i + 2]
        Y = Letter(l.base, ds[:i])
        if rule == "dA-squared" and pair == ("dA", "dA"):
            return _rebuild(bracket(L("F"), _letter_open(Y)), ds[i + 2:])
        if rule == "delta-dA-commute" and pair == ("dA", "δ"):
            core = -od_A(odelta(_letter_open(Y))) + bracket(L("A", "δ"), _letter_open(Y))
            return _rebuild(core, ds[i + 2:])
    return None


def open_rewrite(x: NCOpen, rules: Sequence[str], max_rounds: int = 50) -> NCOpen:
    """Apply letter rules (not star-swap) everywhere in an open expression until none matches."""
    cur = x
    for _ in range(max_rounds):
        changed = False
        out = OZERO
        for (p, w), v in cur.terms.items():
            new = None
            for j, l in enumerate(w):
                for rule in rules:
                    img = _letter_rewrite(rule, l)
                    if img is not None:
                        new = (_word_open(w[:j]) * img * _word_open(w[j + 1:])).upow(p)
                        break
                if new is not None:
                    break
            if new is None:
                out = out + NCOpen({(p, w): v})
            else:
                changed = True
                out = out + new.scale(v)
        cur = out
        if not changed:
            return cur
    raise NCError("open rewriting did not settle")


LETTER_RULES = ("delta-F", "delta-dA-commute", "dA-squared", "bianchi")


def _term_rewrite(rule: str, p: int, w: tuple[Letter, ...], position: int) -> NCExpr | None:
    if rule == "star-swap":
        return _star_swap(p, w, position)
    img = _letter_rewrite(rule, w[position])
    if img is None:
        return None
    return trace((_word_open(w[:position]) * img * _word_open(w[position + 1:])).upow(p))


def swap_word(w: tuple[Letter, ...], j: int) -> tuple[Vec, tuple[Letter, ...]] | None:
    """Move the ⋆ of letter ``j`` onto its partner: the unique other letter of the same
    nonzero form degree, all remaining letters being 0-forms.  Valid on open words."""
    sl = w[j]
    if not sl.decos or sl.decos[-1] != "⋆":
        return None
    Y = Letter(sl.base, sl.decos[:-1])
    k = Y.form
    if k == (0, 0):
        return None
    partners = [i for i, l in enumerate(w) if i != j and l.form == k]
    if len(partners) != 1:
        return None
    i = partners[0]
    if any(l.form != (0, 0) for n, l in enumerate(w) if n not in (i, j)):
        return None
    lo, hi = min(i, j), max(i, j)
    between = sum(l.internal for l in w[lo + 1:hi + 1])
    bits = [dp * between + kk for (dp, _), kk in zip(COMPONENTS, _kdk(k))]
    res = apply_deco(w[i], "⋆")
    if res is None:
        return (NIL, w)
    sx, starred = res
    new = list(w)
    new[i], new[j] = starred, Y
    return vmul(vsign(bits), sx), tuple(new)


def _fixed_mask(c: Vec) -> Vec:
    """A word sent to c·itself vanishes wherever c ≠ 1."""
    return tuple(_F1 if x == _F1 else _F0 for x in c)  # type: ignore[return-value]


def _star_swap(p: int, w: tuple[Letter, ...], j: int) -> NCExpr | None:
    res = swap_word(w, j)
    if res is None:
        return None
    return trace(NCOpen({(p, res[1]): res[0]}))


def open_normal(x: NCOpen) -> NCOpen:
    """Letter rules to a fixpoint, then star-swaps that lower the word key."""
    return open_swaps(open_rewrite(x, LETTER_RULES))


def open_swaps(x: NCOpen) -> NCOpen:
    """Apply key-lowering star-swaps everywhere until none is left."""
    cur = x
    for _ in range(50):
        changed = False
        out: dict = {}
        for (p, w), v in cur.terms.items():
            best = None
            mask = ONE
            for j in range(len(w)):
                res = swap_word(w, j)
                if res is not None and res[1] == w:
                    mask = vmul(mask, _fixed_mask(res[0]))
                elif res is not None and _word_key(res[1]) < _word_key(w):
                    if best is None or _word_key(res[1]) < _word_key(best[1]):
                        best = res
            if mask != ONE:
                changed = True
                if not is_nil(vmul(v, mask)):
                    _acc(out, (p, w), vmul(v, mask))
            elif best is None:
                _acc(out, (p, w), v)
            else:
                changed = True
                _acc(out, (p, best[1]), vmul(v, best[0]))
        cur = NCOpen(_clean(out))
        if not changed:
            return cur
    raise NCError("open normalisation did not settle")


def _expand_marker(p: int, m: str, w: tuple[Letter, ...]) -> NCExpr:
    der = D_A if m == "d" else DELTA
    return trace(der(_word_open(w)).upow(p))


def nc_apply_rule(e: NCExpr, rule: str, term: int | str = "*", position: int | str = "*") -> NCExpr:
    """Apply one rule.  ``term`` indexes the sorted terms and ``position`` the letter offset.

    Wildcards apply the rule everywhere it matches, repeating until no match
    remains; for star-swap a wildcard step is taken only if it lowers the
    canonical key of the term.
    """
    if rule not in RULES:
        raise UnknownRule(rule)
    if rule in AUTOMATIC:
        return nc_normalize(e)
    if term == "*" or position == "*":
        return _apply_wild(e, rule, term, position)
    keys = e.sorted_keys()
    if not isinstance(term, int) or not 0 <= term < len(keys):
        raise RuleMismatch(f"{rule}: no term {term}")
    key = keys[term]
    p, m, w = key
    v = e.terms[key]
    if rule in ("leibniz-d", "leibniz-delta"):
        want = "d" if rule == "leibniz-d" else "δ"
        if m != want:
            raise RuleMismatch(f"{rule}: term {term} is not marked {want}")
        new = _expand_marker(p, m, w)
    else:
        if m is not None:
            raise RuleMismatch(f"{rule}: term {term} is marked")
        if not isinstance(position, int) or not 0 <= position < len(w):
            raise RuleMismatch(f"{rule}: no letter {position} in term {term}")
        new = _term_rewrite(rule, p, w, position)
        if new is None:
            raise RuleMismatch(f"{rule} does not match {letter_str(w[position])} in term {term}")
    rest = dict(e.terms)
    del rest[key]
    return NCExpr(rest) + new.scale(v)


def _apply_wild(e: NCExpr, rule: str, term, position, max_rounds: int = 200) -> NCExpr:
    cur = e
    for _ in range(max_rounds):
        changed = False
        keys = cur.sorted_keys()
        pick = keys if term == "*" else [keys[term]] if isinstance(term, int) and 0 <= term < len(keys) else []
        acc = NCZERO
        untouched = dict(cur.terms)
        for key in pick:
            p, m, w = key
            v = cur.terms[key]
            new = None
            if rule in ("leibniz-d", "leibniz-delta"):
                want = "d" if rule == "leibniz-d" else "δ"
                if m == want:
                    new = _expand_marker(p, m, w)
            elif m is None:
                spots = range(len(w)) if position == "*" else [position] if isinstance(position, int) else []
                if rule == "star-swap":
                    new = _best_swap(p, w, spots)
                else:
                    for j in spots:
                        if 0 <= j < len(w):
                            new = _term_rewrite(rule, p, w, j)
                            if new is not None:
                                break
            if new is not None:
                changed = True
                del untouched[key]
                acc = acc + new.scale(v)
        cur = NCExpr(untouched) + acc
        if not changed:
            return cur
    raise NCError(f"{rule}: wildcard application did not settle")


def _best_swap(p: int, w: tuple[Letter, ...], spots) -> NCExpr | None:
    own = (p, _word_key(w))
    best = None
    for j in spots:
        if not 0 <= j < len(w):
            continue
        new = _star_swap(p, w, j)
        if new is None or len(new.terms) != 1:
            if new is not None and not new.terms:
                return new
            continue
        (k,) = new.terms
        kk = (k[0], _word_key(k[2]))
        if kk == own:
            mask = _fixed_mask(new.terms[k])
            if mask != ONE:
                return NCExpr({k: mask}) if not is_nil(mask) else NCExpr({})
            continue
        if kk < own and (best is None or kk < best[0]):
            best = (kk, new)
    return None if best is None else best[1]


# ---------------------------------------------------------------------------
# proof scripts


@dataclass(frozen=True)
class ScriptStep:
    rule: str
    term: int | str = "*"
    position: int | str = "*"


@dataclass(frozen=True)
class ProofScript:
    name: str
    goal: str
    steps: tuple[ScriptStep, ...]


@dataclass
class ScriptReport:
    """Outcome of replaying a script: per-component verdicts and the audit trail."""

    name: str
    goal: str
    residual: NCExpr | NCOpen
    trail: list[tuple[str, NCExpr | NCOpen]]
    degree_consistent: bool

    def passed(self, d_parity: int | None = None, eps: int | None = None) -> bool:
        if not self.degree_consistent:
            return False
        if d_parity is None:
            return self.residual.is_zero()
        return self.residual.zero_in(d_parity, eps if eps is not None else 1)


def degree_consistent(e: NCExpr | NCOpen) -> bool:
    if isinstance(e, NCOpen):
        return len({word_degree(w) for (_, w) in e.terms}) <= 1
    degs = {(word_degree(w), m) for (_, m, w) in e.terms}
    return len({d for d, _ in degs}) <= 1


def open_apply_rule(x: NCOpen, rule: str, term: int | str = "*", position: int | str = "*") -> NCOpen:
    """One script step on an open (untraced) expression.

    Open words carry no markers and no cyclic freedom, so the automatic and
    Leibniz rules are identities here; explicit addressing uses the sorted
    term index and letter offset as for traces.
    """
    if rule not in RULES:
        raise UnknownRule(rule)
    if rule in AUTOMATIC or rule in ("leibniz-d", "leibniz-delta"):
        return x
    if term == "*" and position == "*":
        return open_swaps(x) if rule == "star-swap" else open_rewrite(x, (rule,))
    keys = x.sorted_keys()
    if not isinstance(term, int) or not 0 <= term < len(keys):
        raise RuleMismatch(f"{rule}: no term {term}")
    p, w = keys[term]
    if not isinstance(position, int) or not 0 <= position < len(w):
        raise RuleMismatch(f"{rule}: no letter {position} in term {term}")
    v = x.terms[(p, w)]
    if rule == "star-swap":
        res = swap_word(w, position)
        if res is None:
            raise RuleMismatch(f"star-swap does not match {letter_str(w[position])} in term {term}")
        new = NCOpen({(p, res[1]): res[0]})
    else:
        img = _letter_rewrite(rule, w[position])
        if img is None:
            raise RuleMismatch(f"{rule} does not match {letter_str(w[position])} in term {term}")
        new = (_word_open(w[:position]) * img * _word_open(w[position + 1:])).upow(p)
    rest = dict(x.terms)
    del rest[(p, w)]
    return NCOpen(rest) + new.scale(v)


def nc_check_script(goal: tuple[NCExpr, NCExpr] | tuple[NCOpen, NCOpen], script: ProofScript,
                    strict: bool = False) -> ScriptReport:
    """Replay ``script`` on lhs − rhs; PASS iff the residual vanishes."""
    is_open = isinstance(goal[0], NCOpen)
    cur = goal[0] - goal[1] if is_open else nc_normalize(goal[0] - goal[1])
    trail = [("start", cur)]
    consistent = degree_consistent(cur)
    for step in script.steps:
        if is_open:
            cur = open_apply_rule(cur, step.rule, step.term, step.position)
        else:
            cur = nc_apply_rule(cur, step.rule, step.term, step.position)
        trail.append((f"{step.rule} {step.term} {step.position}", cur))
        consistent = consistent and degree_consistent(cur)
    report = ScriptReport(script.name, script.goal, cur, trail, consistent)
    if strict and not cur.is_zero():
        raise ScriptStalls(f"{script.name}: residual {cur}")
    return report


# ---------------------------------------------------------------------------
# theories


@dataclass(eq=False)
class NCTheory:
    """A lax theory in the trace-word calculus; codimension k lives in form degree d − k."""

    name: str
    fields: tuple[str, ...]
    Q: Mapping[str, NCOpen]
    theta: tuple[NCExpr, ...]
    L: tuple[NCExpr, ...]
    _vf: NCDerivation | None = field(default=None, repr=False)
    _iota: NCDerivation | None = field(default=None, repr=False)

    def vf(self) -> NCDerivation:
        if self._vf is None:
            self._vf = vector_field("Q", 1, self.Q)
        return self._vf

    def iota_Q(self) -> NCDerivation:
        if self._iota is None:
            self._iota = contraction("Q", 1, self.Q)
        return self._iota

    def codims(self) -> int:
        return max(len(self.theta), len(self.L))

    def theta_k(self, k: int) -> NCExpr:
        return self.theta[k] if k < len(self.theta) else NCZERO

    def L_k(self, k: int) -> NCExpr:
        return self.L[k] if k < len(self.L) else NCZERO

    def field_gh(self) -> dict[str, int]:
        return {f: BASES[f][1] for f in self.fields}


@dataclass(eq=False)
class NCPackage:
    name: str
    theory1: NCTheory
    theory2: NCTheory
    phi: NCMorphism
    psi: NCMorphism
    beta1: tuple[NCExpr, ...]
    f1: tuple[NCExpr, ...]
    beta2: tuple[NCExpr, ...]
    f2: tuple[NCExpr, ...]
    R: Mapping[str, NCOpen]
    flow: Mapping[str, NCOpen]
    chi: Mapping[str, NCOpen]
    hchi: Mapping[str, NCOpen]
    antiderivatives: Mapping[str, NCOpen]
    classical: Mapping[str, NCOpen]

    def R_vf(self) -> NCDerivation:
        return vector_field("R", -1, self.R)

    def flow_morphism(self) -> NCMorphism:
        return NCMorphism(dict(self.flow), "χs")

    def zeta1(self) -> tuple[NCExpr, ...]:
        return tuple(tr_apply(self.theory1.iota_Q(), b) for b in self.beta1)

    def zeta2(self) -> tuple[NCExpr, ...]:
        return tuple(tr_apply(self.theory2.iota_Q(), b) for b in self.beta2)


def _half(x):
    return x.scale(Fraction(1, 2))


def _ym1() -> NCTheory:
    A, B, c = L("A"), L("B"), L("c")
    Ad, Bd, cd = L("A†"), L("B†"), L("c†")
    F = L("F")
    Q = {
        "A": od_A(c),
        "B": bracket(c, B),
        "c": _half(bracket(c, c)),
        "A†": od_A(B) + bracket(c, Ad),
        "B†": F - ostar(B).scale(EPS) + bracket(c, Bd),
        "c†": od_A(Ad) + bracket(c, cd) + bracket(Bd, B),
    }
    dA, dB, dc = L("A", "δ"), L("B", "δ"), L("c", "δ")
    theta = (
        Tr(Ad, dA) + Tr(Bd, dB) + Tr(cd, dc),
        Tr(B, dA) + Tr(Ad, dc),
        Tr(B, dc),
    )
    Lag = (
        Tr(B, F) - _half(Tr(B, ostar(B))).scale(EPS) + Tr(Ad, od_A(c)) + Tr(Bd, bracket(c, B))
        + _half(Tr(cd, bracket(c, c))),
        Tr(B, od_A(c)) + _half(Tr(Ad, bracket(c, c))),
        _half(Tr(B, bracket(c, c))),
    )
    return NCTheory("ym1", ("A", "B", "c", "A†", "B†", "c†"), Q, theta, Lag)


def _ym2() -> NCTheory:
    A, c, Ad, cd, F = L("A"), L("c"), L("A†"), L("c†"), L("F")
    sF = ostar(F)
    Q = {
        "A": od_A(c),
        "c": _half(bracket(c, c)),
        "A†": od_A(sF) + bracket(c, Ad),
        "c†": od_A(Ad) + bracket(c, cd),
    }
    dA, dc = L("A", "δ"), L("c", "δ")
    theta = (
        Tr(Ad, dA) + Tr(cd, dc),
        Tr(dA, sF) + Tr(Ad, dc),
        Tr(sF, dc),
    )
    Lag = (
        _half(Tr(F, sF)) + Tr(Ad, od_A(c)) + _half(Tr(cd, bracket(c, c))),
        Tr(sF, od_A(c)) + _half(Tr(Ad, bracket(c, c))),
        _half(Tr(sF, bracket(c, c))),
    )
    return NCTheory("ym2", ("A", "c", "A†", "c†"), Q, theta, Lag)


@lru_cache(maxsize=None)
def ym_theory(name: str) -> NCTheory:
    if name == "ym1":
        return _ym1()
    if name == "ym2":
        return _ym2()
    raise NCError(name)


@lru_cache(maxsize=None)
def ym_package() -> NCPackage:
    t1, t2 = ym_theory("ym1"), ym_theory("ym2")
    B, Bd, Ad, cd, F = L("B"), L("B†"), L("A†"), L("c†"), L("F")
    sF, sBd = ostar(F), ostar(Bd)
    u = oconst(1, 1)
    one = ounit()
    phi = NCMorphism({"B": sF, "B†": OZERO}, "φ")
    psi = NCMorphism({"A†": Ad - od_A(sBd), "c†": cd - _half(bracket(Bd, sBd))}, "ψ")
    beta1 = (
        _half(Tr(Bd, ostar(L("B†", "δ")))),
        Tr(sBd, L("A", "δ")),
        Tr(sBd, L("c", "δ")),
    )
    f1 = (_half(Tr(Bd, B - sF)), NCZERO, NCZERO)
    R = {"B": sBd}
    flow = {
        "A†": Ad + (u - one) * od_A(sBd),
        "B": u * B - (u - one) * sF,
        "B†": u * Bd,
        "c†": cd + _half((u * u - one) * bracket(Bd, sBd)),
    }
    chi = {"A†": Ad - od_A(sBd), "B": sF, "B†": OZERO, "c†": cd - _half(bracket(Bd, sBd))}
    hchi = {"B": sBd}
    anti = {"B": -(u * sBd)}
    classical = {"B": sF, "A†": OZERO, "B†": OZERO, "c†": OZERO, "c": OZERO}
    return NCPackage("ym", t1, t2, phi, psi, beta1, f1, (NCZERO,) * 3, (NCZERO,) * 3, R, flow, chi, hchi,
                     anti, classical)


# ---------------------------------------------------------------------------
# printing


def _vec_str(v: Vec) -> str:
    if v[0] == v[1] == v[2] == v[3]:
        return _frac_str(v[0])
    return "⟨" + ",".join(_frac_str(x) for x in v) + "⟩"


def _frac_str(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def word_str(w: Sequence[Letter]) -> str:
    return " ".join(letter_str(l) for l in w)


def _terms_str(items, traced: bool = True) -> str:
    parts = []
    for (p, m, w), v in items:
        body = f"Tr[{word_str(w)}]" if traced else f"({word_str(w)})"
        if m is not None:
            body = f"{m}{body}"
        upart = "" if p == 0 else ("u" if p == 1 else f"u^{p}") + "·"
        parts.append(f"{_vec_str(v)}·{upart}{body}")
    return " + ".join(parts) if parts else "0"
