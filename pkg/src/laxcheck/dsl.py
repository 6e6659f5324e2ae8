"""Theory files: s-expression surface syntax for coordinate theories.

    (theory NAME (dim-M 1) (target-dim N) (constants E m) (functions (g q))
      (field q :gh 0 :tensor 0) (field q+ :gh -1 :partner q) ...
      (define T EXPR :tensor 2)
      (ghost xi)
      (Q (FIELD EXPR) ...) (gamma (FIELD EXPR) ...) (koszul (FIELD EXPR) ...)
      (theta (codim K EXPR) ...) (L (codim K EXPR) ...))

Expressions: numbers, declared names, ``dt``, ``u``, ``(jet f k)``,
``(var f k)``, ``(fun g q k)``, ``(sqrt X)``, ``(+ ...)``, ``(- ...)``,
``(^ X n)`` and ordered graded products ``(* ...)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping

from .gca import (
    DT,
    U,
    Atom,
    Degree,
    Expr,
    GcaError,
    Kind,
    A,
    C,
    const,
    declare_invertible,
    def_tensor,
    define,
    definition,
    degree_of,
    eprod,
    esum,
    fun,
    jet,
    rad,
    var,
)
from .sexpr import NOSPAN, Num, SexpError, SList, Span, Str, Sym, dump, read_all
from .theories import FieldDecl, Theory


class DslError(Exception):
    """A theory, plan or script file was rejected; carries the source span."""

    def __init__(self, message: str, span: Span | None = NOSPAN):
        span = span or NOSPAN
        super().__init__(f"{span}: {message}" if span != NOSPAN else message)
        self.message = message
        self.span = span


class DslSyntaxError(DslError):
    """Malformed s-expression or form."""


class UndeclaredField(DslError):
    """A name in an expression does not resolve to a declared atom."""


class DegreeError(DslError):
    """Declared or computed degrees are inconsistent."""


# ---------------------------------------------------------------------------
# printing


def _atom_node(a: Atom) -> str:
    if a.kind is Kind.JET:
        return a.name if a.order == 0 else f"(jet {a.name} {a.order})"
    if a.kind is Kind.VAR:
        return f"(var {a.name})" if a.order == 0 else f"(var {a.name} {a.order})"
    if a.kind is Kind.DT:
        return "dt"
    if a.kind is Kind.FUN:
        return f"(fun {a.name} {a.base} {a.order})"
    if a.kind is Kind.RAD:
        return f"(sqrt {_atom_node(a.base)})"
    return a.name


def _num(c: Fraction) -> str:
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def expr_to_text(x: Expr) -> str:
    """Canonical text; monomials keep the stored factor order, so signs survive a round trip."""
    monos = []
    for (evens, odds), c in x.sorted_terms():
        factors = [_atom_node(a) if e == 1 else f"(^ {_atom_node(a)} {e})" for a, e in evens]
        factors += [_atom_node(a) for a in odds]
        if c != 1 or not factors:
            factors.insert(0, _num(c))
        monos.append(factors[0] if len(factors) == 1 else "(* " + " ".join(factors) + ")")
    if not monos:
        return "0"
    return monos[0] if len(monos) == 1 else "(+ " + " ".join(monos) + ")"


def _defs_in(xs) -> list[Atom]:
    """Definitional atoms reachable from ``xs``, dependencies first."""
    order: list[Atom] = []
    seen: set[Atom] = set()

    def visit(a: Atom) -> None:
        if a.kind is Kind.RAD:
            visit(a.base)
            return
        if a.kind is not Kind.DEF or a in seen:
            return
        seen.add(a)
        for b in sorted(definition(a).atoms()):
            visit(b)
        order.append(a)

    for x in xs:
        for a in sorted(x.atoms()):
            visit(a)
    return order


def print_theory(t: Theory) -> str:
    """Canonical theory file text."""
    exprs = list(t.Q.values()) + list(t.theta) + list(t.L)
    exprs += list((t.gamma or {}).values()) + list((t.koszul or {}).values())
    lines = [f"(theory {t.name}", f"  (dim-M {t.dim_m})", f"  (target-dim {t.target_dim})"]
    if t.constants:
        lines.append("  (constants " + " ".join(t.constants) + ")")
    if t.functions:
        lines.append("  (functions " + " ".join(f"({g} {q})" for g, q in t.functions) + ")")
    for f in t.fields:
        opts = f" :gh {f.gh}"
        if f.tensor is not None:
            opts += f" :tensor {_num(Fraction(f.tensor))}"
        if f.partner is not None:
            opts += f" :partner {f.partner}"
        if f.invertible:
            opts += " :invertible"
        lines.append(f"  (field {f.name}{opts})")
    for d in _defs_in(exprs):
        opts = ""
        tn = def_tensor(d)
        if tn is not None:
            opts += f" :tensor {_num(tn)}"
        if not d.invertible:
            opts += " :non-invertible"
        lines.append(f"  (define {d.name} {expr_to_text(definition(d))}{opts})")
    if t.ghost is not None:
        lines.append(f"  (ghost {t.ghost})")
    for slot, table in (("Q", t.Q), ("gamma", t.gamma), ("koszul", t.koszul)):
        if table is None:
            continue
        names = [f.name for f in t.fields if f.name in table]
        body = "".join(f"\n    ({n} {expr_to_text(table[n])})" for n in names)
        lines.append(f"  ({slot}{body})")
    for slot, comps in (("theta", t.theta), ("L", t.L)):
        body = "".join(f"\n    (codim {k} {expr_to_text(c)})" for k, c in enumerate(comps))
        lines.append(f"  ({slot}{body})")
    return "\n".join(lines) + ")\n"


def same_theory(a: Theory, b: Theory) -> bool:
    """Structural equality of the declared data."""
    keys = ("name", "fields", "target_dim", "dim_m", "constants", "ghost", "functions", "theta", "L")
    if any(getattr(a, k) != getattr(b, k) for k in keys):
        return False
    return all(_table(getattr(a, k)) == _table(getattr(b, k)) for k in ("Q", "gamma", "koszul"))


def _table(t: Mapping[str, Expr] | None):
    return None if t is None else dict(t)


# ---------------------------------------------------------------------------
# parsing


@dataclass
class _Scope:
    fields: dict[str, FieldDecl]
    names: dict[str, Atom]
    functions: dict[str, str]


def _sym(node, what: str) -> str:
    if not isinstance(node, Sym):
        raise DslSyntaxError(f"expected {what}", getattr(node, "span", NOSPAN))
    return node.name


def _int(node, what: str) -> int:
    if not isinstance(node, Num) or node.value.denominator != 1:
        raise DslSyntaxError(f"expected integer {what}", getattr(node, "span", NOSPAN))
    return int(node.value)


def _options(items, span: Span, flags: tuple[str, ...], valued: tuple[str, ...]) -> dict[str, object]:
    out: dict[str, object] = {}
    i = 0
    while i < len(items):
        k = items[i]
        if not isinstance(k, Sym) or not k.name.startswith(":"):
            raise DslSyntaxError("expected a :keyword", getattr(k, "span", span))
        key = k.name[1:]
        if key in out:
            raise DslSyntaxError(f"duplicate option :{key}", k.span)
        if key in flags:
            out[key] = True
            i += 1
        elif key in valued:
            if i + 1 >= len(items):
                raise DslSyntaxError(f":{key} needs a value", k.span)
            out[key] = items[i + 1]
            i += 2
        else:
            raise DslSyntaxError(f"unknown option :{key}", k.span)
    return out


def parse_expr(node, scope: _Scope) -> Expr:
    if isinstance(node, Num):
        return C(node.value)
    if isinstance(node, Sym):
        return A(_resolve(node, scope))
    if isinstance(node, Str):
        raise DslSyntaxError("strings are not expressions", node.span)
    head = node.head()
    args = node.items[1:]
    if head in ("jet", "var"):
        if len(args) not in (1, 2):
            raise DslSyntaxError(f"({head} FIELD [ORDER])", node.span)
        name = _sym(args[0], "field name")
        decl = scope.fields.get(name)
        if decl is None:
            raise UndeclaredField(f"undeclared field {name}", args[0].span)
        k = _int(args[1], "jet order") if len(args) == 2 else 0
        if k < 0:
            raise DslSyntaxError("jet order must be non-negative", args[1].span)
        return A((jet if head == "jet" else var)(name, k, decl.gh))
    if head == "fun":
        if len(args) != 3:
            raise DslSyntaxError("(fun NAME ARG ORDER)", node.span)
        g, q = _sym(args[0], "function name"), _sym(args[1], "argument field")
        if scope.functions.get(g) != q:
            raise UndeclaredField(f"undeclared function {g}({q})", args[0].span)
        k = _int(args[2], "derivative order")
        if k < 0:
            raise DslSyntaxError("derivative order must be non-negative", args[2].span)
        return A(fun(g, q, k))
    if head == "sqrt":
        if len(args) != 1 or not isinstance(args[0], Sym):
            raise DslSyntaxError("(sqrt NAME)", node.span)
        try:
            return A(rad(_resolve(args[0], scope)))
        except GcaError as exc:
            raise DegreeError(str(exc), args[0].span) from None
    if head in ("+", "-", "*"):
        xs = [parse_expr(a, scope) for a in args]
        if head == "+":
            return esum(xs)
        if head == "*":
            return eprod(xs)
        if not xs:
            raise DslSyntaxError("(- X ...) needs an argument", node.span)
        return -xs[0] if len(xs) == 1 else xs[0] - esum(xs[1:])
    if head == "^":
        if len(args) != 2:
            raise DslSyntaxError("(^ X N)", node.span)
        base = parse_expr(args[0], scope)
        n = _int(args[1], "exponent")
        try:
            return base ** n
        except GcaError as exc:
            raise DegreeError(str(exc), node.span) from None
    raise DslSyntaxError(f"unknown expression form {head}", node.span)


def _resolve(node: Sym, scope: _Scope) -> Atom:
    name = node.name
    if name in scope.fields:
        return jet(name, 0, scope.fields[name].gh)
    if name in scope.names:
        return scope.names[name]
    raise UndeclaredField(f"undeclared name {name}", node.span)


_HEADER = ("dim-M", "target-dim", "constants", "functions")


def parse_theory_form(form, extra_scope: Mapping[str, Atom] | None = None) -> Theory:
    """Build a Theory from a parsed ``(theory ...)`` form."""
    if not isinstance(form, SList) or form.head() != "theory" or len(form.items) < 2:
        raise DslSyntaxError("expected (theory NAME ...)", getattr(form, "span", NOSPAN))
    name = _sym(form.items[1], "theory name")
    dim_m, target = 1, 1
    constants: list[str] = []
    functions: list[tuple[str, str]] = []
    fields: dict[str, FieldDecl] = {}
    field_spans: dict[str, Span] = {}
    names: dict[str, Atom] = {"dt": DT, "u": U}
    names.update(extra_scope or {})
    scope = _Scope(fields, names, {})
    ghost: str | None = None
    ghost_span = NOSPAN
    tables: dict[str, dict[str, Expr] | None] = {"Q": None, "gamma": None, "koszul": None}
    comps: dict[str, tuple[Expr, ...]] = {"theta": (), "L": ()}
    comp_spans: dict[str, list[Span]] = {"theta": [], "L": []}
    seen: set[str] = set()
    for sub in form.items[2:]:
        if not isinstance(sub, SList) or sub.head() is None:
            raise DslSyntaxError("expected a (keyword ...) form", getattr(sub, "span", NOSPAN))
        head, args = sub.head(), sub.items[1:]
        if head in _HEADER + ("ghost", "Q", "gamma", "koszul", "theta", "L"):
            if head in seen:
                raise DslSyntaxError(f"duplicate ({head} ...)", sub.span)
            seen.add(head)
        if head == "dim-M":
            dim_m = _int(args[0], "dimension") if len(args) == 1 else _bad(sub)
            if dim_m != 1:
                raise DegreeError("coordinate theories live on a 1-dimensional source", sub.span)
        elif head == "target-dim":
            target = _int(args[0], "dimension") if len(args) == 1 else _bad(sub)
        elif head == "constants":
            for a in args:
                c = _sym(a, "constant name")
                constants.append(c)
                names[c] = const(c)
        elif head == "functions":
            for a in args:
                if not isinstance(a, SList) or len(a.items) != 2:
                    raise DslSyntaxError("expected (NAME ARG)", a.span)
                g, q = _sym(a.items[0], "function name"), _sym(a.items[1], "argument field")
                functions.append((g, q))
                scope.functions[g] = q
        elif head == "define":
            if len(args) < 2:
                _bad(sub)
            dname = _sym(args[0], "definition name")
            value = parse_expr(args[1], scope)
            opts = _options(args[2:], sub.span, ("non-invertible",), ("tensor",))
            tensor = opts.get("tensor")
            if tensor is not None and not isinstance(tensor, Num):
                raise DslSyntaxError("expected a number", tensor.span)
            try:
                names[dname] = define(dname, value, invertible=not opts.get("non-invertible", False),
                                      tensor=tensor.value if tensor is not None else None)
            except GcaError as exc:
                raise DegreeError(str(exc), sub.span) from None
        elif head == "field":
            fname = _sym(args[0], "field name") if args else _bad(sub)
            if fname in fields or fname in names:
                raise DslSyntaxError(f"{fname} declared twice", sub.span)
            opts = _options(args[1:], sub.span, ("invertible",), ("gh", "tensor", "partner"))
            if "gh" not in opts:
                raise DslSyntaxError(f"field {fname} needs :gh", sub.span)
            gh = _int(opts["gh"], "ghost number")
            tensor = opts.get("tensor")
            if tensor is not None and not isinstance(tensor, Num):
                raise DslSyntaxError("expected a number", tensor.span)
            partner = _sym(opts["partner"], "partner field") if "partner" in opts else None
            inv = bool(opts.get("invertible", False))
            if inv:
                if gh != 0:
                    raise DegreeError(f"only ghost-number-0 fields can be invertible, gh({fname}) = {gh}", sub.span)
                declare_invertible(fname)
            fields[fname] = FieldDecl(fname, gh, tensor.value if tensor is not None else None, partner, inv)
            field_spans[fname] = sub.span
        elif head == "ghost":
            ghost = _sym(args[0], "ghost field") if len(args) == 1 else _bad(sub)
            ghost_span = sub.span
        elif head in tables:
            table: dict[str, Expr] = {}
            for entry in args:
                if not isinstance(entry, SList) or len(entry.items) != 2:
                    raise DslSyntaxError("expected (FIELD EXPR)", getattr(entry, "span", sub.span))
                fname = _sym(entry.items[0], "field name")
                if fname not in fields:
                    raise UndeclaredField(f"undeclared field {fname}", entry.items[0].span)
                if fname in table:
                    raise DslSyntaxError(f"two images for {fname}", entry.span)
                table[fname] = parse_expr(entry.items[1], scope)
                if head == "Q":
                    _check_degree(table[fname], Degree(fields[fname].gh + 1), f"Q{fname}", entry.span)
            tables[head] = table
        elif head in comps:
            out: list[Expr] = []
            for k, entry in enumerate(args):
                if not (isinstance(entry, SList) and entry.head() == "codim" and len(entry.items) == 3):
                    raise DslSyntaxError("expected (codim K EXPR)", getattr(entry, "span", sub.span))
                if _int(entry.items[1], "codimension") != k:
                    raise DslSyntaxError(f"codimensions must be listed in order; expected {k}",
                                         entry.items[1].span)
                x = parse_expr(entry.items[2], scope)
                want = Degree(k - 1, 1 - k, 1) if head == "theta" else Degree(k, 1 - k, 0)
                _check_degree(x, want, f"{head}^{k}", entry.span)
                out.append(x)
                comp_spans[head].append(entry.span)
            comps[head] = tuple(out)
        else:
            raise DslSyntaxError(f"unknown theory form ({head} ...)", sub.span)
    for f in fields.values():
        if f.partner is not None:
            p = fields.get(f.partner)
            if p is None:
                raise UndeclaredField(f"undeclared partner {f.partner} of {f.name}", field_spans[f.name])
            if f.gh != -1 - p.gh:
                raise DegreeError(f"antifield {f.name} has gh {f.gh}, expected {-1 - p.gh}", field_spans[f.name])
    if ghost is not None:
        g = fields.get(ghost)
        if g is None:
            raise UndeclaredField(f"undeclared ghost {ghost}", ghost_span)
        if g.gh != 1:
            raise DegreeError(f"ghost {ghost} must have gh 1, declared {g.gh}", field_spans[ghost])
    if tables["Q"] is None:
        raise DslSyntaxError(f"theory {name} has no (Q ...) table", form.span)
    return Theory(name, tuple(fields.values()), tables["Q"], comps["theta"], comps["L"], target, dim_m,
                  tuple(constants), ghost, tables["gamma"], tables["koszul"], tuple(functions))


def _bad(sub) -> int:
    raise DslSyntaxError(f"malformed ({sub.head()} ...)", sub.span)


def _check_degree(x: Expr, want: Degree, label: str, span: Span) -> None:
    d = degree_of(x)
    if d is None or d == want:
        return
    if isinstance(d, str):
        raise DegreeError(f"{label} is not homogeneous", span)
    raise DegreeError(f"{label} has degree (gh {d.gh}, form {d.fdM},{d.fdF}), expected "
                      f"(gh {want.gh}, form {want.fdM},{want.fdF})", span)


def read_forms(text: str):
    try:
        return read_all(text)
    except SexpError as exc:
        raise DslSyntaxError(exc.message, exc.span) from None


def parse_theory(text: str) -> Theory:
    """Parse a file holding exactly one theory form."""
    forms = read_forms(text)
    theories = [f for f in forms if isinstance(f, SList) and f.head() == "theory"]
    if len(forms) != 1 or len(theories) != 1:
        span = forms[1].span if len(forms) > 1 else NOSPAN
        raise DslSyntaxError(f"expected one (theory ...) form, found {len(forms)} forms", span)
    return parse_theory_form(theories[0])


def canonical(text: str) -> str:
    """Reprint arbitrary DSL text in canonical layout."""
    return "\n".join(dump(f, indent=2) for f in read_forms(text)) + "\n"
