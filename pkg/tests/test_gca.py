from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import ALPHABET, EVEN_FIELDS, exprs, homogeneous, monomials
from laxcheck import theories as th
from laxcheck.gca import (
    DT,
    INHOMOGENEOUS,
    A,
    C,
    Degree,
    NonInvertibleDenominator,
    UndeclaredAtom,
    const,
    declare_invertible,
    define,
    degree_of,
    gmul,
    is_zero,
    jet,
    normalize,
    parity_of,
    rad,
    var,
)
from laxcheck.varcalc import Morphism

S = th.gr_symbols()
E = th.E_
M = th.M_


def graded_swap_sign(a, b) -> int:
    return -1 if parity_of(a) and parity_of(b) else 1


# ---------------------------------------------------------------------------
# degrees


def test_degree_totals_and_lax_degree():
    d = Degree(gh=-1, fdM=1, fdF=1)
    assert d.total == 1 and d.parity == 1
    assert d.lax(1) == -1
    assert Degree(1, 0, 2) + Degree(-2, 1, 0) == Degree(-1, 1, 2)


def test_dt_degree():
    assert degree_of(A(DT)) == Degree(0, 1, 0)


def test_jacobi_theta0_has_lax_degree_minus_one():
    t = th.builtin_theory("jacobi")
    d = degree_of(t.theta[0])
    assert d == Degree(-1, 1, 1)
    assert d.lax(t.dim_m) == -1


def test_gr_lagrangian_has_lax_degree_zero():
    t = th.builtin_theory("gr1d")
    d = degree_of(t.L[0])
    assert d.lax(t.dim_m) == 0


def test_inhomogeneous_sum():
    assert degree_of(A(jet("q1")) + A(jet("xi", 0, 1))) == INHOMOGENEOUS
    assert degree_of(C(0)) is None


@given(homogeneous(), homogeneous())
def test_degrees_add_under_products(a, b):
    p = gmul(a, b)
    if p.terms:
        assert degree_of(p) == degree_of(a) + degree_of(b)


# ---------------------------------------------------------------------------
# products


def test_odd_squares_vanish():
    assert gmul(A(DT), A(DT)) == C(0)
    dq = A(var("q1"))
    assert gmul(dq, dq) == C(0)


def test_variation_anticommutes_with_dt():
    dq = A(var("q1"))
    assert gmul(dq, A(DT)) == -gmul(A(DT), dq)


def test_ghost_anticommutes_with_antifield():
    xi, qp = A(jet("xi", 0, 1)), A(jet("q+1", 0, -1))
    assert gmul(xi, qp) == -gmul(qp, xi)


@given(exprs(), exprs(), exprs())
def test_gmul_associative(a, b, c):
    assert gmul(gmul(a, b), c) == gmul(a, gmul(b, c))


@given(homogeneous(), homogeneous())
def test_graded_commutativity(a, b):
    assert is_zero(gmul(a, b) - gmul(b, a).scale(graded_swap_sign(a, b)))


@given(exprs(), exprs(), exprs())
def test_gmul_distributes(a, b, c):
    assert gmul(a, b + c) == gmul(a, b) + gmul(a, c)


@given(exprs())
def test_addition_identities(a):
    assert a + C(0) == a
    assert (a - a).terms == {}
    assert gmul(C(1), a) == a


# ---------------------------------------------------------------------------
# normalize


@given(exprs())
def test_normalize_idempotent(a):
    assert normalize(normalize(a)) == normalize(a)


def test_normalize_trees():
    scope = {"q": jet("q1"), "g": declare_invertible("g")}
    got = normalize(("+", ("*", 2, "q"), ("/", "q", "g"), ("-", ("^", "g", 2))), scope)
    q, g = A(jet("q1")), A(declare_invertible("g"))
    assert got == 2 * q + q * g ** -1 - g * g


@given(exprs(), exprs(), st.integers(-3, 3))
def test_normalize_linear(a, b, k):
    assert normalize(("+", a, ("*", k, b))) == a + b.scale(k)


def test_normalize_errors():
    with pytest.raises(UndeclaredAtom):
        normalize("nowhere", {})
    with pytest.raises(NonInvertibleDenominator):
        normalize(("/", 1, jet("q1")))
    with pytest.raises(TypeError):
        normalize(True)


def test_odd_atoms_cannot_be_inverted():
    with pytest.raises(NonInvertibleDenominator):
        A(jet("xi", 0, 1)) ** -1


# ---------------------------------------------------------------------------
# radicals and the zero test


@pytest.mark.parametrize("atom", [declare_invertible("g"), const("E"), const("m")])
def test_radical_squares_to_radicand(atom):
    r = A(rad(atom))
    assert is_zero(r * r - A(atom))


def test_sqrt_of_kinetic_energy_squares_to_T():
    assert is_zero(S.sT * S.sT - S.T)


def test_radical_identity_one():
    lhs = th.SQRT_E * S.sT ** -1 - S.sg ** -1 - (S.g * S.sg * S.elg * S.Omega ** -1).scale(2)
    assert is_zero(lhs)


def test_radical_identity_two():
    g72 = S.g ** 3 * S.sg
    lhs = (2 * th.SQRT_E * S.sT - S.T * S.sg ** -1 - S.sg * E
           + 4 * g72 * S.Omega ** -2 * S.T * S.elg * S.elg)
    assert is_zero(lhs)


def test_el_g_vanishes_at_g_equal_T_over_E():
    m = Morphism({"g": S.T * E ** -1}, name="g→T/E", identity=True)
    assert is_zero(m(S.elg))


def test_qdot_squared_is_twice_T_over_m():
    q1, q2 = A(jet("q1", 1)), A(jet("q2", 1))
    assert is_zero(q1 * q1 + q2 * q2 - 2 * S.T * M ** -1)


def test_eta_three_halves_is_not_one():
    assert not is_zero(S.eta32 - 1)


def test_definitions_are_transparent_to_the_zero_test():
    a = define("w_test", A(jet("q1")) + 1)
    assert is_zero(A(a) - A(jet("q1")) - 1)
    assert not is_zero(A(a))


@given(monomials(EVEN_FIELDS))
def test_invertible_monomials_invert(m):
    if all(a.invertible for a in m.atoms()):
        assert is_zero(m * m ** -1 - 1)


def test_alphabet_parities():
    odd = [x for x in ALPHABET if parity_of(x)]
    assert {str(x) for x in odd} >= {"xi", "q+1", "dt", "δq1"}
