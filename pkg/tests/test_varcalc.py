from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import monomials
from laxcheck import theories as th
from laxcheck.gca import DT, U, A, C, Expr, const, esum, gmul, is_zero, jet, var
from laxcheck.verify import euler_vf, homotopy_D
from laxcheck.varcalc import (
    EvolutionaryVF,
    GammaData,
    Morphism,
    TensorMismatch,
    UndefinedTensorNumber,
    apply_morphism,
    commutator_on,
    compose,
    contract,
    euler_operator,
    gamma_action,
    horizontal_d,
    lie_derivative,
    s_derivative,
    s_limit,
    strip_dt,
    strip_forms,
    tensor_number,
    total_derivative,
    vertical_delta,
)

GR = th.builtin_theory("gr1d")
JAC = th.builtin_theory("jacobi")
PKG = th.builtin_package("jac-gr")
S = th.gr_symbols()
E, M = th.E_, th.M_
u = A(U)


def f(name: str, k: int = 0) -> object:
    return GR.generator(name, k)


def ft(name: str, k: int = 0) -> object:
    return JAC.generator(name, k)


# Generators of the gravity theory together with composite scalars.
GR_POOL = (
    f("q1"), f("q1", 1), f("q2", 2), f("g"), f("g", 1), f("xi"), f("xi", 1), f("q+1"), f("g+"), f("g+", 1),
    f("xi+"), S.sg, S.T, S.sT, E, A(var("q1", 0)), A(var("g", 1)), A(var("xi", 0, 1)),
)
GR_FUNCS = tuple(x for x in GR_POOL if not any(a.kind.name == "VAR" for a in x.atoms()))
gr_exprs = st.lists(monomials(GR_POOL), max_size=3).map(esum)
gr_functions = st.lists(monomials(GR_FUNCS), max_size=3).map(esum)


# ---------------------------------------------------------------------------
# ∂_t, d and δ


def test_total_derivative_of_el_g():
    g, g1 = S.g, f("g", 1)
    T1 = total_derivative(S.T)
    g32 = S.g * S.sg
    want = (-E * (4 * g32) ** -1 + 3 * S.T * (4 * g32 * g) ** -1) * g1 - T1 * (2 * g32) ** -1
    assert is_zero(total_derivative(S.elg) - want)


def test_total_derivative_of_constant():
    assert total_derivative(E) == C(0)


def test_total_derivative_of_sqrt_T():
    Tdot = M * (f("q1", 1) * f("q1", 2) + f("q2", 1) * f("q2", 2))
    assert is_zero(total_derivative(S.sT) - Tdot * (2 * S.sT) ** -1)


def test_d_of_jacobi_theta1_is_dt_wedge_derivative():
    th1 = JAC.theta[1]
    assert horizontal_d(th1) == gmul(A(DT), total_derivative(th1))


def test_d_of_top_form_vanishes():
    assert horizontal_d(GR.L[0]) == C(0)


def test_delta_T():
    dT = M * (f("q1", 1) * A(var("q1", 1)) + f("q2", 1) * A(var("q2", 1)))
    assert is_zero(vertical_delta(S.T) - dT)


def test_delta_el_g():
    g32 = S.g * S.sg
    want = ((-E * (4 * g32) ** -1 + 3 * S.T * (4 * g32 * S.g) ** -1) * A(var("g"))
            - vertical_delta(S.T) * (2 * g32) ** -1)
    assert is_zero(vertical_delta(S.elg) - want)


def test_delta_dt():
    assert vertical_delta(A(DT)) == C(0)


@given(gr_exprs)
def test_d_squared_vanishes(a):
    assert horizontal_d(horizontal_d(a)) == C(0)


@given(gr_exprs)
def test_delta_squared_vanishes(a):
    assert is_zero(vertical_delta(vertical_delta(a)))


@given(gr_exprs)
def test_delta_and_d_anticommute(a):
    assert is_zero(vertical_delta(horizontal_d(a)) + horizontal_d(vertical_delta(a)))


@given(gr_exprs, gr_exprs)
def test_delta_is_a_graded_derivation(a, b):
    sign = -1 if any(len(m[1]) % 2 for m in a.terms) else 1
    if len({len(m[1]) % 2 for m in a.terms}) > 1:
        return
    lhs = vertical_delta(gmul(a, b))
    rhs = gmul(vertical_delta(a), b) + gmul(a, vertical_delta(b)).scale(sign)
    assert is_zero(lhs - rhs)


# ---------------------------------------------------------------------------
# evolutionary vector fields


def test_contraction_with_Q_J():
    assert contract(JAC.vf(), A(var("qt1"))) == gmul(ft("xit"), ft("qt1", 1))


def test_contraction_with_dt_vanishes():
    assert contract(JAC.vf(), A(DT)) == C(0)


def test_euler_field_contraction_on_ghost_variation():
    assert contract(euler_vf(GR), A(var("xi", 0, 1))) == f("xi")


def test_gamma_on_metric():
    data = GR.gamma_data()
    assert gamma_action(f("g"), data) == f("g", 1) * f("xi") + 2 * f("g") * f("xi", 1)


def test_Q_squared_vanishes_on_generators():
    Q = GR.vf()
    for fd in GR.fields:
        assert is_zero(Q(Q(f(fd.name)))), fd.name


@given(gr_functions)
def test_Q_squared_vanishes_on_random_functions(a):
    Q = GR.vf()
    assert is_zero(Q(Q(a)))
    assert is_zero(Q(Q(a)) - commutator_on(Q, Q, a).scale(Fraction(1, 2)))


def test_D_rescales_g32_gplus():
    D = EvolutionaryVF(homotopy_D(PKG), 0, "D")
    x = S.g * S.sg * f("g+")
    assert is_zero(D(x) + x)


@pytest.mark.parametrize("name", ["gr1d", "jacobi", "cm1", "cm2", "contractible-pair"])
def test_Q_commutes_with_total_derivative(name):
    t = th.builtin_theory(name)
    Q = t.vf()
    for fd in t.fields:
        for k in (0, 1):
            x = t.generator(fd.name, k)
            assert is_zero(Q(total_derivative(x)) - total_derivative(Q(x)))


@given(gr_exprs)
def test_lie_derivative_commutes_with_d_and_delta(a):
    Q = GR.vf()
    assert is_zero(lie_derivative(Q, total_derivative(a)) - total_derivative(lie_derivative(Q, a)))
    assert is_zero(lie_derivative(Q, vertical_delta(a)) + vertical_delta(lie_derivative(Q, a)))


@given(gr_exprs)
def test_cartan_formula(a):
    # ι_Q is even for odd Q, so L_Q = ι_Qδ − δι_Q
    Q = GR.vf()
    lhs = lie_derivative(Q, a)
    rhs = contract(Q, vertical_delta(a)) - vertical_delta(contract(Q, a))
    assert is_zero(lhs - rhs)


# ---------------------------------------------------------------------------
# Euler operator


def test_euler_jacobi_kinetic_term():
    dens = gmul(2 * th.SQRT_E * _jacobi_sT(), A(DT))
    want = -total_derivative(th.SQRT_E * _jacobi_sT() ** -1 * M * ft("qt1", 1))
    assert is_zero(euler_operator(dens, "qt1") - want)


def _jacobi_sT():
    # √T̃ read off the ghost-free part of L⁰_J = 2√(E T̃) dt + ...
    body = Morphism({fd.name: C(0) for fd in JAC.fields if fd.gh}, name="body", identity=True)
    return strip_dt(body(JAC.L[0])) * (2 * th.SQRT_E) ** -1


def test_euler_of_total_derivative_vanishes():
    q1 = f("q1", 1)
    assert euler_operator(gmul(total_derivative(q1 * q1), A(DT)), "q1") == C(0)


def test_euler_of_gr_lagrangian_in_g():
    body = Morphism({fd.name: C(0) for fd in GR.fields if fd.gh}, name="body", identity=True)
    assert is_zero(euler_operator(body(GR.L[0]), "g") - S.elg)


@given(gr_functions)
def test_euler_annihilates_total_derivatives(b):
    dens = gmul(total_derivative(b), A(DT))
    for fd in GR.fields:
        assert is_zero(euler_operator(dens, fd.name, fd.gh))


# ---------------------------------------------------------------------------
# morphisms


def test_phi_sends_g_to_T_over_E():
    Tt = _jacobi_sT() ** 2
    assert is_zero(PKG.phi(f("g")) - Tt * E ** -1)
    assert PKG.phi(f("g+")) == C(0)


def test_psi_on_xi_tilde_plus():
    want = S.eta32 * (f("xi+") + S.g * S.sg * E ** -1 * gmul(f("g+", 1), f("g+")))
    assert is_zero(PKG.psi(ft("xit+")) - want)


@given(gr_exprs)
def test_identity_morphism(a):
    assert apply_morphism(Morphism({}, identity=True), a) == a


@given(st.lists(monomials(tuple(ft(n, k) for n in ("qt1", "qt2", "xit", "qt+1", "xit+") for k in (0, 1))
                              + (A(var("qt1")), A(var("xit", 0, 1)))), max_size=3).map(esum))
def test_morphisms_commute_with_d_and_delta(a):
    for m in (PKG.psi,):
        assert is_zero(m(total_derivative(a)) - total_derivative(m(a)))
        assert is_zero(m(vertical_delta(a)) - vertical_delta(m(a)))


@given(gr_exprs)
def test_phi_commutes_with_d_and_delta(a):
    m = PKG.phi
    assert is_zero(m(total_derivative(a)) - total_derivative(m(a)))
    assert is_zero(m(vertical_delta(a)) - vertical_delta(m(a)))


def test_compose_applies_inner_first():
    lam = compose(PKG.psi, PKG.phi, "λ")
    x = ft("xit+")
    assert is_zero(lam(x) - PKG.phi(PKG.psi(x)))


# ---------------------------------------------------------------------------
# flow parameter


def test_s_derivative_of_u():
    assert s_derivative(u) == -u
    assert s_derivative(u * u) == -2 * u * u


def test_s_derivative_of_interpolated_metric():
    x = u * S.g + (1 - u) * S.T * E ** -1
    assert is_zero(s_derivative(x) + u * (S.g - S.T * E ** -1))


def test_flow_limits_of_metric():
    chis = PKG.flow_morphism()
    gs = chis(f("g"))
    assert is_zero(s_limit(gs, "inf") - S.T * E ** -1)
    assert is_zero(s_limit(gs, "0") - S.g)


@given(st.lists(monomials(GR_FUNCS + (u,)), max_size=3).map(esum))
def test_s_derivative_at_zero(a):
    # a = Σ c·uᵉ·X  gives  ∂_s a |_{s=0} = −Σ e·c·X
    want = esum(-s_limit(Expr.mono(m, c), "0").scale(dict(m[0]).get(U, 0)) for m, c in a.terms.items())
    assert is_zero(s_limit(s_derivative(a), "0") - want)


# ---------------------------------------------------------------------------
# tensor numbers and the reparametrization action

TENSORS = GR.tensors()


@pytest.mark.parametrize(
    "expr,value",
    [
        (f("q1"), 0), (f("g"), 2), (f("xi"), -1), (f("q+1"), 1), (f("g+"), -1), (f("xi+"), 2),
        (f("q1", 1), 1), (S.T, 2), (u, 0), (S.elg, -1), (S.Omega, 3),
    ],
    ids=["q", "g", "xi", "q+", "g+", "xi+", "qdot", "T", "u", "EL_g", "Omega"],
)
def test_tensor_numbers(expr, value):
    assert tensor_number(expr, TENSORS) == value


def test_tensor_number_of_g_cubed_qdot():
    x = S.g ** 3 * f("q1", 1)
    assert tensor_number(x, TENSORS) == 7
    # independent reading: the coefficient of xi' in γx divided by x
    gx = gamma_action(x, GR.gamma_data())
    xi1_part = esum(Expr.mono(m, c) for m, c in gx.terms.items() if jet("xi", 1, 1) in m[1])
    assert is_zero(xi1_part - 7 * gmul(f("xi", 1), x))


def test_tensor_number_inhomogeneous():
    with pytest.raises(UndefinedTensorNumber):
        tensor_number(f("g") + f("q1"), TENSORS)


def test_gamma_on_T():
    assert is_zero(gamma_action(S.T, GR.gamma_data())
                   - (f("xi") * total_derivative(S.T) + 2 * f("xi", 1) * S.T))


def test_gamma_on_gdot_plus_gplus():
    x = gmul(f("g+", 1), f("g+"))
    want = gmul(f("xi"), total_derivative(x)) - gmul(f("xi", 1), x)
    assert is_zero(gamma_action(x, GR.gamma_data()) - want)


def test_gamma_on_constant():
    assert gamma_action(E, GR.gamma_data()) == C(0)


def test_gamma_paths_disagree_on_wrong_tensor_number():
    data = GR.gamma_data()
    bad = GammaData(data.table, {**TENSORS, "g": Fraction(3)}, data.ghost, data.field_gh)
    with pytest.raises(TensorMismatch):
        gamma_action(f("g"), bad)


def _monomials(*xs):
    return [Expr.mono(m, c) for x in xs for m, c in strip_forms(x).terms.items()]


@pytest.mark.parametrize(
    "theory,data",
    [(GR, (*GR.theta, *GR.L, *PKG.beta1, *PKG.f1)), (JAC, (*JAC.theta, *JAC.L))],
    ids=["gr1d", "jacobi"],
)
def test_gamma_paths_agree_on_builtin_monomials(theory, data):
    gd = theory.gamma_data()
    monos = _monomials(*data)
    assert len(monos) > 10
    for x in monos:
        assert is_zero(gd.table(x) - gd.shortcut()(x)), str(x)


def test_const_has_tensor_zero():
    assert tensor_number(A(const("m")), TENSORS) == 0
