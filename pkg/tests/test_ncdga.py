from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from laxcheck import ncdga as nc
from laxcheck import verify as V
from laxcheck.ncdga import (
    COMPONENTS,
    EPS,
    NCError,
    OZERO,
    ProofScript,
    RuleMismatch,
    ScriptStalls,
    ScriptStep,
    Tr,
    UnknownRule,
    L,
    bracket,
    nc_apply_rule,
    nc_check_script,
    nc_normalize,
    o_s_derivative,
    o_s_limit,
    oconst,
    od_A,
    odelta,
    open_rewrite,
    ostar,
    trace,
    vsign,
    word_parity,
)

POOL = (L("A"), L("B"), L("c"), L("F"), L("A†"), L("B†"), L("c†"), L("c", "δ"), L("A", "δ"), L("c", "dA"))
words = st.lists(st.sampled_from(POOL), min_size=1, max_size=3).map(nc.oprod)


def parity(x: nc.NCOpen) -> tuple[int, ...]:
    (w,) = {w for (_, w) in x.terms}
    return word_parity(w)


# ---------------------------------------------------------------------------
# letters and decorations


def test_double_star_on_two_form():
    # k(d−k) is even for k = 2 in every dimension parity
    assert ostar(ostar(L("F"))) == L("F").scale(EPS)


def test_double_star_on_one_form():
    want = vsign([(dp - 1) % 2 for dp, _ in COMPONENTS])
    assert ostar(ostar(L("A", "δ"))) == L("A", "δ").scale(nc.vmul(EPS, want))


def test_second_variation_vanishes():
    assert odelta(odelta(L("A"))) == OZERO


def test_dA_squared_is_curvature_bracket():
    assert open_rewrite(L("c", "dA", "dA"), ("dA-squared",)) == bracket(L("F"), L("c"))


def test_bianchi_kills_dA_F():
    assert open_rewrite(L("F", "dA"), ("bianchi",)) == OZERO


def test_star_needs_one_form_letter():
    with pytest.raises(NCError):
        ostar(L("A") * L("B"))


def test_unknown_base():
    with pytest.raises(NCError):
        L("Z")


def test_too_many_decorations():
    with pytest.raises(NCError):
        L("c", "dA", "⋆", "dA", "⋆", "dA")


# ---------------------------------------------------------------------------
# traces


@given(words, words)
def test_trace_is_graded_cyclic(x, y):
    sign = vsign([a * b for a, b in zip(parity(x), parity(y))])
    assert trace(x * y) == trace(y * x).scale(sign)


@given(words, words)
def test_trace_of_graded_bracket_vanishes(x, y):
    assert trace(bracket(x, y)) == nc.NCZERO


@given(st.lists(words, max_size=3))
def test_normalize_is_idempotent(xs):
    e = trace(nc.osum(xs))
    assert nc_normalize(nc_normalize(e)) == nc_normalize(e)


@given(words)
def test_delta_squared_vanishes_on_traces(x):
    assert nc.tr_delta(nc.tr_delta(trace(x))) == nc.NCZERO


@given(words)
def test_dA_is_an_odd_derivation(x):
    y = L("B")
    lhs = od_A(x * y)
    rhs = od_A(x) * y + (x * od_A(y)).scale(vsign(parity(x)))
    assert lhs == rhs


def test_star_swap_annihilates_self_partnered_words():
    e = Tr(L("B", "δ"), ostar(L("B", "δ")))
    out = nc_apply_rule(e, "star-swap")
    # the swap sends the word to ±itself; where the sign is −1 the word vanishes
    for dp, eps in COMPONENTS:
        assert out.zero_in(dp, eps) or out.component(dp, eps) == e.component(dp, eps)
    assert out != e


def test_explicit_rule_addressing():
    e = Tr(L("F", "dA"))
    assert nc_apply_rule(e, "bianchi", 0, 0) == nc.NCZERO
    with pytest.raises(RuleMismatch):
        nc_apply_rule(Tr(L("F")), "bianchi", 0, 0)
    with pytest.raises(RuleMismatch):
        nc_apply_rule(e, "bianchi", 3, 0)
    with pytest.raises(UnknownRule):
        nc_apply_rule(e, "magic")


def test_degree_consistency():
    assert nc.degree_consistent(Tr(L("B"), L("F")) + Tr(L("A†"), L("c", "dA")))
    assert not nc.degree_consistent(Tr(L("A")) + Tr(L("F")))


# ---------------------------------------------------------------------------
# scripts


def test_shipped_scripts_cover_every_goal():
    goals = {"lax-axioms", "q-squared", "codim-L", "chain-map", "transform", "classical-reduction",
             "commutator-D", "flow", "hchi", "composition"}
    assert set(V.shipped_scripts()) == goals


def test_shipped_scripts_round_trip():
    scripts = V.shipped_scripts()
    text = "\n".join(V.print_script(s) for s in scripts.values())
    assert V.parse_scripts(text) == scripts


@pytest.mark.parametrize("text", [
    "(script s (goal g) (step no-such-rule * *))",
    "(script s (goal g) (step bianchi -1 *))",
    "(script s)",
    "(step bianchi * *)",
])
def test_malformed_scripts(text):
    from laxcheck.sexpr import SexpError

    with pytest.raises(SexpError):
        V.parse_scripts(text)


def test_empty_script_fails_on_the_lax_goal(monkeypatch):
    monkeypatch.setattr(V, "script_for", lambda goal: ProofScript("empty", goal, ()))
    rep = V.check_lax_axioms("ym1")
    assert rep.status == V.FAIL


def test_strict_replay_raises_on_residual():
    goal = (Tr(L("F", "dA")), nc.NCZERO)
    with pytest.raises(ScriptStalls):
        nc_check_script(goal, ProofScript("empty", "x", ()), strict=True)
    rep = nc_check_script(goal, ProofScript("b", "x", (ScriptStep("bianchi"),)), strict=True)
    assert rep.passed() and len(rep.trail) == 2


@pytest.mark.parametrize("dp,eps", COMPONENTS)
@pytest.mark.parametrize("name", ["ym1", "ym2"])
def test_ym_codim_L_matches_declared(name, dp, eps):
    assert V.check_codim_L(name, V.Flags(d_parity=dp, epsilon_s=eps)).passed


# ---------------------------------------------------------------------------
# s-parameter


def test_s_derivative_of_u_powers():
    x = L("B†")
    assert o_s_derivative(oconst(1, 2) * x) == (oconst(1, 2) * x).scale(-2)


def test_flow_limit_of_c_dagger():
    pkg = nc.ym_package()
    flow = pkg.flow["c†"]
    assert o_s_limit(flow, "0") == L("c†")
    want = L("c†") - bracket(L("B†"), ostar(L("B†"))).scale(Fraction(1, 2))
    assert o_s_limit(flow, "inf") == want


def test_negative_u_power_is_singular():
    from laxcheck.varcalc import SingularLimit

    with pytest.raises(SingularLimit):
        o_s_limit(oconst(1, -1), "inf")


def test_morphisms_fix_the_connection():
    with pytest.raises(NCError):
        nc.NCMorphism({"A": L("B")})
