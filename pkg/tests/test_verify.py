from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import monomials
from laxcheck import theories as th
from laxcheck import verify as V
from laxcheck.gca import DT, ZERO, A, define, degree_of, esum, gmul, is_zero, jet, rad, var
from laxcheck.varcalc import EvolutionaryVF, Morphism, contract, lie_derivative, vertical_delta

GR = th.builtin_theory("gr1d")
JAC = th.builtin_theory("jacobi")
JG = th.builtin_package("jac-gr")
CM = th.builtin_package("cm")
CP = th.builtin_package("cp")
S = th.gr_symbols()
E, M = th.E_, th.M_


def gr(name: str, k: int = 0):
    return GR.generator(name, k)


# ---------------------------------------------------------------------------
# lax axioms and codimension-one Lagrangians


@pytest.mark.parametrize("name", [n for n in th.THEORY_NAMES if not n.startswith("ym")])
def test_coordinate_theories_satisfy_the_lax_axioms(name):
    rep = V.check_lax_axioms(name)
    assert rep.passed, rep.residual


@pytest.mark.parametrize("name", ["gr1d", "jacobi"])
def test_single_target_dimension_still_satisfies_the_axioms(name):
    assert V.check_lax_axioms(th.builtin_theory(name, 1)).passed


def test_gr_codim_one_lagrangian():
    want = (S.T * S.g ** -1 - E) * S.sg * gr("xi")
    assert is_zero(V.compute_codim_L(GR, 1) - want)


def test_jacobi_codim_one_lagrangian_vanishes():
    assert is_zero(V.compute_codim_L(JAC, 1))


def test_codim_zero_is_not_derived():
    with pytest.raises(ValueError):
        V.compute_codim_L(GR, 0)


def test_dropping_the_codim_one_lagrangian_fails():
    broken = GR.with_data(name="gr1d-noL1", L=(GR.L[0], ZERO))
    rep = V.check_lax_axioms(broken)
    assert rep.status == V.FAIL
    assert rep.residual


def test_failure_residual_matches_render():
    broken = GR.with_data(name="gr1d-noL1", L=(GR.L[0], ZERO))
    rep = V.check_lax_axioms(broken)
    bad = [x for _, x in rep.identities if not is_zero(x)]
    assert bad and V.render(bad[0]) in rep.residual


# ---------------------------------------------------------------------------
# Q = γ + δ_KT


@pytest.mark.parametrize("name", ["gr1d", "jacobi", "cm2"])
def test_Q_decomposition(name):
    assert V.check_Q_decomposition(name).passed


def test_koszul_tate_on_g_plus_is_the_metric_equation():
    assert is_zero(V.koszul_tate(GR, "g+") - S.elg)


def test_koszul_tate_on_jacobi_ghost_antifield():
    qt = [JAC.generator(f"qt{i}", 1) for i in (1, 2)]
    qp = [JAC.generator(f"qt+{i}") for i in (1, 2)]
    assert is_zero(V.koszul_tate(JAC, "xit+") + qp[0] * qt[0] + qp[1] * qt[1])


def test_koszul_tate_is_zero_on_fields():
    assert V.koszul_tate(GR, "q1") == ZERO


def test_antifield_number():
    m = next(iter((gr("xi+") * gr("q+1")).terms))
    assert V.antifield_number(m, GR) == 3


@pytest.mark.parametrize("name", ["gr1d", "jacobi"])
def test_gamma_paths(name):
    assert V.check_tensor_calculus(name).passed


def test_gamma_paths_skip_without_data():
    assert V.check_tensor_calculus("cm1").status == V.SKIP


# ---------------------------------------------------------------------------
# equivalence packages


def test_identity_is_a_chain_map():
    rec = V._Recorder("identity", V.DEFAULT_FLAGS)
    V.chain_map_residuals(Morphism({}, name="id", identity=True), GR, GR, rec)
    assert rec.report().passed


@pytest.mark.parametrize("pkg", ["cp", "cm", "jac-gr"])
@pytest.mark.parametrize("direction", ["phi", "psi"])
def test_chain_map_and_transform(pkg, direction):
    assert V.check_chain_map(pkg, direction).passed
    assert V.check_transform(pkg, direction).passed


def test_bad_direction():
    with pytest.raises(V.VerifyError):
        V.check_chain_map("cm", "chi")


def test_classical_reduction_cm():
    assert V.check_classical_reduction("cm").passed


def test_classical_reduction_rejects_a_wrong_solution():
    wrong = {"p": 2 * CM.classical["p"]}
    assert V.check_classical_reduction("cm", solution=wrong).status == V.FAIL


def test_homotopy_D_values():
    D = V.homotopy_D(CP)
    assert D["v"] == -CP.theory1.generator("v")
    assert D["v+"] == -CP.theory1.generator("v+")
    assert is_zero(V.homotopy_D(JG)["g"] + S.g - S.T * E ** -1)


def test_D_scales_the_weighted_metric_antifield():
    g32gp = S.g * S.sg * gr("g+")
    D = EvolutionaryVF(V.homotopy_D(JG), 0, "D")
    assert is_zero(D(g32gp) + g32gp)


@pytest.mark.parametrize("pkg", ["cp", "cm", "jac-gr"])
def test_homotopy_checks(pkg):
    for fn in (V.check_commutator_D, V.check_flow, V.check_hchi, V.check_composition):
        rep = fn(pkg)
        assert rep.passed, (rep.check_id, rep.residual)


def test_hchi_on_the_metric():
    assert is_zero(JG.hchi["g"] + 2 * S.g * S.sg * E ** -1 * gr("g+"))


def test_hchi_on_momentum_antifields():
    # parallel and perpendicular parts relative to q̇
    g32 = S.g * S.sg
    qd = [gr("q1", 1), gr("q2", 1)]
    qp = [gr("q+1"), gr("q+2")]
    gp, gp1, xp = gr("g+"), gr("g+", 1), gr("xi+")
    x = S.sqrt_eta
    along = qp[0] * qd[0] + qp[1] * qd[1]
    for i in range(2):
        u = M * qd[i] * (2 * S.T) ** -1
        par = ((1 - S.eta32) * (xp + g32 * E ** -1 * gp1 * gp) * u
               + (3 * S.eta - 2 * x - 1) * S.rho ** -2 * g32 * E ** -1 * gp1 * gp * u)
        perp = 2 * S.T ** -1 * (S.eta * S.rho ** -1 + 1) * g32 * gp * (qp[i] - along * u)
        assert is_zero(JG.hchi[f"q+{i + 1}"] - par - perp)


def test_hchi_small_packages():
    assert is_zero(CM.hchi["p"] - th._metric("q") * CM.theory1.generator("p+"))
    assert CP.hchi["v"] == -CP.theory1.generator("v+")


def test_chi_on_the_metric():
    assert is_zero(JG.chi["g"] - S.T * E ** -1)
    assert JG.chi["g+"] == ZERO


# ---------------------------------------------------------------------------
# descent and f-transformations


@pytest.mark.parametrize("name", ["gr1d", "jacobi", "cm1", "contractible-pair"])
def test_theory_descent(name):
    assert V.check_theory_descent(name).passed


def test_constant_tower_descends():
    assert V.check_descent([E], GR.vf(), "const").passed


def test_non_closed_tower_fails():
    assert V.check_descent([gr("q1")], GR.vf(), "q").status == V.FAIL


def test_shipped_f_transform():
    assert V.check_f_transform(GR, JG.f1).passed
    assert V.check_package_f_transform("jac-gr").passed


def test_zero_f_leaves_the_theory_unchanged():
    t = V.f_transform(GR, ())
    assert t.theta == GR.theta and t.L == GR.L


EVEN = (gr("q1"), gr("q1", 1), gr("q2", 1), S.g, S.sg, S.T, E)
ANTI = (gr("q+1"), gr("g+"), gr("g+", 1))


@st.composite
def f_pairs(draw):
    """(f⁰, f¹) of lax degree −1: f⁰ = (ghost number −1)·dt and f¹ of ghost number 0."""
    c0 = esum(gmul(draw(monomials(EVEN, 2)), a) for a in draw(st.lists(st.sampled_from(ANTI), min_size=1, max_size=2)))
    c1 = draw(monomials(EVEN, 2))
    if draw(st.booleans()):
        c1 = c1 + gmul(gmul(draw(monomials(EVEN, 1)), gr("xi")), gr("g+"))
    return gmul(c0, A(DT)), c1


@settings(max_examples=8)
@given(f_pairs())
def test_f_transform_preserves_the_axioms(f):
    assert degree_of(f[0]).lax(1) == -1
    rep = V.check_f_transform(GR, f)
    assert rep.passed, rep.residual


FORMS = tuple(A(var(n, k, GR.decl(n).gh)) for n, k in (("q1", 0), ("g", 0), ("xi", 0), ("q1", 1)))


@settings(max_examples=15)
@given(st.lists(st.tuples(monomials(EVEN, 2), st.sampled_from(FORMS)), min_size=1, max_size=2))
def test_exact_preboundary_corrections_are_compatible(pairs):
    # ρ = −δμ and σ = ι_Qμ give L_Q(ι_Qρ + δσ) = 0 for any one-form μ
    Q = GR.vf()
    mu = esum(gmul(c, w) for c, w in pairs)
    rho = -vertical_delta(mu)
    sigma = contract(Q, mu)
    assert is_zero(lie_derivative(Q, contract(Q, rho) + vertical_delta(sigma)))


# ---------------------------------------------------------------------------
# numeric oracle


def test_oracle_confirms_a_radical_identity():
    g72 = S.g ** 3 * S.sg
    lhs = (2 * th.SQRT_E * S.sT - S.T * S.sg ** -1 - S.sg * E
           + 4 * g72 * S.Omega ** -2 * S.T * S.elg * S.elg)
    assert V.numeric_oracle(lhs, trials=10).passed


def test_oracle_on_zero():
    assert V.numeric_oracle(ZERO, trials=3).passed


def test_oracle_refutes_eta_equal_one():
    assert V.numeric_oracle(S.eta - 1, trials=5).status == V.FAIL


def test_oracle_keeps_odd_atoms_formal():
    x = gmul(gr("xi"), gr("g+"))
    assert V.numeric_oracle(x + gmul(gr("g+"), gr("xi")), trials=3).passed
    assert V.numeric_oracle(x - gmul(gr("g+"), gr("xi")), trials=3).status == V.FAIL


def test_oracle_gives_up_on_negative_radicands():
    a = define("neg_radicand", -A(jet("q1")) * A(jet("q1")) - 1)
    with pytest.raises(V.SampleRejected):
        V.numeric_oracle(A(rad(a)) - 1, trials=3, max_retries=5)


def test_oracle_agrees_on_gr_lax_axioms():
    assert V.oracle_agrees(V.check_lax_axioms(GR), trials=3) == []


# ---------------------------------------------------------------------------
# pre-boundary kernel


@pytest.mark.parametrize("name,rank", [("cm1", 2), ("cm2", 2), ("contractible-pair", 2), ("gr1d", 6)])
def test_constant_rank_kernels(name, rank):
    rep = V.preboundary_kernel(name)
    assert rep.rank == rank and rep.constant_rank and rep.annihilates


def test_jacobi_kernel_degenerates():
    rep = V.preboundary_kernel(JAC)
    assert rep.rank == 2 and not rep.constant_rank and rep.annihilates
    assert rep.degeneracy == ("qt1'·qt2' ≠ 0",)


def test_gr_after_chi_needs_higher_jets():
    rep = V.preboundary_kernel(GR, V.kernel_pre_morphism(GR, "chi"), morphism_name="chi")
    assert not rep.constant_rank and rep.annihilates
    assert rep.degeneracy == ("q1'·q2' ≠ 0",)
    assert set(rep.higher_jets) == {"δq1''", "δq2''"}
    with pytest.raises(V.NonEliminable):
        V.preboundary_kernel(GR, V.kernel_pre_morphism(GR, "chi"), strict=True)


def test_chi_is_only_defined_on_the_first_theory():
    with pytest.raises(V.VerifyError):
        V.kernel_pre_morphism(JAC, "chi")
    with pytest.raises(V.VerifyError):
        V.kernel_pre_morphism(GR, "lambda")


@pytest.mark.parametrize("name", ["gr1d", "jacobi", "cm1", "contractible-pair"])
def test_variation_partials_graded_commute_on_the_two_form(name):
    t = th.builtin_theory(name)
    w = V.preboundary_kernel(t).form
    basis = [var(f.name, k, f.gh) for f in t.fields for k in range(2)]
    for b in basis:
        for a in basis:
            pa, pb = V.variation_partial(a), V.variation_partial(b)
            sign = -1 if a.parity and b.parity else 1
            assert is_zero(pa(pb(w)) - pb(pa(w)).scale(sign))


@pytest.mark.parametrize("name", ["gr1d", "jacobi"])
def test_check_kernel_passes(name):
    assert V.check_kernel(name).passed


def test_check_kernel_after_chi():
    assert V.check_kernel("gr1d", pre_morphism="chi").passed


# ---------------------------------------------------------------------------
# conventions


def test_reversed_dt_orientation_still_passes():
    flags = V.Flags(dt_sign=-1)
    assert V.check_lax_axioms(GR, flags).passed
    assert V.check_theory_descent(GR, flags).passed


@pytest.mark.parametrize("pkg", ["cp", "cm", "jac-gr"])
def test_psi_transform_data_fixes_dt_on_the_right(pkg):
    # β¹ and f¹ have odd coefficients in front of dt, so reading Y·dt as dt·Y flips them
    flags = V.Flags(dt_sign=-1)
    assert V.check_transform(pkg, "phi", flags).passed
    assert V.check_transform(pkg, "psi", flags).status == V.FAIL


def test_flag_components():
    assert len(V.Flags().components()) == 4
    assert V.Flags(d_parity=3, epsilon_s=-1).components() == [(1, -1)]


def test_ym_kernel_is_skipped():
    assert V.check_kernel("ym1").status == V.SKIP
