from __future__ import annotations

import os
from fractions import Fraction

from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from laxcheck.gca import DT, A, C, Expr, const, declare_invertible, esum, eprod, jet, rad, var

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile(
    "thorough", deadline=None, max_examples=400, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("LAXCHECK_HYPOTHESIS", "default"))

# A small alphabet mixing even and odd generators of every kind the engine uses.
G = declare_invertible("g")
ALPHABET: tuple[Expr, ...] = (
    A(jet("q1")),
    A(jet("q1", 1)),
    A(jet("q2", 2)),
    A(G),
    A(rad(G)),
    A(const("E")),
    A(jet("xi", 0, 1)),
    A(jet("xi", 1, 1)),
    A(jet("q+1", 0, -1)),
    A(jet("xi+", 0, -2)),
    A(var("q1")),
    A(var("q2", 1)),
    A(var("xi", 0, 1)),
    A(var("g+", 0, -1)),
    A(DT),
)
EVEN_FIELDS = ALPHABET[:6]

coeffs = st.fractions(min_value=-5, max_value=5, max_denominator=4).filter(bool)


@st.composite
def monomials(draw, pool: tuple[Expr, ...] = ALPHABET, max_len: int = 3) -> Expr:
    items = draw(st.lists(st.sampled_from(pool), min_size=0, max_size=max_len))
    return eprod(items).scale(draw(coeffs)) if items else C(draw(coeffs))


@st.composite
def exprs(draw, pool: tuple[Expr, ...] = ALPHABET, max_terms: int = 3) -> Expr:
    return esum(draw(st.lists(monomials(pool), min_size=0, max_size=max_terms)))


def homogeneous(pool: tuple[Expr, ...] = ALPHABET):
    """Single monomials are homogeneous in every grading."""
    return monomials(pool)


def frac(x: int, y: int = 1) -> Fraction:
    return Fraction(x, y)


def pytest_terminal_summary(terminalreporter) -> None:
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
