from __future__ import annotations

import json
import re
from pathlib import Path

import jsonschema
import pytest

from laxcheck import verify as V
from laxcheck.cli import main
from laxcheck.dsl import DslSyntaxError, print_theory
from laxcheck.plan import (
    SCHEMA,
    Plan,
    UnknownCheck,
    UnresolvedReference,
    emit_report,
    parse_plan,
    print_plan,
    run_plan,
)
from laxcheck.theories import builtin_theory

SCHEMA_DOC = json.loads((Path(__file__).parents[1] / "docs" / "report.schema.json").read_text(encoding="utf-8"))
GR = builtin_theory("gr1d")


def validate(raw: bytes) -> dict:
    doc = json.loads(raw)
    jsonschema.validate(doc, SCHEMA_DOC)
    return doc


# ---------------------------------------------------------------------------
# plans


def test_package_suite_expands_to_the_equivalence_checks():
    plan = parse_plan("(plan p (suite all jac-gr))")
    assert [e.check for e in plan.entries] == list(V.EQUIVALENCE_SUITE)
    assert len(plan.entries) == 8


def test_kernel_suite_adds_the_chi_variant():
    plan = parse_plan("(plan p (suite kernel jac-gr))")
    assert [e.label for e in plan.entries] == ["kernel gr1d", "kernel jacobi", "kernel gr1d :pre-morphism chi"]


def test_explicit_checks_keep_their_order():
    plan = parse_plan("(plan p (check kernel gr1d :pre-morphism chi) (check transform/phi cm) (check codim-L jacobi))")
    assert [e.label for e in plan.entries] == ["kernel gr1d :pre-morphism chi", "transform/phi cm", "codim-L jacobi"]


@pytest.mark.parametrize("text,exc", [
    ("(plan p (suite all gr2d))", UnresolvedReference),
    ("(plan p (check lax-axioms jac-gr))", UnresolvedReference),
    ("(plan p (check kernel jacobi :pre-morphism chi))", UnresolvedReference),
    ("(plan p (check no-such-check gr1d))", UnknownCheck),
    ("(plan p (suite equivalence gr1d))", UnknownCheck),
    ("(plan p (check flow cm :pre-morphism chi))", UnknownCheck),
    ("(plan p (check kernel gr1d :pre chi))", DslSyntaxError),
    ("(plan a) (plan b)", DslSyntaxError),
])
def test_plan_errors(text, exc):
    with pytest.raises(exc):
        parse_plan(text)


def test_plan_errors_carry_positions():
    with pytest.raises(UnknownCheck) as err:
        parse_plan("(plan p\n  (check bogus gr1d))")
    assert str(err.value).startswith("2:3")


def test_print_plan_round_trip():
    plan = parse_plan("(plan p (suite kernel jac-gr) (check flow cm))")
    again = parse_plan(print_plan(plan))
    assert again.entries == plan.entries and again.name == plan.name


def test_inline_theories_become_targets():
    text = print_theory(builtin_theory("contractible-pair")).replace("contractible-pair", "mine", 1)
    plan = parse_plan(text + "\n(plan p (suite lax mine))")
    assert "mine" in plan.theories
    assert run_plan(plan).exit_code == 0


# ---------------------------------------------------------------------------
# execution and reports


def test_empty_plan_gives_an_empty_passing_report():
    doc = run_plan(Plan("empty", []))
    assert doc.exit_code == 0 and doc.reports == []
    assert validate(emit_report(doc))["summary"] == {"total": 0, "pass": 0, "fail": 0, "skip": 0}


def test_json_report_is_schema_valid():
    doc = validate(emit_report(run_plan(parse_plan("(plan p (check codim-L gr1d))"), timings=True)))
    assert doc["schema"] == SCHEMA
    assert doc["checks"][0]["status"] == "PASS"


def test_text_report_lists_checks_in_plan_order():
    plan = parse_plan("(plan p (check codim-L jacobi) (check lax-axioms cm1) (check kernel cm2))")
    lines = emit_report(run_plan(plan), "text").decode().splitlines()
    ids = [ln.split()[1] for ln in lines if re.match(r"^(PASS|FAIL|SKIP) ", ln)]
    assert ids == ["codim-L/jacobi", "lax-axioms/cm1", "kernel/cm2"]
    assert lines[-1] == "3 checks: 3 pass, 0 fail, 0 skip"


def test_unknown_format():
    with pytest.raises(ValueError):
        emit_report(run_plan(Plan("empty", [])), "yaml")


def test_failure_residual_is_the_rendered_direct_residual():
    broken = GR.negate_term("Q", "g", 0).with_data(name="broken")
    direct = V.check_lax_axioms(broken)
    assert direct.status == V.FAIL
    doc = run_plan(parse_plan("(plan p (check lax-axioms broken))", {"broken": broken}))
    (rep,) = doc.reports
    assert rep.status == V.FAIL and rep.residual == direct.residual
    bad = next(x for _, x in direct.identities if not V.is_zero(x))
    assert V.render(bad) in rep.residual


def test_oracle_cross_check_is_recorded():
    doc = run_plan(parse_plan("(plan p (check codim-L gr1d))"), oracle_trials=3)
    assert any(d.startswith("oracle:") for d in doc.reports[0].details)
    assert doc.exit_code == 0


def test_reports_are_identical_across_job_counts():
    plan = parse_plan("(plan p (suite lax jac-gr) (suite kernel jac-gr) (check hchi cm))")
    one = emit_report(run_plan(plan, jobs=1, seed=7))
    two = emit_report(run_plan(plan, jobs=3, seed=7))
    assert one == two


# ---------------------------------------------------------------------------
# command line


def test_cli_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "jac-gr" in out and "lax-axioms" in out


def test_cli_verify_builtin_package(capsys):
    assert main(["verify", "--theory", "cp", "--format", "json"]) == 0
    validate(capsys.readouterr().out.encode())


def test_cli_verify_theory_suite(capsys):
    assert main(["verify", "--theory", "jacobi", "--suite", "lax"]) == 0
    assert "PASS  lax-axioms/jacobi" in capsys.readouterr().out


def test_cli_kernel(capsys):
    assert main(["kernel", "--theory", "jacobi"]) == 0
    out = capsys.readouterr().out
    assert "constant rank: no" in out and "degeneracy: qt1'·qt2' ≠ 0" in out


def test_cli_kernel_json(capsys):
    assert main(["kernel", "--theory", "gr1d", "--pre-morphism", "chi", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["constant_rank"] is False and doc["annihilates"] is True


def test_cli_kernel_rejects_chi_on_jacobi(capsys):
    assert main(["kernel", "--theory", "jacobi", "--pre-morphism", "chi"]) == 2
    assert capsys.readouterr().err.startswith("laxcheck: ")


def test_cli_parse_error_reports_file_line_column(tmp_path, capsys):
    bad = tmp_path / "bad.lax"
    bad.write_text("(theory x\n  (field a :gh 0)\n  (Q (a b)))\n", encoding="utf-8")
    assert main(["verify", "--file", str(bad)]) == 2
    err = capsys.readouterr().err
    assert re.match(rf"laxcheck: {re.escape(str(bad))}:3:\d+: ", err)


def test_cli_mutated_theory_file_fails(tmp_path, capsys):
    path = tmp_path / "flip.lax"
    path.write_text(print_theory(GR.negate_term("L", 0, 0)), encoding="utf-8")
    assert main(["verify", "--file", str(path), "--suite", "lax"]) == 1
    assert "FAIL  lax-axioms/gr1d" in capsys.readouterr().out


def test_cli_plan_file(tmp_path, capsys):
    path = tmp_path / "p.plan"
    path.write_text("(plan mine (check codim-L gr1d) (check flow cp))\n", encoding="utf-8")
    assert main(["verify", "--file", str(path)]) == 0
    assert "laxcheck mine:" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["verify"],
    ["verify", "--theory", "nope"],
    ["verify", "--theory", "cp", "--d-parity", "2"],
    ["verify", "--file", "/nonexistent/file.lax"],
])
def test_cli_usage_errors(argv, capsys):
    assert main(argv) == 2
