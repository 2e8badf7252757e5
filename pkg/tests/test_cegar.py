"""End-to-end verification loop and the decomposition certificate format."""

from fractions import Fraction

import pytest

from probtrace.cegar import (
    Certified,
    Inconclusive,
    Rejected,
    Sat,
    Unsat,
    check_decomposition,
    dump_certificate,
    load_certificate,
    verify,
    verify_refutational,
)
from probtrace.evidence import validate_counterexample
from probtrace.formula import eq, fand, ge, ivar, le, simplify
from probtrace.lang import Specification, parse, to_pcfa
from probtrace.oracle import StateDomain, exact_violation_probability

from helpers import DATA_DIR, load_program

C = ivar("C")
X = ivar("X")


@pytest.fixture(scope="module")
def motivating():
    program, spec = load_program("motivating.prob")
    return program, spec, to_pcfa(program)


def run(text, beta=None, **kw):
    program, spec = parse(text)
    return verify(to_pcfa(program), spec, beta, **kw), (program, spec)


# ---------------------------------------------------------------------------
# the motivating example, both ways


def test_unbounded_precondition_is_refuted(motivating, solver):
    program, spec, p = motivating
    verdict = verify(p, spec, solver=solver)
    assert isinstance(verdict, Unsat)
    cex = verdict.counterexample
    assert cex.total_vp == Fraction(3, 8)
    assert solver.entails(cex.error_pre, eq(C, 2))
    ok, reasons = validate_counterexample(p, spec, spec.beta, cex, solver)
    assert ok, reasons


def test_bounded_precondition_is_certified(motivating, solver):
    program, spec, p = motivating
    bounded = Specification(
        pre=simplify(fand(ge(C, 0), le(C, 3))),
        post=spec.post,
        beta=Fraction(47, 100),
    )
    verdict = verify(p, bounded, solver=solver)
    assert isinstance(verdict, Sat)
    assert Fraction(7, 16) <= verdict.upper_bound <= Fraction(47, 100)
    # the certified bound dominates the exact ground truth
    lo, hi = exact_violation_probability(p, bounded, StateDomain.of({"C": (0, 3)}))
    assert lo == hi == Fraction(7, 16) <= verdict.upper_bound


def test_refutational_variant_agrees_on_the_refutation(motivating, solver):
    program, spec, p = motivating
    verdict = verify_refutational(p, spec, solver=solver)
    assert isinstance(verdict, Unsat)
    assert verdict.counterexample.total_vp > spec.beta
    ok, reasons = validate_counterexample(
        p, spec, spec.beta, verdict.counterexample, solver
    )
    assert ok, reasons


def test_refutational_variant_reports_divergence_honestly(solver):
    # satisfied contract with infinitely many violating-looking traces to
    # keep verbatim: the iteration cap must surface as Inconclusive
    text = (
        "@pre C >= 0 && C <= 3\n@post X = 0\n@beta 47/100\nint X;\nint C;\n"
        "X := 0;\n{ C := 0; } <+> { skip; };\n"
        "while (C > 0) {\n  { X := X + 1; } <+> { skip; };\n  C := C - 1;\n}\n"
    )
    program, spec = parse(text)
    verdict = verify_refutational(
        to_pcfa(program), spec, solver=solver, max_iters=6
    )
    assert isinstance(verdict, (Sat, Inconclusive))
    if isinstance(verdict, Inconclusive):
        assert "iteration" in verdict.reason


# ---------------------------------------------------------------------------
# small programs through the main loop


def test_trivial_program_certifies_immediately(solver):
    verdict, _ = run(
        "@pre true\n@post X = 0\n@beta 1/2\nint X;\nX := 0;\n", solver=solver
    )
    assert isinstance(verdict, Sat)
    assert verdict.upper_bound == 0
    assert verdict.iterations == 1


def test_certain_violation(solver):
    verdict, (program, spec) = run(
        "@pre true\n@post X = 0\n@beta 9/10\nint X;\nX := 1;\n", solver=solver
    )
    assert isinstance(verdict, Unsat)
    assert verdict.counterexample.total_vp == 1


def test_single_coin_boundary(solver):
    body = "@pre true\n@post X = 0\n@beta {b}\nint X;\n{{ X := 0; }} <+> {{ X := 1; }};\n"
    sat, _ = run(body.format(b="1/2"), solver=solver)
    assert isinstance(sat, Sat) and sat.upper_bound == Fraction(1, 2)
    unsat, (program, spec) = run(body.format(b="49/100"), solver=solver)
    assert isinstance(unsat, Unsat)
    assert unsat.counterexample.total_vp == Fraction(1, 2)


def test_loop_with_certain_exit(solver):
    # the flag survives unless both rounds decline: violation mass 3/4
    text = (
        "@pre true\n@post F = 0\n@beta 1/4\nint F;\nint T;\nF := 0;\nT := 2;\n"
        "while (T >= 1) {\n  { F := 1; } <+> { skip; };\n  T := T - 1;\n}\n"
    )
    verdict, (program, spec) = run(text, solver=solver)
    assert isinstance(verdict, Unsat)
    assert verdict.counterexample.total_vp > Fraction(1, 4)
    p = to_pcfa(program)
    lo, hi = exact_violation_probability(p, spec)
    assert lo == hi == Fraction(3, 4)


def test_almost_sure_loop_is_verified(solver):
    # the violating branch resets the flag before the loop ends
    text = (
        "@pre true\n@post X = 0\n@beta 1/2\nint X;\nint T;\nX := 1;\nT := 4;\n"
        "while (T >= 1) {\n  { X := 0; } <+> { skip; };\n  T := T - 1;\n}\n"
        "X := 0;\n"
    )
    verdict, _ = run(text, solver=solver)
    assert isinstance(verdict, Sat)
    assert verdict.upper_bound == 0


def test_nondeterministic_choice_is_worst_cased(solver):
    text = (
        "@pre true\n@post X = 0\n@beta 1/4\nint X;\n"
        "{ X := 0; } <*> { { X := 0; } <+> { X := 1; }; };\n"
    )
    verdict, _ = run(text, solver=solver)
    assert isinstance(verdict, Unsat)
    assert verdict.counterexample.total_vp == Fraction(1, 2)


def test_beta_override_argument(motivating, solver):
    program, spec, p = motivating
    verdict = verify(p, spec, Fraction(1, 2), solver=solver)
    assert isinstance(verdict, Sat)
    assert verdict.upper_bound <= Fraction(1, 2)


def test_iteration_cap_is_inconclusive(motivating, solver):
    program, spec, p = motivating
    verdict = verify(p, spec, solver=solver, max_iters=1)
    assert isinstance(verdict, (Unsat, Inconclusive))
    if isinstance(verdict, Inconclusive):
        assert "iteration" in verdict.reason


# ---------------------------------------------------------------------------
# decomposition checking and the certificate format


@pytest.fixture(scope="module")
def certificate(motivating):
    program, spec, p = motivating
    text = (DATA_DIR / "motivating.cert").read_text()
    return load_certificate(text, program)


def test_certificate_certifies_its_stated_threshold(motivating, certificate, solver):
    program, spec, p = motivating
    beta, a, qs = certificate
    assert beta == Fraction(1, 2)
    assert len(qs) == 2
    outcome = check_decomposition(p, spec, beta, qs, a, solver)
    assert isinstance(outcome, Certified)
    assert outcome.upper_bound == Fraction(1, 2)


def test_certificate_rejected_below_true_mass(motivating, certificate, solver):
    program, spec, p = motivating
    _, a, qs = certificate
    outcome = check_decomposition(p, spec, Fraction(3, 10), qs, a, solver)
    assert isinstance(outcome, Rejected)
    assert "exceeds threshold" in outcome.reason


def test_whole_program_module_is_a_trivial_certificate(motivating, solver):
    program, spec, p = motivating
    outcome = check_decomposition(p, spec, Fraction(1), [], p, solver)
    assert isinstance(outcome, Certified)


def test_missing_coverage_is_rejected(motivating, certificate, solver):
    from probtrace.cfa import PCFA

    program, spec, p = motivating
    _, a, qs = certificate
    tiny = PCFA((), 0, 0)  # accepts only the empty trace
    outcome = check_decomposition(p, spec, Fraction(1, 2), qs, tiny, solver)
    assert isinstance(outcome, Rejected)
    assert "escape" in outcome.reason


def test_invalid_component_is_rejected(motivating, certificate, solver):
    from probtrace.hoare import FloydHoareAutomaton

    program, spec, p = motivating
    _, a, qs = certificate
    broken = FloydHoareAutomaton(qs[0].base, {l: eq(X, 7) for l in qs[0].base.locations})
    outcome = check_decomposition(p, spec, Fraction(1, 2), [broken], a, solver)
    assert isinstance(outcome, Rejected)
    assert "Hoare-valid" in outcome.reason or "precondition" in outcome.reason


def test_dump_load_round_trip(motivating, certificate):
    program, spec, p = motivating
    beta, a, qs = certificate
    text = dump_certificate(beta, a, qs)
    beta2, a2, qs2 = load_certificate(text, program)
    assert beta2 == beta
    assert a2.transitions == a.transitions
    assert a2.initial == a.initial and a2.accepting == a.accepting
    assert len(qs2) == len(qs)
    for q, q2 in zip(qs, qs2):
        assert q.base.transitions == q2.base.transitions
        assert q.lam == q2.lam


def test_load_rejects_malformed_certificates(motivating):
    program, _, _ = motivating
    cases = [
        "beta 1/2\nmodule A\ninitial 0\naccepting 0\nedge 0 0 not a label\n",
        "beta nonsense\nmodule A\ninitial 0\naccepting 0\n",
        "beta 1/2\nhoare Q\ninitial 0\naccepting 0\nprop 0 true\nwhat 1 2\n",
        "beta 1/2\nedge 0 1 skip\n",
    ]
    for text in cases:
        with pytest.raises(ValueError):
            load_certificate(text, program)


def test_certificate_sigma_edges_expand_over_the_alphabet(motivating):
    program, spec, p = motivating
    text = (
        "beta 1/1\n"
        "module A\ninitial 0\naccepting 1\n"
        "edge 0 1 sigma\n"
        "edge 0 0 sigma \\ {X := 0; skip}\n"
    )
    _, a, _ = load_certificate(text, program)
    full = {lab for s, lab, t in a.transitions if s == 0 and t == 1}
    assert full == set(p.alphabet)
    reduced = {lab for s, lab, t in a.transitions if s == 0 and t == 0}
    assert reduced == set(p.alphabet) - {
        lab for lab in p.alphabet if str(lab) in ("X := 0", "skip")
    }
