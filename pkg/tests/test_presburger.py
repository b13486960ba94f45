import random

import pytest

from sgtrs import presburger as P
from sgtrs.solver import BoundedBackend

from helpers import random_formula


def test_evaluate_atoms():
    x = P.var("x")
    assert P.evaluate(P.ge(x, 3), {"x": 3}) is True
    assert P.evaluate(P.ge(x, 3), {"x": 2}) is False
    two_three = P.le(P.var("x").scale(2) + P.var("y").scale(3), 5)
    assert P.evaluate(two_three, {"x": 1, "y": 1}) is True
    assert P.evaluate(two_three, {"x": 1, "y": 2}) is False


def test_evaluate_existential_search():
    x = P.var("x")
    even = P.exists(["y"], P.eq(x, P.var("y").scale(2)))
    assert P.evaluate(even, {"x": 4}, search_box=10) is True
    assert P.evaluate(even, {"x": 3}, search_box=10) is False


def test_evaluate_unknown_on_box_exhaustion():
    # witness sits outside the box, and nothing refutes it box-free
    f = P.exists(["y"], P.eq(P.var("y"), 100))
    assert P.evaluate(f, {}, search_box=3) is None


def test_evaluate_unbound_variable():
    with pytest.raises(P.UnboundFreeVariable):
        P.evaluate(P.ge(P.var("x"), 0), {})


def test_connectives_fold_constants():
    assert P.conj() is P.TRUE
    assert P.disj() is P.FALSE
    assert P.conj(P.TRUE, P.FALSE) is P.FALSE
    assert P.disj(P.TRUE, P.FALSE) is P.TRUE
    assert P.neg(P.neg(P.ge(P.var("x"), 0))) == P.ge(P.var("x"), 0)


def test_linear_term_arithmetic():
    t = P.var("x").scale(2) + P.var("y") - P.var("x") + 5
    assert t.evaluate({"x": 3, "y": 1}) == 9
    assert t.variables == frozenset({"x", "y"})
    assert (P.var("x") - P.var("x")).coeffs == ()


def test_to_smtlib_shape():
    x, y = P.var("x"), P.var("y")
    script = P.to_smtlib(P.eq(x + y, 3))
    assert "(set-logic QF_LIA)" in script
    assert "(assert (= (+ x y) 3))" in script
    assert script.count("(assert") == 1
    assert script.index("(check-sat)") < script.index("(get-model)")
    assert script.count("declare-const") == 2


def test_to_smtlib_quotes_dotted_names():
    script = P.to_smtlib(P.ge(P.var("x.c"), 0))
    assert "|x.c|" in script


def test_to_smtlib_lifts_existentials():
    f = P.conj(P.exists(["k"], P.eq(P.var("y"), P.var("k").scale(2))), P.ge(P.var("y"), 1))
    script = P.to_smtlib(f)
    assert "(declare-const k Int)" in script
    assert "exists" not in script


def test_to_smtlib_negative_constants():
    script = P.to_smtlib(P.le(P.var("x"), -3))
    assert "(- 3)" in script


def test_lift_existentials_freshens_collisions():
    inner = P.exists(["y"], P.eq(P.var("x"), P.var("y") + 1))
    f = P.conj(inner, P.eq(P.var("y"), 0))
    names, body = P.lift_existentials(f)
    assert names and names[0] != "y"
    assert "y" in P.free_variables(f)


def test_lift_existentials_rejects_negated_quantifier():
    with pytest.raises(ValueError):
        P.lift_existentials(P.neg(P.exists(["y"], P.eq(P.var("y"), 0))))


def test_solve_examples():
    backend = BoundedBackend()
    assert P.solve(P.FALSE, backend).status == "unsat"
    big = P.solve(P.eq(P.var("x"), 1000000), backend)
    assert big.status == "sat" and big.model == {"x": 1000000}
    boxed = P.solve(P.eq(P.var("x"), 5), BoundedBackend(box=3))
    assert boxed.status == "unknown"


def test_solve_verifies_models():
    class LyingBackend:
        def solve(self, formula):
            return P.SolveResult("sat", {"x": 0})

    with pytest.raises(P.SolverInvalidModel):
        P.solve(P.eq(P.var("x"), 1), LyingBackend())


def test_sat_models_evaluate_true_fuzz():
    rng = random.Random(23)
    backend = BoundedBackend(box=8)
    for _ in range(120):
        names = ["x", "y", "z", "w"][: rng.randint(1, 4)]
        f = random_formula(rng, names)
        result = P.solve(f, backend)
        if result.status == "sat":
            assert P.evaluate(f, result.model) is True


def test_bounded_agrees_with_enumeration_fuzz():
    rng = random.Random(29)
    box = 3
    backend = BoundedBackend(box=box)
    disagreements = 0
    for _ in range(220):
        names = ["x", "y", "z", "w"][: rng.randint(1, 4)]
        f = random_formula(rng, names)
        truth = P.enumerate_solutions(f, names, box)
        result = backend.solve(f)
        if truth:
            if result.status != "sat":
                disagreements += 1
        else:
            if result.status == "sat" and all(
                -box <= v <= box for v in result.model.values()
            ):
                disagreements += 1
    assert disagreements == 0


def test_enumerate_models_blocks_and_completes():
    f = P.conj(P.ge(P.var("x"), 0), P.le(P.var("x"), 2))
    models, complete = P.enumerate_models(f, ["x"], box=5, limit=10)
    assert sorted(m["x"] for m in models) == [0, 1, 2]
    assert complete


def test_rename_and_substitute():
    f = P.ge(P.var("x.c"), 3)
    renamed = P.rename_variables(f, {"x.c": "y.c"})
    assert P.free_variables(renamed) == frozenset({"y.c"})
    grounded = P.substitute_terms(f, {"x.c": P.var("u") + 1})
    assert P.evaluate(grounded, {"u": 2}) is True
    assert P.evaluate(grounded, {"u": 1}) is False


def test_substitution_shields_bound_variables():
    f = P.exists(["y"], P.eq(P.var("x"), P.var("y")))
    g = P.substitute_values(f, {"x": 7, "y": 99})
    assert P.evaluate(g, {}, search_box=10) is True  # inner y still bound


def test_formula_size_counts_nodes():
    f = P.conj(P.ge(P.var("x"), 0), P.neg(P.eq(P.var("y"), 2)))
    assert P.formula_size(f) > 4
