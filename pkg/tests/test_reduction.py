import random

import pytest

from sgtrs import presburger as P
from sgtrs.engine import oracle_reach
from sgtrs.reduction import (
    FreeVariableMismatch,
    NotWeaklySynchronized,
    ProductLabel,
    arr_var,
    build_product,
    build_psi_prime,
    reg_var,
    rev_var,
    x_var,
    y_var,
    z_var,
)
from sgtrs.solver import BoundedBackend
from sgtrs.system import GUARD_TRUE, Rule, SgtrsSystem, is_weakly_synchronized
from sgtrs.automata import singleton
from sgtrs.trees import leaf

from helpers import (
    SIGMA_AB,
    assignment_for_run,
    e1_system,
    e1_source,
    e1_target,
    random_query,
    random_weak_system,
    run_from_oracle_witness,
)


def test_build_product_counts_e1():
    system = e1_system()
    arts = build_product(system)
    assert arts.n_max == 3  # k=1, m=1, r=0
    assert len(arts.product.states) == len(system.states) * (arts.n_max + 1) == 8
    assert len(arts.product.rules) == len(system.rules) * (2 * arts.n_max + 1)
    per_rule = [a for a in arts.letters if a.rule_id == "t1"]
    assert len(per_rule) == (arts.n_max + 1) + arts.n_max  # 4 + 3


def test_product_is_weakly_synchronized():
    arts = build_product(e1_system())
    assert is_weakly_synchronized(arts.product)[0]


def test_build_product_rejects_cycles():
    ta = singleton(leaf("a"), SIGMA_AB)
    cyclic = SgtrsSystem(
        states=("p", "q"),
        alphabet=SIGMA_AB,
        output_symbols=("u",),
        rules=(
            Rule.of("fwd", "p", ta, GUARD_TRUE, "u", "q", ta, {}),
            Rule.of("back", "q", ta, GUARD_TRUE, "u", "p", ta, {}),
        ),
        counters=(),
        reversal_bound=0,
    )
    with pytest.raises(NotWeaklySynchronized) as err:
        build_product(cyclic)
    assert set(err.value.cycle) == {"p", "q"}


def test_counter_terms_e1():
    arts = build_product(e1_system())
    start0 = arts.start_counter_term(0, 1)
    assert start0 == P.var("x.c")
    end0 = arts.end_counter_term(0, 1)
    assert dict(end0.coeffs) == {"x.c": 1, "z.u.t1.0.0": 1}
    # End minus start only involves phase-i bump-0 letters
    for i in range(arts.n_max + 1):
        diff = arts.end_counter_term(i, 1) - arts.start_counter_term(i, 1)
        for name, _ in diff.coeffs:
            assert name.startswith("z.") and name.endswith(f".{i}.0")


def test_product_label_invariant():
    with pytest.raises(ValueError):
        ProductLabel("u", "t1", 0, 2)
    arts = build_product(e1_system())
    assert all(a.phase < arts.n_max for a in arts.letters if a.bump == 1)


def e1_spec_assignment(arts):
    """The worked satisfying assignment for the three-step loop plus exit."""
    assignment = {z_var(a): 0 for a in arts.letters}
    assignment[z_var(ProductLabel("u", "t1", 0, 0))] = 2
    assignment[z_var(ProductLabel("u", "t1", 0, 1))] = 1
    assignment[z_var(ProductLabel("v", "t2", 1, 0))] = 1
    assignment["x.c"] = 0
    assignment["y.c"] = 3
    for i in range(arts.n_max + 1):
        assignment[reg_var(i, 1)] = 0 if i == 0 else 1
        assignment[rev_var(i, 1)] = 0
        assignment[arr_var(i, 1)] = 1
    return assignment


def test_psi_prime_e1_spec_assignment():
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.eq(P.var("x.c"), 0), P.TRUE)
    assignment = e1_spec_assignment(arts)
    for name, conjunct in [
        ("dom", pp.dom), ("init", pp.init), ("good_seq", pp.good_seq),
        ("respect", pp.respect), ("end_val", pp.end_val),
    ]:
        assert P.evaluate(conjunct, assignment) is True, name
    assert P.evaluate(pp.formula, assignment) is True


def test_psi_prime_named_conjunct_contents():
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.eq(P.var("x.c"), 0), P.TRUE)
    # Init pins the first reversal count of every counter to zero.
    base = e1_spec_assignment(arts)
    broken = dict(base)
    broken[rev_var(0, 1)] = 1
    assert P.evaluate(pp.init, broken) is False
    # Dom bounds the region codes by 2m (m = 1 for E1).
    broken = dict(base)
    broken[reg_var(2, 1)] = 3
    assert P.evaluate(pp.dom, broken) is False
    assert P.evaluate(pp.dom, base) is True


def test_goodseq_flip_requires_reversal_increment():
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.eq(P.var("x.c"), 0), P.TRUE)
    flipped = e1_spec_assignment(arts)
    flipped[arr_var(2, 1)] = 0  # direction change without a reversal bump
    assert P.evaluate(pp.good_seq, flipped) is False


def test_goodseq_equal_directions_keep_reversal_count():
    # The printed "+1 on equal directions" variant would force the count
    # up every phase; the implemented clause keeps it equal.
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.eq(P.var("x.c"), 0), P.TRUE)
    bumped = e1_spec_assignment(arts)
    bumped[rev_var(1, 1)] = 1  # equal arr but incremented reversal count
    assert P.evaluate(pp.good_seq, bumped) is False


def _paper_printed_goodseq(arts, variant: str) -> P.Formula:
    """The two rejected clause readings, built independently here."""
    parts = []
    for j in range(1, arts.k + 1):
        for i in range(arts.n_max):
            arr0, arr1 = P.var(arr_var(i, j)), P.var(arr_var(i + 1, j))
            rev0, rev1 = P.var(rev_var(i, j)), P.var(rev_var(i + 1, j))
            reg0, reg1 = P.var(reg_var(i, j)), P.var(reg_var(i + 1, j))
            if variant == "rev-plus-one-always":
                parts.append(P.implies(P.neg(P.eq(arr0, arr1)), P.eq(rev1, rev0 + 1)))
                parts.append(P.implies(P.eq(arr0, arr1), P.eq(rev1, rev0 + 1)))
                parts.append(P.implies(P.lt(reg0, reg1), P.eq(arr1, 1)))
                parts.append(P.implies(P.gt(reg0, reg1), P.eq(arr1, 0)))
            else:  # inverted direction clauses
                parts.append(P.implies(P.neg(P.eq(arr0, arr1)), P.eq(rev1, rev0 + 1)))
                parts.append(P.implies(P.eq(arr0, arr1), P.eq(rev1, rev0)))
                parts.append(P.implies(P.lt(reg0, reg1), P.eq(arr1, 0)))
                parts.append(P.implies(P.gt(reg0, reg1), P.eq(arr1, 1)))
    return P.conj(*parts)


@pytest.mark.parametrize("variant", ["rev-plus-one-always", "inverted-direction"])
def test_printed_goodseq_variants_reject_the_real_run(variant):
    # Swapping in either printed reading makes the pinned E1 letter counts
    # unsatisfiable, so the reachable instance would be lost.
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.eq(P.var("x.c"), 0), P.TRUE)
    base = e1_spec_assignment(arts)
    pins = [P.eq(P.var(name), value) for name, value in base.items() if name.startswith("z.")]
    pins.append(P.eq(P.var("x.c"), 0))
    variant_formula = P.conj(
        pp.phi1, pp.phi2, pp.dom, pp.init,
        _paper_printed_goodseq(arts, variant), pp.respect, pp.end_val, *pins,
    )
    assert BoundedBackend(box=16).solve(variant_formula).status != "sat"
    implemented = P.conj(pp.formula, *pins)
    assert BoundedBackend(box=16).solve(implemented).status == "sat"


def test_phi_free_variable_mismatch():
    system = e1_system()
    arts = build_product(system)
    with pytest.raises(FreeVariableMismatch):
        build_psi_prime(system, arts, P.eq(P.var("wrong"), 0), P.TRUE)


def test_phi2_renamed_to_y():
    system = e1_system()
    arts = build_product(system)
    pp = build_psi_prime(system, arts, P.TRUE, P.ge(P.var("x.c"), 2))
    assert P.free_variables(pp.phi2) == frozenset({"y.c"})


def test_oracle_runs_admit_assignments():
    # Every short oracle-found run yields letter totals under which the
    # mode constraints are satisfiable.
    rng = random.Random(41)
    checked = 0
    attempts = 0
    while checked < 12 and attempts < 120:
        attempts += 1
        system = random_weak_system(rng)
        source, target = random_query(rng, system)
        result = oracle_reach(system, source, target, max_steps=6, max_tree_nodes=4,
                              value_box=8)
        if result.status != "reachable":
            continue
        arts = build_product(system)
        pp = build_psi_prime(system, arts, source.formula, target.formula)
        witness = result.witness
        model = assignment_for_run(
            system, arts, pp, witness.initial, witness.final,
            run_from_oracle_witness(witness),
        )
        assert model is not None, (system, witness.steps)
        checked += 1
    assert checked == 12


def test_variable_map_lists_every_family():
    arts = build_product(e1_system())
    vm = arts.variable_map()
    assert vm["x"] == ["x.c"] and vm["y"] == ["y.c"]
    assert len(vm["z"]) == len(arts.letters)
    assert len(vm["reg"]) == arts.n_max + 1
    assert z_var(arts.letters[0]).startswith("z.")
    assert x_var("c") == "x.c" and y_var("c") == "y.c"
