"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import random

from sgtrs import presburger as P
from sgtrs.automata import NTA, enumerate_accepted, nta, singleton, universal
from sgtrs.parikh import FiniteLTS, LtsBounds, LtsEdge
from sgtrs.reduction import ReductionArtifacts, z_var
from sgtrs.solver import BoundedBackend
from sgtrs.system import (
    GUARD_TRUE,
    Configuration,
    CounterValuation,
    Rule,
    SgtrsSystem,
    Step,
    SymbolicConfigSet,
    counter_atom,
    counter_variable,
)
from sgtrs.trees import RankedAlphabet, Tree, leaf, node

SIGMA_AB = RankedAlphabet({"a": 0, "b": 0})


def e1_system(guard_const: int = 3, reversal_bound: int = 0) -> SgtrsSystem:
    """Two states, a counting self-loop, and a guarded exit."""
    ta = singleton(leaf("a"), SIGMA_AB)
    tb = singleton(leaf("b"), SIGMA_AB)
    return SgtrsSystem(
        states=("p", "q"),
        alphabet=SIGMA_AB,
        output_symbols=("u", "v"),
        rules=(
            Rule.of("t1", "p", ta, GUARD_TRUE, "u", "p", ta, {"c": 1}),
            Rule.of("t2", "p", ta, counter_atom("c", ">=", guard_const), "v", "q", tb, {}),
        ),
        counters=("c",),
        reversal_bound=reversal_bound,
    )


def e1_source() -> SymbolicConfigSet:
    return SymbolicConfigSet("p", singleton(leaf("a"), SIGMA_AB), P.eq(P.var("x.c"), 0))


def e1_target() -> SymbolicConfigSet:
    return SymbolicConfigSet("q", universal(SIGMA_AB), P.TRUE)


def brute_min_reversals(values) -> int:
    """Minimal r such that r+1 monotone blocks cover the sequence.

    Adjacent blocks share their boundary value, so every adjacent pair of
    the sequence is inside some block.  Exhaustive over cut positions;
    independent of the direction-automaton implementation.
    """
    n = len(values)
    if n <= 1:
        return 0

    def monotone(segment) -> bool:
        up = all(x <= y for x, y in zip(segment, segment[1:]))
        down = all(x >= y for x, y in zip(segment, segment[1:]))
        return up or down

    for blocks in range(1, n + 1):
        for cuts in itertools.combinations(range(1, n - 1), blocks - 1):
            bounds = (0,) + cuts + (n - 1,)
            if all(
                monotone(values[bounds[i]: bounds[i + 1] + 1]) for i in range(blocks)
            ):
                return blocks - 1
    return n - 1


def naive_accepts(automaton: NTA, tree: Tree) -> bool:
    """Membership by enumerating all state assignments to positions."""
    positions = tree.positions()
    for assignment in itertools.product(sorted(automaton.states, key=repr), repeat=len(positions)):
        state_of = dict(zip(positions, assignment))
        ok = True
        for pos in positions:
            sub = tree.subtree_at(pos)
            children = tuple(state_of[pos + (i,)] for i in range(1, len(sub.children) + 1))
            if not any(
                rule.children == children and rule.symbol == sub.symbol and rule.state == state_of[pos]
                for rule in automaton.rules
            ):
                ok = False
                break
        if ok and state_of[()] in automaton.finals:
            return True
    return False


def all_trees(alphabet: RankedAlphabet, max_nodes: int) -> list[Tree]:
    return enumerate_accepted(universal(alphabet), max_nodes)


def random_nta(rng: random.Random, alphabet: RankedAlphabet, max_states: int = 2) -> NTA:
    states = [f"s{i}" for i in range(rng.randint(1, max_states))]
    rules = []
    for symbol, rank in alphabet.items():
        for children in itertools.product(states, repeat=rank):
            if rng.random() < 0.7:
                rules.append((children, symbol, rng.choice(states)))
    finals = [q for q in states if rng.random() < 0.6] or [states[0]]
    return nta(alphabet, states, finals, rules)


def random_tree(rng: random.Random, alphabet: RankedAlphabet, max_nodes: int) -> Tree:
    choices = all_trees(alphabet, max_nodes)
    return rng.choice(choices)


def random_weak_system(rng: random.Random) -> SgtrsSystem:
    """A small weakly synchronized instance within the agreed bounds.

    States form a line with optional self-loops, so the control graph is
    a DAG with self-loops by construction.
    """
    n_states = rng.randint(2, 4)
    states = tuple(f"p{i}" for i in range(n_states))
    use_unary = rng.random() < 0.4
    symbols = {"a": 0, "b": 0}
    if use_unary:
        symbols["g"] = 1
    alphabet = RankedAlphabet(symbols)
    counters = tuple(["c", "d"][: rng.randint(1, 2)])
    r = rng.randint(0, 2)
    n_rules = rng.randint(2, 6)
    trees = all_trees(alphabet, 3)
    small = all_trees(alphabet, 2)
    rules = []
    for index in range(n_rules):
        if rng.random() < 0.4:
            lo = rng.randrange(n_states)
            hi = min(lo + 1, n_states - 1)
        else:
            lo = rng.randrange(n_states)
            hi = rng.randrange(lo, n_states)
        source, target = states[lo], states[hi]
        if rng.random() < 0.3:
            lhs = universal(alphabet)
        else:
            lhs = singleton(rng.choice(small), alphabet)
        rhs = singleton(rng.choice(trees), alphabet)
        if rng.random() < 0.2:
            rhs = random_nta(rng, alphabet)
        guard = GUARD_TRUE
        roll = rng.random()
        if roll < 0.3:
            guard = counter_atom(rng.choice(counters), rng.choice(["<=", ">=", "=", "<", ">"]),
                                 rng.randint(-2, 2))
        elif roll < 0.4:
            guard = P.conj(
                counter_atom(rng.choice(counters), ">=", rng.randint(-2, 0)),
                counter_atom(rng.choice(counters), "<=", rng.randint(0, 2)),
            )
        elif roll < 0.48:
            guard = P.neg(counter_atom(rng.choice(counters), "=", rng.randint(-2, 2)))
        update = {c: rng.choice([-1, 0, 0, 1, 1]) for c in counters}
        label = rng.choice(["u", "v", "w"])
        rules.append(
            Rule.of(f"t{index}", source, lhs, guard, label, target, rhs, update)
        )
    return SgtrsSystem(
        states=states,
        alphabet=alphabet,
        output_symbols=("u", "v", "w"),
        rules=tuple(rules),
        counters=counters,
        reversal_bound=r,
    )


def random_query(rng: random.Random, system: SgtrsSystem):
    trees = all_trees(system.alphabet, 2)
    if rng.random() < 0.5:
        start_formula = P.conj(
            *(P.eq(P.var(counter_variable(c)), 0) for c in system.counters)
        )
    else:
        start_formula = P.conj(
            *(
                P.conj(
                    P.ge(P.var(counter_variable(c)), rng.randint(-1, 0)),
                    P.le(P.var(counter_variable(c)), rng.randint(0, 1)),
                )
                for c in system.counters
            )
        )
    source = SymbolicConfigSet(
        system.states[0], singleton(rng.choice(trees), system.alphabet), start_formula
    )
    target_state = rng.choice(system.states[1:])
    if rng.random() < 0.3:
        target_formula = P.ge(
            P.var(counter_variable(rng.choice(system.counters))), rng.randint(0, 2)
        )
    else:
        target_formula = P.TRUE
    target = SymbolicConfigSet(target_state, universal(system.alphabet), target_formula)
    return source, target


def assignment_for_run(
    system: SgtrsSystem,
    arts: ReductionArtifacts,
    psi_prime,
    initial: Configuration,
    final: Configuration,
    rule_counts: dict,
    box: int = 24,
) -> dict[str, int] | None:
    """A mode assignment consistent with a concrete run's letter totals.

    Pins the initial and final counter values and, per base rule, the
    total count across all phases and bump flags, then asks the bounded
    solver for mode/phase variables satisfying the named conjuncts.
    """
    pins = []
    for c in system.counters:
        pins.append(P.eq(P.var(f"x.{c}"), initial.valuation[c]))
        pins.append(P.eq(P.var(f"y.{c}"), final.valuation[c]))
    by_rule: dict = {}
    for letter in arts.letters:
        by_rule.setdefault(letter.rule_id, []).append(z_var(letter))
    for rule in system.rules:
        names = by_rule[rule.rule_id]
        total = P.LinearTerm.of({name: 1 for name in names})
        pins.append(P.eq(total, rule_counts.get(rule.rule_id, 0)))
        for name in names:
            pins.append(P.ge(P.var(name), 0))
    formula = P.conj(psi_prime.formula, *pins)
    result = BoundedBackend(box=box).solve(formula)
    if result.status != "sat":
        return None
    return result.model


def hand_lts(edges, initial, final, letters) -> FiniteLTS:
    """A finite LTS from raw (src, letter, dst) triples over integer nodes."""
    n_nodes = 1 + max(
        [max(e[0], e[2]) for e in edges] + list(initial) + list(final), default=0
    )
    nodes = tuple(("n", leaf("a")) for _ in range(n_nodes))
    built = tuple(
        LtsEdge(src, letter, dst, (), leaf("a")) for src, letter, dst in edges
    )
    return FiniteLTS(
        nodes=nodes,
        edges=built,
        initial=tuple(initial),
        final=tuple(final),
        bounds=LtsBounds(1, 1, True),
    )


def brute_parikh_vectors(lts: FiniteLTS, letters, cap: int) -> set[tuple]:
    """Parikh images (as tuples in letter order) of all initial-to-final
    paths whose per-letter counts stay within the cap; exhaustive DFS."""
    order = list(letters)
    out: set[tuple] = set()
    edges_from: dict[int, list[LtsEdge]] = {}
    for edge in lts.edges:
        edges_from.setdefault(edge.src, []).append(edge)
    final = set(lts.final)

    def dfs(here: int, counts: dict) -> None:
        if here in final:
            out.add(tuple(counts.get(letter, 0) for letter in order))
        for edge in edges_from.get(here, ()):
            if counts.get(edge.label, 0) + 1 > cap:
                continue
            counts[edge.label] = counts.get(edge.label, 0) + 1
            dfs(edge.dst, counts)
            counts[edge.label] -= 1

    for start in lts.initial:
        dfs(start, {})
    return out


def random_lts(rng: random.Random, max_nodes: int = 6, max_edges: int = 8,
               letters=("a", "b", "c")) -> tuple[FiniteLTS, tuple]:
    n_nodes = rng.randint(1, max_nodes)
    n_letters = rng.randint(1, len(letters))
    used = letters[:n_letters]
    n_edges = rng.randint(0, max_edges)
    edges = [
        (rng.randrange(n_nodes), rng.choice(used), rng.randrange(n_nodes))
        for _ in range(n_edges)
    ]
    edges = sorted(set(edges))
    initial = sorted({rng.randrange(n_nodes) for _ in range(rng.randint(1, 2))})
    final = sorted({rng.randrange(n_nodes) for _ in range(rng.randint(1, 2))})
    return hand_lts(edges, initial, final, used), used


def random_formula(rng: random.Random, variables, depth: int = 2) -> P.Formula:
    """Random quantifier-free formula with small coefficients."""
    def term() -> P.LinearTerm:
        coeffs = {}
        for v in variables:
            if rng.random() < 0.6:
                coeffs[v] = rng.randint(-3, 3)
        return P.LinearTerm.of(coeffs, rng.randint(-3, 3))

    def go(level: int) -> P.Formula:
        if level == 0 or rng.random() < 0.35:
            op = rng.choice(["<=", ">=", "<", ">", "="])
            return P.atom(term(), op, term())
        kind = rng.random()
        if kind < 0.4:
            return P.conj(*(go(level - 1) for _ in range(rng.randint(1, 3))))
        if kind < 0.8:
            return P.disj(*(go(level - 1) for _ in range(rng.randint(1, 3))))
        return P.neg(go(level - 1))

    return go(depth)


def run_from_oracle_witness(witness) -> dict:
    """Per-rule totals of a witness's steps."""
    counts: dict = {}
    for step in witness.steps:
        counts[step.rule_id] = counts.get(step.rule_id, 0) + 1
    return counts
