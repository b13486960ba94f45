"""State-extended ground tree rewrite systems with guarded counters.

A transition picks a rule whose guard holds at the current counter
valuation, replaces one subtree accepted by the rule's left automaton
with a tree from the right automaton's language, adds the rule's update
vector to the counters, moves to the rule's target control state, and
emits the rule's output label.  Runs must keep every counter within the
system's reversal bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping, Sequence

from . import presburger as P
from .automata import NTA, accepts, enumerate_accepted, size_ceiling
from .trees import Position, RankedAlphabet, Tree, rewrite_at

State = Hashable
Label = Hashable


class SystemError(Exception):
    pass


class InvalidGuard(SystemError):
    pass


class ReplayError(Exception):
    def __init__(self, step: int, message: str):
        super().__init__(f"step {step}: {message}")
        self.step = step


class GuardViolated(ReplayError):
    pass


class LhsMismatch(ReplayError):
    pass


class RhsMismatch(ReplayError):
    pass


class StateMismatch(ReplayError):
    pass


class UnknownRule(ReplayError):
    pass


class ReversalBoundExceeded(ReplayError):
    def __init__(self, counter: str, count: int, bound: int):
        super().__init__(-1, f"counter {counter!r} makes {count} reversals, bound is {bound}")
        self.counter = counter
        self.count = count
        self.bound = bound


@dataclass(frozen=True)
class CounterValuation:
    """Total map from counter names to integers, addable pointwise."""

    items: tuple[tuple[str, int], ...]

    @staticmethod
    def of(values: Mapping[str, int]) -> "CounterValuation":
        return CounterValuation(tuple(sorted(values.items())))

    @staticmethod
    def zero(counters: Iterable[str]) -> "CounterValuation":
        return CounterValuation.of({c: 0 for c in counters})

    @cached_property
    def as_dict(self) -> dict[str, int]:
        return dict(self.items)

    def __getitem__(self, counter: str) -> int:
        return self.as_dict[counter]

    def __add__(self, other: "CounterValuation | Mapping[str, int]") -> "CounterValuation":
        additions = other.as_dict if isinstance(other, CounterValuation) else other
        merged = dict(self.as_dict)
        for c, v in additions.items():
            merged[c] = merged.get(c, 0) + v
        return CounterValuation.of(merged)


# Guards are boolean combinations of atoms "counter ~ constant"; the
# presburger AST hosts them so the reduction can substitute terms in.
CounterConstraint = P.Formula

GUARD_TRUE = P.TRUE
GUARD_FALSE = P.FALSE


def counter_atom(counter: str, op: str, value: int) -> CounterConstraint:
    return P.atom(P.var(counter), op, value)


def guard_constants(guard: CounterConstraint) -> set[int]:
    """The integer constants compared against in the guard's atoms."""
    out: set[int] = set()

    def walk(f: P.Formula) -> None:
        if isinstance(f, P.Atom):
            diff = f.lhs - f.rhs
            if len(diff.coeffs) != 1 or diff.coeffs[0][1] not in (1, -1):
                raise InvalidGuard(f"guard atom {f!r} is not of the form counter ~ constant")
            sign = diff.coeffs[0][1]
            out.add(-diff.constant * sign)
        elif isinstance(f, (P.And, P.Or)):
            for g in f.args:
                walk(g)
        elif isinstance(f, P.Not):
            walk(f.arg)
        elif not isinstance(f, P.BoolConst):
            raise InvalidGuard(f"unsupported guard node {f!r}")

    walk(guard)
    return out


def guard_counters(guard: CounterConstraint) -> frozenset[str]:
    return P.free_variables(guard)


def guard_sat(guard: CounterConstraint, valuation: CounterValuation) -> bool:
    result = P.evaluate(guard, valuation.as_dict)
    assert result is not None  # guards are quantifier-free
    return result


def compile_guard(guard: CounterConstraint):
    """Close the guard over plain dict valuations, for hot replay loops."""
    if isinstance(guard, P.BoolConst):
        value = guard.value
        return lambda _v, _value=value: _value
    if isinstance(guard, P.Atom):
        lhs, op, rhs = guard.lhs, guard.op, guard.rhs

        def atom_eval(v, _lhs=lhs, _rhs=rhs, _op=op):
            left = _lhs.constant
            for name, c in _lhs.coeffs:
                left += c * v[name]
            right = _rhs.constant
            for name, c in _rhs.coeffs:
                right += c * v[name]
            if _op == "<=":
                return left <= right
            if _op == ">=":
                return left >= right
            if _op == "<":
                return left < right
            if _op == ">":
                return left > right
            return left == right

        return atom_eval
    if isinstance(guard, P.And):
        parts = [compile_guard(g) for g in guard.args]
        return lambda v, _parts=parts: all(p(v) for p in _parts)
    if isinstance(guard, P.Or):
        parts = [compile_guard(g) for g in guard.args]
        return lambda v, _parts=parts: any(p(v) for p in _parts)
    if isinstance(guard, P.Not):
        inner = compile_guard(guard.arg)
        return lambda v, _inner=inner: not _inner(v)
    raise InvalidGuard(f"cannot compile guard node {guard!r}")


@dataclass(frozen=True)
class Rule:
    rule_id: Hashable
    source: State
    lhs: NTA
    guard: CounterConstraint
    label: Label
    target: State
    rhs: NTA
    update: tuple[tuple[str, int], ...]

    @staticmethod
    def of(
        rule_id: Hashable,
        source: State,
        lhs: NTA,
        guard: CounterConstraint,
        label: Label,
        target: State,
        rhs: NTA,
        update: Mapping[str, int],
    ) -> "Rule":
        return Rule(rule_id, source, lhs, guard, label, target, rhs, tuple(sorted(update.items())))

    @cached_property
    def update_map(self) -> dict[str, int]:
        return dict(self.update)

    def update_of(self, counter: str) -> int:
        return self.update_map.get(counter, 0)


@dataclass(frozen=True)
class SgtrsSystem:
    states: tuple
    alphabet: RankedAlphabet
    output_symbols: tuple
    rules: tuple[Rule, ...]
    counters: tuple[str, ...]
    reversal_bound: int

    def __post_init__(self) -> None:
        if self.reversal_bound < 0:
            raise SystemError("reversal bound must be non-negative")
        declared = set(self.states)
        counters = set(self.counters)
        seen_ids = set()
        for rule in self.rules:
            if rule.rule_id in seen_ids:
                raise SystemError(f"duplicate rule id {rule.rule_id!r}")
            seen_ids.add(rule.rule_id)
            if rule.source not in declared or rule.target not in declared:
                raise SystemError(f"rule {rule.rule_id!r} uses undeclared states")
            if not set(rule.update_map) <= counters:
                raise SystemError(f"rule {rule.rule_id!r} updates undeclared counters")
            if not guard_counters(rule.guard) <= counters:
                raise SystemError(f"rule {rule.rule_id!r} guards undeclared counters")
            guard_constants(rule.guard)  # raises InvalidGuard on bad shapes

    @cached_property
    def rule_by_id(self) -> dict:
        return {rule.rule_id: rule for rule in self.rules}

    @cached_property
    def rules_by_source(self) -> dict:
        out: dict = {}
        for rule in self.rules:
            out.setdefault(rule.source, []).append(rule)
        return out

    def zero_valuation(self) -> CounterValuation:
        return CounterValuation.zero(self.counters)

    def constants(self) -> set[int]:
        out: set[int] = set()
        for rule in self.rules:
            out |= guard_constants(rule.guard)
        return out


@dataclass(frozen=True)
class Configuration:
    state: State
    tree: Tree
    valuation: CounterValuation


@dataclass(frozen=True)
class SymbolicConfigSet:
    """A control state, a tree automaton, and a counter formula.

    The formula's free variables must be named ``x.<counter>``.
    """

    state: State
    nta: NTA
    formula: P.Formula


def counter_variable(counter: str) -> str:
    return f"x.{counter}"


@dataclass(frozen=True)
class Step:
    rule_id: Hashable
    position: Position
    inserted: Tree


@dataclass
class SuccessorSet:
    items: list[tuple[Label, Hashable, Position, Configuration]]
    truncated: bool = False


def successors(
    system: SgtrsSystem, config: Configuration, tree_size_cap: int
) -> SuccessorSet:
    """One-step successors, ordered by (rule order, position, inserted tree).

    Replacement trees are enumerated up to tree_size_cap nodes; if some
    rule's right language has larger members the result is truncated and
    flagged.
    """
    out = SuccessorSet(items=[])
    rhs_cache: dict[int, list[Tree]] = {}
    for index, rule in enumerate(system.rules):
        if rule.source != config.state:
            continue
        if not guard_sat(rule.guard, config.valuation):
            continue
        if index not in rhs_cache:
            rhs_cache[index] = enumerate_accepted(rule.rhs, tree_size_cap)
            ceiling = size_ceiling(rule.rhs)
            if ceiling is None or ceiling > tree_size_cap:
                out.truncated = True
        replacements = rhs_cache[index]
        if not replacements:
            continue
        new_valuation = config.valuation + rule.update_map
        for position in config.tree.positions():
            if not accepts(rule.lhs, config.tree.subtree_at(position)):
                continue
            for inserted in replacements:
                new_tree = rewrite_at(config.tree, position, inserted)
                out.items.append(
                    (
                        rule.label,
                        rule.rule_id,
                        position,
                        Configuration(rule.target, new_tree, new_valuation),
                    )
                )
    return out


def reversals(values: Sequence[int]) -> int:
    """Minimal direction alternations along a counter value sequence.

    The initial direction is free, so a leading descent costs nothing;
    each strict move against the current direction counts one reversal
    and flips it.  This equals the minimal split into maximal monotone
    blocks.
    """
    if not values:
        raise ValueError("reversals of an empty sequence")
    count = 0
    direction = 0
    for previous, current in zip(values, values[1:]):
        if current == previous:
            continue
        move = 1 if current > previous else -1
        if direction == 0:
            direction = move
        elif move != direction:
            count += 1
            direction = move
    return count


def replay(
    system: SgtrsSystem, start: Configuration, steps: Sequence[Step]
) -> tuple[Configuration, tuple[Label, ...]]:
    """Re-run the steps under exact semantics; returns (final, output).

    Checks, per step: the control state, the guard, membership of the
    replaced subtree in the rule's left language, membership of the
    inserted tree in the right language.  Checks the reversal bound for
    every counter over the whole valuation sequence at the end.

    Runs of the same step object (witnesses from counted self-loops can
    repeat one step a million times) are applied in bulk once the tree is
    a fixpoint; guards are still checked at every step.  Counter traces
    are kept compressed per monotone block, which leaves the reversal
    count unchanged.
    """
    state = start.state
    tree = start.tree
    val = dict(start.valuation.as_dict)
    for c in system.counters:
        val.setdefault(c, 0)
    output: list[Label] = []
    traces: dict[str, list[int]] = {c: [val[c]] for c in system.counters}
    membership_cache: dict[tuple[int, Tree], bool] = {}
    guard_cache: dict = {}

    def member(automaton: NTA, tree: Tree) -> bool:
        key = (id(automaton), tree)
        hit = membership_cache.get(key)
        if hit is None:
            hit = accepts(automaton, tree)
            membership_cache[key] = hit
        return hit

    index = 0
    total = len(steps)
    while index < total:
        step = steps[index]
        span = index + 1
        while span < total and steps[span] is step:
            span += 1
        rule = system.rule_by_id.get(step.rule_id)
        if rule is None:
            raise UnknownRule(index, f"no rule with id {step.rule_id!r}")
        guard = guard_cache.get(step.rule_id)
        if guard is None:
            guard = compile_guard(rule.guard)
            guard_cache[step.rule_id] = guard
        updates = [(c, d) for c, d in rule.update if d]

        if rule.source != state:
            raise StateMismatch(
                index, f"rule {step.rule_id!r} starts at {rule.source!r}, not {state!r}"
            )
        if not guard(val):
            raise GuardViolated(index, f"guard of {step.rule_id!r} fails")
        replaced = tree.subtree_at(step.position)
        if not member(rule.lhs, replaced):
            raise LhsMismatch(index, f"subtree at {step.position} not in lhs language")
        if not member(rule.rhs, step.inserted):
            raise RhsMismatch(index, "inserted tree not in rhs language")
        new_tree = rewrite_at(tree, step.position, step.inserted)
        state = rule.target
        for c, d in updates:
            val[c] += d
            traces[c].append(val[c])
        output.append(rule.label)
        repeat = span - index - 1
        index = span
        if repeat == 0 or new_tree != tree or rule.source != rule.target:
            tree = new_tree
            continue
        tree = new_tree
        # Tree and state are fixpoints for the rest of the span.
        trivially_true = isinstance(rule.guard, P.BoolConst) and rule.guard.value
        if trivially_true:
            for c, d in updates:
                base = val[c]
                val[c] = base + repeat * d
                if repeat == 1:
                    traces[c].append(val[c])
                else:
                    traces[c].append(base + d)
                    traces[c].append(val[c])
        else:
            done = 0
            while done < repeat:
                if not guard(val):
                    raise GuardViolated(index - repeat + done, f"guard of {step.rule_id!r} fails")
                for c, d in updates:
                    val[c] += d
                done += 1
            for c, d in updates:
                if repeat == 1:
                    traces[c].append(val[c])
                else:
                    traces[c].append(val[c] - (repeat - 1) * d)
                    traces[c].append(val[c])
        output.extend([rule.label] * repeat)
    for c in system.counters:
        count = reversals(traces[c])
        if count > system.reversal_bound:
            raise ReversalBoundExceeded(c, count, system.reversal_bound)
    final = Configuration(state, tree, CounterValuation.of(val))
    return final, tuple(output)


@dataclass(frozen=True)
class ControlGraph:
    vertices: tuple
    edges: frozenset


def control_graph(system: SgtrsSystem) -> ControlGraph:
    return ControlGraph(
        tuple(system.states),
        frozenset((rule.source, rule.target) for rule in system.rules),
    )


def weakly_synchronized_edges(
    vertices: Sequence, edges: Iterable[tuple]
) -> tuple[bool, list | None]:
    """Whether every cycle is a self-loop; returns a cycle witness if not.

    Checked via strongly connected components: the graph qualifies
    exactly when every component is a single vertex.
    """
    adjacency: dict = {v: [] for v in vertices}
    for a, b in edges:
        if a != b:
            adjacency[a].append(b)
    index_of: dict = {}
    lowlink: dict = {}
    on_stack: set = set()
    stack: list = []
    counter = [0]
    bad_component: list | None = None

    order = list(vertices)

    def strongconnect(root) -> None:
        nonlocal bad_component
        work = [(root, iter(adjacency[root]))]
        index_of[root] = lowlink[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index_of:
                    index_of[w] = lowlink[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(adjacency[w])))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index_of[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index_of[v]:
                component = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    component.append(w)
                    if w == v:
                        break
                if len(component) > 1 and bad_component is None:
                    bad_component = component

    for v in order:
        if v not in index_of:
            strongconnect(v)
    if bad_component is None:
        return True, None
    return False, _cycle_within(bad_component, adjacency)


def _cycle_within(component: list, adjacency: dict) -> list:
    members = set(component)
    start = component[-1]
    # BFS back to start stays inside the component, which is strongly
    # connected, so a cycle always exists.
    parent: dict = {start: None}
    queue = [start]
    while queue:
        v = queue.pop(0)
        for w in adjacency[v]:
            if w not in members:
                continue
            if w == start:
                path = [v]
                while parent[path[-1]] is not None:
                    path.append(parent[path[-1]])
                path.reverse()
                return path
            if w not in parent:
                parent[w] = v
                queue.append(w)
    raise AssertionError("strongly connected component without a cycle")


def is_weakly_synchronized(system: SgtrsSystem) -> tuple[bool, list | None]:
    graph = control_graph(system)
    return weakly_synchronized_edges(graph.vertices, graph.edges)
