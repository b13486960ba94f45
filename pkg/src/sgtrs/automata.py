"""Bottom-up nondeterministic tree automata (NTAs).

States may be any hashable values; product states are pairs.  Only the
operations the reachability pipeline needs are provided: membership,
emptiness with a smallest witness, product intersection, singleton and
universal automata, and bounded exact enumeration of the language.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Hashable, Iterable

from .trees import Position, RankedAlphabet, Tree, format_term

State = Hashable


class AlphabetMismatch(Exception):
    pass


@dataclass(frozen=True)
class NtaRule:
    children: tuple[State, ...]
    symbol: str
    state: State


@dataclass(frozen=True)
class NTA:
    alphabet: RankedAlphabet
    states: frozenset
    finals: frozenset
    rules: frozenset

    def __post_init__(self) -> None:
        if not self.finals <= self.states:
            raise ValueError("final states must be a subset of the states")
        for rule in self.rules:
            if rule.state not in self.states:
                raise ValueError(f"rule target {rule.state!r} not a state")
            if any(q not in self.states for q in rule.children):
                raise ValueError(f"rule children of {rule!r} not all states")
            if rule.symbol not in self.alphabet:
                raise ValueError(f"rule symbol {rule.symbol!r} not in the alphabet")
            if len(rule.children) != self.alphabet.rank(rule.symbol):
                raise ValueError(f"rule arity mismatch for symbol {rule.symbol!r}")

    @cached_property
    def rules_by_symbol(self) -> dict[str, list[NtaRule]]:
        index: dict[str, list[NtaRule]] = {}
        for rule in sorted(self.rules, key=_rule_key):
            index.setdefault(rule.symbol, []).append(rule)
        return index


def _rule_key(rule: NtaRule) -> tuple:
    return (rule.symbol, repr(rule.children), repr(rule.state))


def nta(
    alphabet: RankedAlphabet,
    states: Iterable[State],
    finals: Iterable[State],
    rules: Iterable[tuple[tuple[State, ...], str, State]],
) -> NTA:
    return NTA(
        alphabet,
        frozenset(states),
        frozenset(finals),
        frozenset(NtaRule(tuple(cs), sym, q) for cs, sym, q in rules),
    )


def reachable_states(automaton: NTA, tree: Tree) -> frozenset:
    """States the automaton can assign to the root of the tree."""
    memo: dict[Tree, frozenset] = {}

    def go(here: Tree) -> frozenset:
        cached = memo.get(here)
        if cached is not None:
            return cached
        child_states = [go(child) for child in here.children]
        out = set()
        for rule in automaton.rules_by_symbol.get(here.symbol, ()):
            if all(q in child_states[i] for i, q in enumerate(rule.children)):
                out.add(rule.state)
        result = frozenset(out)
        memo[here] = result
        return result

    return go(tree)


def accepts(automaton: NTA, tree: Tree) -> bool:
    return bool(reachable_states(automaton, tree) & automaton.finals)


def smallest_accepted(automaton: NTA) -> Tree | None:
    """A smallest accepted tree (ties broken by printed form), or None."""
    # Witness per state, improved to a fixpoint; (size, text) keeps the
    # choice deterministic.
    best: dict[State, tuple[int, str, Tree]] = {}
    changed = True
    while changed:
        changed = False
        for rule in sorted(automaton.rules, key=_rule_key):
            if any(q not in best for q in rule.children):
                continue
            parts = [best[q] for q in rule.children]
            size = 1 + sum(p[0] for p in parts)
            tree = Tree(rule.symbol, tuple(p[2] for p in parts))
            entry = (size, format_term(tree), tree)
            old = best.get(rule.state)
            if old is None or entry[:2] < old[:2]:
                best[rule.state] = entry
                changed = True
    candidates = [best[q] for q in automaton.finals if q in best]
    if not candidates:
        return None
    return min(candidates)[2]


def is_empty(automaton: NTA) -> bool:
    return smallest_accepted(automaton) is None


def intersect(a: NTA, b: NTA) -> NTA:
    """Product automaton accepting the intersection of the languages."""
    if a.alphabet != b.alphabet:
        raise AlphabetMismatch("intersect requires automata over the same alphabet")
    states = frozenset(itertools.product(a.states, b.states))
    finals = frozenset(itertools.product(a.finals, b.finals))
    rules = set()
    for ra in a.rules:
        for rb in b.rules_by_symbol.get(ra.symbol, ()):
            rules.add(
                NtaRule(tuple(zip(ra.children, rb.children)), ra.symbol, (ra.state, rb.state))
            )
    return NTA(a.alphabet, states, finals, frozenset(rules))


def singleton(tree: Tree, alphabet: RankedAlphabet) -> NTA:
    """An automaton accepting exactly the given tree (one state per node)."""
    states: set[State] = set(tree.domain)
    rules = set()
    for position in tree.domain:
        sub = tree.subtree_at(position)
        children = tuple(position + (i,) for i in range(1, len(sub.children) + 1))
        rules.add(NtaRule(children, sub.symbol, position))
    return NTA(alphabet, frozenset(states), frozenset({()}), frozenset(rules))


def universal(alphabet: RankedAlphabet) -> NTA:
    """A one-state automaton accepting every valid tree over the alphabet."""
    state = "u"
    rules = frozenset(
        NtaRule((state,) * rank, symbol, state) for symbol, rank in alphabet.items()
    )
    return NTA(alphabet, frozenset({state}), frozenset({state}), rules)


def enumerate_accepted(automaton: NTA, max_nodes: int) -> list[Tree]:
    """All accepted trees with at most max_nodes nodes.

    The result is ordered by size and then by printed form, without
    duplicates; the enumeration is exact, not sampled.
    """
    return list(_enumerate_cached(automaton, max_nodes))


@lru_cache(maxsize=4096)
def _enumerate_cached(automaton: NTA, max_nodes: int) -> tuple[Tree, ...]:
    if max_nodes < 1:
        return ()
    # table[state][size] = set of trees of that exact size reaching state
    table: dict[State, dict[int, set[Tree]]] = {q: {} for q in automaton.states}
    for size in range(1, max_nodes + 1):
        for rule in automaton.rules:
            arity = len(rule.children)
            if arity == 0:
                if size == 1:
                    table[rule.state].setdefault(1, set()).add(Tree(rule.symbol, ()))
                continue
            budget = size - 1
            if budget < arity:
                continue
            for split in _compositions(budget, arity):
                pools = [
                    sorted(table[q].get(n, ()), key=format_term)
                    for q, n in zip(rule.children, split)
                ]
                if any(not pool for pool in pools):
                    continue
                for combo in itertools.product(*pools):
                    table[rule.state].setdefault(size, set()).add(Tree(rule.symbol, combo))
    out: set[Tree] = set()
    for q in automaton.finals:
        for size_set in table[q].values():
            out.update(size_set)
    return tuple(sorted(out, key=lambda t: (t.size, format_term(t))))


def _compositions(total: int, parts: int):
    """All tuples of positive integers of the given length summing to total."""
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


@lru_cache(maxsize=4096)
def size_ceiling(automaton: NTA) -> int | None:
    """Largest accepted tree size, 0 for the empty language, None if unbounded."""
    # Trim to useful states: productive (have a witness) and co-reachable
    # from a final state.
    productive = set()
    changed = True
    while changed:
        changed = False
        for rule in automaton.rules:
            if rule.state not in productive and all(q in productive for q in rule.children):
                productive.add(rule.state)
                changed = True
    useful_up: set[State] = set(q for q in automaton.finals if q in productive)
    changed = True
    while changed:
        changed = False
        for rule in automaton.rules:
            if rule.state in useful_up:
                for q in rule.children:
                    if q in productive and q not in useful_up:
                        useful_up.add(q)
                        changed = True
    useful = useful_up
    if not useful:
        return 0
    # A cycle in the child relation over useful states pumps arbitrarily
    # large trees.
    edges: dict[State, set[State]] = {q: set() for q in useful}
    for rule in automaton.rules:
        if rule.state in useful:
            for q in rule.children:
                if q in useful:
                    edges[rule.state].add(q)
    order: list[State] = []
    seen: dict[State, int] = {}  # 0 = in progress, 1 = done
    for start in useful:
        if start in seen:
            continue
        stack: list[tuple[State, Iterable[State]]] = [(start, iter(sorted(edges[start], key=repr)))]
        seen[start] = 0
        while stack:
            here, it = stack[-1]
            advanced = False
            for nxt in it:
                if nxt not in seen:
                    seen[nxt] = 0
                    stack.append((nxt, iter(sorted(edges[nxt], key=repr))))
                    advanced = True
                    break
                if seen[nxt] == 0:
                    return None  # cycle
            if not advanced:
                seen[here] = 1
                order.append(here)
                stack.pop()
    # order is a reverse topological sort: children come first.
    max_size: dict[State, int] = {}
    for q in order:
        sizes = []
        for rule in automaton.rules:
            if rule.state != q:
                continue
            if any(c not in useful for c in rule.children):
                continue
            if any(c not in max_size for c in rule.children):
                continue
            sizes.append(1 + sum(max_size[c] for c in rule.children))
        if sizes:
            max_size[q] = max(sizes)
    finals = [max_size[q] for q in automaton.finals if q in max_size]
    return max(finals) if finals else 0
