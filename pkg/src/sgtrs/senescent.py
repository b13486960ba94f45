"""Node ages, lifespan-restricted replay, and two-counter machine encoding.

Tree nodes age by one whenever the control state changes; rewriting a
subtree resets its nodes to age zero.  With a lifespan in force, a rule
may only rewrite subtrees all of whose nodes are within the lifespan.
A two-counter machine embeds into this model with lifespan 1: counter
values live as leaf counts, increments grow the tree, decrements null a
leaf, and a zero test parks the control in a freeze state that refuses
to refresh the tested counter's leaves, so any surviving leaf outlives
its lifespan and blocks the final balance check.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

from . import presburger as P
from .automata import accepts, enumerate_accepted, singleton
from .system import (
    Configuration,
    CounterValuation,
    GuardViolated,
    LhsMismatch,
    ReplayError,
    ReversalBoundExceeded,
    RhsMismatch,
    Rule,
    SgtrsSystem,
    StateMismatch,
    Step,
    UnknownRule,
    compile_guard,
    counter_atom,
    reversals,
    GUARD_TRUE,
)
from .trees import Position, RankedAlphabet, Tree, leaf, node, rewrite_at


class LifespanViolated(ReplayError):
    def __init__(self, step: int, position: Position, age: int, lifespan: int):
        super().__init__(
            step, f"node at {position} has age {age}, lifespan is {lifespan}"
        )
        self.position = position
        self.age = age
        self.lifespan = lifespan


@dataclass(frozen=True)
class AgedConfiguration:
    """A configuration plus per-node birthdates.

    Births record the number of control-state changes seen when the node
    appeared; a node's age is the current change count minus its birth.
    """

    config: Configuration
    births: tuple[tuple[Position, int], ...]
    control_changes: int

    @staticmethod
    def initial(config: Configuration) -> "AgedConfiguration":
        births = tuple((pos, 0) for pos in config.tree.positions())
        return AgedConfiguration(config, births, 0)

    @cached_property
    def birth_map(self) -> dict[Position, int]:
        return dict(self.births)

    def age(self, position: Position) -> int:
        return self.control_changes - self.birth_map[position]

    def ages(self) -> dict[Position, int]:
        return {pos: self.control_changes - born for pos, born in self.births}


def rewritable_positions(aged: AgedConfiguration, lifespan: int) -> list[Position]:
    """Positions whose whole subtree is within the lifespan.

    The age check covers every node of the subtree being rewritten,
    including its root; surrounding context nodes are exempt.
    """
    ages = aged.ages()
    out = []
    for pos in aged.config.tree.positions():
        subtree = aged.config.tree.subtree_at(pos)
        if all(ages[pos + p] <= lifespan for p in subtree.domain):
            out.append(pos)
    return out


def _aged_apply(
    aged: AgedConfiguration,
    rule: Rule,
    position: Position,
    inserted: Tree,
    index: int,
    lifespan: int,
) -> AgedConfiguration:
    config = aged.config
    subtree = config.tree.subtree_at(position)
    for p in subtree.domain:
        age = aged.control_changes - aged.birth_map[position + p]
        if age > lifespan:
            raise LifespanViolated(index, position + p, age, lifespan)
    new_tree = rewrite_at(config.tree, position, inserted)
    changed = rule.target != config.state
    new_changes = aged.control_changes + (1 if changed else 0)
    births = {
        pos: born
        for pos, born in aged.births
        if pos[: len(position)] != position
    }
    for p in inserted.domain:
        births[position + p] = new_changes
    new_config = Configuration(
        rule.target, new_tree, config.valuation + rule.update_map
    )
    return AgedConfiguration(new_config, tuple(sorted(births.items())), new_changes)


def senescent_trace(
    system: SgtrsSystem,
    lifespan: int,
    start: Configuration,
    steps: Sequence[Step],
):
    """Yield the aged configuration after each step, checking as replay
    does plus the lifespan restriction; reversal bounds checked at the end."""
    aged = AgedConfiguration.initial(start)
    traces = {c: [start.valuation[c]] for c in system.counters}
    yield aged
    for index, step in enumerate(steps):
        rule = system.rule_by_id.get(step.rule_id)
        if rule is None:
            raise UnknownRule(index, f"no rule with id {step.rule_id!r}")
        if rule.source != aged.config.state:
            raise StateMismatch(
                index,
                f"rule {step.rule_id!r} starts at {rule.source!r}, not {aged.config.state!r}",
            )
        if not compile_guard(rule.guard)(aged.config.valuation.as_dict):
            raise GuardViolated(index, f"guard of {step.rule_id!r} fails")
        replaced = aged.config.tree.subtree_at(step.position)
        if not accepts(rule.lhs, replaced):
            raise LhsMismatch(index, f"subtree at {step.position} not in lhs language")
        if not accepts(rule.rhs, step.inserted):
            raise RhsMismatch(index, "inserted tree not in rhs language")
        aged = _aged_apply(aged, rule, step.position, step.inserted, index, lifespan)
        for c in system.counters:
            traces[c].append(aged.config.valuation[c])
        yield aged
    for c in system.counters:
        count = reversals(traces[c])
        if count > system.reversal_bound:
            raise ReversalBoundExceeded(c, count, system.reversal_bound)


def senescent_replay(
    system: SgtrsSystem,
    lifespan: int,
    start: Configuration,
    steps: Sequence[Step],
) -> tuple[AgedConfiguration, tuple]:
    final = None
    for final in senescent_trace(system, lifespan, start, steps):
        pass
    assert final is not None
    output = tuple(system.rule_by_id[s.rule_id].label for s in steps)
    return final, output


# -- two-counter machines ---------------------------------------------------

CM_OPS = ("inc0", "inc1", "dec0", "dec1", "zero0", "zero1")


@dataclass(frozen=True)
class TwoCounterMachine:
    states: tuple[str, ...]
    rules: tuple[tuple[str, str, str], ...]  # (source, op, target)

    def __post_init__(self) -> None:
        declared = set(self.states)
        for source, op, target in self.rules:
            if op not in CM_OPS:
                raise ValueError(f"unknown operation {op!r}")
            if source not in declared or target not in declared:
                raise ValueError(f"rule {source} {op} {target} uses undeclared states")


def parse_two_counter_machine(text: str) -> TwoCounterMachine:
    """One rule per line: ``source op target`` with op in inc0..zero1."""
    rules = []
    states = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"bad two-counter rule line: {raw!r}")
        source, op, target = parts
        rules.append((source, op, target))
        for s in (source, target):
            if s not in states:
                states.append(s)
    return TwoCounterMachine(tuple(states), tuple(rules))


def format_two_counter_machine(machine: TwoCounterMachine) -> str:
    return "\n".join(f"{s} {op} {t}" for s, op, t in machine.rules) + "\n"


def two_counter_step(
    machine: TwoCounterMachine, config: tuple[str, int, int]
) -> list[tuple[tuple[str, str, str], tuple[str, int, int]]]:
    """Successor configurations with the rules that produce them."""
    state, v0, v1 = config
    values = [v0, v1]
    out = []
    for rule in machine.rules:
        source, op, target = rule
        if source != state:
            continue
        kind, i = op[:-1], int(op[-1])
        if kind == "inc":
            new = list(values)
            new[i] += 1
            out.append((rule, (target, new[0], new[1])))
        elif kind == "dec":
            if values[i] >= 1:
                new = list(values)
                new[i] -= 1
                out.append((rule, (target, new[0], new[1])))
        else:
            if values[i] == 0:
                out.append((rule, (target, v0, v1)))
    return out


# -- the encoder -------------------------------------------------------------

FORK, STAR, NULL = "fork", "star", "null"
COUNTER_LEAF = ("c0", "c1")
ENCODER_ALPHABET = RankedAlphabet({FORK: 2, STAR: 0, NULL: 0, "c0": 0, "c1": 0})
ENCODER_COUNTERS = ("inc0", "inc1", "dec0", "dec1")


@dataclass(frozen=True)
class Encoding:
    machine: TwoCounterMachine
    system: SgtrsSystem
    lifespan: int
    initial: Configuration
    final_state: str
    eq_state: str
    freeze_states: dict[tuple[str, int], str]


def _fresh_name(base: str, taken: set[str]) -> str:
    name = base
    while name in taken:
        name += "_"
    taken.add(name)
    return name


def encode_2cm(machine: TwoCounterMachine, s0: str, sf: str) -> Encoding:
    """Senescent system with lifespan 1 simulating the machine.

    Reaching the final control state from (s0, star-leaf, all counters
    zero) under lifespan-restricted, 1-reversal-bounded runs corresponds
    exactly to the machine reaching (sf, 0, 0) from (s0, 0, 0).
    """
    if s0 not in machine.states or sf not in machine.states:
        raise ValueError("initial and final states must belong to the machine")
    taken = set(machine.states)
    final_state = _fresh_name("f", taken)
    eq_state = _fresh_name("eq", taken)
    freeze_states = {
        (s, i): _fresh_name(f"freeze_{i}_{s}", taken)
        for s in machine.states
        for i in (0, 1)
    }

    alphabet = ENCODER_ALPHABET
    single = {
        sym: singleton(leaf(sym), alphabet) for sym in (STAR, NULL, "c0", "c1")
    }
    fork_of = {
        i: singleton(node(FORK, leaf(COUNTER_LEAF[i]), leaf(STAR)), alphabet)
        for i in (0, 1)
    }

    rules: list[Rule] = []
    refresh_symbols = (STAR, "c0", "c1")
    for s in machine.states:
        for sym in refresh_symbols:
            rules.append(
                Rule.of(f"fresh.{s}.{sym}", s, single[sym], GUARD_TRUE, "eps", s, single[sym], {})
            )
    for s in machine.states:
        for i in (0, 1):
            fz = freeze_states[(s, i)]
            for sym in refresh_symbols:
                if sym == COUNTER_LEAF[i]:
                    continue
                rules.append(
                    Rule.of(
                        f"ffresh.{i}.{s}.{sym}", fz, single[sym], GUARD_TRUE, "eps", fz, single[sym], {}
                    )
                )
    for index, (source, op, target) in enumerate(machine.rules):
        kind, i = op[:-1], int(op[-1])
        if kind == "inc":
            rules.append(
                Rule.of(
                    f"inc{i}.{index}", source, single[STAR], GUARD_TRUE, "eps",
                    target, fork_of[i], {f"inc{i}": 1},
                )
            )
        elif kind == "dec":
            rules.append(
                Rule.of(
                    f"dec{i}.{index}", source, single[COUNTER_LEAF[i]], GUARD_TRUE, "eps",
                    target, single[NULL], {f"dec{i}": 1},
                )
            )
        else:
            fz = freeze_states[(target, i)]
            rules.append(
                Rule.of(
                    f"zin{i}.{index}", source, single[STAR], GUARD_TRUE, "eps",
                    fz, single[STAR], {},
                )
            )
            rules.append(
                Rule.of(
                    f"zout{i}.{index}", fz, single[STAR], GUARD_TRUE, "eps",
                    target, single[STAR], {},
                )
            )
    rules.append(
        Rule.of("fin.enter", sf, single[STAR], GUARD_TRUE, "eps", eq_state, single[STAR], {})
    )
    for i in (0, 1):
        rules.append(
            Rule.of(
                f"fin.drain{i}", eq_state, single[STAR], GUARD_TRUE, "eps",
                eq_state, single[STAR], {f"inc{i}": -1, f"dec{i}": -1},
            )
        )
    balance = P.conj(*(counter_atom(c, "=", 0) for c in ENCODER_COUNTERS))
    rules.append(
        Rule.of("fin.accept", eq_state, single[STAR], balance, "eps", final_state, single[STAR], {})
    )

    states = (
        tuple(machine.states)
        + tuple(freeze_states.values())
        + (final_state, eq_state)
    )
    system = SgtrsSystem(
        states=states,
        alphabet=alphabet,
        output_symbols=("eps",),
        rules=tuple(rules),
        counters=ENCODER_COUNTERS,
        reversal_bound=1,
    )
    initial = Configuration(s0, leaf(STAR), CounterValuation.zero(ENCODER_COUNTERS))
    return Encoding(machine, system, 1, initial, final_state, eq_state, freeze_states)


def leaf_count(tree: Tree, symbol: str) -> int:
    if not tree.children:
        return 1 if tree.symbol == symbol else 0
    return sum(leaf_count(c, symbol) for c in tree.children)


def _leaf_positions(tree: Tree, symbols: Iterable[str]) -> list[Position]:
    wanted = set(symbols)
    return sorted(
        pos for pos, sym in tree.labels.items()
        if sym in wanted and not tree.subtree_at(pos).children
    )


def simulate_cm_run(
    encoding: Encoding, cm_rules: Sequence[tuple[str, str, str]]
) -> list[Step]:
    """Senescent steps realizing a two-counter run, refresh discipline
    included: every live leaf is refreshed after each simulated step, and
    during a zero test all leaves except the tested counter's refresh in
    the freeze state."""
    machine = encoding.machine
    rule_index = {rule: i for i, rule in enumerate(machine.rules)}
    tree = encoding.initial.tree
    steps: list[Step] = []
    inc_count = [0, 0]
    dec_count = [0, 0]

    def star_position() -> Position:
        positions = _leaf_positions(tree, [STAR])
        assert len(positions) == 1
        return positions[0]

    def apply(rule_id: str, position: Position, inserted: Tree) -> None:
        nonlocal tree
        steps.append(Step(rule_id, position, inserted))
        tree = rewrite_at(tree, position, inserted)

    def refresh_all(state: str) -> None:
        for pos in _leaf_positions(tree, refreshables):
            sym = tree.subtree_at(pos).symbol
            apply(f"fresh.{state}.{sym}", pos, leaf(sym))

    refreshables = (STAR, "c0", "c1")
    for rule in cm_rules:
        source, op, target = rule
        index = rule_index[rule]
        kind, i = op[:-1], int(op[-1])
        if kind == "inc":
            apply(f"inc{i}.{index}", star_position(),
                  node(FORK, leaf(COUNTER_LEAF[i]), leaf(STAR)))
            inc_count[i] += 1
        elif kind == "dec":
            candidates = _leaf_positions(tree, [COUNTER_LEAF[i]])
            apply(f"dec{i}.{index}", candidates[0], leaf(NULL))
            dec_count[i] += 1
        else:
            apply(f"zin{i}.{index}", star_position(), leaf(STAR))
            fz = encoding.freeze_states[(target, i)]
            for pos in _leaf_positions(tree, refreshables):
                sym = tree.subtree_at(pos).symbol
                if sym == COUNTER_LEAF[i]:
                    continue
                apply(f"ffresh.{i}.{target}.{sym}", pos, leaf(sym))
            apply(f"zout{i}.{index}", star_position(), leaf(STAR))
        refresh_all(target)

    apply("fin.enter", star_position(), leaf(STAR))
    for i in (0, 1):
        for _ in range(inc_count[i]):
            apply(f"fin.drain{i}", star_position(), leaf(STAR))
    apply("fin.accept", star_position(), leaf(STAR))
    return steps


@dataclass
class SimulationReport:
    verdict: str  # "confirmed" | "refuted-within-budget" | "inconclusive"
    cm_run_found: bool
    cm_search_complete: bool
    forward_replay_ok: bool | None
    leaf_invariant_ok: bool | None
    senescent_run_found: bool
    senescent_search_complete: bool
    mapped_back_ok: bool | None
    cm_explored: int
    senescent_explored: int


def _search_cm(machine: TwoCounterMachine, s0: str, sf: str, budget: int):
    start = (s0, 0, 0)
    parent: dict = {start: None}
    queue = [start]
    cursor = 0
    complete = True
    while cursor < len(queue) and cursor < budget:
        config = queue[cursor]
        cursor += 1
        if config == (sf, 0, 0):
            run = []
            walk = config
            while parent[walk] is not None:
                walk, rule = parent[walk]
                run.append(rule)
            run.reverse()
            return run, cursor, complete
        for rule, successor in two_counter_step(machine, config):
            if successor not in parent:
                parent[successor] = (config, rule)
                queue.append(successor)
    if cursor < len(queue):
        complete = False
    return None, cursor, complete


def _search_senescent_for_state(
    encoding: Encoding, budget: int
) -> tuple[list[Step] | None, int, bool]:
    """Bounded BFS over aged configurations, looking for the final state."""
    system = encoding.system
    lifespan = encoding.lifespan
    r = system.reversal_bound
    start = AgedConfiguration.initial(encoding.initial)

    def key_of(aged: AgedConfiguration, dirs: tuple, revs: tuple):
        ages = tuple(
            (pos, min(aged.control_changes - born, lifespan + 1))
            for pos, born in aged.births
        )
        return (aged.config.state, aged.config.tree, aged.config.valuation, ages, dirs, revs)

    zero_dirs = tuple(0 for _ in system.counters)
    zero_revs = tuple(0 for _ in system.counters)
    start_key = key_of(start, zero_dirs, zero_revs)
    parent: dict = {start_key: None}
    queue = [(start, zero_dirs, zero_revs)]
    cursor = 0
    complete = True
    while cursor < len(queue) and cursor < budget:
        aged, dirs, revs = queue[cursor]
        cursor += 1
        if aged.config.state == encoding.final_state:
            run = []
            walk = key_of(aged, dirs, revs)
            while parent[walk] is not None:
                walk, step = parent[walk]
                run.append(step)
            run.reverse()
            return run, cursor, complete
        here_key = key_of(aged, dirs, revs)
        okay_positions = set(rewritable_positions(aged, lifespan))
        for rule in system.rules:
            if rule.source != aged.config.state:
                continue
            if not compile_guard(rule.guard)(aged.config.valuation.as_dict):
                continue
            for inserted in enumerate_accepted(rule.rhs, 3):
                for pos in aged.config.tree.positions():
                    if pos not in okay_positions:
                        continue
                    if not accepts(rule.lhs, aged.config.tree.subtree_at(pos)):
                        continue
                    new_aged = _aged_apply(aged, rule, pos, inserted, cursor, lifespan)
                    new_dirs, new_revs = list(dirs), list(revs)
                    bounded = True
                    for ci, c in enumerate(system.counters):
                        delta = rule.update_of(c)
                        if delta == 0:
                            continue
                        move = 1 if delta > 0 else -1
                        if new_dirs[ci] == 0:
                            new_dirs[ci] = move
                        elif move != new_dirs[ci]:
                            new_revs[ci] += 1
                            new_dirs[ci] = move
                            if new_revs[ci] > r:
                                bounded = False
                                break
                    if not bounded:
                        continue
                    new_key = key_of(new_aged, tuple(new_dirs), tuple(new_revs))
                    if new_key in parent:
                        continue
                    parent[new_key] = (here_key, Step(rule.rule_id, pos, inserted))
                    queue.append((new_aged, tuple(new_dirs), tuple(new_revs)))
    if cursor < len(queue):
        complete = False
    return None, cursor, complete


def _map_back(encoding: Encoding, steps: Sequence[Step], s0: str, sf: str) -> bool:
    """Project a senescent run to machine moves and check it is a valid
    run ending at (sf, 0, 0)."""
    machine = encoding.machine
    config = (s0, 0, 0)
    for step in steps:
        rid = str(step.rule_id)
        tag = rid.split(".", 1)[0]
        if tag.startswith(("fresh", "ffresh", "zout", "fin")):
            continue
        index = int(rid.split(".", 1)[1])
        rule = machine.rules[index]
        moves = dict(two_counter_step(machine, config))
        if rule not in moves:
            return False
        config = moves[rule]
    return config == (sf, 0, 0)


def validate_simulation(
    machine: TwoCounterMachine, s0: str, sf: str, budget: int
) -> SimulationReport:
    """Bounded two-way consistency check of the encoding.

    Forward: a machine run to (sf, 0, 0), when found within budget, must
    yield a senescent run to the final state (constructed with the
    refresh discipline) that passes replay and keeps the leaf-count
    invariant.  Backward: a senescent run to the final state found by
    bounded search must project to a valid machine run.
    """
    encoding = encode_2cm(machine, s0, sf)
    cm_run, cm_explored, cm_complete = _search_cm(machine, s0, sf, budget)

    forward_ok = None
    invariant_ok = None
    if cm_run is not None:
        steps = simulate_cm_run(encoding, cm_run)
        try:
            invariant_ok = True
            final = None
            for aged in senescent_trace(encoding.system, encoding.lifespan,
                                        encoding.initial, steps):
                final = aged
                valuation = aged.config.valuation
                for i in (0, 1):
                    expected = valuation[f"inc{i}"] - valuation[f"dec{i}"]
                    if leaf_count(aged.config.tree, COUNTER_LEAF[i]) != expected:
                        invariant_ok = False
            forward_ok = final is not None and final.config.state == encoding.final_state
        except ReplayError:
            forward_ok = False

    sen_run, sen_explored, sen_complete = _search_senescent_for_state(encoding, budget)
    mapped_ok = None
    if sen_run is not None:
        mapped_ok = _map_back(encoding, sen_run, s0, sf)

    failed = forward_ok is False or invariant_ok is False or mapped_ok is False
    if failed:
        verdict = "refuted-within-budget"
    elif cm_run is not None and forward_ok:
        verdict = "confirmed"
    elif cm_run is None and cm_complete and sen_run is None and sen_complete:
        verdict = "confirmed"
    else:
        verdict = "inconclusive"
    return SimulationReport(
        verdict=verdict,
        cm_run_found=cm_run is not None,
        cm_search_complete=cm_complete,
        forward_replay_ok=forward_ok,
        leaf_invariant_ok=invariant_ok,
        senescent_run_found=sen_run is not None,
        senescent_search_complete=sen_complete,
        mapped_back_ok=mapped_ok,
        cm_explored=cm_explored,
        senescent_explored=sen_explored,
    )
