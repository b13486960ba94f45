"""End-to-end reachability checking, certified witnesses, and the oracle.

The pipeline builds the phase-indexed product, a bounded LTS over it,
the letter-count formula for that LTS, and the mode-sequence constraint,
then hands the conjunction to a solver.  Sat models are turned back into
concrete runs and re-executed under exact semantics before a reachable
verdict is reported; an unsat answer proves unreachability only when the
LTS was saturated, and otherwise the verdict stays bounds-relative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import presburger as P
from . import reduction
from .automata import accepts, enumerate_accepted, singleton, universal
from .parikh import (
    FiniteLTS,
    InconsistentFlow,
    build_lts,
    extract_path,
    parikh_formula,
)
from .solver import BoundedBackend
from .system import (
    Configuration,
    CounterValuation,
    ReplayError,
    SgtrsSystem,
    Step,
    SymbolicConfigSet,
    counter_variable,
    replay,
    successors,
)
from .trees import Tree


class ReconstructionFailed(Exception):
    pass


@dataclass(frozen=True)
class Witness:
    initial: Configuration
    steps: tuple[Step, ...]
    final: Configuration
    output: tuple
    counts: dict[str, int]


def _config_to_dict(config: Configuration) -> dict:
    from .trees import format_term

    return {
        "state": str(config.state),
        "tree": format_term(config.tree),
        "counters": dict(config.valuation.as_dict),
    }


def _config_from_dict(data: dict) -> Configuration:
    from .trees import parse_term

    return Configuration(
        data["state"],
        parse_term(data["tree"]),
        CounterValuation.of({c: int(v) for c, v in data.get("counters", {}).items()}),
    )


def witness_to_dict(witness: Witness) -> dict:
    """JSON-ready form: initial, steps[], final, output, counts."""
    from .trees import format_term

    return {
        "initial": _config_to_dict(witness.initial),
        "steps": [
            {
                "rule": str(step.rule_id),
                "position": list(step.position),
                "inserted": format_term(step.inserted),
            }
            for step in witness.steps
        ],
        "final": _config_to_dict(witness.final),
        "output": [str(label) for label in witness.output],
        "counts": dict(witness.counts),
    }


def steps_from_dict(data: dict) -> tuple[Configuration, list[Step]]:
    """Initial configuration and steps from a witness document."""
    from .trees import parse_term

    payload = data.get("witness", data)
    initial = _config_from_dict(payload["initial"])
    steps = [
        Step(item["rule"], tuple(item["position"]), parse_term(item["inserted"]))
        for item in payload["steps"]
    ]
    return initial, steps


REACHABLE = "reachable"
NOT_REACHABLE = "not-reachable"
NOT_REACHABLE_WITHIN_BOUNDS = "not-reachable-within-bounds"
UNKNOWN = "unknown"


@dataclass
class Verdict:
    status: str
    witness: Witness | None = None
    bounds: dict = field(default_factory=dict)
    reason: str = ""


@dataclass
class EngineOptions:
    initial_tree_bound: int = 3
    max_tree_nodes: int = 8
    solver: object | None = None  # anything with solve(formula) -> SolveResult
    solver_box: int | None = None
    max_model_retries: int = 32


@dataclass
class Pipeline:
    """Everything the reduction produces for one query, pre-solving."""

    arts: reduction.ReductionArtifacts
    lts: FiniteLTS
    psi: P.Formula
    psi_prime: reduction.PsiPrime
    formula: P.Formula


def prepare(
    system: SgtrsSystem,
    source: SymbolicConfigSet,
    target: SymbolicConfigSet,
    options: EngineOptions | None = None,
) -> Pipeline:
    options = options or EngineOptions()
    arts = reduction.build_product(system)
    lts = build_lts(
        arts.product,
        (source.state, 0),
        source.nta,
        {(target.state, i) for i in range(arts.n_max + 1)},
        target.nta,
        max_tree_nodes=options.max_tree_nodes,
        initial_tree_bound=options.initial_tree_bound,
    )
    psi = parikh_formula(lts, arts.letters, z_name=reduction.z_var)
    psi_prime = reduction.build_psi_prime(system, arts, source.formula, target.formula)
    return Pipeline(arts, lts, psi, psi_prime, P.conj(psi, psi_prime.formula))


def reconstruct_witness(
    model: dict[str, int],
    lts: FiniteLTS,
    arts: reduction.ReductionArtifacts,
    system: SgtrsSystem,
    target: SymbolicConfigSet,
) -> Witness:
    """Invert the letter-count abstraction into a replay-certified run."""
    try:
        source_node, edge_walk = extract_path(lts, model)
    except InconsistentFlow as error:
        raise ReconstructionFailed(str(error)) from error
    state, tree = lts.nodes[source_node]
    base_state = state[0]
    valuation = CounterValuation.of(
        {c: model.get(reduction.x_var(c), 0) for c in system.counters}
    )
    initial = Configuration(base_state, tree, valuation)
    step_of_edge = {
        i: Step(lts.edges[i].label.rule_id, lts.edges[i].position, lts.edges[i].inserted)
        for i in set(edge_walk)
    }
    steps = tuple(step_of_edge[i] for i in edge_walk)
    try:
        final, output = replay(system, initial, steps)
    except ReplayError as error:
        raise ReconstructionFailed(f"replay rejected the extracted run: {error}") from error
    if final.state != target.state:
        raise ReconstructionFailed(f"run ends in {final.state!r}, not {target.state!r}")
    if not accepts(target.nta, final.tree):
        raise ReconstructionFailed("final tree not accepted by the target automaton")
    closing = P.evaluate(
        target.formula, {counter_variable(c): final.valuation[c] for c in system.counters}
    )
    if closing is not True:
        raise ReconstructionFailed("final counter values do not satisfy the target formula")
    counts = {
        reduction.z_var(a): model[reduction.z_var(a)]
        for a in arts.letters
        if model.get(reduction.z_var(a), 0)
    }
    return Witness(initial, steps, final, output, counts)


def check_reachability(
    system: SgtrsSystem,
    source: SymbolicConfigSet,
    target: SymbolicConfigSet,
    options: EngineOptions | None = None,
) -> Verdict:
    """Decide whether some source configuration reaches some target one.

    Raises NotWeaklySynchronized for systems with non-self-loop control
    cycles.  Reachable verdicts always carry a certified witness.
    """
    options = options or EngineOptions()
    pipe = prepare(system, source, target, options)
    backend = options.solver
    if backend is None:
        backend = BoundedBackend(box=options.solver_box)
    bounds = {
        "initial_tree_bound": options.initial_tree_bound,
        "max_tree_nodes": options.max_tree_nodes,
        "n_max": pipe.arts.n_max,
        "region_constants": list(pipe.arts.region_table.constants),
        "lts_nodes": len(pipe.lts.nodes),
        "lts_edges": len(pipe.lts.edges),
        "lts_saturated": pipe.lts.bounds.saturated,
        "solver_box": getattr(backend, "box", None),
    }

    formula = pipe.formula
    failures: list[str] = []
    for attempt in range(options.max_model_retries + 1):
        result = P.solve(formula, backend)
        if result.status == "unsat":
            if pipe.lts.bounds.saturated and not failures:
                return Verdict(NOT_REACHABLE, bounds=bounds)
            reason = "; ".join(failures) if failures else "tree bounds not exhaustive"
            return Verdict(NOT_REACHABLE_WITHIN_BOUNDS, bounds=bounds, reason=reason)
        if result.status == "unknown":
            if "budget" in result.reason:
                return Verdict(UNKNOWN, bounds=bounds, reason=result.reason)
            return Verdict(NOT_REACHABLE_WITHIN_BOUNDS, bounds=bounds, reason=result.reason)
        model = result.model or {}
        try:
            witness = reconstruct_witness(model, pipe.lts, pipe.arts, system, target)
            bounds["model_retries"] = attempt
            return Verdict(REACHABLE, witness=witness, bounds=bounds)
        except ReconstructionFailed as error:
            failures.append(str(error))
            formula = P.conj(formula, _block_model(pipe, system, model))
    return Verdict(
        UNKNOWN,
        bounds=bounds,
        reason=f"models kept failing replay after {options.max_model_retries} retries: "
        + "; ".join(failures[-2:]),
    )


def _block_model(pipe: Pipeline, system: SgtrsSystem, model: dict[str, int]) -> P.Formula:
    """Exclude the path-determining projection of a failed model."""
    pins = []
    from .parikh import flow_var, sink_var, source_var

    for i in range(len(pipe.lts.edges)):
        pins.append(P.eq(P.var(flow_var(i)), model.get(flow_var(i), 0)))
    for v in pipe.lts.initial:
        pins.append(P.eq(P.var(source_var(v)), model.get(source_var(v), 0)))
    for v in pipe.lts.final:
        pins.append(P.eq(P.var(sink_var(v)), model.get(sink_var(v), 0)))
    for c in system.counters:
        pins.append(P.eq(P.var(reduction.x_var(c)), model.get(reduction.x_var(c), 0)))
    return P.neg(P.conj(*pins))


def control_state_reachability(
    system: SgtrsSystem,
    initial_state,
    initial_tree: Tree,
    target_state,
    options: EngineOptions | None = None,
) -> Verdict:
    """Reachability from one concrete tree with all counters zero to a
    control state, over any tree and any counter values."""
    source = SymbolicConfigSet(
        initial_state,
        singleton(initial_tree, system.alphabet),
        P.conj(*(P.eq(P.var(counter_variable(c)), 0) for c in system.counters)),
    )
    target = SymbolicConfigSet(target_state, universal(system.alphabet), P.TRUE)
    return check_reachability(system, source, target, options)


NOT_FOUND = "not-found-within-bounds"


@dataclass
class OracleResult:
    status: str  # "reachable" | "not-found-within-bounds"
    witness: Witness | None = None
    explored: int = 0
    frontier_exhausted: bool = False


def oracle_reach(
    system: SgtrsSystem,
    source: SymbolicConfigSet,
    target: SymbolicConfigSet,
    max_steps: int,
    max_tree_nodes: int,
    value_box: int,
) -> OracleResult:
    """Breadth-first search over exact configurations.

    Complete within its bounds: step count, tree size, and counter value
    box, with reversal-violating branches pruned.  Works for systems
    that are not weakly synchronized too.
    """
    x_names = [counter_variable(c) for c in system.counters]
    solutions, solutions_complete = P.enumerate_models(
        source.formula, x_names, value_box, limit=256
    )
    initial_valuations = [
        CounterValuation.of({c: sol[counter_variable(c)] for c in system.counters})
        for sol in solutions
    ]
    initial_trees = enumerate_accepted(source.nta, max_tree_nodes)

    def is_target(config: Configuration) -> bool:
        if config.state != target.state:
            return False
        if not accepts(target.nta, config.tree):
            return False
        closing = P.evaluate(
            target.formula, {counter_variable(c): config.valuation[c] for c in system.counters}
        )
        return closing is True

    start_keys = []
    seen = {}
    parent: dict = {}
    for tree in initial_trees:
        for valuation in initial_valuations:
            config = Configuration(source.state, tree, valuation)
            dirs = tuple(0 for _ in system.counters)
            revs = tuple(0 for _ in system.counters)
            key = (config, dirs, revs)
            if key not in seen:
                seen[key] = 0
                parent[key] = None
                start_keys.append(key)

    frontier_exhausted = solutions_complete
    explored = 0
    queue = list(start_keys)
    cursor = 0
    hit = None
    while cursor < len(queue):
        key = queue[cursor]
        cursor += 1
        config, dirs, revs = key
        explored += 1
        if is_target(config):
            hit = key
            break
        depth = seen[key]
        if depth >= max_steps:
            frontier_exhausted = False
            continue
        moves = successors(system, config, max_tree_nodes)
        if moves.truncated:
            frontier_exhausted = False
        for label, rule_id, position, nxt in moves.items:
            if nxt.tree.size > max_tree_nodes:
                frontier_exhausted = False
                continue
            if any(abs(nxt.valuation[c]) > value_box for c in system.counters):
                frontier_exhausted = False
                continue
            new_dirs = list(dirs)
            new_revs = list(revs)
            bounded = True
            for ci, c in enumerate(system.counters):
                delta = nxt.valuation[c] - config.valuation[c]
                if delta == 0:
                    continue
                move = 1 if delta > 0 else -1
                if new_dirs[ci] == 0:
                    new_dirs[ci] = move
                elif move != new_dirs[ci]:
                    new_revs[ci] += 1
                    new_dirs[ci] = move
                    if new_revs[ci] > system.reversal_bound:
                        bounded = False
                        break
            if not bounded:
                continue
            new_key = (nxt, tuple(new_dirs), tuple(new_revs))
            if new_key in seen:
                continue
            seen[new_key] = depth + 1
            parent[new_key] = (key, Step(rule_id, position, nxt.tree.subtree_at(position)), label)
            queue.append(new_key)

    if hit is None:
        return OracleResult(NOT_FOUND, explored=explored, frontier_exhausted=frontier_exhausted)

    steps: list[Step] = []
    output: list = []
    walk = hit
    while parent[walk] is not None:
        walk, step, label = parent[walk]
        steps.append(step)
        output.append(label)
    steps.reverse()
    output.reverse()
    initial = walk[0]
    final, replay_output = replay(system, initial, steps)
    witness = Witness(initial, tuple(steps), final, replay_output, {})
    return OracleResult("reachable", witness=witness, explored=explored)
