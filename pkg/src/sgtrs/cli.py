"""Command-line front end.

Subcommands: validate, check-weaksync, reach, oracle, simulate,
encode-2cm.  Exit status 0 for any clean verdict, 2 for usage or parse
errors, 3 when the external solver is unavailable.  All bounds in force
are printed with each verdict so a report is reproducible on its own.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import presburger as P
from .automata import singleton, universal
from .engine import (
    EngineOptions,
    NOT_FOUND,
    check_reachability,
    oracle_reach,
    prepare,
    steps_from_dict,
    witness_to_dict,
)
from .modeling import (
    ControlReachQuery,
    Encode2cmQuery,
    InputDocument,
    NtaDef,
    ParseError,
    ReachQuery,
    ResolutionError,
    ResolvedSystem,
    SimulateQuery,
    SystemDef,
    parse_input,
    print_document,
    resolve,
)
from .reduction import NotWeaklySynchronized
from .senescent import (
    encode_2cm,
    parse_two_counter_machine,
    senescent_replay,
    validate_simulation,
)
from .smtclient import ExternalBackend, SolverConfig, SolverUnavailable
from .system import (
    ReplayError,
    SymbolicConfigSet,
    counter_variable,
    is_weakly_synchronized,
    replay,
)
from .trees import TreeError, format_term

DEFAULT_INIT_TREE_BOUND = 3
DEFAULT_TREE_BOUND = 8

VERDICT_LINES = {
    "reachable": "REACHABLE",
    "not-reachable": "NOT-REACHABLE",
    "not-reachable-within-bounds": "NOT-REACHABLE-WITHIN-BOUNDS",
    "unknown": "UNKNOWN",
}

REDUCTION_NOTE = (
    "note: mode constraints: a direction flip increments the reversal count "
    "and equal directions keep it; a region increase requires direction 1 "
    "(non-decrementing), a decrease direction 0; phase bound k*(r+1)*(2m+1)."
)


def _load(path: str) -> ResolvedSystem:
    with open(path, "r") as handle:
        text = handle.read()
    return resolve(parse_input(text))


def _query_sets(resolved: ResolvedSystem, query) -> tuple[SymbolicConfigSet, SymbolicConfigSet]:
    system = resolved.system
    alphabet = system.alphabet

    def nta_of(name: str):
        return universal(alphabet) if name == "*" else resolved.ntas[name]

    if isinstance(query, ReachQuery):
        source = SymbolicConfigSet(query.from_state, nta_of(query.from_nta), query.from_formula)
        target = SymbolicConfigSet(query.to_state, nta_of(query.to_nta), query.to_formula)
        return source, target
    assert isinstance(query, ControlReachQuery)
    source = SymbolicConfigSet(
        query.from_state,
        singleton(query.from_tree, alphabet),
        P.conj(*(P.eq(P.var(counter_variable(c)), 0) for c in system.counters)),
    )
    target = SymbolicConfigSet(query.to_state, universal(alphabet), P.TRUE)
    return source, target


def _reach_queries(document: InputDocument):
    return [q for q in document.queries if isinstance(q, (ReachQuery, ControlReachQuery))]


def _solver_backend(args) -> object | None:
    path = getattr(args, "solver", None) or os.environ.get("SGTRS_SMT_SOLVER")
    if not path:
        return None
    return ExternalBackend(SolverConfig(path))


def _print_bounds(bounds: dict) -> None:
    rendered = " ".join(f"{key}={value}" for key, value in sorted(bounds.items()))
    print(f"bounds: {rendered}")


def cmd_validate(args) -> int:
    resolved = _load(args.file)
    system = resolved.system
    print(
        f"ok: {len(system.states)} states, {len(system.rules)} rules, "
        f"{len(system.counters)} counters, {len(resolved.ntas)} automata, "
        f"{len(resolved.document.queries)} queries"
    )
    return 0


def cmd_check_weaksync(args) -> int:
    resolved = _load(args.file)
    ok, cycle = is_weakly_synchronized(resolved.system)
    if ok:
        print("weakly-synchronized: YES")
    else:
        print(f"weakly-synchronized: NO cycle: {cycle}")
    return 0


def cmd_reach(args) -> int:
    resolved = _load(args.file)
    queries = _reach_queries(resolved.document)
    if not queries:
        print("no reach queries in file", file=sys.stderr)
        return 2
    options = EngineOptions(
        initial_tree_bound=args.init_tree_bound,
        max_tree_nodes=args.tree_bound,
        solver=_solver_backend(args),
        solver_box=args.box,
    )
    status = 0
    for number, query in enumerate(queries, start=1):
        source, target = _query_sets(resolved, query)
        if args.emit_smt:
            pipe = prepare(resolved.system, source, target, options)
            script = P.to_smtlib(pipe.formula)
            path = args.emit_smt if len(queries) == 1 else f"{args.emit_smt}.{number}"
            with open(path, "w") as handle:
                handle.write(script)
            print(f"query {number}: wrote SMT-LIB script to {path} (no solver invoked)")
            continue
        verdict = check_reachability(resolved.system, source, target, options)
        print(REDUCTION_NOTE)
        if args.json:
            document = {
                "query": number,
                "verdict": verdict.status,
                "bounds": verdict.bounds,
                "reason": verdict.reason,
            }
            if verdict.witness is not None:
                document["witness"] = witness_to_dict(verdict.witness)
            print(json.dumps(document, indent=2, default=str))
        else:
            print(f"query {number}: {VERDICT_LINES[verdict.status]}")
            _print_bounds(verdict.bounds)
            if verdict.reason:
                print(f"reason: {verdict.reason}")
            if verdict.witness is not None:
                witness = verdict.witness
                print(f"witness: {len(witness.steps)} steps")
                if len(witness.steps) <= 50:
                    for step in witness.steps:
                        print(
                            f"  {step.rule_id} at {list(step.position)} "
                            f"inserting {format_term(step.inserted)}"
                        )
                final = witness.final
                print(
                    f"final: state={final.state} tree={format_term(final.tree)} "
                    f"counters={final.valuation.as_dict}"
                )
    return status


def cmd_oracle(args) -> int:
    resolved = _load(args.file)
    queries = _reach_queries(resolved.document)
    if not queries:
        print("no reach queries in file", file=sys.stderr)
        return 2
    for number, query in enumerate(queries, start=1):
        source, target = _query_sets(resolved, query)
        result = oracle_reach(
            resolved.system,
            source,
            target,
            max_steps=args.max_steps,
            max_tree_nodes=args.tree_bound,
            value_box=args.value_box,
        )
        line = "REACHABLE" if result.status == "reachable" else "NOT-REACHABLE-WITHIN-BOUNDS"
        print(f"query {number}: {line}")
        print(
            f"bounds: max_steps={args.max_steps} tree_bound={args.tree_bound} "
            f"value_box={args.value_box} explored={result.explored} "
            f"exhaustive={result.frontier_exhausted}"
        )
        if result.witness is not None:
            print(f"witness: {len(result.witness.steps)} steps, "
                  f"output {' '.join(str(x) for x in result.witness.output)}")
    return 0


def cmd_simulate(args) -> int:
    resolved = _load(args.file)
    with open(args.steps, "r") as handle:
        payload = json.load(handle)
    initial, steps = steps_from_dict(payload)
    try:
        if args.senescent:
            aged, output = senescent_replay(resolved.system, args.lifespan, initial, steps)
            final = aged.config
        else:
            final, output = replay(resolved.system, initial, steps)
    except ReplayError as error:
        print(f"REPLAY-FAILED: {error}")
        return 0
    print(f"REPLAY-OK: {len(steps)} steps, output {' '.join(str(x) for x in output)}")
    print(
        f"final: state={final.state} tree={format_term(final.tree)} "
        f"counters={final.valuation.as_dict}"
    )
    return 0


def cmd_encode_2cm(args) -> int:
    with open(args.file, "r") as handle:
        machine = parse_two_counter_machine(handle.read())
    encoding = encode_2cm(machine, args.from_state, args.to_state)
    print(_encoding_to_text(encoding))
    if args.check:
        report = validate_simulation(machine, args.from_state, args.to_state, args.budget)
        print(f"simulation-check: {report.verdict.upper()}")
        print(
            f"  machine run found: {report.cm_run_found} "
            f"(search complete: {report.cm_search_complete}, explored {report.cm_explored})"
        )
        print(
            f"  forward replay ok: {report.forward_replay_ok}, "
            f"leaf invariant ok: {report.leaf_invariant_ok}"
        )
        print(
            f"  senescent run found: {report.senescent_run_found} "
            f"(search complete: {report.senescent_search_complete}, "
            f"explored {report.senescent_explored}), maps back: {report.mapped_back_ok}"
        )
    return 0


def _encoding_to_text(encoding) -> str:
    """Print the encoded system in the modeling language."""
    from .modeling import RuleDef, system_to_document

    system = encoding.system
    nta_names: dict[int, str] = {}
    nta_defs: list[NtaDef] = []
    counter = 0
    for rule in system.rules:
        for automaton in (rule.lhs, rule.rhs):
            if id(automaton) in nta_names:
                continue
            counter += 1
            name = f"T{counter}"
            nta_names[id(automaton)] = name
            states = tuple(f"q{i}" for i in range(len(automaton.states)))
            remap = {q: states[i] for i, q in enumerate(sorted(automaton.states, key=repr))}
            nta_defs.append(
                NtaDef(
                    name,
                    states,
                    tuple(remap[q] for q in sorted(automaton.finals, key=repr)),
                    tuple(
                        (tuple(remap[c] for c in rule2.children), rule2.symbol, remap[rule2.state])
                        for rule2 in sorted(automaton.rules, key=repr)
                    ),
                )
            )
    sd = system_to_document(system, nta_names, nta_defs)
    doc = InputDocument(sd, ())
    lines = [
        f"# encoded two-counter machine; lifespan {encoding.lifespan}",
        f"# initial: state {encoding.initial.state}, tree {format_term(encoding.initial.tree)}",
        f"# target control state: {encoding.final_state}",
    ]
    return "\n".join(lines) + "\n" + print_document(doc)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sgtrs",
        description="Reachability for tree rewrite systems with reversal-bounded counters",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    one = sub.add_parser("validate", help="parse and validate a model file")
    one.add_argument("file")
    one.set_defaults(run=cmd_validate)

    two = sub.add_parser("check-weaksync", help="check the control graph shape")
    two.add_argument("file")
    two.set_defaults(run=cmd_check_weaksync)

    three = sub.add_parser("reach", help="run the reachability pipeline on the file's queries")
    three.add_argument("file")
    three.add_argument("--tree-bound", type=int, default=DEFAULT_TREE_BOUND)
    three.add_argument("--init-tree-bound", type=int, default=DEFAULT_INIT_TREE_BOUND)
    three.add_argument("--emit-smt", metavar="PATH", default=None)
    three.add_argument("--solver", metavar="PATH", default=None)
    three.add_argument("--box", type=int, default=None,
                       help="value box for the built-in solver")
    three.add_argument("--json", action="store_true")
    three.set_defaults(run=cmd_reach)

    four = sub.add_parser("oracle", help="explicit-state search on the file's queries")
    four.add_argument("file")
    four.add_argument("--max-steps", type=int, default=1000)
    four.add_argument("--value-box", type=int, default=64)
    four.add_argument("--tree-bound", type=int, default=DEFAULT_TREE_BOUND)
    four.set_defaults(run=cmd_oracle)

    five = sub.add_parser("simulate", help="replay a steps document against the system")
    five.add_argument("file")
    five.add_argument("--steps", required=True)
    five.add_argument("--senescent", action="store_true")
    five.add_argument("--lifespan", type=int, default=1)
    five.set_defaults(run=cmd_simulate)

    six = sub.add_parser("encode-2cm", help="encode a two-counter machine")
    six.add_argument("file")
    six.add_argument("--from", dest="from_state", required=True)
    six.add_argument("--to", dest="to_state", required=True)
    six.add_argument("--check", action="store_true")
    six.add_argument("--budget", type=int, default=10000)
    six.set_defaults(run=cmd_encode_2cm)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as error:
        return 2 if error.code not in (0, None) else 0
    try:
        return args.run(args)
    except (ParseError, ResolutionError, TreeError) as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except FileNotFoundError as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as error:
        print(f"error: bad steps document: {error}", file=sys.stderr)
        return 2
    except NotWeaklySynchronized as error:
        print(f"error: {error}", file=sys.stderr)
        return 2
    except SolverUnavailable as error:
        print(f"error: {error}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
