"""Letter-count formulas for paths of a bounded transition system.

The counterless product system is unrolled into a finite labeled
transition system over (state, tree) nodes, with trees capped in size.
Over that LTS, an existential formula with per-edge flow variables
captures exactly the Parikh images of its initial-to-final paths: flow
conservation plus a depth-labelled in-tree rooted at the chosen source.
Self-loop flows are unbounded, so letter counts far beyond any explicit
enumeration (e.g. 10**6) remain expressible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

from . import presburger as P
from .automata import NTA, accepts, enumerate_accepted, size_ceiling
from .system import SgtrsSystem
from .trees import Position, Tree, rewrite_at


class InconsistentFlow(Exception):
    pass


def parikh_of_word(word: Sequence[Hashable]) -> dict:
    out: dict = {}
    for letter in word:
        out[letter] = out.get(letter, 0) + 1
    return out


@dataclass(frozen=True)
class LtsEdge:
    src: int
    label: Hashable
    dst: int
    position: Position
    inserted: Tree


@dataclass(frozen=True)
class LtsBounds:
    max_tree_nodes: int
    initial_tree_bound: int
    saturated: bool


@dataclass(frozen=True)
class FiniteLTS:
    nodes: tuple  # (state, Tree) pairs, in discovery order
    edges: tuple[LtsEdge, ...]
    initial: tuple[int, ...]
    final: tuple[int, ...]
    bounds: LtsBounds

    def in_edges(self, v: int) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.dst == v]

    def out_edges(self, v: int) -> list[int]:
        return [i for i, e in enumerate(self.edges) if e.src == v]


def build_lts(
    product: SgtrsSystem,
    start_state,
    start_nta: NTA,
    target_states,
    target_nta: NTA,
    max_tree_nodes: int,
    initial_tree_bound: int,
) -> FiniteLTS:
    """Breadth-first closure of the product dynamics over bounded trees.

    ``saturated`` is set only when nothing was cut off: the start
    automaton's whole language fits the initial bound and no successor
    tree ever exceeded the node cap.
    """
    targets = set(target_states)
    saturated = True
    ceiling = size_ceiling(start_nta)
    if ceiling is None or ceiling > min(initial_tree_bound, max_tree_nodes):
        saturated = False
    initial_trees = enumerate_accepted(start_nta, min(initial_tree_bound, max_tree_nodes))

    rules_by_source: dict = {}
    for rule in product.rules:
        rules_by_source.setdefault(rule.source, []).append(rule)
    rhs_trees: dict[int, list[Tree]] = {}
    rhs_complete: dict[int, bool] = {}
    membership: dict[tuple[int, Tree], bool] = {}

    def member(automaton: NTA, tree: Tree) -> bool:
        key = (id(automaton), tree)
        hit = membership.get(key)
        if hit is None:
            hit = accepts(automaton, tree)
            membership[key] = hit
        return hit

    index: dict = {}
    nodes: list = []
    edges: list[LtsEdge] = []
    edge_seen: set = set()

    def intern(state, tree: Tree) -> int:
        key = (state, tree)
        found = index.get(key)
        if found is None:
            found = len(nodes)
            index[key] = found
            nodes.append(key)
        return found

    queue = [intern(start_state, tree) for tree in initial_trees]
    cursor = 0
    while cursor < len(queue):
        v = queue[cursor]
        cursor += 1
        state, tree = nodes[v]
        for rule in rules_by_source.get(state, ()):
            rid = id(rule.rhs)
            if rid not in rhs_trees:
                rhs_trees[rid] = enumerate_accepted(rule.rhs, max_tree_nodes)
                top = size_ceiling(rule.rhs)
                rhs_complete[rid] = top is not None and top <= max_tree_nodes
            replacements = rhs_trees[rid]
            for position in tree.positions():
                replaced = tree.subtree_at(position)
                if not member(rule.lhs, replaced):
                    continue
                if not rhs_complete[rid]:
                    saturated = False
                budget = max_tree_nodes - tree.size + replaced.size
                for inserted in replacements:
                    if inserted.size > budget:
                        saturated = False
                        continue
                    new_tree = rewrite_at(tree, position, inserted)
                    known = (rule.target, new_tree) in index
                    w = intern(rule.target, new_tree)
                    if not known:
                        queue.append(w)
                    key = (v, rule.label, w)
                    if key not in edge_seen:
                        edge_seen.add(key)
                        edges.append(LtsEdge(v, rule.label, w, position, inserted))

    final = tuple(
        i for i, (state, tree) in enumerate(nodes)
        if state in targets and member(target_nta, tree)
    )
    return FiniteLTS(
        nodes=tuple(nodes),
        edges=tuple(edges),
        initial=tuple(range(len(initial_trees))),
        final=final,
        bounds=LtsBounds(max_tree_nodes, initial_tree_bound, saturated),
    )


def flow_var(edge_index: int) -> str:
    return f"flow.{edge_index}"


def source_var(node_index: int) -> str:
    return f"src.{node_index}"


def sink_var(node_index: int) -> str:
    return f"snk.{node_index}"


def depth_var(node_index: int) -> str:
    return f"depth.{node_index}"


def parikh_formula(
    lts: FiniteLTS,
    letters: Sequence[Hashable],
    z_name: Callable[[Hashable], str] | None = None,
) -> P.Formula:
    """Formula whose solutions, projected to the z variables, are exactly
    the Parikh images of initial-to-final paths of the LTS.

    Free variables: one z per letter.  Existential: per-edge flows, 0/1
    source and sink selectors, and per-node depths forming an in-tree of
    flow-carrying edges rooted at the source.  The zero-length path
    (source = sink, all flows zero) is a solution whenever some node is
    both initial and final.
    """
    if z_name is None:
        z_name = lambda letter: f"z.{letter}"
    n_nodes = len(lts.nodes)
    n_edges = len(lts.edges)
    parts: list[P.Formula] = []
    aux: list[str] = []

    flows = [P.var(flow_var(i)) for i in range(n_edges)]
    aux.extend(flow_var(i) for i in range(n_edges))
    for f in flows:
        parts.append(P.ge(f, 0))

    by_letter: dict = {letter: [] for letter in letters}
    for i, edge in enumerate(lts.edges):
        if edge.label not in by_letter:
            raise ValueError(f"edge label {edge.label!r} missing from the letter universe")
        by_letter[edge.label].append(i)
    for letter in letters:
        z = P.var(z_name(letter))
        total = P.LinearTerm.of({flow_var(i): 1 for i in by_letter[letter]})
        parts.append(P.eq(z, total))
        parts.append(P.ge(z, 0))

    for v in lts.initial:
        aux.append(source_var(v))
        parts.append(P.ge(P.var(source_var(v)), 0))
        parts.append(P.le(P.var(source_var(v)), 1))
    for v in lts.final:
        aux.append(sink_var(v))
        parts.append(P.ge(P.var(sink_var(v)), 0))
        parts.append(P.le(P.var(sink_var(v)), 1))
    parts.append(
        P.eq(P.LinearTerm.of({source_var(v): 1 for v in lts.initial}), 1)
        if lts.initial
        else P.FALSE
    )
    parts.append(
        P.eq(P.LinearTerm.of({sink_var(v): 1 for v in lts.final}), 1)
        if lts.final
        else P.FALSE
    )

    in_of: list[list[int]] = [[] for _ in range(n_nodes)]
    out_of: list[list[int]] = [[] for _ in range(n_nodes)]
    for i, edge in enumerate(lts.edges):
        in_of[edge.dst].append(i)
        out_of[edge.src].append(i)

    initial_set = set(lts.initial)
    final_set = set(lts.final)
    for v in range(n_nodes):
        balance: dict[str, int] = {}
        for i in in_of[v]:
            balance[flow_var(i)] = balance.get(flow_var(i), 0) + 1
        for i in out_of[v]:
            balance[flow_var(i)] = balance.get(flow_var(i), 0) - 1
        rhs: P.LinearTerm = P.const(0)
        if v in final_set:
            rhs = rhs + P.var(sink_var(v))
        if v in initial_set:
            rhs = rhs - P.var(source_var(v))
        parts.append(P.eq(P.LinearTerm.of(balance), rhs))

    for v in range(n_nodes):
        aux.append(depth_var(v))
        d = P.var(depth_var(v))
        parts.append(P.ge(d, -1))
        parts.append(P.le(d, n_nodes - 1))
        incident: dict[str, int] = {}
        for i in set(in_of[v]) | set(out_of[v]):
            incident[flow_var(i)] = 1
        used = P.ge(P.LinearTerm.of(incident), 1) if incident else P.FALSE
        src = P.var(source_var(v)) if v in initial_set else None
        if src is not None:
            parts.append(P.implies(P.eq(src, 1), P.eq(d, 0)))
        # A used node is the source or has a flow-carrying in-edge one
        # depth closer to it; unused non-source nodes park at depth -1.
        reachable_cases: list[P.Formula] = []
        if src is not None:
            reachable_cases.append(P.eq(src, 1))
        for i in in_of[v]:
            u = lts.edges[i].src
            reachable_cases.append(
                P.conj(
                    P.ge(flows[i], 1),
                    P.eq(P.var(depth_var(u)), d - 1),
                )
            )
        parts.append(P.implies(used, P.conj(P.ge(d, 0), P.disj(*reachable_cases))))
        unused_and_not_source = P.conj(
            P.neg(used) if incident else P.TRUE,
            P.eq(src, 0) if src is not None else P.TRUE,
        )
        parts.append(P.implies(unused_and_not_source, P.eq(d, -1)))

    return P.exists(aux, P.conj(*parts))


def extract_path(lts: FiniteLTS, model: dict[str, int]) -> tuple[int, list[int]]:
    """Realize the model's flow as a concrete source-to-sink edge walk.

    Returns (source node, edge index sequence); each edge appears
    exactly its flow's worth of times (Hierholzer).  Raises
    InconsistentFlow if the flow does not admit such a walk, which
    signals an encoding bug or a hand-corrupted model.
    """
    remaining = {}
    total = 0
    for i in range(len(lts.edges)):
        f = model.get(flow_var(i), 0)
        if f < 0:
            raise InconsistentFlow(f"negative flow on edge {i}")
        if f:
            remaining[i] = f
            total += f
    sources = [v for v in lts.initial if model.get(source_var(v), 0) == 1]
    sinks = [v for v in lts.final if model.get(sink_var(v), 0) == 1]
    if len(sources) != 1 or len(sinks) != 1:
        raise InconsistentFlow("model must select exactly one source and one sink")
    source, sink = sources[0], sinks[0]

    out_pending: dict[int, list[int]] = {}
    for i in sorted(remaining):
        out_pending.setdefault(lts.edges[i].src, []).append(i)

    # Hierholzer: walk greedily, splicing detours back in.  Self-loop
    # copies are consumed as one block since they return to their node.
    blocks: list[tuple[int, int]] = []  # (edge, multiplicity), reversed order
    stack: list[tuple[int, int | None, int]] = [(source, None, 0)]
    while stack:
        v, _, _ = stack[-1]
        pending = out_pending.get(v, [])
        chosen = None
        while pending:
            i = pending[-1]
            if remaining.get(i, 0) > 0:
                chosen = i
                break
            pending.pop()
        if chosen is not None:
            edge = lts.edges[chosen]
            if edge.dst == v:
                count = remaining[chosen]
                remaining[chosen] = 0
            else:
                count = 1
                remaining[chosen] -= 1
            if remaining[chosen] == 0:
                pending.pop()
            stack.append((edge.dst, chosen, count))
        else:
            _, edge_in, count = stack.pop()
            if edge_in is not None:
                blocks.append((edge_in, count))
    blocks.reverse()
    path: list[int] = []
    here = source
    walked = 0
    for i, count in blocks:
        edge = lts.edges[i]
        if edge.src != here or (count > 1 and edge.dst != edge.src):
            raise InconsistentFlow("extracted walk is not contiguous")
        here = edge.dst
        walked += count
        path.extend([i] * count)
    if walked != total:
        raise InconsistentFlow("flow is not connected to the source")
    if here != sink:
        raise InconsistentFlow("extracted walk does not end at the sink")
    return source, path
