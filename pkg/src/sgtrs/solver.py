"""Built-in backend for existential linear integer formulas.

The backend is complete within a box: it reports sat exactly when the
formula has a model whose values all lie in [-box, box], by interval
(bounds) propagation plus backtracking over disjunctions and variable
values.  The verdict semantics match exhaustive enumeration of the box,
only faster.  Before the box search it also runs the same propagation
engine with unbounded domains; if that refutes the formula, the
infeasibility holds over all integers and the verdict is unsat rather
than unknown.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import presburger as P

_LE, _EQ = 0, 1
_UNKNOWN, _TRUE, _FALSE = 0, 1, 2
_ATOM, _AND, _OR = 0, 1, 2


class BudgetExceeded(Exception):
    pass


class _Stuck(Exception):
    """Value branching needed on a variable with an unbounded domain."""


@dataclass
class _Problem:
    var_names: list[str]
    nodes: list[tuple[int, object]]  # (kind, atom payload or child-id tuple)
    root: "int | bool"
    parents: list[list[int]]
    var_atoms: list[list[tuple[int, int]]]  # per var: (atom node, coefficient)
    max_const: int


def _compile(body: P.Formula, var_names: list[str]) -> _Problem:
    index = {name: i for i, name in enumerate(var_names)}
    nodes: list[tuple[int, object]] = []
    atom_cache: dict[tuple, int] = {}
    max_const = 0

    def add_atom(coeffs: tuple[tuple[int, int], ...], op: int, bound: int):
        nonlocal max_const
        if not coeffs:
            return (0 <= bound) if op == _LE else (bound == 0)
        max_const = max(max_const, abs(bound), max(abs(c) for _, c in coeffs))
        key = (coeffs, op, bound)
        cached = atom_cache.get(key)
        if cached is not None:
            return cached
        nodes.append((_ATOM, key))
        atom_cache[key] = len(nodes) - 1
        return len(nodes) - 1

    def add_node(kind: int, children: list):
        flat: list[int] = []
        for c in children:
            if isinstance(c, bool):
                if kind == _AND and not c:
                    return False
                if kind == _OR and c:
                    return True
                continue
            prev = nodes[c]
            if prev[0] == kind:
                flat.extend(prev[1])  # type: ignore[arg-type]
            else:
                flat.append(c)
        if not flat:
            return kind == _AND
        if len(flat) == 1:
            return flat[0]
        nodes.append((kind, tuple(flat)))
        return len(nodes) - 1

    def norm(f: P.Formula, negate: bool):
        if isinstance(f, P.BoolConst):
            return f.value != negate
        if isinstance(f, P.Not):
            return norm(f.arg, not negate)
        if isinstance(f, P.And):
            kind = _OR if negate else _AND
            return add_node(kind, [norm(g, negate) for g in f.args])
        if isinstance(f, P.Or):
            kind = _AND if negate else _OR
            return add_node(kind, [norm(g, negate) for g in f.args])
        if isinstance(f, P.Atom):
            diff = f.lhs - f.rhs
            coeffs = tuple(sorted((index[v], c) for v, c in diff.coeffs))
            k = diff.constant
            op = f.op
            if negate:
                op = {"<=": ">", ">=": "<", "<": ">=", ">": "<=", "=": "!="}[op]
            neg_coeffs = tuple((vi, -c) for vi, c in coeffs)
            if op == "<=":
                return add_atom(coeffs, _LE, -k)
            if op == "<":
                return add_atom(coeffs, _LE, -k - 1)
            if op == ">=":
                return add_atom(neg_coeffs, _LE, k)
            if op == ">":
                return add_atom(neg_coeffs, _LE, k - 1)
            if op == "=":
                return add_atom(coeffs, _EQ, -k)
            return add_node(
                _OR,
                [add_atom(coeffs, _LE, -k - 1), add_atom(neg_coeffs, _LE, k - 1)],
            )
        raise TypeError(f"cannot compile {f!r}")

    root = norm(body, False)
    parents: list[list[int]] = [[] for _ in nodes]
    var_atoms: list[list[tuple[int, int]]] = [[] for _ in var_names]
    for n, (kind, payload) in enumerate(nodes):
        if kind == _ATOM:
            for vi, c in payload[0]:  # type: ignore[index]
                var_atoms[vi].append((n, c))
        else:
            for c in payload:  # type: ignore[union-attr]
                parents[c].append(n)
    return _Problem(var_names, nodes, root, parents, var_atoms, max_const)


class _Search:
    """One propagation-plus-backtracking run over compiled constraints."""

    def __init__(self, prob: _Problem, box: int | None, budget: int):
        self.prob = prob
        self.box = box
        self.budget = budget
        n = len(prob.nodes)
        self.los: list = [(-box if box is not None else None)] * len(prob.var_names)
        self.his: list = [(box if box is not None else None)] * len(prob.var_names)
        self.status = bytearray(n)
        self.required = bytearray(n)
        self.split = bytearray(n)
        self.n_unknown = [0] * n
        self.n_true = [0] * n
        self.n_false = [0] * n
        # Incremental interval of each atom's linear term: finite partial
        # sums plus counts of unbounded contributions, patched by deltas
        # on every domain change (and on undo).
        self.alo = [0] * n
        self.ahi = [0] * n
        self.alo_inf = [0] * n
        self.ahi_inf = [0] * n
        self.trail: list[tuple] = []
        self.failed = False
        self.stuck_seen = False
        self.q_atom: list[int] = []
        self.q_or: list[int] = []
        self._init_statuses()

    # -- status bookkeeping ------------------------------------------------

    def _init_statuses(self) -> None:
        for n, (kind, payload) in enumerate(self.prob.nodes):
            if kind == _ATOM:
                lo = hi = 0
                lo_inf = hi_inf = 0
                for vi, c in payload[0]:  # type: ignore[index]
                    a, b = (
                        (self.los[vi], self.his[vi]) if c > 0 else (self.his[vi], self.los[vi])
                    )
                    if a is None:
                        lo_inf += 1
                    else:
                        lo += c * a
                    if b is None:
                        hi_inf += 1
                    else:
                        hi += c * b
                self.alo[n], self.ahi[n] = lo, hi
                self.alo_inf[n], self.ahi_inf[n] = lo_inf, hi_inf
                self.status[n] = self._atom_status(n)
            else:
                u = t = f = 0
                for c in payload:  # type: ignore[union-attr]
                    s = self.status[c]
                    u, t, f = u + (s == _UNKNOWN), t + (s == _TRUE), f + (s == _FALSE)
                self.n_unknown[n], self.n_true[n], self.n_false[n] = u, t, f
                self.status[n] = self._derive(kind, u, t, f)

    def _atom_status(self, n: int) -> int:
        op, bound = self.prob.nodes[n][1][1], self.prob.nodes[n][1][2]  # type: ignore[index]
        lo = None if self.alo_inf[n] else self.alo[n]
        hi = None if self.ahi_inf[n] else self.ahi[n]
        if op == _LE:
            if hi is not None and hi <= bound:
                return _TRUE
            if lo is not None and lo > bound:
                return _FALSE
            return _UNKNOWN
        if lo is not None and lo == hi == bound:
            return _TRUE
        if (lo is not None and lo > bound) or (hi is not None and hi < bound):
            return _FALSE
        return _UNKNOWN

    def _shift_atom_sums(self, vi: int, old_lo, old_hi, new_lo, new_hi) -> None:
        alo, ahi = self.alo, self.ahi
        alo_inf, ahi_inf = self.alo_inf, self.ahi_inf
        for n, c in self.prob.var_atoms[vi]:
            if c > 0:
                a_old, b_old, a_new, b_new = old_lo, old_hi, new_lo, new_hi
            else:
                a_old, b_old, a_new, b_new = old_hi, old_lo, new_hi, new_lo
            if a_old is None:
                if a_new is None:
                    pass
                else:
                    alo_inf[n] -= 1
                    alo[n] += c * a_new
            elif a_new is None:
                alo_inf[n] += 1
                alo[n] -= c * a_old
            else:
                alo[n] += c * (a_new - a_old)
            if b_old is None:
                if b_new is None:
                    pass
                else:
                    ahi_inf[n] -= 1
                    ahi[n] += c * b_new
            elif b_new is None:
                ahi_inf[n] += 1
                ahi[n] -= c * b_old
            else:
                ahi[n] += c * (b_new - b_old)

    @staticmethod
    def _derive(kind: int, u: int, t: int, f: int) -> int:
        if kind == _AND:
            if f:
                return _FALSE
            return _TRUE if u == 0 else _UNKNOWN
        if t:
            return _TRUE
        return _FALSE if u == 0 else _UNKNOWN

    def _spend(self, amount: int = 1) -> None:
        self.budget -= amount
        if self.budget < 0:
            raise BudgetExceeded()

    def set_status(self, n: int, s: int) -> None:
        old = self.status[n]
        if old == s:
            return
        self.trail.append(("s", n, old))
        self.status[n] = s
        if self.required[n] and s == _FALSE:
            self.failed = True
        for p in self.prob.parents[n]:
            self.trail.append(("c", p, self.n_unknown[p], self.n_true[p], self.n_false[p]))
            self.n_unknown[p] -= 1
            if s == _TRUE:
                self.n_true[p] += 1
            else:
                self.n_false[p] += 1
            if self.status[p] == _UNKNOWN:
                kind = self.prob.nodes[p][0]
                derived = self._derive(kind, self.n_unknown[p], self.n_true[p], self.n_false[p])
                if derived != _UNKNOWN:
                    self.set_status(p, derived)
                elif kind == _OR and self.required[p]:
                    self.q_or.append(p)

    def mark_required(self, n: "int | bool") -> None:
        if isinstance(n, bool):
            if not n:
                self.failed = True
            return
        if self.required[n]:
            return
        self.trail.append(("r", n))
        self.required[n] = 1
        s = self.status[n]
        if s == _TRUE:
            return
        if s == _FALSE:
            self.failed = True
            return
        kind, payload = self.prob.nodes[n]
        if kind == _ATOM:
            self.q_atom.append(n)
        elif kind == _AND:
            for c in payload:  # type: ignore[union-attr]
                self.mark_required(c)
        else:
            self.q_or.append(n)

    def set_bound(self, vi: int, lo, hi) -> None:
        old_lo, old_hi = self.los[vi], self.his[vi]
        new_lo = old_lo if lo is None else (lo if old_lo is None else max(lo, old_lo))
        new_hi = old_hi if hi is None else (hi if old_hi is None else min(hi, old_hi))
        if new_lo == old_lo and new_hi == old_hi:
            return
        self.trail.append(("d", vi, old_lo, old_hi))
        self.los[vi], self.his[vi] = new_lo, new_hi
        self._shift_atom_sums(vi, old_lo, old_hi, new_lo, new_hi)
        if new_lo is not None and new_hi is not None and new_lo > new_hi:
            self.failed = True
            return
        queue = self.q_atom
        for n, _ in self.prob.var_atoms[vi]:
            queue.append(n)

    # -- propagation --------------------------------------------------------

    def _tighten(self, n: int) -> None:
        coeffs, op, bound = self.prob.nodes[n][1]  # type: ignore[misc]
        # The cached sums give each variable's residual bound in O(1).
        for vi, c in coeffs:
            a, b = (self.los[vi], self.his[vi]) if c > 0 else (self.his[vi], self.los[vi])
            cl = None if a is None else c * a
            ch = None if b is None else c * b
            rest_lo_inf = self.alo_inf[n] - (cl is None)
            rest_hi_inf = self.ahi_inf[n] - (ch is None)
            rest_lo = None if rest_lo_inf else self.alo[n] - (cl if cl is not None else 0)
            rest_hi = None if rest_hi_inf else self.ahi[n] - (ch if ch is not None else 0)
            if rest_lo is not None:
                # c * x <= bound - rest_lo
                room = bound - rest_lo
                if c > 0:
                    self.set_bound(vi, None, room // c)
                else:
                    self.set_bound(vi, -(-room // c), None)
            if op == _EQ and rest_hi is not None:
                # c * x >= bound - rest_hi
                need = bound - rest_hi
                if c > 0:
                    self.set_bound(vi, -(-need // c), None)
                else:
                    self.set_bound(vi, None, need // c)
            if self.failed:
                return

    def propagate(self) -> None:
        while not self.failed and (self.q_atom or self.q_or):
            self._spend()
            if self.q_atom:
                n = self.q_atom.pop()
                if self.status[n] == _UNKNOWN:
                    s = self._atom_status(n)
                    if s != _UNKNOWN:
                        self.set_status(n, s)
                    elif self.required[n]:
                        self._tighten(n)
                continue
            n = self.q_or.pop()
            if self.status[n] == _UNKNOWN and self.required[n] and self.n_unknown[n] == 1:
                for c in self.prob.nodes[n][1]:  # type: ignore[union-attr]
                    if self.status[c] == _UNKNOWN:
                        self.mark_required(c)
                        break

    # -- search ---------------------------------------------------------------

    def _pick_decision(self) -> list[tuple] | None:
        best_or = None
        best_count = None
        for n, (kind, payload) in enumerate(self.prob.nodes):
            if (
                kind == _OR
                and self.required[n]
                and not self.split[n]
                and self.status[n] == _UNKNOWN
            ):
                if best_count is None or self.n_unknown[n] < best_count:
                    best_or, best_count = n, self.n_unknown[n]
        if best_or is not None:
            payload = self.prob.nodes[best_or][1]
            return [
                ("branch", best_or, c)
                for c in payload  # type: ignore[union-attr]
                if self.status[c] == _UNKNOWN
            ]
        best_var = None
        best_size = None
        for n, (kind, payload) in enumerate(self.prob.nodes):
            if kind != _ATOM or not self.required[n] or self.status[n] != _UNKNOWN:
                continue
            for vi, _ in payload[0]:  # type: ignore[index]
                lo, hi = self.los[vi], self.his[vi]
                if lo is None or hi is None:
                    continue
                size = hi - lo + 1
                if size > 1 and (best_size is None or size < best_size):
                    best_var, best_size = vi, size
        if best_var is None:
            for n, (kind, payload) in enumerate(self.prob.nodes):
                if kind == _ATOM and self.required[n] and self.status[n] == _UNKNOWN:
                    raise _Stuck()
            return None
        lo, hi = self.los[best_var], self.his[best_var]
        if best_size <= 12:
            values = sorted(range(lo, hi + 1), key=lambda v: (abs(v), v))
            return [("set", best_var, v, v) for v in values]
        mid = lo + (hi - lo) // 2
        halves = [("set", best_var, lo, mid), ("set", best_var, mid + 1, hi)]
        anchor = min(max(0, lo), hi)
        if anchor > mid:
            halves.reverse()
        return halves

    def _apply(self, action: tuple) -> None:
        if action[0] == "branch":
            _, node, child = action
            if not self.split[node]:
                self.trail.append(("p", node))
                self.split[node] = 1
            self.mark_required(child)
        else:
            _, vi, lo, hi = action
            self.set_bound(vi, lo, hi)
        self.propagate()

    def _undo(self, mark: int) -> None:
        while len(self.trail) > mark:
            entry = self.trail.pop()
            tag = entry[0]
            if tag == "s":
                self.status[entry[1]] = entry[2]
            elif tag == "c":
                _, p, u, t, f = entry
                self.n_unknown[p], self.n_true[p], self.n_false[p] = u, t, f
            elif tag == "r":
                self.required[entry[1]] = 0
            elif tag == "p":
                self.split[entry[1]] = 0
            else:
                _, vi, lo, hi = entry
                self._shift_atom_sums(vi, self.los[vi], self.his[vi], lo, hi)
                self.los[vi], self.his[vi] = lo, hi
        self.failed = False
        self.q_atom.clear()
        self.q_or.clear()

    def run(self) -> "dict[str, int] | None":
        """A model, or None when the search space is exhausted.

        Sets ``stuck_seen`` if some branch was abandoned because value
        branching hit an unbounded domain; exhaustion then proves
        nothing.  Raises BudgetExceeded when out of budget.
        """
        root = self.prob.root
        if isinstance(root, bool):
            return self._model() if root else None
        self.mark_required(root)
        self.propagate()
        stack: list[tuple[int, list[tuple], int]] = []
        while True:
            decision: list[tuple] | None = None
            if not self.failed and self.status[root] != _FALSE:
                if self.status[root] == _TRUE:
                    return self._model()
                try:
                    decision = self._pick_decision()
                except _Stuck:
                    self.stuck_seen = True
                if decision is not None and not decision:
                    decision = None  # treat as dead end
                if decision is not None:
                    mark = len(self.trail)
                    stack.append((mark, decision, 1))
                    self._apply(decision[0])
                    continue
                if self.status[root] == _TRUE:
                    return self._model()
            # dead end: backtrack
            while stack:
                mark, alts, next_index = stack.pop()
                self._undo(mark)
                if next_index < len(alts):
                    stack.append((mark, alts, next_index + 1))
                    self._apply(alts[next_index])
                    break
            else:
                return None

    def _model(self) -> dict[str, int]:
        out = {}
        for vi, name in enumerate(self.prob.var_names):
            lo, hi = self.los[vi], self.his[vi]
            value = 0
            if lo is not None and lo > 0:
                value = lo
            elif hi is not None and hi < 0:
                value = hi
            out[name] = value
        return out


@dataclass
class BoundedBackend:
    """Complete-within-a-box solving; unsat only with a box-free refutation."""

    box: int | None = None
    refute_budget: int = 300_000
    search_budget: int = 30_000_000

    def solve(self, formula: P.Formula) -> P.SolveResult:
        lifted, body = P.lift_existentials(formula)
        names = sorted(P.free_variables(formula)) + list(lifted)
        prob = _compile(body, names)
        box = self.box if self.box is not None else default_box(prob.max_const)

        refuter = _Search(prob, None, self.refute_budget)
        try:
            model = refuter.run()
            if model is not None:
                if all(-box <= v <= box for v in model.values()):
                    return P.SolveResult("sat", model)
            elif not refuter.stuck_seen:
                return P.SolveResult("unsat")
        except BudgetExceeded:
            pass

        try:
            model = _Search(prob, box, self.search_budget).run()
        except BudgetExceeded:
            return P.SolveResult("unknown", reason=f"search budget exceeded (box {box})")
        if model is not None:
            return P.SolveResult("sat", model)
        return P.SolveResult("unknown", reason=f"no solution within box {box}")


def default_box(max_const: int) -> int:
    return max(64, 2 * max_const + 8)
