"""Existential linear integer arithmetic: terms, formulas, SMT-LIB emission.

Formulas are immutable ASTs built from linear-term atoms, boolean
connectives, and existential quantifier blocks.  Integers are exact
(Python ints), so binary-encoded constants and very large solution
values are handled without loss.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

COMPARISONS = ("<=", ">=", "<", ">", "=")


class UnboundFreeVariable(Exception):
    def __init__(self, name: str):
        super().__init__(f"no value for free variable {name!r}")
        self.name = name


@dataclass(frozen=True)
class LinearTerm:
    """Sum of integer-coefficient variables plus a constant."""

    coeffs: tuple[tuple[str, int], ...] = ()
    constant: int = 0

    @staticmethod
    def of(coeffs: Mapping[str, int], constant: int = 0) -> "LinearTerm":
        items = tuple(sorted((v, c) for v, c in coeffs.items() if c != 0))
        return LinearTerm(items, constant)

    def __add__(self, other: "LinearTerm | int") -> "LinearTerm":
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.constant + other)
        merged = dict(self.coeffs)
        for v, c in other.coeffs:
            merged[v] = merged.get(v, 0) + c
        return LinearTerm.of(merged, self.constant + other.constant)

    def __sub__(self, other: "LinearTerm | int") -> "LinearTerm":
        if isinstance(other, int):
            return LinearTerm(self.coeffs, self.constant - other)
        return self + other.scale(-1)

    def scale(self, factor: int) -> "LinearTerm":
        if factor == 0:
            return LinearTerm((), 0)
        return LinearTerm(
            tuple((v, c * factor) for v, c in self.coeffs), self.constant * factor
        )

    def evaluate(self, valuation: Mapping[str, int]) -> int:
        total = self.constant
        for v, c in self.coeffs:
            if v not in valuation:
                raise UnboundFreeVariable(v)
            total += c * valuation[v]
        return total

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.coeffs)


def var(name: str) -> LinearTerm:
    return LinearTerm(((name, 1),), 0)


def const(value: int) -> LinearTerm:
    return LinearTerm((), value)


def _as_term(value: "LinearTerm | int") -> LinearTerm:
    return const(value) if isinstance(value, int) else value


class Formula:
    """Base class for formula AST nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class BoolConst(Formula):
    value: bool


TRUE = BoolConst(True)
FALSE = BoolConst(False)


@dataclass(frozen=True)
class Atom(Formula):
    lhs: LinearTerm
    op: str
    rhs: LinearTerm

    def __post_init__(self) -> None:
        if self.op not in COMPARISONS:
            raise ValueError(f"unknown comparison {self.op!r}")


@dataclass(frozen=True)
class And(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Or(Formula):
    args: tuple[Formula, ...]


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class Exists(Formula):
    variables: tuple[str, ...]
    body: Formula


def atom(lhs: "LinearTerm | int", op: str, rhs: "LinearTerm | int") -> Formula:
    return Atom(_as_term(lhs), op, _as_term(rhs))


def eq(lhs, rhs) -> Formula:
    return atom(lhs, "=", rhs)


def le(lhs, rhs) -> Formula:
    return atom(lhs, "<=", rhs)


def ge(lhs, rhs) -> Formula:
    return atom(lhs, ">=", rhs)


def lt(lhs, rhs) -> Formula:
    return atom(lhs, "<", rhs)


def gt(lhs, rhs) -> Formula:
    return atom(lhs, ">", rhs)


def conj(*args: Formula) -> Formula:
    flat: list[Formula] = []
    for f in args:
        if isinstance(f, BoolConst):
            if not f.value:
                return FALSE
            continue
        if isinstance(f, And):
            flat.extend(f.args)
        else:
            flat.append(f)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return And(tuple(flat))


def disj(*args: Formula) -> Formula:
    flat: list[Formula] = []
    for f in args:
        if isinstance(f, BoolConst):
            if f.value:
                return TRUE
            continue
        if isinstance(f, Or):
            flat.extend(f.args)
        else:
            flat.append(f)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return Or(tuple(flat))


def neg(f: Formula) -> Formula:
    if isinstance(f, BoolConst):
        return BoolConst(not f.value)
    if isinstance(f, Not):
        return f.arg
    return Not(f)


def implies(antecedent: Formula, consequent: Formula) -> Formula:
    return disj(neg(antecedent), consequent)


def exists(variables: Iterable[str], body: Formula) -> Formula:
    names = tuple(variables)
    if not names:
        return body
    return Exists(names, body)


def free_variables(f: Formula) -> frozenset[str]:
    if isinstance(f, BoolConst):
        return frozenset()
    if isinstance(f, Atom):
        return f.lhs.variables | f.rhs.variables
    if isinstance(f, (And, Or)):
        out: frozenset[str] = frozenset()
        for g in f.args:
            out |= free_variables(g)
        return out
    if isinstance(f, Not):
        return free_variables(f.arg)
    if isinstance(f, Exists):
        return free_variables(f.body) - frozenset(f.variables)
    raise TypeError(f"not a formula: {f!r}")


def formula_size(f: Formula) -> int:
    """AST node count, with linear terms counted per coefficient."""
    if isinstance(f, BoolConst):
        return 1
    if isinstance(f, Atom):
        return 1 + len(f.lhs.coeffs) + len(f.rhs.coeffs)
    if isinstance(f, (And, Or)):
        return 1 + sum(formula_size(g) for g in f.args)
    if isinstance(f, Not):
        return 1 + formula_size(f.arg)
    if isinstance(f, Exists):
        return 1 + len(f.variables) + formula_size(f.body)
    raise TypeError(f"not a formula: {f!r}")


def map_terms(f: Formula, fn: Callable[[LinearTerm], LinearTerm]) -> Formula:
    if isinstance(f, BoolConst):
        return f
    if isinstance(f, Atom):
        return Atom(fn(f.lhs), f.op, fn(f.rhs))
    if isinstance(f, And):
        return And(tuple(map_terms(g, fn) for g in f.args))
    if isinstance(f, Or):
        return Or(tuple(map_terms(g, fn) for g in f.args))
    if isinstance(f, Not):
        return Not(map_terms(f.arg, fn))
    if isinstance(f, Exists):
        return Exists(f.variables, map_terms(f.body, fn))
    raise TypeError(f"not a formula: {f!r}")


def substitute_terms(f: Formula, mapping: Mapping[str, LinearTerm]) -> Formula:
    """Replace free variables by linear terms (capture is the caller's risk)."""

    def on_term(t: LinearTerm) -> LinearTerm:
        out = const(t.constant)
        for v, c in t.coeffs:
            out = out + mapping.get(v, var(v)).scale(c)
        return out

    return _map_free(f, on_term)


def _map_free(f: Formula, on_term, bound: frozenset[str] = frozenset()) -> Formula:
    if isinstance(f, BoolConst):
        return f
    if isinstance(f, Atom):
        def shield(t: LinearTerm) -> LinearTerm:
            keep = LinearTerm.of({v: c for v, c in t.coeffs if v in bound})
            free = LinearTerm.of(
                {v: c for v, c in t.coeffs if v not in bound}, t.constant
            )
            return keep + on_term(free)

        return Atom(shield(f.lhs), f.op, shield(f.rhs))
    if isinstance(f, And):
        return And(tuple(_map_free(g, on_term, bound) for g in f.args))
    if isinstance(f, Or):
        return Or(tuple(_map_free(g, on_term, bound) for g in f.args))
    if isinstance(f, Not):
        return Not(_map_free(f.arg, on_term, bound))
    if isinstance(f, Exists):
        return Exists(f.variables, _map_free(f.body, on_term, bound | set(f.variables)))
    raise TypeError(f"not a formula: {f!r}")


def rename_variables(f: Formula, mapping: Mapping[str, str]) -> Formula:
    return substitute_terms(f, {old: var(new) for old, new in mapping.items()})


def substitute_values(f: Formula, valuation: Mapping[str, int]) -> Formula:
    return substitute_terms(f, {v: const(k) for v, k in valuation.items()})


def lift_existentials(f: Formula) -> tuple[tuple[str, ...], Formula]:
    """Hoist all existential blocks to one top-level block.

    Quantifiers in positive positions distribute over conjunction and
    disjunction for satisfiability, so the result has the same solutions
    projected to the free variables.  Bound names are freshened when
    they would collide.  Raises ValueError for a quantifier under
    negation, which the pipeline never produces.
    """
    taken = set(free_variables(f))
    bound: list[str] = []

    def fresh(name: str) -> str:
        candidate = name
        tick = 1
        while candidate in taken:
            tick += 1
            candidate = f"{name}~{tick}"
        taken.add(candidate)
        return candidate

    def go(g: Formula) -> Formula:
        if isinstance(g, (BoolConst, Atom)):
            return g
        if isinstance(g, And):
            return And(tuple(go(h) for h in g.args))
        if isinstance(g, Or):
            return Or(tuple(go(h) for h in g.args))
        if isinstance(g, Not):
            if _has_exists(g.arg):
                raise ValueError("existential quantifier under negation")
            return g
        if isinstance(g, Exists):
            renaming = {}
            for name in g.variables:
                new = fresh(name)
                bound.append(new)
                if new != name:
                    renaming[name] = new
            body = rename_variables(g.body, renaming) if renaming else g.body
            return go(body)
        raise TypeError(f"not a formula: {g!r}")

    lifted_body = go(f)
    return tuple(bound), lifted_body


def _has_exists(f: Formula) -> bool:
    if isinstance(f, Exists):
        return True
    if isinstance(f, (And, Or)):
        return any(_has_exists(g) for g in f.args)
    if isinstance(f, Not):
        return _has_exists(f.arg)
    return False


def _evaluate_qf(f: Formula, valuation: Mapping[str, int]) -> bool:
    if isinstance(f, BoolConst):
        return f.value
    if isinstance(f, Atom):
        left = f.lhs.evaluate(valuation)
        right = f.rhs.evaluate(valuation)
        return {
            "<=": left <= right,
            ">=": left >= right,
            "<": left < right,
            ">": left > right,
            "=": left == right,
        }[f.op]
    if isinstance(f, And):
        return all(_evaluate_qf(g, valuation) for g in f.args)
    if isinstance(f, Or):
        return any(_evaluate_qf(g, valuation) for g in f.args)
    if isinstance(f, Not):
        return not _evaluate_qf(f.arg, valuation)
    raise TypeError(f"unexpected quantifier in {f!r}")


def evaluate(
    f: Formula, valuation: Mapping[str, int], search_box: int = 64
) -> bool | None:
    """Three-valued truth under the valuation.

    Quantifier-free formulas evaluate exactly.  Existential blocks are
    decided by the bounded solver: a witness inside [-search_box,
    search_box] gives True, a box-independent infeasibility proof gives
    False, and otherwise the result is None (unknown).
    """
    missing = free_variables(f) - set(valuation)
    if missing:
        raise UnboundFreeVariable(sorted(missing)[0])
    if not _has_exists(f):
        return _evaluate_qf(f, valuation)

    def three(g: Formula) -> bool | None:
        if isinstance(g, BoolConst):
            return g.value
        if isinstance(g, Atom):
            return _evaluate_qf(g, valuation)
        if isinstance(g, And):
            values = [three(h) for h in g.args]
            if any(v is False for v in values):
                return False
            if all(v is True for v in values):
                return True
            return None
        if isinstance(g, Or):
            values = [three(h) for h in g.args]
            if any(v is True for v in values):
                return True
            if all(v is False for v in values):
                return False
            return None
        if isinstance(g, Not):
            inner = three(g.arg)
            return None if inner is None else not inner
        if isinstance(g, Exists):
            from . import solver

            closed = substitute_values(g, dict(valuation))
            result = solver.BoundedBackend(box=search_box).solve(closed)
            if result.status == "sat":
                return True
            if result.status == "unsat":
                return False
            return None
        raise TypeError(f"not a formula: {g!r}")

    return three(f)


_SIMPLE_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


def _smt_symbol(name: str) -> str:
    if _SIMPLE_NAME.match(name):
        return name
    return f"|{name}|"


def _smt_int(value: int) -> str:
    return str(value) if value >= 0 else f"(- {-value})"


def _smt_term(t: LinearTerm) -> str:
    parts = []
    for v, c in t.coeffs:
        name = _smt_symbol(v)
        parts.append(name if c == 1 else f"(* {_smt_int(c)} {name})")
    if t.constant != 0 or not parts:
        parts.append(_smt_int(t.constant))
    if len(parts) == 1:
        return parts[0]
    return f"(+ {' '.join(parts)})"


def _smt_formula(f: Formula) -> str:
    if isinstance(f, BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, Atom):
        return f"({f.op} {_smt_term(f.lhs)} {_smt_term(f.rhs)})"
    if isinstance(f, And):
        return f"(and {' '.join(_smt_formula(g) for g in f.args)})"
    if isinstance(f, Or):
        return f"(or {' '.join(_smt_formula(g) for g in f.args)})"
    if isinstance(f, Not):
        return f"(not {_smt_formula(f.arg)})"
    raise TypeError(f"cannot emit quantified node {f!r}")


def to_smtlib(f: Formula) -> str:
    """A complete QF_LIA script: one declare-const per variable, one assert.

    Top-level existentials become declared constants, so a sat model
    reports witnesses for them too.
    """
    lifted, body = lift_existentials(f)
    names = sorted(free_variables(f)) + list(lifted)
    lines = ["(set-logic QF_LIA)"]
    for name in names:
        lines.append(f"(declare-const {_smt_symbol(name)} Int)")
    lines.append(f"(assert {_smt_formula(body)})")
    lines.append("(check-sat)")
    lines.append("(get-model)")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SolveResult:
    status: str  # "sat" | "unsat" | "unknown"
    model: dict[str, int] | None = None
    reason: str = ""


class SolverInvalidModel(Exception):
    pass


def solve(f: Formula, backend) -> SolveResult:
    """Run a backend and double-check any model it returns.

    A backend is anything with ``solve(formula) -> SolveResult``; sat
    models must make the formula evaluate to True, including witnesses
    for lifted existential variables.
    """
    result = backend.solve(f)
    if result.status == "sat":
        if result.model is None:
            raise SolverInvalidModel("sat verdict without a model")
        _, body = lift_existentials(f)
        if _evaluate_qf(body, result.model) is not True:
            raise SolverInvalidModel("model does not satisfy the formula")
    return result


def enumerate_solutions(
    f: Formula, variables: list[str] | tuple[str, ...], box: int
) -> list[dict[str, int]]:
    """All solutions over the given variables within [-box, box], in order.

    Exhaustive; meant for small variable counts (oracles and tests).
    """
    names = list(variables)
    out: list[dict[str, int]] = []

    def rec(index: int, partial: dict[str, int]) -> None:
        if index == len(names):
            if evaluate(f, partial, search_box=box) is True:
                out.append(dict(partial))
            return
        for value in range(-box, box + 1):
            partial[names[index]] = value
            rec(index + 1, partial)
        del partial[names[index]]

    rec(0, {})
    return out


def enumerate_models(
    f: Formula, variables: list[str] | tuple[str, ...], box: int, limit: int
) -> tuple[list[dict[str, int]], bool]:
    """Up to ``limit`` solutions over the given variables within the box,
    found by repeated solving with blocking clauses.

    Returns (models, complete): complete is True when the enumeration
    provably covers every solution in the box.
    """
    from . import solver

    backend = solver.BoundedBackend(box=box)
    names = list(variables)
    found: list[dict[str, int]] = []
    g = conj(f, *(conj(ge(var(v), -box), le(var(v), box)) for v in names))
    while len(found) < limit:
        result = backend.solve(g)
        if result.status == "unsat":
            return found, True
        if result.status != "sat":
            return found, False
        model = {v: (result.model or {}).get(v, 0) for v in names}
        found.append(model)
        g = conj(g, neg(conj(*(eq(var(v), value) for v, value in model.items()))))
    return found, False
