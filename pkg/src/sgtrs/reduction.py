"""Counterless product system and the mode-sequence constraint formula.

The counters of a weakly synchronized system are compiled away in two
steps.  First the control states are paired with a phase index in
[0, n_max] and every transition is duplicated into a phase-keeping copy
(bump 0) and a phase-advancing copy (bump 1); output labels carry the
original label, the rule, the phase, and the bump, so letter counts
expose the counter updates.  Second, a formula over the letter-count
variables and per-phase mode variables (region, reversals used,
direction) asserts that some run consistent with those counts respects
every guard and the reversal bound.

Variable naming is fixed and used verbatim in SMT-LIB output:
``x.<counter>``, ``y.<counter>``, ``z.<gamma>.<ruleId>.<phase>.<bump>``,
``reg.<i>.<j>``, ``rev.<i>.<j>``, ``arr.<i>.<j>`` with j the 1-based
counter index in the system's counter order.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

from . import presburger as P
from .modes import RegionTable, build_regions, in_region_formula, n_max
from .system import (
    GUARD_TRUE,
    Rule,
    SgtrsSystem,
    is_weakly_synchronized,
)


class NotWeaklySynchronized(Exception):
    def __init__(self, cycle):
        super().__init__(f"control graph has a non-self-loop cycle: {cycle}")
        self.cycle = cycle


class FreeVariableMismatch(Exception):
    pass


class IndexOutOfRange(Exception):
    pass


@dataclass(frozen=True)
class ProductLabel:
    gamma: object
    rule_id: object
    phase: int
    bump: int

    def __post_init__(self) -> None:
        if self.bump not in (0, 1):
            raise ValueError("bump flag must be 0 or 1")

    def __str__(self) -> str:
        return f"({self.gamma},{self.rule_id},{self.phase},{self.bump})"


def x_var(counter: str) -> str:
    return f"x.{counter}"


def y_var(counter: str) -> str:
    return f"y.{counter}"


def z_var(label: ProductLabel) -> str:
    return f"z.{label.gamma}.{label.rule_id}.{label.phase}.{label.bump}"


def reg_var(i: int, j: int) -> str:
    return f"reg.{i}.{j}"


def rev_var(i: int, j: int) -> str:
    return f"rev.{i}.{j}"


def arr_var(i: int, j: int) -> str:
    return f"arr.{i}.{j}"


@dataclass(frozen=True)
class ReductionArtifacts:
    base: SgtrsSystem
    product: SgtrsSystem
    letters: tuple[ProductLabel, ...]
    region_table: RegionTable
    n_max: int

    @property
    def counters(self) -> tuple[str, ...]:
        return self.base.counters

    @property
    def k(self) -> int:
        return len(self.base.counters)

    def counter_of(self, j: int) -> str:
        if not 1 <= j <= self.k:
            raise IndexOutOfRange(f"counter index {j} not in [1, {self.k}]")
        return self.base.counters[j - 1]

    @cached_property
    def letters_by_phase(self) -> dict[int, tuple[ProductLabel, ...]]:
        out: dict[int, list[ProductLabel]] = {i: [] for i in range(self.n_max + 1)}
        for letter in self.letters:
            out[letter.phase].append(letter)
        return {i: tuple(ls) for i, ls in out.items()}

    def _phase_update_term(self, i: int, j: int, bumps: tuple[int, ...]) -> P.LinearTerm:
        counter = self.counter_of(j)
        coeffs: dict[str, int] = {}
        for letter in self.letters_by_phase[i]:
            if letter.bump not in bumps:
                continue
            delta = self.base.rule_by_id[letter.rule_id].update_of(counter)
            if delta:
                coeffs[z_var(letter)] = delta
        return P.LinearTerm.of(coeffs)

    @cached_property
    def _start_terms(self) -> dict[tuple[int, int], P.LinearTerm]:
        out: dict[tuple[int, int], P.LinearTerm] = {}
        for j in range(1, self.k + 1):
            term = P.var(x_var(self.counter_of(j)))
            for i in range(self.n_max + 1):
                out[(i, j)] = term
                term = term + self._phase_update_term(i, j, (0, 1))
        return out

    def start_counter_term(self, i: int, j: int) -> P.LinearTerm:
        """Value of counter j when phase i begins: the initial value plus
        all updates of letters in earlier phases."""
        if not 0 <= i <= self.n_max:
            raise IndexOutOfRange(f"phase {i} not in [0, {self.n_max}]")
        return self._start_terms[(i, j)]

    def end_counter_term(self, i: int, j: int) -> P.LinearTerm:
        """Start value of phase i plus the phase's bump-0 letter updates."""
        return self.start_counter_term(i, j) + self._phase_update_term(i, j, (0,))

    def variable_map(self) -> dict[str, list[str]]:
        return {
            "x": [x_var(c) for c in self.counters],
            "y": [y_var(c) for c in self.counters],
            "z": [z_var(a) for a in self.letters],
            "reg": [reg_var(i, j) for i in range(self.n_max + 1) for j in range(1, self.k + 1)],
            "rev": [rev_var(i, j) for i in range(self.n_max + 1) for j in range(1, self.k + 1)],
            "arr": [arr_var(i, j) for i in range(self.n_max + 1) for j in range(1, self.k + 1)],
        }


def build_product(system: SgtrsSystem) -> ReductionArtifacts:
    """Phase-indexed counterless product of a weakly synchronized system."""
    ok, cycle = is_weakly_synchronized(system)
    if not ok:
        raise NotWeaklySynchronized(cycle)
    table = build_regions(system.constants())
    bound = n_max(len(system.counters), table.m, system.reversal_bound)
    states = tuple((p, i) for p in system.states for i in range(bound + 1))
    rules: list[Rule] = []
    letters: list[ProductLabel] = []
    for rule in system.rules:
        for i in range(bound + 1):
            for bump in (0, 1):
                if bump == 1 and i == bound:
                    continue
                label = ProductLabel(rule.label, rule.rule_id, i, bump)
                letters.append(label)
                rules.append(
                    Rule.of(
                        rule_id=label,
                        source=(rule.source, i),
                        lhs=rule.lhs,
                        guard=GUARD_TRUE,
                        label=label,
                        target=(rule.target, i + bump),
                        rhs=rule.rhs,
                        update={},
                    )
                )
    product = SgtrsSystem(
        states=states,
        alphabet=system.alphabet,
        output_symbols=tuple(letters),
        rules=tuple(rules),
        counters=(),
        reversal_bound=0,
    )
    return ReductionArtifacts(system, product, tuple(letters), table, bound)


@dataclass(frozen=True)
class PsiPrime:
    """The counter-respecting constraint, with named sub-conjuncts."""

    dom: P.Formula
    init: P.Formula
    good_seq: P.Formula
    respect: P.Formula
    end_val: P.Formula
    phi1: P.Formula
    phi2: P.Formula  # renamed onto the y variables

    @property
    def formula(self) -> P.Formula:
        return P.conj(
            self.phi1, self.phi2, self.dom, self.init, self.good_seq, self.respect, self.end_val
        )


def _check_phi(formula: P.Formula, arts: ReductionArtifacts, which: str) -> None:
    allowed = {x_var(c) for c in arts.counters}
    free = P.free_variables(formula)
    if not free <= allowed:
        raise FreeVariableMismatch(
            f"{which} must use only counter variables {sorted(allowed)}, got {sorted(free)}"
        )


def build_psi_prime(
    system: SgtrsSystem,
    arts: ReductionArtifacts,
    phi1: P.Formula,
    phi2: P.Formula,
) -> PsiPrime:
    """Conjunction asserting a guard- and reversal-respecting mode sequence.

    phi1 constrains the initial counter values (variables ``x.<c>``) and
    phi2 the final ones; phi2's variables are renamed to ``y.<c>``.
    """
    _check_phi(phi1, arts, "phi1")
    _check_phi(phi2, arts, "phi2")
    table = arts.region_table
    bound = arts.n_max
    k = arts.k
    m = table.m
    r = system.reversal_bound

    dom_parts: list[P.Formula] = []
    init_parts: list[P.Formula] = []
    good_parts: list[P.Formula] = []
    respect_parts: list[P.Formula] = []
    end_parts: list[P.Formula] = []

    for j in range(1, k + 1):
        init_parts.append(P.eq(P.var(rev_var(0, j)), 0))
        for i in range(bound + 1):
            reg = P.var(reg_var(i, j))
            rev = P.var(rev_var(i, j))
            arr = P.var(arr_var(i, j))
            dom_parts.append(P.conj(P.ge(reg, 0), P.le(reg, 2 * m)))
            dom_parts.append(P.conj(P.ge(rev, 0), P.le(rev, r)))
            dom_parts.append(P.conj(P.ge(arr, 0), P.le(arr, 1)))

    for j in range(1, k + 1):
        for i in range(bound):
            reg0, reg1 = P.var(reg_var(i, j)), P.var(reg_var(i + 1, j))
            rev0, rev1 = P.var(rev_var(i, j)), P.var(rev_var(i + 1, j))
            arr0, arr1 = P.var(arr_var(i, j)), P.var(arr_var(i + 1, j))
            # A direction flip costs exactly one reversal; no flip keeps
            # the count.  Region moves follow the new direction: up needs
            # arr = 1, down needs arr = 0.
            good_parts.append(P.implies(P.neg(P.eq(arr0, arr1)), P.eq(rev1, rev0 + 1)))
            good_parts.append(P.implies(P.eq(arr0, arr1), P.eq(rev1, rev0)))
            good_parts.append(P.implies(P.lt(reg0, reg1), P.eq(arr1, 1)))
            good_parts.append(P.implies(P.gt(reg0, reg1), P.eq(arr1, 0)))

    # End-of-phase values sit in the phase's region.
    for j in range(1, k + 1):
        for i in range(bound + 1):
            end = arts.end_counter_term(i, j)
            for code in table.codes:
                respect_parts.append(
                    P.implies(
                        P.eq(P.var(reg_var(i, j)), code),
                        in_region_formula(end, code, table),
                    )
                )
    # The first mode's region is the region of the initial value.
    for j in range(1, k + 1):
        start = arts.start_counter_term(0, j)
        for code in table.codes:
            respect_parts.append(
                P.implies(
                    in_region_formula(start, code, table),
                    P.eq(P.var(reg_var(0, j)), code),
                )
            )
    # Letters used in a phase must pass their guard at the phase start.
    for letter in arts.letters:
        rule = system.rule_by_id[letter.rule_id]
        if rule.guard == GUARD_TRUE:
            continue
        substitution = {
            arts.counter_of(j): arts.start_counter_term(letter.phase, j)
            for j in range(1, k + 1)
        }
        grounded = P.substitute_terms(rule.guard, substitution)
        respect_parts.append(P.implies(P.gt(P.var(z_var(letter)), 0), grounded))
    # Non-incrementing phases admit no positive updates and vice versa.
    for letter in arts.letters:
        rule = system.rule_by_id[letter.rule_id]
        z = P.var(z_var(letter))
        for j in range(1, k + 1):
            delta = rule.update_of(arts.counter_of(j))
            if delta > 0:
                respect_parts.append(
                    P.implies(P.eq(P.var(arr_var(letter.phase, j)), 0), P.eq(z, 0))
                )
            elif delta < 0:
                respect_parts.append(
                    P.implies(P.eq(P.var(arr_var(letter.phase, j)), 1), P.eq(z, 0))
                )

    for j in range(1, k + 1):
        end_parts.append(
            P.eq(P.var(y_var(arts.counter_of(j))), arts.end_counter_term(bound, j))
        )

    renaming = {x_var(c): y_var(c) for c in arts.counters}
    return PsiPrime(
        dom=P.conj(*dom_parts),
        init=P.conj(*init_parts),
        good_seq=P.conj(*good_parts),
        respect=P.conj(*respect_parts),
        end_val=P.conj(*end_parts),
        phi1=phi1,
        phi2=P.rename_variables(phi2, renaming),
    )


# Guards are asserted at phase-start values only; a model's letters may
# fire at values in other regions mid-phase, so extracted runs are
# certified by replay and failed models are excluded and re-solved.
# Pinning phase-start values into the phase's region looks like a sound
# sharpening but is not: when an update lands exactly on a guard
# constant and the next update reverses away from it, the only
# satisfying mode sequence keeps the old region while the phase-start
# value sits on the constant, and the sharpened formula would wrongly
# become unsatisfiable.
