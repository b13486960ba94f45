"""Text format for systems and queries, with a round-tripping printer.

A file holds one ``system { ... }`` block followed by any number of
``query`` blocks, run in order.  Formulas are prefix s-expressions over
+, *, the comparison operators, and, or, not, exists, true, false; NTA
references are declared names or ``*`` for the all-trees automaton.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from . import presburger as P
from .automata import NTA, nta as make_nta, universal
from .system import GUARD_TRUE, Rule, SgtrsSystem
from .trees import RankedAlphabet, Tree, parse_term, format_term


class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Token:
    kind: str  # "ident" | "int" | "string" | punctuation itself
    text: str
    line: int
    column: int


_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*")
_KEYWORDS = ("control-reach", "encode-2cm")


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    line, column = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            column = 1
            i += 1
            continue
        if ch.isspace():
            column += 1
            i += 1
            continue
        if ch == "#":
            while i < len(text) and text[i] != "\n":
                i += 1
            continue
        start_col = column

        def emit(kind: str, word: str) -> None:
            nonlocal i, column
            tokens.append(Token(kind, word, line, start_col))
            i += len(word)
            column += len(word)

        if ch == '"':
            j = text.find('"', i + 1)
            if j < 0:
                raise ParseError("unterminated string", line, column)
            tokens.append(Token("string", text[i + 1 : j], line, start_col))
            column += j - i + 1
            i = j + 1
            continue
        keyword = next((k for k in _KEYWORDS if text.startswith(k, i)), None)
        if keyword is not None:
            emit("ident", keyword)
            continue
        if text.startswith("->", i):
            emit("->", "->")
            continue
        if text.startswith("<=", i) or text.startswith(">=", i):
            word = text[i : i + 2]
            emit(word, word)
            continue
        if ch in "<>=":
            emit(ch, ch)
            continue
        if ch == "-" and i + 1 < len(text) and text[i + 1].isdigit():
            match = re.match(r"-\d+", text[i:])
            emit("int", match.group(0))
            continue
        if ch.isdigit():
            match = re.match(r"\d+", text[i:])
            emit("int", match.group(0))
            continue
        if ch in "{}()[];:,*+-":
            emit(ch, ch)
            continue
        match = _IDENT.match(text, i)
        if match:
            emit("ident", match.group(0))
            continue
        raise ParseError(f"unexpected character {ch!r}", line, column)
    return tokens


# -- document types -----------------------------------------------------------


@dataclass(frozen=True)
class NtaDef:
    name: str
    states: tuple[str, ...]
    finals: tuple[str, ...]
    transitions: tuple[tuple[tuple[str, ...], str, str], ...]


@dataclass(frozen=True)
class RuleDef:
    source: str
    lhs: str  # NTA name or "*"
    guard: P.Formula
    target: str
    rhs: str
    update: tuple[tuple[str, int], ...]
    label: str


@dataclass(frozen=True)
class SystemDef:
    counters: tuple[str, ...]
    reversals: int
    alphabet: tuple[tuple[str, int], ...]
    states: tuple[str, ...]
    ntas: tuple[NtaDef, ...]
    rules: tuple[RuleDef, ...]


@dataclass(frozen=True)
class ReachQuery:
    kind: str  # "reach"
    from_state: str
    from_nta: str
    from_formula: P.Formula
    to_state: str
    to_nta: str
    to_formula: P.Formula


@dataclass(frozen=True)
class ControlReachQuery:
    kind: str  # "control-reach"
    from_state: str
    from_tree: Tree
    to_state: str


@dataclass(frozen=True)
class SimulateQuery:
    kind: str  # "simulate"
    from_state: str
    from_tree: Tree
    steps_path: str
    lifespan: int | None  # None = plain replay


@dataclass(frozen=True)
class Encode2cmQuery:
    kind: str  # "encode-2cm"
    rules: tuple[tuple[str, str, str], ...]
    from_state: str
    to_state: str


Query = object


@dataclass(frozen=True)
class InputDocument:
    system: SystemDef
    queries: tuple


# -- parser -------------------------------------------------------------------


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def _here(self) -> tuple[int, int]:
        if self.pos < len(self.tokens):
            t = self.tokens[self.pos]
            return t.line, t.column
        if self.tokens:
            t = self.tokens[-1]
            return t.line, t.column
        return 1, 1

    def error(self, message: str):
        line, column = self._here()
        raise ParseError(message, line, column)

    def peek(self) -> Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def at(self, kind: str, text: str | None = None) -> bool:
        t = self.peek()
        return t is not None and t.kind == kind and (text is None or t.text == text)

    def take(self, kind: str, text: str | None = None) -> Token:
        t = self.peek()
        if t is None or t.kind != kind or (text is not None and t.text != text):
            want = text or kind
            got = t.text if t else "end of input"
            self.error(f"expected {want!r}, found {got!r}")
        self.pos += 1
        return t

    def ident(self) -> str:
        return self.take("ident").text

    def integer(self) -> int:
        return int(self.take("int").text)

    # formulas ---------------------------------------------------------------

    def formula(self) -> P.Formula:
        if self.at("ident", "true"):
            self.take("ident")
            return P.TRUE
        if self.at("ident", "false"):
            self.take("ident")
            return P.FALSE
        self.take("(")
        head = self.peek()
        if head is None:
            self.error("unterminated formula")
        if head.kind == "ident" and head.text in ("and", "or", "not", "exists"):
            op = self.take("ident").text
            if op == "exists":
                self.take("(")
                names = []
                while not self.at(")"):
                    names.append(self.ident())
                self.take(")")
                body = self.formula()
                self.take(")")
                return P.exists(names, body)
            args = []
            while not self.at(")"):
                args.append(self.formula())
            self.take(")")
            if op == "and":
                return P.conj(*args)
            if op == "or":
                return P.disj(*args)
            if len(args) != 1:
                self.error("not takes exactly one argument")
            return P.neg(args[0])
        op_token = self.peek()
        if op_token and op_token.text in ("<=", ">=", "<", ">", "="):
            op = self.take(op_token.kind).text
        elif op_token and op_token.kind == "ident" and op_token.text in ("le", "ge", "lt", "gt", "eq"):
            op = {"le": "<=", "ge": ">=", "lt": "<", "gt": ">", "eq": "="}[self.take("ident").text]
        else:
            self.error("expected a comparison or connective")
        lhs = self.term()
        rhs = self.term()
        self.take(")")
        return P.atom(lhs, op, rhs)

    def term(self) -> P.LinearTerm:
        if self.at("int"):
            return P.const(self.integer())
        if self.at("ident"):
            return P.var(self.ident())
        self.take("(")
        if self.at("+"):
            self.take("+")
            total = P.const(0)
            while not self.at(")"):
                total = total + self.term()
            self.take(")")
            return total
        if self.at("*"):
            self.take("*")
            factor = self.integer()
            inner = self.term()
            self.take(")")
            return inner.scale(factor)
        self.error("expected '+' or '*' in term")
        raise AssertionError

    # system -----------------------------------------------------------------

    def document(self) -> InputDocument:
        self.take("ident", "system")
        system = self.system_body()
        queries = []
        while self.peek() is not None:
            self.take("ident", "query")
            queries.append(self.query())
        return InputDocument(system, tuple(queries))

    def system_body(self) -> SystemDef:
        self.take("{")
        counters: tuple[str, ...] = ()
        reversals = 0
        alphabet: list[tuple[str, int]] = []
        states: tuple[str, ...] = ()
        ntas: list[NtaDef] = []
        rules: list[RuleDef] = []
        while not self.at("}"):
            keyword = self.take("ident").text
            if keyword == "counters":
                names = []
                while not self.at(";"):
                    names.append(self.ident())
                self.take(";")
                counters = tuple(names)
            elif keyword == "reversals":
                reversals = self.integer()
                self.take(";")
            elif keyword == "alphabet":
                self.take("{")
                while not self.at("}"):
                    symbol = self.ident()
                    self.take(":")
                    alphabet.append((symbol, self.integer()))
                self.take("}")
            elif keyword == "states":
                self.take("{")
                names = []
                while not self.at("}"):
                    names.append(self.ident())
                self.take("}")
                states = tuple(names)
            elif keyword == "nta":
                ntas.append(self.nta_def())
            elif keyword == "rule":
                rules.append(self.rule_def())
            else:
                self.error(f"unknown system item {keyword!r}")
        self.take("}")
        return SystemDef(counters, reversals, tuple(alphabet), states, tuple(ntas), tuple(rules))

    def nta_def(self) -> NtaDef:
        name = self.ident()
        self.take("{")
        states: tuple[str, ...] = ()
        finals: tuple[str, ...] = ()
        transitions: list[tuple[tuple[str, ...], str, str]] = []
        while not self.at("}"):
            keyword = self.take("ident").text
            if keyword == "states":
                self.take("{")
                names = []
                while not self.at("}"):
                    names.append(self.ident())
                self.take("}")
                states = tuple(names)
            elif keyword == "final":
                self.take("{")
                names = []
                while not self.at("}"):
                    names.append(self.ident())
                self.take("}")
                finals = tuple(names)
            elif keyword == "trans":
                self.take("{")
                while not self.at("}"):
                    children = []
                    self.take("(")
                    while not self.at(")"):
                        children.append(self.ident())
                        if self.at(","):
                            self.take(",")
                    self.take(")")
                    self.take("-")
                    symbol = self.ident()
                    self.take("->")
                    target = self.ident()
                    transitions.append((tuple(children), symbol, target))
                    if self.at(";"):
                        self.take(";")
                self.take("}")
            else:
                self.error(f"unknown nta item {keyword!r}")
        self.take("}")
        return NtaDef(name, states, finals, tuple(transitions))

    def nta_ref(self) -> str:
        if self.at("*"):
            self.take("*")
            return "*"
        return self.ident()

    def rule_def(self) -> RuleDef:
        source = self.ident()
        self.take("[")
        lhs = self.nta_ref()
        self.take("]")
        guard: P.Formula = GUARD_TRUE
        if self.at("ident", "guard"):
            self.take("ident")
            guard = self.formula()
        self.take("->")
        target = self.ident()
        self.take("[")
        rhs = self.nta_ref()
        self.take("]")
        update: list[tuple[str, int]] = []
        label = "eps"
        while not self.at(";"):
            keyword = self.take("ident").text
            if keyword == "add":
                self.take("{")
                while not self.at("}"):
                    counter = self.ident()
                    self.take(":")
                    update.append((counter, self.integer()))
                self.take("}")
            elif keyword == "label":
                label = self.ident()
            else:
                self.error(f"unknown rule item {keyword!r}")
        self.take(";")
        return RuleDef(source, lhs, guard, target, rhs, tuple(update), label)

    # queries ----------------------------------------------------------------

    def query(self) -> Query:
        kind = self.take("ident").text
        if kind == "reach":
            return self.reach_query()
        if kind == "control-reach":
            return self.control_reach_query()
        if kind == "simulate":
            return self.simulate_query()
        if kind == "encode-2cm":
            return self.encode_query()
        self.error(f"unknown query kind {kind!r}")
        raise AssertionError

    def reach_query(self) -> ReachQuery:
        self.take("{")
        self.take("ident", "from")
        from_state = self.ident()
        from_nta = self.nta_ref()
        from_formula = self.formula()
        self.take(";")
        self.take("ident", "to")
        to_state = self.ident()
        to_nta = self.nta_ref()
        to_formula = self.formula()
        self.take(";")
        self.take("}")
        return ReachQuery("reach", from_state, from_nta, from_formula,
                          to_state, to_nta, to_formula)

    def control_reach_query(self) -> ControlReachQuery:
        self.take("{")
        self.take("ident", "from")
        from_state = self.ident()
        tree = self.tree_term()
        self.take(";")
        self.take("ident", "to")
        to_state = self.ident()
        self.take(";")
        self.take("}")
        return ControlReachQuery("control-reach", from_state, tree, to_state)

    def simulate_query(self) -> SimulateQuery:
        self.take("{")
        self.take("ident", "from")
        from_state = self.ident()
        tree = self.tree_term()
        self.take(";")
        self.take("ident", "steps")
        path = self.take("string").text
        self.take(";")
        lifespan = None
        if self.at("ident", "lifespan"):
            self.take("ident")
            lifespan = self.integer()
            self.take(";")
        self.take("}")
        return SimulateQuery("simulate", from_state, tree, path, lifespan)

    def encode_query(self) -> Encode2cmQuery:
        self.take("{")
        self.take("ident", "rules")
        self.take("{")
        rules = []
        while not self.at("}"):
            source = self.ident()
            op = self.ident()
            target = self.ident()
            rules.append((source, op, target))
            if self.at(";"):
                self.take(";")
        self.take("}")
        self.take("ident", "from")
        from_state = self.ident()
        self.take(";")
        self.take("ident", "to")
        to_state = self.ident()
        self.take(";")
        self.take("}")
        return Encode2cmQuery("encode-2cm", tuple(rules), from_state, to_state)

    def tree_term(self) -> Tree:
        symbol = self.ident()
        children: list[Tree] = []
        if self.at("("):
            self.take("(")
            if not self.at(")"):
                children.append(self.tree_term())
                while self.at(","):
                    self.take(",")
                    children.append(self.tree_term())
            self.take(")")
        return Tree(symbol, tuple(children))


def parse_input(text: str) -> InputDocument:
    parser = _Parser(_tokenize(text))
    doc = parser.document()
    resolve(doc)  # fail early on unresolved names
    return doc


# -- elaboration into core objects --------------------------------------------


class ResolutionError(Exception):
    pass


@dataclass
class ResolvedSystem:
    system: SgtrsSystem
    ntas: dict[str, NTA]
    document: InputDocument


def resolve(doc: InputDocument) -> ResolvedSystem:
    sd = doc.system
    alphabet = RankedAlphabet(dict(sd.alphabet))
    ntas: dict[str, NTA] = {}
    for nd in sd.ntas:
        if nd.name in ntas:
            raise ResolutionError(f"duplicate nta name {nd.name!r}")
        for children, symbol, target in nd.transitions:
            if symbol not in alphabet:
                raise ResolutionError(f"nta {nd.name!r} uses unknown symbol {symbol!r}")
            for q in tuple(children) + (target,):
                if q not in nd.states:
                    raise ResolutionError(f"nta {nd.name!r} uses undeclared state {q!r}")
        for q in nd.finals:
            if q not in nd.states:
                raise ResolutionError(f"nta {nd.name!r} final state {q!r} undeclared")
        ntas[nd.name] = make_nta(alphabet, nd.states, nd.finals, nd.transitions)

    def nta_of(name: str) -> NTA:
        if name == "*":
            return universal(alphabet)
        if name not in ntas:
            raise ResolutionError(f"reference to undeclared nta {name!r}")
        return ntas[name]

    rules = []
    for index, rd in enumerate(sd.rules, start=1):
        rules.append(
            Rule.of(
                rule_id=f"r{index}",
                source=rd.source,
                lhs=nta_of(rd.lhs),
                guard=rd.guard,
                label=rd.label,
                target=rd.target,
                rhs=nta_of(rd.rhs),
                update=dict(rd.update),
            )
        )
    labels = tuple(sorted({r.label for r in rules})) or ("eps",)
    system = SgtrsSystem(
        states=sd.states,
        alphabet=alphabet,
        output_symbols=labels,
        rules=tuple(rules),
        counters=sd.counters,
        reversal_bound=sd.reversals,
    )
    for query in doc.queries:
        if isinstance(query, ReachQuery):
            nta_of(query.from_nta)
            nta_of(query.to_nta)
            for state in (query.from_state, query.to_state):
                if state not in sd.states:
                    raise ResolutionError(f"query uses undeclared state {state!r}")
        elif isinstance(query, (ControlReachQuery, SimulateQuery)):
            if query.from_state not in sd.states:
                raise ResolutionError(f"query uses undeclared state {query.from_state!r}")
            if isinstance(query, ControlReachQuery) and query.to_state not in sd.states:
                raise ResolutionError(f"query uses undeclared state {query.to_state!r}")
    return ResolvedSystem(system, ntas, doc)


# -- printer ------------------------------------------------------------------


def _print_formula(f: P.Formula) -> str:
    if isinstance(f, P.BoolConst):
        return "true" if f.value else "false"
    if isinstance(f, P.Atom):
        return f"({f.op} {_print_term(f.lhs)} {_print_term(f.rhs)})"
    if isinstance(f, P.And):
        return "(and " + " ".join(_print_formula(g) for g in f.args) + ")"
    if isinstance(f, P.Or):
        return "(or " + " ".join(_print_formula(g) for g in f.args) + ")"
    if isinstance(f, P.Not):
        return f"(not {_print_formula(f.arg)})"
    if isinstance(f, P.Exists):
        return f"(exists ({' '.join(f.variables)}) {_print_formula(f.body)})"
    raise TypeError(f"not a formula: {f!r}")


def _print_term(t: P.LinearTerm) -> str:
    parts = []
    for v, c in t.coeffs:
        parts.append(v if c == 1 else f"(* {c} {v})")
    if t.constant != 0 or not parts:
        parts.append(str(t.constant))
    if len(parts) == 1:
        return parts[0]
    return "(+ " + " ".join(parts) + ")"


def print_document(doc: InputDocument) -> str:
    sd = doc.system
    lines = ["system {"]
    if sd.counters:
        lines.append("  counters " + " ".join(sd.counters) + ";")
    lines.append(f"  reversals {sd.reversals};")
    lines.append("  alphabet { " + " ".join(f"{s}:{r}" for s, r in sd.alphabet) + " }")
    lines.append("  states { " + " ".join(sd.states) + " }")
    for nd in sd.ntas:
        lines.append(f"  nta {nd.name} {{")
        lines.append("    states { " + " ".join(nd.states) + " }")
        lines.append("    final { " + " ".join(nd.finals) + " }")
        body = " ".join(
            f"({','.join(children)}) -{symbol}-> {target};"
            for children, symbol, target in nd.transitions
        )
        lines.append("    trans { " + body + " }")
        lines.append("  }")
    for rd in sd.rules:
        piece = f"  rule {rd.source} [{rd.lhs}]"
        if rd.guard != GUARD_TRUE:
            piece += f" guard {_print_formula(rd.guard)}"
        piece += f" -> {rd.target} [{rd.rhs}]"
        if rd.update:
            piece += " add { " + " ".join(f"{c}: {v}" for c, v in rd.update) + " }"
        if rd.label != "eps":
            piece += f" label {rd.label}"
        lines.append(piece + ";")
    lines.append("}")
    for query in doc.queries:
        if isinstance(query, ReachQuery):
            lines.append("query reach {")
            lines.append(
                f"  from {query.from_state} {query.from_nta} {_print_formula(query.from_formula)};"
            )
            lines.append(
                f"  to {query.to_state} {query.to_nta} {_print_formula(query.to_formula)};"
            )
            lines.append("}")
        elif isinstance(query, ControlReachQuery):
            lines.append("query control-reach {")
            lines.append(f"  from {query.from_state} {format_term(query.from_tree)};")
            lines.append(f"  to {query.to_state};")
            lines.append("}")
        elif isinstance(query, SimulateQuery):
            lines.append("query simulate {")
            lines.append(f"  from {query.from_state} {format_term(query.from_tree)};")
            lines.append(f'  steps "{query.steps_path}";')
            if query.lifespan is not None:
                lines.append(f"  lifespan {query.lifespan};")
            lines.append("}")
        elif isinstance(query, Encode2cmQuery):
            lines.append("query encode-2cm {")
            lines.append(
                "  rules { " + " ".join(f"{s} {op} {t};" for s, op, t in query.rules) + " }"
            )
            lines.append(f"  from {query.from_state};")
            lines.append(f"  to {query.to_state};")
            lines.append("}")
    return "\n".join(lines) + "\n"


def system_to_document(system: SgtrsSystem, nta_names: dict[int, str],
                       nta_defs: list[NtaDef]) -> SystemDef:
    """Rebuild a printable system definition from core objects."""
    rules = []
    for rule in system.rules:
        rules.append(
            RuleDef(
                source=str(rule.source),
                lhs=nta_names[id(rule.lhs)],
                guard=rule.guard,
                target=str(rule.target),
                rhs=nta_names[id(rule.rhs)],
                update=rule.update,
                label=str(rule.label),
            )
        )
    return SystemDef(
        counters=system.counters,
        reversals=system.reversal_bound,
        alphabet=tuple(system.alphabet.items()),
        states=tuple(str(s) for s in system.states),
        ntas=tuple(nta_defs),
        rules=tuple(rules),
    )
