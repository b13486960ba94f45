"""Ranked ordered trees, tree domains, and context substitution.

Positions are tuples of 1-based child indices; the root is the empty
tuple.  Trees are immutable values and share structure freely, so
rewriting returns a new tree without copying untouched subtrees.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Mapping

Position = tuple[int, ...]


class TreeError(Exception):
    """Base class for tree construction and validation errors."""


class UnknownSymbol(TreeError):
    def __init__(self, position: Position, symbol: str):
        super().__init__(f"unknown symbol {symbol!r} at position {position}")
        self.position = position
        self.symbol = symbol


class ArityMismatch(TreeError):
    def __init__(self, position: Position, symbol: str, expected: int, actual: int):
        super().__init__(
            f"symbol {symbol!r} at {position} has {actual} children, rank is {expected}"
        )
        self.position = position
        self.symbol = symbol
        self.expected = expected
        self.actual = actual


class DomainNotClosed(TreeError):
    def __init__(self, position: Position):
        super().__init__(f"tree domain is not closed at position {position}")
        self.position = position


class PositionOutOfDomain(TreeError):
    def __init__(self, position: Position):
        super().__init__(f"position {position} is not in the tree domain")
        self.position = position


class FillerCountMismatch(TreeError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"context has {expected} holes, got {actual} fillers")
        self.expected = expected
        self.actual = actual


class RankedAlphabet:
    """A finite set of symbols with a rank (arity) for each."""

    def __init__(self, ranks: Mapping[str, int]):
        for symbol, rank in ranks.items():
            if rank < 0:
                raise ValueError(f"rank of {symbol!r} must be non-negative, got {rank}")
        self._ranks = dict(ranks)

    def rank(self, symbol: str) -> int:
        return self._ranks[symbol]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._ranks

    @property
    def symbols(self) -> tuple[str, ...]:
        return tuple(sorted(self._ranks))

    def items(self) -> Iterator[tuple[str, int]]:
        return iter(sorted(self._ranks.items()))

    def with_symbols(self, extra: Mapping[str, int]) -> "RankedAlphabet":
        merged = dict(self._ranks)
        for symbol, rank in extra.items():
            if symbol in merged and merged[symbol] != rank:
                raise ValueError(f"conflicting rank for {symbol!r}")
            merged[symbol] = rank
        return RankedAlphabet(merged)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RankedAlphabet) and self._ranks == other._ranks

    def __hash__(self) -> int:
        return hash(frozenset(self._ranks.items()))

    def __repr__(self) -> str:
        inner = " ".join(f"{s}:{r}" for s, r in sorted(self._ranks.items()))
        return f"RankedAlphabet({{{inner}}})"


@dataclass(frozen=True)
class Tree:
    """An ordered tree; the node count of each symbol must match its rank."""

    symbol: str
    children: tuple["Tree", ...] = ()

    @cached_property
    def size(self) -> int:
        return 1 + sum(child.size for child in self.children)

    @cached_property
    def domain(self) -> frozenset[Position]:
        out = {()}
        for i, child in enumerate(self.children, start=1):
            out.update((i,) + pos for pos in child.domain)
        return frozenset(out)

    @cached_property
    def labels(self) -> dict[Position, str]:
        out: dict[Position, str] = {(): self.symbol}
        for i, child in enumerate(self.children, start=1):
            for pos, symbol in child.labels.items():
                out[(i,) + pos] = symbol
        return out

    def positions(self) -> list[Position]:
        return sorted(self.domain)

    def subtree_at(self, position: Position) -> "Tree":
        here = self
        for step in position:
            if step < 1 or step > len(here.children):
                raise PositionOutOfDomain(position)
            here = here.children[step - 1]
        return here

    def label_at(self, position: Position) -> str:
        return self.subtree_at(position).symbol

    def __str__(self) -> str:
        return format_term(self)


def node(symbol: str, *children: Tree) -> Tree:
    return Tree(symbol, tuple(children))


def leaf(symbol: str) -> Tree:
    return Tree(symbol, ())


def tree_from_labels(labels: Mapping[Position, str]) -> Tree:
    """Build a tree from an explicit position-to-symbol map.

    Raises DomainNotClosed if the domain is not prefix-closed and
    younger-sibling-closed, i.e. if some labelled position lacks its
    parent or an elder sibling.
    """
    if () not in labels:
        raise DomainNotClosed(())
    domain = set(labels)
    for position in sorted(domain, key=len, reverse=True):
        if position:
            parent, index = position[:-1], position[-1]
            if parent not in domain:
                raise DomainNotClosed(position)
            for j in range(1, index):
                if parent + (j,) not in domain:
                    raise DomainNotClosed(parent + (j,))

    def build(position: Position) -> Tree:
        children = []
        i = 1
        while position + (i,) in domain:
            children.append(build(position + (i,)))
            i += 1
        return Tree(labels[position], tuple(children))

    return build(())


def validate(tree: Tree, alphabet: RankedAlphabet) -> None:
    """Check that every node's symbol is known and has rank many children."""
    stack: list[tuple[Tree, Position]] = [(tree, ())]
    while stack:
        here, position = stack.pop()
        if here.symbol not in alphabet:
            raise UnknownSymbol(position, here.symbol)
        expected = alphabet.rank(here.symbol)
        if len(here.children) != expected:
            raise ArityMismatch(position, here.symbol, expected, len(here.children))
        for i, child in enumerate(here.children, start=1):
            stack.append((child, position + (i,)))


def validate_labels(labels: Mapping[Position, str], alphabet: RankedAlphabet) -> Tree:
    """Validate a raw position map against an alphabet; returns the tree."""
    tree = tree_from_labels(labels)
    validate(tree, alphabet)
    return tree


def is_valid(tree: Tree, alphabet: RankedAlphabet) -> bool:
    try:
        validate(tree, alphabet)
    except TreeError:
        return False
    return True


def hole_symbol(index: int) -> str:
    """Label of the index-th context variable (1-based).

    The '?' prefix cannot appear in term syntax, so holes never collide
    with alphabet symbols.
    """
    return f"?{index}"


@dataclass(frozen=True)
class Context:
    """A tree with distinguished rank-0 hole leaves, listed in order."""

    tree: Tree
    holes: tuple[Position, ...]

    @property
    def hole_count(self) -> int:
        return len(self.holes)


def make_context(tree: Tree, positions: list[Position] | tuple[Position, ...]) -> Context:
    """Carve holes out of a tree at the given (disjoint) positions."""
    ordered = tuple(positions)
    carved = tree
    for i, position in enumerate(ordered, start=1):
        carved = rewrite_at(carved, position, leaf(hole_symbol(i)))
    return Context(carved, ordered)


def substitute(context: Context, fillers: list[Tree] | tuple[Tree, ...]) -> Tree:
    """Fill each hole of the context, in order, with the given trees."""
    if len(fillers) != context.hole_count:
        raise FillerCountMismatch(context.hole_count, len(fillers))
    by_position = dict(zip(context.holes, fillers))

    def fill(here: Tree, position: Position) -> Tree:
        if position in by_position:
            return by_position[position]
        if not here.children:
            return here
        children = tuple(
            fill(child, position + (i,)) for i, child in enumerate(here.children, start=1)
        )
        return Tree(here.symbol, children)

    return fill(context.tree, ())


def rewrite_at(tree: Tree, position: Position, replacement: Tree) -> Tree:
    """Replace the subtree at the given position, keeping the rest."""
    if not position:
        return replacement
    step = position[0]
    if step < 1 or step > len(tree.children):
        raise PositionOutOfDomain(position)
    children = list(tree.children)
    children[step - 1] = rewrite_at(children[step - 1], position[1:], replacement)
    return Tree(tree.symbol, tuple(children))


_TOKEN = re.compile(r"\s*([A-Za-z0-9_*][A-Za-z0-9_*.\-]*|[(),])")


def parse_term(text: str) -> Tree:
    """Parse a term such as ``f(a, g(b))``; leaf symbols are printed bare."""
    tokens: list[str] = []
    index = 0
    while index < len(text):
        match = _TOKEN.match(text, index)
        if match is None:
            if text[index:].strip():
                raise TreeError(f"bad character in term at offset {index}: {text[index:]!r}")
            break
        tokens.append(match.group(1))
        index = match.end()
    pos = 0

    def expect(token: str) -> None:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != token:
            raise TreeError(f"expected {token!r} in term {text!r}")
        pos += 1

    def term() -> Tree:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] in "(),":
            raise TreeError(f"expected a symbol in term {text!r}")
        symbol = tokens[pos]
        pos += 1
        children: list[Tree] = []
        if pos < len(tokens) and tokens[pos] == "(":
            pos += 1
            if tokens[pos] != ")":
                children.append(term())
                while pos < len(tokens) and tokens[pos] == ",":
                    pos += 1
                    children.append(term())
            expect(")")
        return Tree(symbol, tuple(children))

    result = term()
    if pos != len(tokens):
        raise TreeError(f"trailing input in term {text!r}")
    return result


def format_term(tree: Tree) -> str:
    if not tree.children:
        return tree.symbol
    return f"{tree.symbol}({', '.join(format_term(c) for c in tree.children)})"
