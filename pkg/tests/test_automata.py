import random

import pytest

from sgtrs.automata import (
    AlphabetMismatch,
    accepts,
    enumerate_accepted,
    intersect,
    is_empty,
    nta,
    singleton,
    size_ceiling,
    smallest_accepted,
    universal,
)
from sgtrs.trees import RankedAlphabet, leaf, node

from helpers import all_trees, naive_accepts, random_nta

SIGMA = RankedAlphabet({"f": 2, "g": 1, "a": 0, "b": 0})
SIGMA_A = RankedAlphabet({"a": 0})
SIGMA_AG = RankedAlphabet({"a": 0, "g": 1})


def test_singleton_accepts_only_its_tree():
    auto = singleton(leaf("a"), SIGMA)
    assert accepts(auto, leaf("a"))
    assert not accepts(auto, leaf("b"))
    assert not accepts(auto, node("f", leaf("a"), leaf("a")))
    pair = singleton(node("f", leaf("a"), leaf("b")), SIGMA)
    assert accepts(pair, node("f", leaf("a"), leaf("b")))
    assert not accepts(pair, node("f", leaf("b"), leaf("a")))
    assert len(pair.states) == 3  # one state per node


def test_accepts_unique_bottom_up_run():
    auto = nta(SIGMA, ["q", "qf"], ["qf"], [((), "a", "q"), (("q", "q"), "f", "qf")])
    assert accepts(auto, node("f", leaf("a"), leaf("a")))
    assert not accepts(auto, leaf("a"))
    assert not accepts(auto, node("f", node("f", leaf("a"), leaf("a")), leaf("a")))


def test_is_empty_cases():
    no_finals = nta(SIGMA, ["q"], [], [((), "a", "q")])
    assert is_empty(no_finals)
    single = singleton(leaf("a"), SIGMA)
    assert not is_empty(single)
    assert smallest_accepted(single) == leaf("a")
    # qf can only be produced from two qf children: never inhabited
    stuck = nta(
        SIGMA, ["q", "qf"], ["qf"], [((), "a", "q"), (("qf", "qf"), "f", "qf")]
    )
    assert is_empty(stuck)


def test_intersect_examples():
    uni = universal(SIGMA)
    single = singleton(leaf("a"), SIGMA)
    both = intersect(single, uni)
    assert [t for t in all_trees(SIGMA, 3) if accepts(both, t)] == [leaf("a")]
    empty = intersect(single, singleton(leaf("b"), SIGMA))
    assert is_empty(empty)
    assert len(both.states) == len(single.states) * len(uni.states)


def test_intersect_alphabet_mismatch():
    with pytest.raises(AlphabetMismatch):
        intersect(universal(SIGMA), universal(SIGMA_A))


def test_universal_examples():
    assert accepts(universal(SIGMA_A), leaf("a"))
    two = RankedAlphabet({"a": 0, "f": 2})
    assert accepts(universal(two), node("f", node("f", leaf("a"), leaf("a")), leaf("a")))
    assert not is_empty(universal(two))


def test_enumerate_accepted_examples():
    assert enumerate_accepted(universal(SIGMA_A), 1) == [leaf("a")]
    got = enumerate_accepted(universal(SIGMA_AG), 3)
    assert got == [leaf("a"), node("g", leaf("a")), node("g", node("g", leaf("a")))]
    empty = nta(SIGMA, ["q"], [], [])
    assert enumerate_accepted(empty, 4) == []


def test_enumerate_ordering_and_exactness():
    auto = universal(SIGMA)
    got = enumerate_accepted(auto, 4)
    assert len(got) == len(set(got))
    sizes = [t.size for t in got]
    assert sizes == sorted(sizes)
    assert set(got) == {t for t in all_trees(SIGMA, 4)}


def test_accepts_agrees_with_naive_runs():
    rng = random.Random(11)
    alphabet = RankedAlphabet({"f": 2, "a": 0, "b": 0})
    pool = all_trees(alphabet, 5)
    for _ in range(12):
        auto = random_nta(rng, alphabet)
        for tree in pool:
            assert accepts(auto, tree) == naive_accepts(auto, tree), (auto, tree)


def test_emptiness_agrees_with_enumeration():
    rng = random.Random(13)
    alphabet = RankedAlphabet({"f": 2, "a": 0})
    for _ in range(30):
        auto = random_nta(rng, alphabet, max_states=3)
        bound = len(auto.states) * 3  # states times (max rank + 1)
        assert is_empty(auto) == (enumerate_accepted(auto, bound) == [])


def test_intersect_membership_agreement():
    rng = random.Random(17)
    alphabet = RankedAlphabet({"g": 1, "a": 0, "b": 0})
    pool = all_trees(alphabet, 4)
    for _ in range(20):
        left, right = random_nta(rng, alphabet), random_nta(rng, alphabet)
        both = intersect(left, right)
        for tree in pool:
            assert accepts(both, tree) == (accepts(left, tree) and accepts(right, tree))


def test_smallest_witness_is_smallest():
    auto = nta(
        SIGMA,
        ["q", "qf"],
        ["qf"],
        [((), "a", "q"), (("q",), "g", "qf"), (("q", "q"), "f", "qf")],
    )
    witness = smallest_accepted(auto)
    assert witness is not None and witness.size == 2
    assert witness == node("g", leaf("a"))  # ties break on printed form


def test_size_ceiling():
    assert size_ceiling(singleton(node("g", leaf("a")), SIGMA)) == 2
    assert size_ceiling(universal(SIGMA)) is None
    assert size_ceiling(nta(SIGMA, ["q"], [], [])) == 0
    finite = nta(
        SIGMA,
        ["q0", "q1"],
        ["q1"],
        [((), "a", "q0"), (("q0",), "g", "q1")],
    )
    assert size_ceiling(finite) == 2
