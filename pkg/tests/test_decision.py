from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btcalc.decision import (
    DecisionStructure,
    DsCycleError,
    DsError,
    DsTooLarge,
    all_quotients_are_paths,
    compile_to_ds,
    cyclomatic,
    essential_complexity,
    execute_ds,
    find_modules,
    find_modules_bitmask,
    find_modules_slow,
    is_bt_equivalent,
    is_module,
    is_path,
    module_decomposition,
    module_source,
    tree_oracle,
)
from btcalc.state import Var, Variable, WorldModel
from btcalc.tree import Condition, Status, Tree, fall, seq, tick

from gen import bool_model, leaf_bounded_tree, random_ds


def ds(nodes, edges, source=None) -> DecisionStructure:
    return DecisionStructure.from_named(nodes, edges, source)


THREE_CYCLE = ds("abc", [("a", "S", "b"), ("b", "S", "c"), ("c", "S", "a")])


def _conditions(n: int) -> tuple[WorldModel, list[Condition]]:
    m = WorldModel([Variable.boolean(f"c{k}") for k in range(n)])
    return m, [Condition(Var(f"c{k}")) for k in range(n)]


def test_compile_sequence_of_two():
    m, (a, b) = _conditions(2)
    d = compile_to_ds(Tree(seq(a, b), m))
    assert d.named_edges() == [(1, "S", 2)]
    assert d.nodes[d.source] == 1


def test_compile_fallback_of_two():
    m, (a, b) = _conditions(2)
    d = compile_to_ds(Tree(fall(a, b), m))
    assert d.named_edges() == [(1, "F", 2)]


def test_compile_nested():
    m, (a, b, c) = _conditions(3)
    # fall(seq(a, b), c): a-F->c, a-S->b, b-F->c
    d = compile_to_ds(Tree(fall(seq(a, b), c), m))
    assert sorted(d.named_edges()) == [(2, "F", 4), (2, "S", 3), (3, "F", 4)]


def test_execute_ds_stops_without_arc():
    d = ds("ab", [("a", "S", "b")])
    assert execute_ds(d, {"a": "S", "b": "F"}.get) == ("b", "F")
    assert execute_ds(d, {"a": "F", "b": "F"}.get) == ("a", "F")
    assert execute_ds(d, {"a": None, "b": "S"}.get) == ("a", None)


def test_execute_ds_cycle_is_detected():
    with pytest.raises(DsCycleError):
        execute_ds(THREE_CYCLE, lambda _: "S")


def test_malformed_ds():
    with pytest.raises(DsError):
        DecisionStructure(())
    with pytest.raises(DsError):
        ds("ab", [("a", "S", "b"), ("a", "S", "a")])
    with pytest.raises(DsError, match="unreachable"):
        ds("ab", [])
    with pytest.raises(DsError):
        DecisionStructure(("a",), ((0, "S", 3),))


def test_cyclomatic_examples():
    assert cyclomatic(ds("ab", [("a", "S", "b")])) == 1
    assert cyclomatic(THREE_CYCLE) == 2
    assert cyclomatic(ds("ab", [("a", "S", "b"), ("a", "F", "b")])) == 2
    assert cyclomatic(ds("a", [])) == 1


def test_is_path():
    assert is_path(ds("abc", [("a", "S", "b"), ("b", "F", "c")]))
    assert not is_path(ds("ab", [("a", "S", "b"), ("a", "F", "b")]))
    assert not is_path(THREE_CYCLE)


def test_module_definition_examples():
    d = ds("abc", [("a", "S", "b"), ("a", "F", "c"), ("b", "F", "c")])
    assert is_module(d, {1})
    assert is_module(d, {0, 1})
    assert module_source(d, {0, 1}) == 0
    # a enters both b and c
    assert not is_module(d, {1, 2})
    assert not is_module(d, set())
    with pytest.raises(DsError):
        module_source(ds("abc", [("a", "S", "b"), ("a", "F", "c")]), {1, 2})


def test_cyclic_prime_structure():
    assert essential_complexity(THREE_CYCLE) == 2
    assert not is_bt_equivalent(THREE_CYCLE)
    assert not all_quotients_are_paths(THREE_CYCLE)


def test_bitmask_guard():
    with pytest.raises(DsTooLarge):
        find_modules_bitmask(random_ds(random.Random(0), 15))


def test_module_budget():
    d = random_ds(random.Random(3), 20, density=0.9)
    with pytest.raises(DsTooLarge):
        find_modules(d, budget=5)


def test_corpus_structure(mm_tree):
    d = compile_to_ds(mm_tree)
    assert len(d) == 23 and len(d.edges) == 38
    assert cyclomatic(d) == 17
    assert len(find_modules(d)) == 51
    assert essential_complexity(d) == 1
    assert all_quotients_are_paths(d)


def test_corpus_ds_agrees_with_tree_everywhere(mm_tree):
    d = compile_to_ds(mm_tree)
    for x in mm_tree.model.states():
        node, label = execute_ds(d, tree_oracle(mm_tree, x))
        status, leaf = tick(mm_tree, x)
        if status is Status.RUNNING:
            assert (node, label) == (leaf, None)
        else:
            assert label == ("S" if status is Status.SUCCESS else "F")


def test_decomposition_covers_all_nodes(mm_tree):
    d = compile_to_ds(mm_tree)
    dec = module_decomposition(d)
    assert dec.members == frozenset(range(len(d)))

    def leaves(node):
        return [node] if node.is_leaf else [x for c in node.children for x in leaves(c)]

    singles = sorted(min(x.members) for x in leaves(dec))
    assert singles == list(range(len(d)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_module_enumerations_agree(seed):
    rng = random.Random(seed)
    d = random_ds(rng, rng.randint(1, 8), rng.choice(["SF", "SFR"]), rng.random())
    fast = sorted(map(sorted, find_modules(d)))
    assert fast == sorted(map(sorted, find_modules_bitmask(d)))
    assert fast == sorted(map(sorted, find_modules_slow(d)))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_compiled_trees_are_bt_equivalent(seed):
    rng = random.Random(seed)
    m = bool_model(rng, rng.randint(1, 5), 3)
    t = leaf_bounded_tree(rng, m, 10)
    d = compile_to_ds(t)
    assert essential_complexity(d) == 1
    for x in m.states():
        node, label = execute_ds(d, tree_oracle(t, x))
        status, leaf = tick(t, x)
        if status is Status.RUNNING:
            assert node == leaf and label is None
        else:
            assert label == status.value
