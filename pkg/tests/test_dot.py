from __future__ import annotations

import re
from pathlib import Path

import pytest

from btcalc.decision import compile_to_ds, module_decomposition
from btcalc.dot import decomposition_to_dot, ds_to_dot, export_dot, tree_to_dot
from btcalc.state import Var, Variable, WorldModel
from btcalc.tree import Condition, Tree

GOLDEN = Path(__file__).parent / "golden"


def _visible(dot: str) -> list[int]:
    return [int(m) for m in re.findall(r"^  n(\d+) \[", dot, re.M)]


def test_single_condition_is_one_oval():
    m = WorldModel([Variable.boolean("a")])
    dot = tree_to_dot(Tree(Condition(Var("a")), m, "one"))
    assert _visible(dot) == [0]
    assert "shape=ellipse" in dot and "->" not in dot


def test_corpus_tree_matches_golden(mm_tree):
    assert tree_to_dot(mm_tree) == (GOLDEN / "mobile_manipulator.dot").read_text()


def test_corpus_ds_matches_golden(fig5b_doc):
    ds = compile_to_ds(fig5b_doc.tree("fig5b"))
    t = fig5b_doc.tree("fig5b")
    assert ds_to_dot(ds, "fig5b", lambda n: t.display_name(int(n))) == (GOLDEN / "fig5b_ds.dot").read_text()


def test_symbols_and_double_stroke(mm_tree):
    dot = tree_to_dot(mm_tree)
    assert 'n0 [label="→ 0"' in dot
    assert 'n1 [label="? 1' in dot
    expanded = [i for i, n in enumerate(mm_tree.nodes) if n.expanded]
    marked = [int(i) for i in re.findall(r"^  n(\d+) \[.*peripheries=2", dot, re.M)]
    assert marked == expanded


def test_collapsed_subtrees_hide_descendants(mm_tree):
    dot = tree_to_dot(mm_tree, collapse=[1, 6, 9, 37])
    assert _visible(dot) == [0, 1, 6, 9, 37]
    assert dot.count("style=dashed") == 4
    assert re.findall(r"n(\d+) -> n(\d+)", dot) == [("0", "1"), ("0", "6"), ("0", "9"), ("0", "37")]


def test_partial_collapse_keeps_preorder(mm_tree):
    dot = tree_to_dot(mm_tree, collapse=[3, 6, 9, 37])
    assert _visible(dot) == [0, 1, 2, 3, 6, 9, 37]


def test_output_is_deterministic(mm_tree):
    ds = compile_to_ds(mm_tree)
    a = decomposition_to_dot(module_decomposition(ds))
    b = decomposition_to_dot(module_decomposition(ds))
    assert a == b and a.count("subgraph cluster_") >= 1


def test_export_dispatch(mm_tree):
    ds = compile_to_ds(mm_tree)
    assert export_dot(mm_tree) == tree_to_dot(mm_tree)
    assert export_dot(ds) == ds_to_dot(ds)
    with pytest.raises(TypeError):
        export_dot(42)


def test_quotes_are_escaped():
    m = WorldModel([Variable.boolean("a")])
    dot = tree_to_dot(Tree(Condition(Var("a"), None, 'say "hi"\\'), m))
    assert 'label="say \\"hi\\"\\\\ (0)"' in dot
