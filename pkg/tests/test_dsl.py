from __future__ import annotations

import random
from importlib import resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btcalc.dsl import DocumentError, parse, serialize, tokenize
from btcalc.state import Var
from btcalc.synthesis import count_make_sure
from btcalc.tree import Condition, Fallback, Leaf

from gen import random_document

HEADER = "model m { safe: bool; mode: enum { idle, busy }; }\naction move_to_safe { effect: safe := true; post: safe; }\n"
CORPUS = ["mobile_manipulator", "fig5a", "fig5b", "cbf_scenarios"]


def _ok(text: str | bytes):
    result = parse(text)
    assert result.ok, [d.render() for d in result.diagnostics]
    return result.document


def _errors(text: str | bytes) -> list[str]:
    result = parse(text)
    assert not result.ok
    assert result.diagnostics
    return [d.render() for d in result.diagnostics]


def test_minimal_tree():
    doc = _ok(HEADER + "tree t = fall(cond(safe), act(move_to_safe))")
    t = doc.tree("t")
    assert len(t) == 3
    assert t.nodes[1] == Condition(Var("safe"))
    assert isinstance(t.root, Fallback) and isinstance(t.nodes[2], Leaf)


def test_default_leaf_regions():
    t = _ok(HEADER + "tree t = act(move_to_safe)").tree("t")
    assert t.success_pred(0) == Var("safe")
    assert t.failure_pred(0).to_text() == "false"


def test_arity_diagnostic_has_span():
    (msg,) = _errors(HEADER + "tree t = seq(cond(safe))")
    assert msg.startswith("<input>:3:")
    assert "at least 2 children" in msg


def test_unknown_identifiers():
    assert any("nope" in m for m in _errors(HEADER + "tree t = cond(nope)"))
    assert any("fly" in m for m in _errors(HEADER + "tree t = act(fly)"))
    assert any("lazy" in m for m in _errors(HEADER + "tree t = cond(mode == lazy)"))


def test_lexical_error_span():
    (msg,) = _errors(HEADER + "tree t = cond(safe) $")[:1]
    assert msg.startswith("<input>:3:21:")


def test_invalid_utf8():
    assert "UTF-8" in _errors(b"model m { a: bool; }\xff")[0]


def test_deep_nesting_is_a_diagnostic():
    depth = 5000
    text = HEADER + "tree t = " + "seq(" * depth + "cond(safe)" + ", cond(safe))" * depth
    assert "nesting" in _errors(text)[0]


def test_empty_document():
    doc = _ok("")
    with pytest.raises(DocumentError):
        doc.world_model


def test_lookup_errors():
    doc = _ok(HEADER)
    with pytest.raises(DocumentError, match="no tree named 'x'"):
        doc.tree("x")


def test_comments_and_whitespace():
    doc = _ok("# leading comment\n" + HEADER + "tree   t=\n  cond( safe )   # trailing\n")
    assert len(doc.tree("t")) == 1


def test_tokens_carry_spans():
    toks = tokenize("tree t =\n  cond(a)")
    cond = next(t for t in toks if t.text == "cond")
    assert (cond.span.line, cond.span.column) == (2, 3)


def test_corpus_structure(mm_doc, mm_tree):
    assert count_make_sure(mm_tree) == 8
    assert len(mm_tree) == 40
    assert len(mm_doc.world_model.variables) == 9


@pytest.mark.parametrize("name", CORPUS)
def test_corpus_round_trip(name):
    text = resources.files("btcalc.data").joinpath(f"{name}.bt").read_text()
    doc = _ok(text)
    printed = serialize(doc)
    again = _ok(printed)
    assert again == doc
    assert serialize(again) == printed


def test_names_survive_round_trip(mm_doc):
    again = _ok(serialize(mm_doc))
    assert again.tree("mobile_manipulator").display_name(19) == "Move to object"


def test_escapes_in_names():
    doc = _ok(HEADER + 'tree t = name "a \\"quoted\\" \\\\ name\\n" cond(safe)')
    assert doc.tree("t").root.name == 'a "quoted" \\ name\n'
    assert _ok(serialize(doc)) == doc


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_generated_documents_round_trip(seed):
    doc = random_document(random.Random(seed))
    printed = serialize(doc)
    again = _ok(printed)
    assert again == doc
    assert serialize(again) == printed


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=200))
def test_arbitrary_bytes_never_crash(data):
    result = parse(data)
    if not result.ok:
        assert result.diagnostics
        for d in result.diagnostics:
            assert d.span.line >= 1 and d.span.column >= 1


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_mutated_corpus_never_crashes(seed):
    rng = random.Random(seed)
    text = bytearray(resources.files("btcalc.data").joinpath("fig5b.bt").read_bytes())
    for _ in range(rng.randint(1, 8)):
        pos = rng.randrange(len(text))
        op = rng.random()
        if op < 0.4:
            del text[pos : pos + rng.randint(1, 5)]
        elif op < 0.8:
            text[pos:pos] = bytes(rng.choice(b"(){},;:=!&|#\"x \n") for _ in range(rng.randint(1, 3)))
        else:
            text[pos] = rng.randrange(256)
    result = parse(bytes(text))
    assert result.ok or result.diagnostics
