"""Tree representation, both linear forms, validation, round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narparse.parse_repr import (FrameSeq, IntentNode, ParseError, SlotNode,
                                 frame_from_string, frame_from_tokens,
                                 frame_length, frame_to_tree, index_to_span,
                                 parse_string_to_tree, tokenize, tree_to_frame,
                                 validate_frame)
from narparse.synth_data import default_grammar, generate_dataset

BOSTON_QUERY = "What is happening in Boston on New Year's Eve"
BOSTON_PARSE = ("[in:get_event [sl:location Boston ] "
                "[sl:date_time on New Year's Eve ] ]")
BOSTON_INDEX = "[in:get_event [sl:location 4 ] [sl:date_time 5 6 7 8 ] ]"
BOSTON_SPAN = "[in:get_event [sl:location 4 4 ] [sl:date_time 5 8 ] ]"


# -- tokenizer ---------------------------------------------------------------

def test_tokenize_lowercases_and_splits():
    assert tokenize("Call Mom now") == ["call", "mom", "now"]


def test_tokenize_detaches_terminal_punctuation():
    assert tokenize("will it rain tomorrow?") == \
        ["will", "it", "rain", "tomorrow", "?"]
    assert tokenize("do it now!")[-2:] == ["now", "!"]
    # interior punctuation stays attached
    assert tokenize("what's new year's eve") == ["what's", "new", "year's",
                                                "eve"]
    # a lone punctuation token is left alone
    assert tokenize("ok ?") == ["ok", "?"]


# -- worked example ----------------------------------------------------------

def test_worked_example_index_form():
    query = tokenize(BOSTON_QUERY)
    tree = parse_string_to_tree(BOSTON_PARSE, query)
    assert tree_to_frame(tree, "index").render() == BOSTON_INDEX


def test_worked_example_span_form():
    query = tokenize(BOSTON_QUERY)
    tree = parse_string_to_tree(BOSTON_PARSE, query)
    assert tree_to_frame(tree, "span").render() == BOSTON_SPAN


def test_worked_example_lengths():
    query = tokenize(BOSTON_QUERY)
    tree = parse_string_to_tree(BOSTON_PARSE, query)
    assert frame_length(tree_to_frame(tree, "index")) == 11
    assert frame_length(tree_to_frame(tree, "span")) == 10


# -- node invariants ---------------------------------------------------------

def test_slot_must_hold_span_xor_child():
    with pytest.raises(ParseError):
        SlotNode("sl:x")
    with pytest.raises(ParseError):
        SlotNode("sl:x", span=(0, 1), child=IntentNode("in:y"))


# -- surface parsing ---------------------------------------------------------

def test_parse_string_alignment_is_greedy_left_to_right():
    query = tokenize("play go by go")
    tree = parse_string_to_tree("[in:play_music [sl:artist go ] "
                                "[sl:content go ] ]", query)
    assert tree.slots[0].span == (1, 1)
    assert tree.slots[1].span == (3, 3)


def test_parse_string_errors():
    q = tokenize("call mom")
    with pytest.raises(ParseError):
        parse_string_to_tree("[sl:contact mom ]", q)        # no intent root
    with pytest.raises(ParseError):
        parse_string_to_tree("[in:call [sl:contact dad ] ]", q)  # unalignable
    with pytest.raises(ParseError):
        parse_string_to_tree("[in:call [sl:contact mom ]", q)    # unbalanced
    with pytest.raises(ParseError):
        parse_string_to_tree("[in:call [sl:contact mom ] ] ]", q)  # trailing
    with pytest.raises(ParseError):
        parse_string_to_tree("[in:call [sl:a [sl:b mom ] ] ]", q)  # slot/slot
    with pytest.raises(ParseError):
        parse_string_to_tree("[in:call [sl:contact ] ]", q)      # empty slot


def test_parse_error_reports_token_index():
    with pytest.raises(ParseError) as err:
        parse_string_to_tree("[in:call oops ]", tokenize("call mom"))
    assert err.value.token_index is not None


# -- frame round-trips -------------------------------------------------------

def test_nested_intent_roundtrip():
    inner = IntentNode("in:get_time", (SlotNode("sl:location", span=(5, 6)),))
    tree = IntentNode("in:set_reminder",
                      (SlotNode("sl:content", span=(2, 3)),
                       SlotNode("sl:date_time", child=inner)))
    for form in ("index", "span"):
        frame = tree_to_frame(tree, form)
        assert validate_frame(frame) == []
        assert frame_to_tree(frame) == tree


def test_generated_corpus_roundtrips_both_forms(small_dataset):
    for query, tree in small_dataset:
        for form in ("index", "span"):
            frame = tree_to_frame(tree, form)
            assert validate_frame(frame, source_len=len(query)) == []
            assert frame_to_tree(frame) == tree
        assert frame_length(tree_to_frame(tree, "span")) % 2 == 0


def test_index_to_span_agrees_with_direct_conversion(small_dataset):
    for _, tree in small_dataset[:50]:
        idx = tree_to_frame(tree, "index")
        assert index_to_span(idx) == tree_to_frame(tree, "span")


def test_frame_from_string_inverts_render(small_dataset):
    for _, tree in small_dataset[:50]:
        frame = tree_to_frame(tree, "span")
        assert frame_from_string(frame.render(), "span") == frame


# -- hypothesis: random trees ------------------------------------------------

@st.composite
def trees(draw, depth=0):
    n_slots = draw(st.integers(1, 3))
    slots = []
    cursor = draw(st.integers(0, 3))
    for i in range(n_slots):
        nest = depth < 2 and draw(st.booleans())
        if nest:
            slots.append(SlotNode(f"sl:s{i}", child=draw(trees(depth + 1))))
        else:
            start = cursor
            end = start + draw(st.integers(0, 2))
            cursor = end + 1 + draw(st.integers(0, 2))
            slots.append(SlotNode(f"sl:s{i}", span=(start, end)))
    return IntentNode(f"in:i{draw(st.integers(0, 4))}", tuple(slots))


@given(trees(), st.sampled_from(["index", "span"]))
@settings(max_examples=200, deadline=None)
def test_random_tree_roundtrip(tree, form):
    frame = tree_to_frame(tree, form)
    assert validate_frame(frame) == []
    assert frame_to_tree(frame) == tree
    if form == "span":
        assert frame_length(frame) % 2 == 0


# -- validation --------------------------------------------------------------

def _viol(tokens, form="span", source_len=None):
    return validate_frame(frame_from_tokens(tokens, form), source_len)


def test_validate_clean_frame():
    assert _viol(["[in:a", "[sl:b", 0, 1, "]", "]"]) == []


def test_validate_odd_span_parity():
    bad = _viol(["[in:a", "[sl:b", 0, 1, 2, "]", "]"])
    assert any("2 integers" in v or "parity" in v for v in bad)


def test_validate_span_order():
    assert any("start" in v for v in _viol(["[in:a", "[sl:b", 3, 1, "]", "]"]))


def test_validate_index_contiguity():
    bad = _viol(["[in:a", "[sl:b", 0, 2, "]", "]"], form="index")
    assert any("contiguous" in v for v in bad)
    assert _viol(["[in:a", "[sl:b", 0, 1, 2, "]", "]"], form="index") == []


def test_validate_unbalanced():
    assert any("unclosed" in v for v in _viol(["[in:a", "[sl:b", 0, 1, "]"]))
    assert any("closing" in v for v in _viol(["[in:a", "]", "]"]))


def test_validate_structure_rules():
    assert any("outside a slot" in v for v in _viol(["[in:a", 0, 1, "]"]))
    assert any("outside an intent" in v for v in _viol(["[sl:b", 0, 1, "]"]))
    assert any("nested directly" in v
               for v in _viol(["[in:a", "[in:b", "]", "]"]))
    assert any("intent opener" in v for v in _viol([]))


def test_validate_empty_slot_and_sibling_order():
    assert any("empty slot" in v for v in _viol(["[in:a", "[sl:b", "]", "]"]))
    overlap = _viol(["[in:a", "[sl:b", 2, 3, "]", "[sl:c", 1, 4, "]", "]"])
    assert any("overlap" in v for v in overlap)


def test_validate_source_range():
    toks = ["[in:a", "[sl:b", 4, 5, "]", "]"]
    assert _viol(toks, source_len=6) == []
    assert any("source range" in v for v in _viol(toks, source_len=5))


def test_frame_to_tree_rejects_invalid():
    with pytest.raises(ParseError):
        frame_to_tree(frame_from_tokens(["[in:a", "[sl:b", "]"], "span"))


def test_frameseq_rejects_unknown_form():
    with pytest.raises(ValueError):
        FrameSeq("infix", ("[in:a", "]"))
