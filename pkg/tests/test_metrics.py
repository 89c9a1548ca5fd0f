"""Evaluation metrics against hand-counted oracles."""

import numpy as np
import pytest

from narparse.eval_metrics import (EvalReport, diversity_report,
                                   exact_match_report)
from narparse.parse_repr import FrameSeq


def F(*tokens):
    return FrameSeq("span", tokens)


# five crafted top-k collections with hand-counted diversity numbers
CRAFTED_SETS = [
    # A: three identical 6-token parses
    [F("[in:a", "[sl:b", 0, 1, "]", "]")] * 3,
    # B: same bodies, three distinct intents
    [F("[in:a", "[sl:b", 0, 1, "]", "]"),
     F("[in:b", "[sl:b", 0, 1, "]", "]"),
     F("[in:c", "[sl:b", 0, 1, "]", "]")],
    # C: a single two-token parse
    [F("[in:a", "]")],
    # D: one intent, two lengths, overlapping n-grams
    [F("[in:a", "[sl:b", 0, 0, "]", "]"),
     F("[in:a", "[sl:b", 0, 0, "]", "[sl:c", 1, 2, "]", "]")],
    # E: duplicate among three short parses
    [F("[in:a", "]"), F("[in:b", "]"), F("[in:a", "]")],
]

# hand counts (unique n-grams / total tokens * 100, per the definitions)
DIVERSITY_ORACLE = {
    "mean_unique_intents": (1 + 3 + 1 + 1 + 2) / 5,
    "distinct1_sentence": (100 * 5 / 6 * 3 + 100 * 5 / 6 * 3 + 100.0
                           + 100 * 4 / 6 + 100 * 7 / 10 + 100.0 * 3) / 12,
    "distinct2_sentence": (100 * 5 / 6 * 3 + 100 * 5 / 6 * 3 + 50.0
                           + 100 * 5 / 6 + 100 * 9 / 10 + 50.0 * 3) / 12,
    "distinct1_corpus": (100 * 5 / 18 + 100 * 7 / 18 + 100.0
                         + 100 * 7 / 16 + 100 * 3 / 6) / 5,
    "distinct2_corpus": (100 * 5 / 18 + 100 * 7 / 18 + 50.0
                         + 100 * 9 / 16 + 100 * 2 / 6) / 5,
}


def test_diversity_matches_hand_count_oracle():
    got = diversity_report(CRAFTED_SETS)
    for key, want in DIVERSITY_ORACLE.items():
        assert got[key] == pytest.approx(want, abs=1e-9), key


def test_diversity_duplicates_do_not_inflate():
    base = diversity_report([[F("[in:a", "]"), F("[in:b", "]")]])
    dup = diversity_report([[F("[in:a", "]"), F("[in:b", "]"),
                             F("[in:b", "]")]])
    assert dup["mean_unique_intents"] == base["mean_unique_intents"] == 2.0
    assert dup["distinct1_corpus"] < base["distinct1_corpus"]


def test_diversity_empty_parse_warns_and_skips():
    with pytest.warns(UserWarning):
        got = diversity_report([[F("[in:a", "]"), FrameSeq("span", ())]])
    assert got["mean_unique_intents"] == 1.0


def test_diversity_empty_input():
    got = diversity_report([])
    assert got["mean_unique_intents"] == 0.0


# -- exact match -------------------------------------------------------------

def test_exact_match_hand_case():
    golds = [("[in:a ]", "in:a"), ("[in:b ]", "in:b"), ("[in:c ]", "in:c")]
    predictions = [
        [("[in:a ]", "in:a"), ("[in:x ]", "in:x")],   # hit at 1
        [("[in:x ]", "in:b"), ("[in:b ]", "in:b")],   # frame hit at 2, IM at 1
        [("[in:x ]", "in:x")],                        # miss
    ]
    em, im = exact_match_report(predictions, golds, ks=(1, 2, 3))
    assert em == {1: 1 / 3, 2: 2 / 3, 3: 2 / 3}
    assert im == {1: 2 / 3, 2: 2 / 3, 3: 2 / 3}


def test_exact_match_monotone_in_k():
    rng = np.random.default_rng(0)
    golds = [(f"[in:g{i} ]", f"in:g{i}") for i in range(50)]
    predictions = []
    for i in range(50):
        hyps = [(f"[in:h{rng.integers(8)} ]", f"in:h{rng.integers(8)}")
                for _ in range(3)]
        if rng.random() < 0.5:
            hyps.insert(int(rng.integers(3)), golds[i])
        predictions.append(hyps)
    em, im = exact_match_report(predictions, golds, ks=(1, 2, 3, 4))
    ks = sorted(em)
    assert all(em[a] <= em[b] for a, b in zip(ks, ks[1:]))
    assert all(im[a] <= im[b] for a, b in zip(ks, ks[1:]))
    assert all(em[k] <= im[k] for k in ks)   # frame match implies intent match


def test_exact_match_length_mismatch_rejected():
    with pytest.raises(ValueError):
        exact_match_report([[("x", "y")]], [])


def test_eval_report_serialization():
    report = EvalReport(top_em={1: 0.5}, top_im={1: 0.75}, n_examples=4)
    d = report.to_dict()
    assert d["top1_em"] == 0.5 and d["top1_im"] == 0.75
    table = report.to_table()
    assert "top1_em" in table and "0.5000" in table
