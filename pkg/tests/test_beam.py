"""Hypothesis scoring, top-k selection, NAR beams, AR beam search."""

import itertools
import math
from types import SimpleNamespace

import numpy as np
import pytest

import narparse.autodiff as ad
from narparse.beam import (Hypothesis, ScoreError, ar_beam, greedy_parse,
                           hypothesis_span_render, length_penalty,
                           nar_baseline_beam, nar_proposed_beam,
                           oracle_nar_beam, score_hypothesis, select_topk,
                           topk_parse)
from narparse.parse_repr import FrameSeq, frame_from_tokens


def _hyp(**kw):
    base = dict(frame=FrameSeq("span", ("[in:a", "]")), intent="in:a", n=2,
                log_p_intent=-0.1, log_p_length=-0.2, token_logps=[-0.3, -0.4])
    base.update(kw)
    return Hypothesis(**base)


# -- length penalty and scoring ---------------------------------------------

def test_length_penalty_values():
    assert length_penalty(7, 1.0) == pytest.approx(2.0)
    assert length_penalty(7, 3.0) == pytest.approx(8.0)
    assert length_penalty(1, 0.6) == pytest.approx(1.0)
    assert length_penalty(5, 0.0) == 1.0
    with pytest.raises(ValueError):
        length_penalty(0, 1.0)


def test_score_methods():
    h = _hyp()
    s1 = score_hypothesis(h, "s1")
    s2 = score_hypothesis(h, "s2")
    s3 = score_hypothesis(h, "s3", alpha=2.0)
    assert s1 == pytest.approx(-0.3)
    assert s2 == pytest.approx(-1.0)
    assert s3 == pytest.approx(-1.0 / ((7 / 6) ** 2))


def test_score_alpha_zero_s3_equals_s2():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        h = _hyp(n=int(rng.integers(2, 40)) * 2,
                 log_p_intent=float(-rng.random()),
                 log_p_length=float(-rng.random()),
                 token_logps=list(-rng.random(5)))
        assert score_hypothesis(h, "s3", alpha=0.0) == \
            score_hypothesis(h, "s2")


def test_score_certain_tokens_s2_equals_s1():
    h = _hyp(token_logps=[0.0, 0.0, 0.0])
    assert abs(score_hypothesis(h, "s2") - score_hypothesis(h, "s1")) < 1e-9


def test_score_penalty_length_override():
    h = _hyp(n=11)
    assert score_hypothesis(h, "s3", alpha=1.0, penalty_length=7) == \
        pytest.approx(score_hypothesis(h, "s2") / 2.0)


def test_score_errors():
    with pytest.raises(ScoreError):
        score_hypothesis(_hyp(), "s4")
    with pytest.raises(ScoreError):
        score_hypothesis(_hyp(log_p_intent=None), "s1")
    with pytest.raises(ScoreError):
        score_hypothesis(_hyp(token_logps=None), "s2")


# -- top-k selection ---------------------------------------------------------

def test_select_topk_orders_and_sets_scores():
    hyps = [_hyp(token_logps=[-2.0]), _hyp(token_logps=[-0.5]),
            _hyp(token_logps=[-1.0])]
    top = select_topk(hyps, 2, method="s2")
    assert [h.token_logps[0] for h in top] == [-0.5, -1.0]
    assert all(h.score is not None for h in top)


def test_select_topk_tie_breaking():
    # equal scores: shorter frame first, then intent lexicographic
    a = _hyp(intent="in:b", n=4, token_logps=[-0.7])
    b = _hyp(intent="in:a", n=2, token_logps=[-0.7])
    c = _hyp(intent="in:a", n=4, token_logps=[-0.7])
    top = select_topk([a, b, c], 3, method="s2")
    assert [(h.n, h.intent) for h in top] == \
        [(2, "in:a"), (4, "in:a"), (4, "in:b")]


def test_select_topk_rejects_overlarge_k():
    with pytest.raises(ValueError):
        select_topk([_hyp()], 2)


# -- NAR beams on a tiny random model ---------------------------------------

def test_baseline_beam_distinct_lengths(tiny_baseline):
    with ad.no_grad():
        enc = tiny_baseline.encode([["call", "mom", "now"]])
    before = tiny_baseline.decoder.calls
    hyps = nar_baseline_beam(tiny_baseline, enc, k2=3)
    assert tiny_baseline.decoder.calls == before + 1     # one parallel pass
    assert len({h.n for h in hyps}) == 3
    for h in hyps:
        assert h.log_p_intent == 0.0
        assert h.log_p_length <= 0.0
        assert len(h.token_logps) == h.n
        assert h.frame.form == "span"


def test_proposed_beam_distinct_intents(tiny_proposed):
    with ad.no_grad():
        enc = tiny_proposed.encode([["call", "mom", "now"]])
    before = tiny_proposed.decoder.calls
    hyps = nar_proposed_beam(tiny_proposed, enc, k1=3, k2=1)
    assert tiny_proposed.decoder.calls == before + 1
    assert len(hyps) == 3
    assert len({h.intent for h in hyps}) == 3
    for h in hyps:
        assert h.frame.tokens[0] == "[" + h.intent
        assert h.log_p_intent < 0.0 and h.log_p_length < 0.0
        assert len(h.token_logps) == h.n - 1    # intent position is forced


def test_proposed_beam_k1_k2_grid(tiny_proposed):
    with ad.no_grad():
        enc = tiny_proposed.encode([["call", "mom", "now"]])
    hyps = nar_proposed_beam(tiny_proposed, enc, k1=2, k2=3)
    assert len(hyps) == 6
    seen = {(h.intent, h.n) for h in hyps}
    assert len(seen) == 6


def test_beam_kind_and_size_validation(tiny_proposed, tiny_baseline):
    with ad.no_grad():
        encp = tiny_proposed.encode([["call", "mom"]])
        encb = tiny_baseline.encode([["call", "mom"]])
    with pytest.raises(ValueError):
        nar_baseline_beam(tiny_proposed, encp, 1)
    with pytest.raises(ValueError):
        nar_proposed_beam(tiny_baseline, encb, 1)
    with pytest.raises(ValueError):
        nar_proposed_beam(tiny_proposed, encp,
                          k1=tiny_proposed.n_intents + 1)
    with pytest.raises(ValueError):
        nar_baseline_beam(tiny_baseline, encb,
                          k2=tiny_baseline.n_lengths + 1)


def test_oracle_beam_mode_mismatches(tiny_proposed, tiny_baseline):
    with ad.no_grad():
        encp = tiny_proposed.encode([["call", "mom"]])
        encb = tiny_baseline.encode([["call", "mom"]])
    with pytest.raises(ValueError):
        oracle_nar_beam(tiny_proposed, encp, gold_length=6)
    with pytest.raises(ValueError):
        oracle_nar_beam(tiny_baseline, encb,
                        gold_intent=tiny_baseline.vocab.intents[0])
    gold = tiny_proposed.vocab.intents[0]
    h = oracle_nar_beam(tiny_proposed, encp, gold_intent=gold)
    assert h.intent == gold
    h = oracle_nar_beam(tiny_baseline, encb,
                        gold_length=tiny_baseline.vocab.length_classes[2])
    assert h.n == tiny_baseline.vocab.length_classes[2]


def test_greedy_parse_all_kinds(tiny_proposed, tiny_baseline, tiny_ar):
    query = ["call", "mom"]
    for model in (tiny_proposed, tiny_baseline, tiny_ar):
        h = greedy_parse(model, query)
        assert isinstance(h, Hypothesis)
        assert isinstance(hypothesis_span_render(model, h), str)


def test_topk_parse_respects_k(tiny_proposed):
    hyps = topk_parse(tiny_proposed, ["call", "mom"], k=3, k1=5, k2=1)
    assert len(hyps) == 3
    scores = [h.score for h in hyps]
    assert scores == sorted(scores, reverse=True)


def test_hypothesis_span_render_converts_index_form():
    h = _hyp(frame=frame_from_tokens(["[in:a", "[sl:b", 0, 1, 2, "]", "]"],
                                     "index"))
    assert hypothesis_span_render(None, h) == "[in:a [sl:b 0 2 ] ]"
    bad = _hyp(frame=frame_from_tokens(["[in:a", "[sl:b", "]"], "index"))
    assert hypothesis_span_render(None, bad) == "[in:a [sl:b ]"


# -- AR beam vs exhaustive enumeration ---------------------------------------

class _ToyAR:
    """Hand-specified causal distribution over 2 symbols + END."""

    kind = "ar"
    form = "span"
    end_id = 2

    def __init__(self):
        self.config = SimpleNamespace(max_frame_len=5)
        # log-probabilities by prefix length
        self.table = [np.log([0.6, 0.3, 0.1]),
                      np.log([0.3, 0.2, 0.5]),
                      np.log([0.15, 0.05, 0.8]),
                      np.log([0.05, 0.05, 0.9])]

    def ar_step(self, enc, prefix):
        return self.table[len(prefix)].astype(np.float32)

    def ids_to_frame_tokens(self, ids):
        return [f"[in:t{i}" for i in ids]


def _brute_force_topk(model, k, alpha, max_len):
    results = []
    for n in range(1, max_len + 1):
        for seq in itertools.product(range(model.end_id), repeat=n - 1):
            # sequence of n-1 symbols followed by END (n total emissions)
            cum = 0.0
            for j, tok in enumerate(seq):
                cum += float(model.table[j][tok])
            cum += float(model.table[len(seq)][model.end_id])
            frame_n = max(len(seq), 1)
            results.append((seq, cum / length_penalty(frame_n, alpha)))
    results.sort(key=lambda r: -r[1])
    return results[:k]


def test_ar_beam_matches_brute_force():
    model = _ToyAR()
    got = ar_beam(model, enc=None, k=2, alpha=1.0, max_len=4)
    want = _brute_force_topk(model, 2, alpha=1.0, max_len=4)
    assert len(got) == 2
    for h, (seq, score) in zip(got, want):
        assert h.score == pytest.approx(score, abs=1e-6)
        assert tuple(h.frame.tokens) == tuple(f"[in:t{i}" for i in seq)
        assert h.finished


def test_ar_beam_deterministic_and_sorted():
    model = _ToyAR()
    a = ar_beam(model, None, k=3, alpha=1.0, max_len=4)
    b = ar_beam(model, None, k=3, alpha=1.0, max_len=4)
    assert [h.frame.tokens for h in a] == [h.frame.tokens for h in b]
    scores = [h.score for h in a]
    assert scores == sorted(scores, reverse=True)


def test_ar_beam_cutoff_flags_unfinished():
    class _NeverEnds(_ToyAR):
        def ar_step(self, enc, prefix):
            return np.log([0.6, 0.39, 0.01]).astype(np.float32)

    got = ar_beam(_NeverEnds(), None, k=1, alpha=1.0, max_len=3)
    # END prob so low every beam path is cut off at max_len
    assert len(got) == 1
    assert not got[0].finished
    assert not got[0].valid


def test_ar_beam_rejects_bad_width():
    with pytest.raises(ValueError):
        ar_beam(_ToyAR(), None, k=0)
