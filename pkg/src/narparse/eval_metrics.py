"""Exact match, intent match, oracle evaluation, diversity metrics and
decoding-cost accounting.

Exact match compares canonical span-form frame strings; n-gram diversity
is computed over frame tokens (parse symbols and integers alike,
brackets included).
"""

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import beam as beam_mod
from .parse_repr import tree_to_frame


@dataclass
class EvalReport:
    top_em: dict = field(default_factory=dict)     # k -> EM in [0, 1]
    top_im: dict = field(default_factory=dict)
    mean_unique_intents: float = 0.0
    distinct1_sentence: float = 0.0
    distinct2_sentence: float = 0.0
    distinct1_corpus: float = 0.0
    distinct2_corpus: float = 0.0
    decoder_passes_per_example: float = 0.0
    ar_steps_per_example: float = 0.0
    wall_clock_per_example: float = 0.0
    n_examples: int = 0

    def to_dict(self):
        out = {f"top{k}_em": v for k, v in self.top_em.items()}
        out.update({f"top{k}_im": v for k, v in self.top_im.items()})
        out.update({
            "mean_unique_intents": self.mean_unique_intents,
            "distinct1_sentence": self.distinct1_sentence,
            "distinct2_sentence": self.distinct2_sentence,
            "distinct1_corpus": self.distinct1_corpus,
            "distinct2_corpus": self.distinct2_corpus,
            "decoder_passes_per_example": self.decoder_passes_per_example,
            "ar_steps_per_example": self.ar_steps_per_example,
            "wall_clock_per_example": self.wall_clock_per_example,
            "n_examples": self.n_examples,
        })
        return out

    def to_table(self):
        rows = [(k, f"{v:.4f}" if isinstance(v, float) else str(v))
                for k, v in self.to_dict().items()]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def exact_match_report(predictions, golds, ks=(1, 2, 3)):
    """Top-k EM/IM.

    ``predictions``: per query, a score-sorted list of (frame string,
    intent label) pairs; ``golds``: per query (gold frame string, gold
    intent). A hit at k means any of the first k entries matches; k beyond
    the available hypotheses uses all of them.
    """
    if len(predictions) != len(golds):
        raise ValueError("predictions and golds differ in length")
    em = {k: 0 for k in ks}
    im = {k: 0 for k in ks}
    for preds, (gold_frame, gold_intent) in zip(predictions, golds):
        for k in ks:
            head = preds[:k]
            if any(f == gold_frame for f, _ in head):
                em[k] += 1
            if any(i == gold_intent for _, i in head):
                im[k] += 1
    n = max(len(golds), 1)
    return {k: v / n for k, v in em.items()}, {k: v / n for k, v in im.items()}


def _ngrams(tokens, n):
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


def diversity_report(topk_frames):
    """Diversity of per-query top-k frame collections.

    ``topk_frames``: per query, a list of FrameSeq. Returns a dict with
    the mean unique top-level intent count and distinct-1/2 percentages,
    sentence-wise (averaged over parses) and corpus-wise (n-grams pooled
    across the k parses of a query, averaged over queries).
    """
    unique_counts = []
    sent = {1: [], 2: []}
    corp = {1: [], 2: []}
    for frames in topk_frames:
        intents = set()
        corpus_tokens = 0
        corpus_ngrams = {1: set(), 2: set()}
        for frame in frames:
            tokens = list(frame.tokens)
            if not tokens:
                warnings.warn("empty parse skipped in diversity metrics")
                continue
            tok0 = tokens[0]
            intents.add(tok0 if isinstance(tok0, str) else "<none>")
            corpus_tokens += len(tokens)
            for n in (1, 2):
                grams = _ngrams(tokens, n)
                corpus_ngrams[n] |= grams
                sent[n].append(100.0 * len(grams) / len(tokens))
        unique_counts.append(len(intents))
        if corpus_tokens:
            for n in (1, 2):
                corp[n].append(100.0 * len(corpus_ngrams[n]) / corpus_tokens)
    return {
        "mean_unique_intents": float(np.mean(unique_counts)) if unique_counts else 0.0,
        "distinct1_sentence": float(np.mean(sent[1])) if sent[1] else 0.0,
        "distinct2_sentence": float(np.mean(sent[2])) if sent[2] else 0.0,
        "distinct1_corpus": float(np.mean(corp[1])) if corp[1] else 0.0,
        "distinct2_corpus": float(np.mean(corp[2])) if corp[2] else 0.0,
    }


def greedy_eval(model, dataset):
    """Per-example greedy EM hits; returns (em, hits list)."""
    hits = []
    for query, tree in dataset:
        gold = tree_to_frame(tree, "span").render()
        h = beam_mod.greedy_parse(model, query)
        hits.append(beam_mod.hypothesis_span_render(model, h) == gold)
    return float(np.mean(hits)) if hits else 0.0, hits


def oracle_eval(model, dataset, oracle):
    """EM with the oracle quantity fed at inference: gold frame length for
    the baseline model, gold top-level intent for the proposed model."""
    if oracle not in ("gold_length", "gold_intent"):
        raise ValueError(f"unknown oracle {oracle!r}")
    if oracle == "gold_length" and model.kind != "baseline":
        raise ValueError("gold_length oracle applies to the baseline model")
    if oracle == "gold_intent" and model.kind != "proposed":
        raise ValueError("gold_intent oracle applies to the proposed model")
    hits = []
    for query, tree in dataset:
        gold_frame = tree_to_frame(tree, "span")
        gold = gold_frame.render()
        with ad.no_grad():
            enc = model.encode([query])
            if oracle == "gold_intent":
                h = beam_mod.oracle_nar_beam(model, enc, gold_intent=tree.label)
            else:
                h = beam_mod.oracle_nar_beam(
                    model, enc, gold_length=len(gold_frame.tokens))
        hits.append(beam_mod.hypothesis_span_render(model, h) == gold)
    return float(np.mean(hits)) if hits else 0.0, hits


def latency_report(model, dataset, mode="greedy", k=3, k1=None, k2=None,
                   method="s3", alpha=3.0):
    """Decoder-pass counts and batch-size-1 wall clock per example.

    Relative numbers between models are the deliverable; absolute times
    are environment-specific. Returns per-example decoder pass counts,
    produced frame lengths, and mean wall clock."""
    passes = []
    frame_lens = []
    clocks = []
    for query, _ in dataset:
        before = model.decoder.calls
        t0 = time.perf_counter()
        if mode == "greedy":
            h = beam_mod.greedy_parse(model, query)
            top = [h]
        else:
            top = beam_mod.topk_parse(model, query, k, k1=k1, k2=k2,
                                      method=method, alpha=alpha)
        clocks.append(time.perf_counter() - t0)
        passes.append(model.decoder.calls - before)
        frame_lens.append(top[0].n)
    return {
        "decoder_passes": passes,
        "frame_lengths": frame_lens,
        "mean_decoder_passes": float(np.mean(passes)),
        "mean_wall_clock": float(np.mean(clocks)),
        "encoder_passes_per_example": 1,
    }
