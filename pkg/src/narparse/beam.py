"""Top-k decoding for the three parser kinds and hypothesis scoring.

Scoring methods over a hypothesis's stored log-probability components:

* s1: log p(n|y1,x) + log p(y1|x)
* s2: s1 + sum of per-token log-probabilities
* s3: s2 / length_penalty

Invalid frames are never dropped: they are scored and flagged so that
failure analysis can observe them.
"""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .model import intent_onehot_logits
from .parse_repr import (FrameSeq, ParseError, frame_from_tokens,
                         index_to_span, validate_frame)


class ScoreError(ValueError):
    pass


@dataclass
class Hypothesis:
    frame: FrameSeq
    intent: str = None           # top-level intent label ("in:...")
    n: int = 0                   # frame length (token count)
    log_p_intent: float = None
    log_p_length: float = None
    token_logps: list = None
    score: float = None
    valid: bool = True
    violations: list = field(default_factory=list)
    finished: bool = True        # False for AR hypotheses cut off at max len

    def to_record(self):
        return {"frame": self.frame.render(), "intent": self.intent,
                "n": self.n, "log_p_intent": self.log_p_intent,
                "log_p_length": self.log_p_length,
                "log_p_tokens": self.token_logps, "score": self.score,
                "valid": self.valid}


def length_penalty(n, alpha):
    """((5+n)/6)^alpha with n the output frame length."""
    if n < 1:
        raise ValueError("length must be >= 1")
    return ((5.0 + n) / 6.0) ** alpha


def score_hypothesis(h, method, alpha=0.0, penalty_length=None):
    """Score a hypothesis with s1/s2/s3. ``penalty_length`` overrides the
    length fed to the penalty (study flag; default is the frame length)."""
    method = method.lower()
    if method not in ("s1", "s2", "s3"):
        raise ScoreError(f"unknown scoring method {method!r}")
    if h.log_p_intent is None or h.log_p_length is None:
        raise ScoreError("hypothesis lacks intent/length log-probabilities")
    s1 = h.log_p_length + h.log_p_intent
    if method == "s1":
        return s1
    if h.token_logps is None:
        raise ScoreError("hypothesis lacks per-token log-probabilities")
    s2 = s1 + float(sum(h.token_logps))
    if method == "s2":
        return s2
    lp = length_penalty(h.n if penalty_length is None else penalty_length,
                        alpha)
    return s2 / lp


def select_topk(hypotheses, k, method="s3", alpha=3.0, penalty_length=None):
    """Top-k by score, descending; ties broken by shorter frame then
    lexicographic intent for determinism."""
    if k > len(hypotheses):
        raise ValueError(f"k={k} exceeds {len(hypotheses)} hypotheses")
    scored = []
    for h in hypotheses:
        h.score = score_hypothesis(h, method, alpha, penalty_length)
        scored.append(h)
    scored.sort(key=lambda h: (-h.score, h.n, h.intent or ""))
    return scored[:k]


# ---------------------------------------------------------------------------
# shared helpers

def _tile_encoder(enc, k):
    """Repeat a batch-1 EncoderOutput k times (inference only)."""
    from .model import EncoderOutput
    return EncoderOutput(e=ad.Tensor(np.repeat(enc.e.data, k, axis=0)),
                         src_ids=np.repeat(enc.src_ids, k, axis=0),
                         lengths=list(enc.lengths) * k,
                         mask=np.repeat(enc.mask, k, axis=0),
                         queries=list(enc.queries) * k)


def _hypothesis_from_row(model, logp_row, gen, prefix_tokens):
    """Argmax decode of one row of [T, V] log-probs into a hypothesis."""
    ids = np.argmax(logp_row[:gen], axis=-1)
    token_logps = [float(logp_row[j, ids[j]]) for j in range(gen)]
    tokens = list(prefix_tokens)
    for i in ids:
        if int(i) == model.end_id:
            # END has no place in a NAR frame; keep it visible as invalid
            tokens.append("[in:<end>")
        else:
            tokens.extend(model.ids_to_frame_tokens([int(i)]))
    frame = frame_from_tokens(tokens, "span")
    violations = validate_frame(frame, source_len=None)
    return frame, token_logps, violations


def nar_baseline_beam(model, enc, k2):
    """Top-k2 frame lengths, one parse per length, single decoder pass."""
    if model.kind != "baseline":
        raise ValueError("baseline beam needs a baseline model")
    if k2 > model.n_lengths:
        raise ValueError(f"k2={k2} exceeds {model.n_lengths} length classes")
    with ad.no_grad():
        len_logp = ad.log_softmax(
            model.predict_length_logits(enc)).data[0]
        order = np.argsort(-len_logp, kind="stable")[:k2]
        ns = np.array([model.vocab.length_classes[c] for c in order], np.int64)
        enc_k = _tile_encoder(enc, k2)
        logp, gen = model.decode_frame(enc_k, ns)
    hyps = []
    for row in range(k2):
        frame, token_logps, violations = _hypothesis_from_row(
            model, logp.data[row], int(gen[row]), ())
        h = Hypothesis(frame=frame, intent=_root_intent(frame), n=int(ns[row]),
                       log_p_intent=0.0,  # length-only factorization
                       log_p_length=float(len_logp[order[row]]),
                       token_logps=token_logps,
                       valid=not violations, violations=violations)
        h.score = score_hypothesis(h, "s2")
        hyps.append(h)
    return hyps


def nar_proposed_beam(model, enc, k1, k2=1, epsilon=0.1):
    """Top-k1 intents x top-k2 conditioned lengths; all k1*k2 pairs decoded
    as one batch in a single decoder pass."""
    if model.kind != "proposed":
        raise ValueError("proposed beam needs a proposed model")
    if k1 > model.n_intents:
        raise ValueError(f"k1={k1} exceeds {model.n_intents} intents")
    if k2 > model.n_lengths:
        raise ValueError(f"k2={k2} exceeds {model.n_lengths} length classes")
    with ad.no_grad():
        int_logp = ad.log_softmax(
            model.predict_intent_logits(enc)).data[0]
        intents = np.argsort(-int_logp, kind="stable")[:k1]
        cond = intent_onehot_logits(intents, model.n_intents, epsilon)
        enc_k1 = _tile_encoder(enc, k1)
        len_logp = ad.log_softmax(
            model.predict_length_logits(enc_k1, ad.Tensor(cond))).data
        # usable classes: conditioned decoding generates n-1 >= 1 positions
        usable = [c for c, n in enumerate(model.vocab.length_classes) if n >= 2]
        pairs = []  # (intent id, length class, n)
        for row, intent_id in enumerate(intents):
            classes = sorted(usable, key=lambda c: -len_logp[row, c])[:k2]
            for c in classes:
                pairs.append((int(intent_id), c,
                              model.vocab.length_classes[c],
                              float(len_logp[row, c]),
                              float(int_logp[intent_id])))
        ns = np.array([p[2] for p in pairs], np.int64)
        cond_rows = intent_onehot_logits([p[0] for p in pairs],
                                         model.n_intents, epsilon)
        enc_b = _tile_encoder(enc, len(pairs))
        logp, gen = model.decode_frame(enc_b, ns,
                                       intent_logits=ad.Tensor(cond_rows))
    hyps = []
    for row, (intent_id, _, n, lp_len, lp_int) in enumerate(pairs):
        intent_label = model.vocab.intents[intent_id]
        frame, token_logps, violations = _hypothesis_from_row(
            model, logp.data[row], int(gen[row]), ("[" + intent_label,))
        h = Hypothesis(frame=frame, intent=intent_label, n=n,
                       log_p_intent=lp_int, log_p_length=lp_len,
                       token_logps=token_logps,
                       valid=not violations, violations=violations)
        h.score = score_hypothesis(h, "s2")
        hyps.append(h)
    return hyps


def oracle_nar_beam(model, enc, gold_intent=None, gold_length=None,
                    epsilon=0.1):
    """Greedy decode with an oracle quantity substituted for the model's
    top-1 prediction; everything else unchanged."""
    with ad.no_grad():
        if model.kind == "proposed":
            if gold_intent is None or gold_length is not None:
                raise ValueError("proposed oracle uses the gold intent only")
            intent_id = model.vocab.intent2id[gold_intent]
            int_logp = ad.log_softmax(
                model.predict_intent_logits(enc)).data[0]
            cond = ad.Tensor(intent_onehot_logits([intent_id],
                                                  model.n_intents, epsilon))
            len_logp = ad.log_softmax(
                model.predict_length_logits(enc, cond)).data[0]
            usable = [c for c, n in enumerate(model.vocab.length_classes)
                      if n >= 2]
            c = max(usable, key=lambda c: len_logp[c])
            n = model.vocab.length_classes[c]
            logp, gen = model.decode_frame(enc, [n], intent_logits=cond)
            frame, token_logps, violations = _hypothesis_from_row(
                model, logp.data[0], int(gen[0]),
                ("[" + gold_intent,))
            return Hypothesis(frame=frame, intent=gold_intent, n=n,
                              log_p_intent=float(int_logp[intent_id]),
                              log_p_length=float(len_logp[c]),
                              token_logps=token_logps,
                              valid=not violations, violations=violations)
        if model.kind == "baseline":
            if gold_length is None or gold_intent is not None:
                raise ValueError("baseline oracle uses the gold length only")
            len_logp = ad.log_softmax(
                model.predict_length_logits(enc)).data[0]
            c = model.vocab.length2class[gold_length]
            logp, gen = model.decode_frame(enc, [gold_length])
            frame, token_logps, violations = _hypothesis_from_row(
                model, logp.data[0], int(gen[0]), ())
            return Hypothesis(frame=frame, intent=_root_intent(frame),
                              n=gold_length,
                              log_p_intent=0.0,
                              log_p_length=float(len_logp[c]),
                              token_logps=token_logps,
                              valid=not violations, violations=violations)
    raise ValueError(f"no oracle mode for {model.kind} model")


# ---------------------------------------------------------------------------
# autoregressive beam search

def ar_beam(model, enc, k, alpha=1.0, max_len=None):
    """Standard beam search over the causal decoder. Finished hypotheses
    are never pruned; the final ranking divides cumulative log-probability
    (END included) by the length penalty."""
    if k < 1:
        raise ValueError("beam width must be >= 1")
    if max_len is None:
        max_len = model.config.max_frame_len - 1
    finished = []  # (ids tuple, cum logp, per-step logps)
    live = [((), 0.0, ())]
    with ad.no_grad():
        for _ in range(max_len):
            candidates = []
            for prefix, cum, logps in live:
                dist = model.ar_step(enc, list(prefix))
                top = np.argsort(-dist, kind="stable")[:k]
                for tok in top:
                    tok = int(tok)
                    entry = (prefix + (tok,), cum + float(dist[tok]),
                             logps + (float(dist[tok]),))
                    if tok == model.end_id:
                        finished.append(entry)
                    else:
                        candidates.append(entry)
            candidates.sort(key=lambda c: -c[1])
            live = candidates[:k]
            if not live:
                break
            if len(finished) >= k:
                best_live = live[0][1]
                worst_kept = sorted(finished, key=lambda c: -c[1])[k - 1][1]
                if best_live <= worst_kept:
                    break
    results = []
    pool = sorted(finished, key=lambda c: -c[1])
    cut_off = not pool
    if cut_off:
        pool = [max(live, key=lambda c: c[1])] if live else []
    for ids, cum, logps in pool:
        tokens = ids[:-1] if not cut_off else ids
        frame_tokens = []
        bad_end = False
        for i in tokens:
            if i == model.end_id:
                bad_end = True
                continue
            frame_tokens.extend(model.ids_to_frame_tokens([i]))
        frame = frame_from_tokens(frame_tokens, model.form)
        violations = validate_frame(frame)
        if bad_end:
            violations = violations + ["stray END token"]
        n = max(len(frame_tokens), 1)
        h = Hypothesis(frame=frame, intent=_root_intent(frame), n=len(frame_tokens),
                       log_p_intent=0.0, log_p_length=0.0,
                       token_logps=list(logps),
                       valid=not violations and not cut_off,
                       violations=violations, finished=not cut_off)
        h.score = cum / length_penalty(n, alpha)
        results.append(h)
    results.sort(key=lambda h: -h.score)
    return results[:k]


def _root_intent(frame):
    tok = frame.tokens[0] if frame.tokens else None
    if isinstance(tok, str) and tok.startswith("[in:"):
        return tok[1:]
    return None


# ---------------------------------------------------------------------------
# uniform entry points

def greedy_parse(model, query):
    """Beam width 1 for whichever kind the model is."""
    with ad.no_grad():
        enc = model.encode([query])
        if model.kind == "proposed":
            return nar_proposed_beam(model, enc, 1, 1)[0]
        if model.kind == "baseline":
            return nar_baseline_beam(model, enc, 1)[0]
        return ar_beam(model, enc, 1)[0]


def topk_parse(model, query, k, k1=None, k2=None, method="s3", alpha=3.0):
    """k1*k2 candidates (or an AR beam of width max(k, k1 or k)) reduced to
    the top-k by the scoring method."""
    with ad.no_grad():
        enc = model.encode([query])
        if model.kind == "proposed":
            hyps = nar_proposed_beam(model, enc, k1 or k, k2 or 1)
        elif model.kind == "baseline":
            hyps = nar_baseline_beam(model, enc, k2 or k)
        else:
            return ar_beam(model, enc, max(k, k1 or 0), alpha=1.0)[:k]
    return select_topk(hyps, min(k, len(hyps)), method, alpha)


def hypothesis_span_render(model, h):
    """Canonical span-form rendering for exact match; AR index-form frames
    are converted, invalid frames render as-is."""
    frame = h.frame
    if frame.form == "index":
        try:
            frame = index_to_span(frame)
        except ParseError:
            return h.frame.render()
    return frame.render()
