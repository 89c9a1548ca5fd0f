"""Joint training of output, length and intent losses with hybrid teacher
forcing.

All three loss components are label-smoothed NLL. For pointer-generator
outputs, the smoothing mass is spread only over the classes that exist
for the example (symbols + END + its l copy positions); masked copy slots
carry ~-1e9 log-probability and must not receive target mass.
"""

import json
import time
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import beam
from . import optim
from .model import intent_onehot_logits, save_model
from .parse_repr import tree_to_frame


@dataclass
class TrainConfig:
    lambda_len: float = 10.0
    lambda_int: float = 100.0
    epsilon: float = 0.1           # label smoothing
    batch_size: int = 32
    epochs: int = 20
    p_tf: float = 0.5              # teacher-logit probability
    seed: int = 0
    # desk-scale schedule; the full-scale defaults live on lr_schedule
    base_lr: float = 1e-3
    warmup_steps: int = 200
    decay: float = 0.98
    decay_interval: int = 1000

    def __post_init__(self):
        if self.lambda_len < 0 or self.lambda_int < 0:
            raise ValueError("loss weights must be >= 0")
        if not 0.0 <= self.p_tf <= 1.0:
            raise ValueError("p_tf must be in [0, 1]")


def hybrid_teacher_logits(model_logits, gold_intents, rng, p_tf=0.5,
                          epsilon=0.1):
    """Per example, with probability p_tf substitute the teacher logits
    (log of the epsilon-smoothed one-hot of the gold intent) for the model
    logits. Returns (mixed logits Tensor, teacher-draw bool array)."""
    model_logits = ad.as_tensor(model_logits)
    b, c = model_logits.shape
    teacher = intent_onehot_logits(gold_intents, c, epsilon)
    draws = rng.random(b) < p_tf
    sel = draws.astype(np.float32)[:, None]
    mixed = model_logits * (1.0 - sel) + teacher * sel
    return mixed, draws


def _smoothed_nll_logprobs(logp, targets, pos_weights, class_counts, epsilon):
    """Label-smoothed NLL from log-probabilities [B, T, V] with per-example
    valid class counts (smoothing is spread over those classes only).
    ``pos_weights`` [B, T] averages over non-pad positions."""
    picked = ad.gather_last(logp, targets)
    w = np.asarray(pos_weights, np.float32)
    if epsilon == 0.0:
        per_pos = -picked
    else:
        # valid-class mask per example: first class_counts[b] entries minus
        # the masked copy tail is exactly where logp > -1e8
        valid = (logp.data > -1e8).astype(np.float32)
        rowsum = (logp * valid).sum(axis=-1)
        off = (epsilon / (class_counts - 1.0)).astype(np.float32)[:, None]
        per_pos = -((1.0 - epsilon) * picked + off * (rowsum - picked))
    total_w = w.sum()
    return (per_pos * w).sum() / float(total_w)


@dataclass
class LossBreakdown:
    total: "ad.Tensor"
    out: float
    length: float
    intent: float
    # unweighted component tensors, for reweighting or inspection
    out_term: "ad.Tensor" = None
    length_term: "ad.Tensor" = None
    intent_term: "ad.Tensor" = None


def compute_loss(batch, model, config, rng):
    """Total loss for one batch of (query tokens, ParseTree) pairs."""
    queries = [q for q, _ in batch]
    frames = [tree_to_frame(t, model.form) for _, t in batch]
    ns = np.array([len(f.tokens) for f in frames], np.int64)
    if ns.max() > model.config.max_frame_len:
        raise ValueError("frame longer than max_frame_len")
    enc = model.encode(queries, train=True, rng=rng)
    class_counts = np.array([model.output_dim(l) for l in enc.lengths],
                            np.float32)

    loss_int = None
    cond_logits = None
    if model.kind == "proposed":
        gold_intents = np.array(
            [model.vocab.intent2id[t.label] for _, t in batch], np.int64)
        intent_logits = model.predict_intent_logits(enc, train=True, rng=rng)
        loss_int = optim.label_smoothed_nll(intent_logits, gold_intents,
                                            config.epsilon)
        cond_logits, _ = hybrid_teacher_logits(intent_logits, gold_intents,
                                               rng, config.p_tf, config.epsilon)

    loss_len = None
    if model.kind in ("baseline", "proposed"):
        gold_len_cls = np.array(
            [model.vocab.length2class[int(n)] for n in ns], np.int64)
        length_logits = model.predict_length_logits(enc, cond_logits,
                                                    train=True, rng=rng)
        loss_len = optim.label_smoothed_nll(length_logits, gold_len_cls,
                                            config.epsilon)

    if model.kind == "ar":
        id_rows = [model.frame_tokens_to_ids(f.tokens) + [model.end_id]
                   for f in frames]
        tgt_lens = ns + 1
        t = int(tgt_lens.max())
        targets = np.zeros((len(batch), t), np.int64)
        weights = np.zeros((len(batch), t), np.float32)
        for i, row in enumerate(id_rows):
            targets[i, :len(row)] = row
            weights[i, :len(row)] = 1.0
        logp = model.ar_forward_teacher(enc, targets, list(tgt_lens),
                                        train=True, rng=rng)
    else:
        # gold length is teacher-forced into mask creation
        logp, gen = model.decode_frame(
            enc, ns, intent_logits=cond_logits, train=True, rng=rng)
        t = int(gen.max())
        skip = 1 if model.kind == "proposed" else 0
        targets = np.zeros((len(batch), t), np.int64)
        weights = np.zeros((len(batch), t), np.float32)
        for i, f in enumerate(frames):
            row = model.frame_tokens_to_ids(f.tokens[skip:])
            targets[i, :len(row)] = row
            weights[i, :len(row)] = 1.0
    loss_out = _smoothed_nll_logprobs(logp, targets, weights, class_counts,
                                      config.epsilon)

    total = loss_out
    if loss_len is not None:
        total = total + config.lambda_len * loss_len
    if loss_int is not None:
        total = total + config.lambda_int * loss_int
    return LossBreakdown(total=total, out=float(loss_out.data),
                         length=float(loss_len.data) if loss_len is not None else 0.0,
                         intent=float(loss_int.data) if loss_int is not None else 0.0,
                         out_term=loss_out, length_term=loss_len,
                         intent_term=loss_int)


def dev_exact_match(model, data):
    """Greedy top-1 EM over (query, tree) pairs."""
    if not data:
        return 0.0
    hits = 0
    for query, tree in data:
        gold = tree_to_frame(tree, "span").render()
        hyp = beam.greedy_parse(model, query)
        if hyp is not None and beam.hypothesis_span_render(model, hyp) == gold:
            hits += 1
    return hits / len(data)


def train(model, train_data, dev_data, config, out_dir=None, log_fh=None,
          quiet=False):
    """Seeded mini-batch training; returns the per-epoch metrics list.
    Saves the best-dev checkpoint into ``out_dir`` when given."""
    rng = np.random.default_rng(config.seed)
    adam = optim.Adam(model.params(), base_lr=config.base_lr,
                      warmup_steps=config.warmup_steps, decay=config.decay,
                      decay_interval=config.decay_interval)
    order = np.arange(len(train_data))
    history = []
    best_em = -1.0
    step = 0
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        t0 = time.perf_counter()
        epoch_losses = []
        for start in range(0, len(order), config.batch_size):
            batch = [train_data[i] for i in order[start:start + config.batch_size]]
            breakdown = compute_loss(batch, model, config, rng)
            if not np.isfinite(breakdown.total.data):
                raise FloatingPointError(
                    f"training diverged at step {step}: loss="
                    f"{float(breakdown.total.data)}")
            breakdown.total.backward()
            adam.step()
            step += 1
            epoch_losses.append((float(breakdown.total.data), breakdown.out,
                                 breakdown.length, breakdown.intent))
        mean = np.mean(epoch_losses, axis=0)
        with ad.no_grad():
            dev_em = dev_exact_match(model, dev_data)
        record = {"epoch": epoch, "step": step, "loss": float(mean[0]),
                  "loss_out": float(mean[1]), "loss_len": float(mean[2]),
                  "loss_int": float(mean[3]), "dev_em": dev_em,
                  "lr": adam.current_lr()}
        history.append(record)
        if log_fh is not None:
            log_fh.write(json.dumps(record) + "\n")
            log_fh.flush()
        if not quiet:
            print(f"epoch {epoch:3d} loss {mean[0]:.4f} "
                  f"(out {mean[1]:.4f} len {mean[2]:.4f} int {mean[3]:.4f}) "
                  f"dev_em {dev_em:.3f} [{time.perf_counter() - t0:.1f}s]")
        if dev_em >= best_em:
            best_em = dev_em
            if out_dir is not None:
                save_model(out_dir, model)
    return history
