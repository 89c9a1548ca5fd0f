"""Parser models: shared encoder, intent module, frame-length module,
parallel mask decoder with pointer-generator output, and the
autoregressive decoder baseline.

Three kinds share one architecture skeleton:

* ``ar``       encoder + causal decoder + pointer head
* ``baseline`` adds a frame-length module; decodes all n positions from
               mask embeddings in a single parallel pass
* ``proposed`` adds an intent module; the length module and decoder are
               conditioned on (projected) intent logits and the decoder
               generates positions 2..n, the intent being prepended

The output space at each position is [parse symbols + END] followed by
the l source-copy positions; pointer logits come from attention of the
decoder states against projected encoder states. END is only ever
produced by the AR decoder but lives in the shared space so that all
three kinds use an identical head (parameter-count bookkeeping relies on
this).
"""

import json
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from . import checkpoint
from .layers import (DecoderStack, Embedding, EncoderStack, Linear, Module,
                     NEG_INF, causal_mask, padding_mask, sinusoidal_positions)
from .synth_data import VocabBundle

PAD = 0
UNK = 1


@dataclass
class ModelConfig:
    d_model: int = 64
    enc_layers: int = 2
    enc_heads: int = 2
    dec_layers: int = 2
    dec_heads: int = 2
    intent_layers: int = 2
    intent_heads: int = 2
    length_layers: int = 2
    length_heads: int = 2
    ffn_mult: int = 4
    dropout: float = 0.0316
    src_emb_dropout: float = 0.0022
    max_src_len: int = 32
    max_frame_len: int = 48

    def __post_init__(self):
        for name in ("enc", "dec", "intent", "length"):
            heads = getattr(self, f"{name}_heads")
            if self.d_model % heads != 0:
                raise ValueError(f"d_model {self.d_model} not divisible by "
                                 f"{name}_heads {heads}")


def desk_preset(**overrides):
    return ModelConfig(**overrides)


def table8_ratio_preset(**overrides):
    """Layer/width/head ratios of the full-scale setup (decoder L4/H256/HD2,
    length and intent modules L8/H256/HD4) with a small from-scratch
    encoder standing in for the pre-trained one."""
    base = dict(d_model=256, enc_layers=4, enc_heads=4,
                dec_layers=4, dec_heads=2,
                intent_layers=8, intent_heads=4,
                length_layers=8, length_heads=4)
    base.update(overrides)
    return ModelConfig(**base)


PRESETS = {"desk": desk_preset, "table8-ratio": table8_ratio_preset}


@dataclass
class SrcVocab:
    words: list
    word2id: dict = None

    def __post_init__(self):
        self.word2id = {w: i for i, w in enumerate(self.words)}

    @classmethod
    def build(cls, dataset):
        words = sorted({w for query, _ in dataset for w in query})
        return cls(words=["<pad>", "<unk>"] + words)

    def encode(self, tokens):
        return [self.word2id.get(w, UNK) for w in tokens]

    def __len__(self):
        return len(self.words)


@dataclass
class EncoderOutput:
    e: "ad.Tensor"        # [B, S, D]
    src_ids: np.ndarray   # [B, S]
    lengths: list         # true source lengths
    mask: np.ndarray      # [B, 1, 1, S] additive
    queries: list         # original token lists


def intent_onehot_logits(intent_ids, n_intents, epsilon=0.1):
    """Log of the epsilon-smoothed one-hot; the logits fed to conditioned
    modules when an intent has been selected (teacher forcing and
    inference both use this transform)."""
    ids = np.atleast_1d(np.asarray(intent_ids, dtype=np.int64))
    out = np.full((ids.size, n_intents),
                  np.log(epsilon / (n_intents - 1)) if epsilon > 0 else NEG_INF,
                  dtype=np.float32)
    out[np.arange(ids.size), ids] = np.log1p(-epsilon) if epsilon > 0 else 0.0
    return out


class SemanticParser(Module):
    """One of the three parser kinds; see module docstring."""

    KINDS = ("ar", "baseline", "proposed")

    def __init__(self, kind, config, vocab, src_vocab, seed=0, form="span"):
        super().__init__()
        if kind not in self.KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if form not in ("index", "span"):
            raise ValueError(f"unknown frame form {form!r}")
        self.kind = kind
        self.form = "span" if kind != "ar" else form
        self.config = config
        self.vocab = vocab
        self.src_vocab = src_vocab
        self.n_sym = len(vocab.symbols)
        self.end_id = self.n_sym
        self.mask_id = self.n_sym + 1
        self.copy_emb_base = self.n_sym + 2
        self.n_intents = len(vocab.intents)
        self.n_lengths = len(vocab.length_classes)
        d = config.d_model
        rng = np.random.default_rng(seed)

        self.src_emb = self.add_child("src_emb", Embedding(rng, len(src_vocab), d))
        self.encoder = self.add_child(
            "encoder", EncoderStack(rng, config.enc_layers, d, config.enc_heads,
                                    config.ffn_mult))
        n_emb = self.copy_emb_base + vocab.copy_range
        self.tgt_emb = self.add_child("tgt_emb", Embedding(rng, n_emb, d))
        self.decoder = self.add_child(
            "decoder", DecoderStack(rng, config.dec_layers, d, config.dec_heads,
                                    config.ffn_mult))
        self.copy_proj = self.add_child("ptr_copy_proj", Linear(rng, d, d))
        self.sym_bias = self.add_param("ptr_sym_bias",
                                       np.zeros(self.n_sym + 1, np.float32))
        self._pos = sinusoidal_positions(
            max(config.max_src_len, config.max_frame_len) + 2, d)

        if kind in ("baseline", "proposed"):
            self.length_module = self.add_child(
                "length_module",
                DecoderStack(rng, config.length_layers, d, config.length_heads,
                             config.ffn_mult))
            self.length_query = self.add_param(
                "length_query", (rng.standard_normal((1, 1, d)) * 0.02)
                .astype(np.float32))
            self.length_out = self.add_child("length_out",
                                             Linear(rng, d, self.n_lengths))
        if kind == "proposed":
            self.intent_module = self.add_child(
                "intent_module",
                DecoderStack(rng, config.intent_layers, d, config.intent_heads,
                             config.ffn_mult))
            # conditioning projection counts as intent-module plumbing
            self.intent_query = self.add_param(
                "intent_module.query", (rng.standard_normal((1, 1, d)) * 0.02)
                .astype(np.float32))
            self.intent_out = self.add_child("intent_module.out",
                                             Linear(rng, d, self.n_intents))
            self.cond_proj = self.add_child("intent_module.cond_proj",
                                            Linear(rng, self.n_intents, d))

    # -- encoding ----------------------------------------------------------

    def encode(self, queries, train=False, rng=None):
        """queries: list of token lists -> EncoderOutput."""
        if isinstance(queries[0], str):
            queries = [queries]
        lengths = [len(q) for q in queries]
        if min(lengths) < 1:
            raise ValueError("empty query")
        if max(lengths) > self.config.max_src_len:
            raise ValueError(f"source longer than max_src_len="
                             f"{self.config.max_src_len}")
        s = max(lengths)
        ids = np.full((len(queries), s), PAD, np.int64)
        for i, q in enumerate(queries):
            ids[i, :len(q)] = self.src_vocab.encode(q)
        x = self.src_emb(ids) + self._pos[None, :s]
        if train and self.config.src_emb_dropout > 0.0:
            x = ad.dropout(x, self.config.src_emb_dropout, rng)
        mask = padding_mask(lengths, s)
        e = self.encoder(x, mask, self.config.dropout if train else 0.0, rng)
        return EncoderOutput(e=e, src_ids=ids, lengths=lengths, mask=mask,
                             queries=list(queries))

    # -- intent / length heads --------------------------------------------

    def predict_intent_logits(self, enc, train=False, rng=None):
        if self.kind != "proposed":
            raise ValueError(f"{self.kind} model has no intent module")
        b = enc.e.shape[0]
        q = ad.Tensor(np.zeros((b, 1, self.config.d_model), np.float32)) \
            + self.intent_query
        h = self.intent_module(q, enc.e, None, enc.mask,
                               self.config.dropout if train else 0.0, rng)
        return ad.reshape(self.intent_out(h), (b, self.n_intents))

    def _conditioned_memory(self, enc, intent_logits):
        cond = self.cond_proj(ad.as_tensor(intent_logits))      # [B, D]
        cond3 = ad.reshape(cond, (cond.shape[0], 1, cond.shape[-1]))
        memory = ad.concat([cond3, enc.e], axis=1)
        pad = np.zeros(enc.mask.shape[:-1] + (1,), np.float32)
        mask = np.concatenate([pad, enc.mask], axis=-1)
        return cond, cond3, memory, mask

    def predict_length_logits(self, enc, intent_logits=None, train=False,
                              rng=None):
        """Baseline mode (intent_logits None) predicts the frame length n;
        conditioned mode (proposed only) predicts the remaining length
        n-1. Both index the same even-length class set."""
        if self.kind == "ar":
            raise ValueError("ar model has no length module")
        b = enc.e.shape[0]
        if intent_logits is None:
            memory, mask = enc.e, enc.mask
            q = ad.Tensor(np.zeros((b, 1, self.config.d_model), np.float32)) \
                + self.length_query
        else:
            if self.kind != "proposed":
                raise ValueError("intent conditioning requires the proposed model")
            cond, cond3, memory, mask = self._conditioned_memory(enc, intent_logits)
            q = cond3 + self.length_query
        h = self.length_module(q, memory, None, mask,
                               self.config.dropout if train else 0.0, rng)
        return ad.reshape(self.length_out(h), (b, self.n_lengths))

    # -- parallel decoding -------------------------------------------------

    def decode_frame(self, enc, ns, intent_logits=None, train=False, rng=None):
        """One parallel decoder pass producing per-position log-probability
        distributions of size n_sym + 1 + S (symbols, END, copy positions).

        ``ns`` holds the target frame length n per batch row; conditioned
        mode generates n-1 positions (the caller prepends the intent),
        baseline mode generates all n. Returns (logprobs [B, T, V], gen)
        where gen are the generated-position counts.
        """
        if self.kind == "ar":
            raise ValueError("ar model decodes autoregressively")
        ns = np.atleast_1d(np.asarray(ns, dtype=np.int64))
        if ns.min() < 1 or ns.max() > self.config.max_frame_len:
            raise ValueError(f"frame length out of range [1, "
                             f"{self.config.max_frame_len}]")
        conditioned = intent_logits is not None
        if conditioned and self.kind != "proposed":
            raise ValueError("intent conditioning requires the proposed model")
        if self.kind == "proposed" and not conditioned:
            raise ValueError("proposed model decodes with intent conditioning")
        gen = ns - 1 if conditioned else ns
        if gen.min() < 1:
            raise ValueError("conditioned decoding needs n >= 2")
        b = enc.e.shape[0]
        if ns.shape[0] != b:
            raise ValueError("ns must match the encoder batch")
        t = int(gen.max())
        mask_vec = ad.embedding(self.tgt_emb.table,
                                np.full((b, t), self.mask_id, np.int64))
        x = mask_vec + self._pos[None, :t]
        self_mask = padding_mask(list(gen), t)
        if conditioned:
            cond, cond3, memory, cross_mask = self._conditioned_memory(
                enc, intent_logits)
            x = x + cond3
        else:
            memory, cross_mask = enc.e, enc.mask
        h = self.decoder(x, memory, self_mask, cross_mask,
                         self.config.dropout if train else 0.0, rng)
        return self._pointer_head(h, enc), gen

    def _pointer_head(self, h, enc):
        """Joint log-softmax over [symbols + END] ++ source positions."""
        sym_w = ad.slice_axis0(self.tgt_emb.table, 0, self.n_sym + 1)
        sym_logits = ad.matmul(h, ad.transpose(sym_w, (1, 0))) + self.sym_bias
        keys = self.copy_proj(enc.e)                      # [B, S, D]
        copy_logits = ad.matmul(h, ad.transpose(keys, (0, 2, 1)))
        copy_logits = copy_logits + enc.mask[:, 0]        # hide padded source
        return ad.log_softmax(ad.concat([sym_logits, copy_logits], axis=-1))

    # -- autoregressive decoding ------------------------------------------

    def _emb_ids(self, out_ids):
        """Map output-space ids to embedding-table ids (copy slots shift by
        one because MASK sits between END and the copy block)."""
        out_ids = np.asarray(out_ids, dtype=np.int64)
        return np.where(out_ids <= self.end_id, out_ids, out_ids + 1)

    def ar_forward_teacher(self, enc, target_ids, target_lengths, train=False,
                           rng=None):
        """Causal forward over gold prefixes. ``target_ids`` [B, T] are
        output-space ids (END included as the final target); inputs are
        right-shifted with MASK as the start symbol."""
        b, t = target_ids.shape
        inputs = np.full((b, t), self.mask_id, np.int64)
        inputs[:, 1:] = self._emb_ids(target_ids[:, :-1])
        x = self.tgt_emb(inputs) + self._pos[None, :t]
        self_mask = causal_mask(t) + padding_mask(list(target_lengths), t)
        h = self.decoder(x, enc.e, self_mask, enc.mask,
                         self.config.dropout if train else 0.0, rng)
        return self._pointer_head(h, enc)

    def ar_step(self, enc, prefix_ids):
        """Next-token log-probabilities given an output-space id prefix.
        Recomputes the full prefix; fine at desk scale."""
        if self.kind != "ar":
            raise ValueError(f"{self.kind} model has no causal decoder")
        if len(prefix_ids) >= self.config.max_frame_len:
            raise ValueError("prefix at max_frame_len")
        t = len(prefix_ids) + 1
        inputs = np.concatenate([[self.mask_id],
                                 self._emb_ids(prefix_ids)]).reshape(1, t)
        x = self.tgt_emb(inputs) + self._pos[None, :t]
        h = self.decoder(x, enc.e, causal_mask(t), enc.mask)
        logp = self._pointer_head(h, enc)
        return logp.data[0, -1]

    # -- id/token mapping --------------------------------------------------

    def frame_tokens_to_ids(self, tokens):
        ids = []
        for tok in tokens:
            if isinstance(tok, int):
                ids.append(self.n_sym + 1 + tok)
            else:
                ids.append(self.vocab.sym2id[tok])
        return ids

    def ids_to_frame_tokens(self, ids):
        tokens = []
        for i in ids:
            i = int(i)
            if i < self.n_sym:
                tokens.append(self.vocab.symbols[i])
            elif i == self.end_id:
                raise ValueError("END inside a frame")
            else:
                tokens.append(i - self.n_sym - 1)
        return tokens

    def output_dim(self, src_len):
        return self.n_sym + 1 + src_len


# ---------------------------------------------------------------------------
# persistence

def save_model(dirpath, model):
    os.makedirs(dirpath, exist_ok=True)
    checkpoint.save_params(os.path.join(dirpath, "params.narp"), model.params())
    meta = {
        "kind": model.kind,
        "form": model.form,
        "config": asdict(model.config),
        "vocab": {"symbols": model.vocab.symbols,
                  "intents": model.vocab.intents,
                  "copy_range": model.vocab.copy_range,
                  "length_classes": model.vocab.length_classes},
        "src_vocab": model.src_vocab.words,
    }
    with open(os.path.join(dirpath, "model.json"), "w") as fh:
        json.dump(meta, fh)


def load_model(dirpath):
    with open(os.path.join(dirpath, "model.json")) as fh:
        meta = json.load(fh)
    vocab = VocabBundle(symbols=meta["vocab"]["symbols"],
                        intents=meta["vocab"]["intents"],
                        copy_range=meta["vocab"]["copy_range"],
                        length_classes=meta["vocab"]["length_classes"])
    src_vocab = SrcVocab(words=meta["src_vocab"])
    model = SemanticParser(meta["kind"], ModelConfig(**meta["config"]),
                           vocab, src_vocab, form=meta["form"])
    model.load_state(checkpoint.load_params(os.path.join(dirpath, "params.narp")))
    return model
