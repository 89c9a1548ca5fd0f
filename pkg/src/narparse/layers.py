"""Transformer building blocks on top of the autodiff core.

Pre-norm layers with a final LayerNorm per stack. Attention masks are
plain numpy additive arrays (0 keep, -1e9 drop) broadcastable to the
score shape [B, heads, T, S].
"""

import numpy as np

from . import autodiff as ad

NEG_INF = np.float32(-1e9)


class Module:
    """Tiny parameter-registry base; names are hierarchical."""

    def __init__(self):
        self._own = {}
        self._children = {}

    def add_param(self, name, array):
        t = ad.Tensor(array, requires_grad=True)
        self._own[name] = t
        return t

    def add_child(self, name, module):
        self._children[name] = module
        return module

    def params(self, prefix=""):
        out = {}
        for name, t in self._own.items():
            out[prefix + name] = t
        for name, child in self._children.items():
            out.update(child.params(prefix + name + "."))
        return out

    def load_state(self, flat, prefix=""):
        for name, tensor in self.params(prefix).items():
            if name not in flat:
                raise KeyError(f"checkpoint missing parameter {name}")
            src = flat[name]
            if src.shape != tensor.data.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{src.shape} vs {tensor.data.shape}")
            tensor.data[...] = src
            tensor.grad = None


def xavier(rng, fan_in, fan_out, shape=None):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Linear(Module):
    def __init__(self, rng, d_in, d_out, bias=True):
        super().__init__()
        self.w = self.add_param("w", xavier(rng, d_in, d_out))
        self.b = self.add_param("b", np.zeros(d_out, np.float32)) if bias else None

    def __call__(self, x):
        y = ad.matmul(x, self.w)
        if self.b is not None:
            y = y + self.b
        return y


class Embedding(Module):
    def __init__(self, rng, n, d):
        super().__init__()
        self.table = self.add_param(
            "table", (rng.standard_normal((n, d)) * 0.02).astype(np.float32))

    def __call__(self, ids):
        return ad.embedding(self.table, ids)


class LayerNorm(Module):
    def __init__(self, d):
        super().__init__()
        self.g = self.add_param("g", np.ones(d, np.float32))
        self.b = self.add_param("b", np.zeros(d, np.float32))

    def __call__(self, x):
        return ad.layer_norm(x, self.g, self.b)


def sinusoidal_positions(n, d):
    """[n, d] float32 sinusoidal position table."""
    pos = np.arange(n)[:, None].astype(np.float64)
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    table = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
    return table.astype(np.float32)


class MultiHeadAttention(Module):
    def __init__(self, rng, d, heads):
        super().__init__()
        if d % heads != 0:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.d = d
        self.heads = heads
        self.dh = d // heads
        self.scale = 1.0 / np.sqrt(self.dh)
        self.wq = self.add_child("wq", Linear(rng, d, d))
        self.wk = self.add_child("wk", Linear(rng, d, d))
        self.wv = self.add_child("wv", Linear(rng, d, d))
        self.wo = self.add_child("wo", Linear(rng, d, d))

    def _split(self, x, b, t):
        return ad.transpose(ad.reshape(x, (b, t, self.heads, self.dh)),
                            (0, 2, 1, 3))

    def __call__(self, x, memory=None, mask=None):
        """x [B,T,D]; memory [B,S,D] (self-attention when None);
        mask additive, broadcastable to [B,heads,T,S]."""
        mem = x if memory is None else memory
        b, t = x.shape[0], x.shape[1]
        s = mem.shape[1]
        q = self._split(self.wq(x), b, t)
        k = self._split(self.wk(mem), b, s)
        v = self._split(self.wv(mem), b, s)
        scores = ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))) * self.scale
        probs = ad.softmax(scores, mask=mask)
        ctx = ad.matmul(probs, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, t, self.d))
        return self.wo(ctx)


class FeedForward(Module):
    def __init__(self, rng, d, mult=4):
        super().__init__()
        self.lin1 = self.add_child("lin1", Linear(rng, d, d * mult))
        self.lin2 = self.add_child("lin2", Linear(rng, d * mult, d))

    def __call__(self, x):
        return self.lin2(ad.relu(self.lin1(x)))


class EncoderLayer(Module):
    def __init__(self, rng, d, heads, ffn_mult=4):
        super().__init__()
        self.ln1 = self.add_child("ln1", LayerNorm(d))
        self.attn = self.add_child("attn", MultiHeadAttention(rng, d, heads))
        self.ln2 = self.add_child("ln2", LayerNorm(d))
        self.ffn = self.add_child("ffn", FeedForward(rng, d, ffn_mult))

    def __call__(self, x, mask, dropout=0.0, rng=None):
        h = self.attn(self.ln1(x), mask=mask)
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        x = x + h
        h = self.ffn(self.ln2(x))
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        return x + h


class DecoderLayer(Module):
    def __init__(self, rng, d, heads, ffn_mult=4):
        super().__init__()
        self.ln1 = self.add_child("ln1", LayerNorm(d))
        self.self_attn = self.add_child("self_attn",
                                        MultiHeadAttention(rng, d, heads))
        self.ln2 = self.add_child("ln2", LayerNorm(d))
        self.cross_attn = self.add_child("cross_attn",
                                         MultiHeadAttention(rng, d, heads))
        self.ln3 = self.add_child("ln3", LayerNorm(d))
        self.ffn = self.add_child("ffn", FeedForward(rng, d, ffn_mult))

    def __call__(self, x, memory, self_mask, cross_mask, dropout=0.0, rng=None):
        h = self.self_attn(self.ln1(x), mask=self_mask)
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        x = x + h
        h = self.cross_attn(self.ln2(x), memory=memory, mask=cross_mask)
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        x = x + h
        h = self.ffn(self.ln3(x))
        if dropout > 0.0:
            h = ad.dropout(h, dropout, rng)
        return x + h


class EncoderStack(Module):
    def __init__(self, rng, layers, d, heads, ffn_mult=4):
        super().__init__()
        self.layers = [self.add_child(f"layer{i}",
                                      EncoderLayer(rng, d, heads, ffn_mult))
                       for i in range(layers)]
        self.ln_out = self.add_child("ln_out", LayerNorm(d))

    def __call__(self, x, mask, dropout=0.0, rng=None):
        for layer in self.layers:
            x = layer(x, mask, dropout, rng)
        return self.ln_out(x)


class DecoderStack(Module):
    """Transformer decoder; ``calls`` counts forward invocations so the
    single-pass decoding contract can be asserted."""

    def __init__(self, rng, layers, d, heads, ffn_mult=4):
        super().__init__()
        self.layers = [self.add_child(f"layer{i}",
                                      DecoderLayer(rng, d, heads, ffn_mult))
                       for i in range(layers)]
        self.ln_out = self.add_child("ln_out", LayerNorm(d))
        self.calls = 0

    def __call__(self, x, memory, self_mask, cross_mask, dropout=0.0, rng=None):
        self.calls += 1
        for layer in self.layers:
            x = layer(x, memory, self_mask, cross_mask, dropout, rng)
        return self.ln_out(x)


def padding_mask(lengths, max_len):
    """[B, 1, 1, max_len] additive mask from true lengths."""
    b = len(lengths)
    mask = np.zeros((b, 1, 1, max_len), np.float32)
    for i, n in enumerate(lengths):
        mask[i, :, :, n:] = NEG_INF
    return mask


def causal_mask(t):
    """[1, 1, t, t] additive lower-triangular mask."""
    mask = np.triu(np.full((t, t), NEG_INF, np.float32), k=1)
    return mask[None, None]
