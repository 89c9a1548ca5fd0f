"""Losses, Adam optimizer, learning-rate schedule, gradient checking."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import kernels


class MissingGradError(RuntimeError):
    pass


def label_smoothed_nll(logits, label, epsilon=0.1):
    """Label-smoothed negative log-likelihood.

    ``logits`` is a Tensor [..., C]; ``label`` is an int (or int array of
    the leading shape). The target puts mass 1-epsilon on the label and
    epsilon/(C-1) on every other class. Returns the mean scalar loss over
    leading dims. epsilon=0 reduces to plain NLL.
    """
    logits = ad.as_tensor(logits)
    c = logits.shape[-1]
    if c < 2:
        raise ValueError(f"need at least 2 classes, got {c}")
    labels = np.asarray(label, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"label out of range [0, {c})")
    logp = ad.log_softmax(logits)
    picked = ad.gather_last(logp, labels.reshape(logits.shape[:-1]))
    if epsilon == 0.0:
        return -picked.mean()
    off = epsilon / (c - 1)
    # -[ (1-eps)*logp[label] + off*(sum(logp) - logp[label]) ]
    rest = logp.sum(axis=-1) - picked
    loss = -( (1.0 - epsilon) * picked + off * rest )
    return loss.mean()


def weighted_label_smoothed_nll(logits, labels, weights, epsilon=0.1):
    """Per-position smoothed NLL averaged with ``weights`` (e.g. pad mask)."""
    logits = ad.as_tensor(logits)
    c = logits.shape[-1]
    if c < 2:
        raise ValueError(f"need at least 2 classes, got {c}")
    labels = np.asarray(labels, dtype=np.int64)
    # padded positions may carry label 0; they get weight 0
    logp = ad.log_softmax(logits)
    picked = ad.gather_last(logp, labels)
    if epsilon == 0.0:
        per_pos = -picked
    else:
        off = epsilon / (c - 1)
        rest = logp.sum(axis=-1) - picked
        per_pos = -((1.0 - epsilon) * picked + off * rest)
    w = np.asarray(weights, dtype=np.float32)
    total = w.sum()
    if total <= 0:
        raise ValueError("all weights are zero")
    return (per_pos * w).sum() / float(total)


def lr_schedule(step, base_lr=4e-5, warmup_steps=1000, decay=0.98,
                decay_interval=1000):
    """Linear warmup from 0 to base_lr, then continuous exponential decay
    of ``decay`` per ``decay_interval`` steps."""
    if step < 0:
        raise ValueError("step must be >= 0")
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    return base_lr * decay ** ((step - warmup_steps) / decay_interval)


@dataclass
class Adam:
    """Adam with the warmup + exponential-decay schedule.

    Gradients are consumed by :meth:`step`: calling it twice without a new
    backward pass raises ``MissingGradError``.
    """

    params: dict
    base_lr: float = 4e-5
    warmup_steps: int = 1000
    decay: float = 0.98
    decay_interval: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: dict = field(default_factory=dict, repr=False)
    _v: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for name, p in self.params.items():
            self._m[name] = np.zeros_like(p.data)
            self._v[name] = np.zeros_like(p.data)

    def current_lr(self):
        return lr_schedule(self.step_count, self.base_lr, self.warmup_steps,
                           self.decay, self.decay_interval)

    def step(self):
        for name, p in self.params.items():
            if p.grad is None:
                raise MissingGradError(f"parameter {name!r} has no gradient "
                                       "(already consumed or backward not run)")
            if not np.all(np.isfinite(p.grad)):
                raise FloatingPointError(f"non-finite gradient for {name!r}")
        self.step_count += 1
        lr = self.current_lr()
        for name, p in self.params.items():
            kernels.adam_step(p.data, p.grad, self._m[name], self._v[name],
                              lr, self.beta1, self.beta2, self.eps,
                              self.step_count)
            p.grad = None

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    n_checked: int
    failures: list


def finite_diff_check(f, params, rel_tol=1e-3, h=1e-3, max_entries=None,
                      rng=None):
    """Compare reverse-mode gradients of scalar ``f()`` against central
    finite differences on the entries of ``params`` (dict name -> Tensor).

    Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
    ``max_entries`` caps the number of sampled entries (uniform without
    replacement across all parameters).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    for p in params.values():
        p.grad = None
    out = f()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("f() returned a non-finite value")
    out.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    entries = [(name, idx) for name, p in params.items()
               for idx in range(p.data.size)]
    if max_entries is not None and len(entries) > max_entries:
        chosen = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[i] for i in chosen]

    failures = []
    max_err = 0.0
    for name, idx in entries:
        p = params[name]
        flat = p.data.reshape(-1)
        orig = flat[idx]
        flat[idx] = orig + h
        f_plus = float(f().data)
        flat[idx] = orig - h
        f_minus = float(f().data)
        flat[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * h)
        a = float(analytic[name].reshape(-1)[idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
        max_err = max(max_err, err)
        if err > rel_tol:
            failures.append((name, idx, a, numeric, err))
    for p in params.values():
        p.grad = None
    return GradCheckReport(passed=not failures, max_rel_err=max_err,
                           n_checked=len(entries), failures=failures)
