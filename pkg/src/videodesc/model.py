"""Two-layer LSTM sentence decoder driven by a mean-pooled visual feature.

At step t the first layer reads ``concat(v, onehot(w_{t-1}))``, the second
layer reads the first layer's hidden state, and the word distribution is
``softmax(output_proj @ h2_t)``. During training ``w_{t-1}`` is the ground
truth word (BOS at t = 1); at test time it is the model's own argmax.

All weights of a model live in one flat float64 buffer (``ModelParams.theta``);
the per-layer matrices are reshaped views into it. SGD updates and
finite-difference checks operate directly on that buffer.
"""

from dataclasses import dataclass

import numpy as np

from .data import mean_pool  # noqa: F401  (re-exported)
from .lstm import LstmLayerParams, LstmState, lstm_step_backward, lstm_step_forward
from .numerics import DTYPE, log_softmax, softmax, uniform_init

DEFAULT_MAX_LEN = 30


def _layout(visual_dim, vocab_size, hidden1, hidden2, biases):
    in1 = visual_dim + vocab_size
    spec = [
        ("layer1.W_x", (4 * hidden1, in1)),
        ("layer1.W_h", (4 * hidden1, hidden1)),
    ]
    if biases:
        spec.append(("layer1.b", (4 * hidden1,)))
    spec += [
        ("layer2.W_x", (4 * hidden2, hidden1)),
        ("layer2.W_h", (4 * hidden2, hidden2)),
    ]
    if biases:
        spec.append(("layer2.b", (4 * hidden2,)))
    spec.append(("output_proj", (vocab_size, hidden2)))
    return spec


class ModelParams:
    """Weights of the full model plus the vocabulary they are indexed by."""

    def __init__(self, vocab, visual_dim, hidden1, hidden2=None, biases=True, theta=None):
        hidden2 = hidden1 if hidden2 is None else hidden2
        if min(visual_dim, hidden1, hidden2) < 1:
            raise ValueError("model dimensions must be positive")
        self.vocab = vocab
        self.visual_dim = visual_dim
        self.biases = biases
        self.layout = _layout(visual_dim, len(vocab), hidden1, hidden2, biases)
        size = sum(int(np.prod(shape)) for _, shape in self.layout)
        if theta is None:
            theta = np.zeros(size, dtype=DTYPE)
        elif theta.shape != (size,):
            raise ValueError(f"flat parameter vector must have length {size}")
        self.theta = theta
        self.arrays = {}
        offset = 0
        for name, shape in self.layout:
            n = int(np.prod(shape))
            self.arrays[name] = theta[offset:offset + n].reshape(shape)
            offset += n
        a = self.arrays
        self.layer1 = LstmLayerParams(a["layer1.W_x"], a["layer1.W_h"], a.get("layer1.b"))
        self.layer2 = LstmLayerParams(a["layer2.W_x"], a["layer2.W_h"], a.get("layer2.b"))
        self.output_proj = a["output_proj"]

    @property
    def vocab_size(self):
        return len(self.vocab)

    @property
    def hidden_dims(self):
        return self.layer1.hidden_dim, self.layer2.hidden_dim

    def _like(self, theta):
        h1, h2 = self.hidden_dims
        return ModelParams(self.vocab, self.visual_dim, h1, h2, self.biases, theta)

    def copy(self, dtype=None):
        return self._like(self.theta.astype(dtype or self.theta.dtype, copy=True))

    def zeros_like(self):
        return self._like(np.zeros_like(self.theta))

    def same_layout(self, other):
        return self.layout == other.layout

    def __repr__(self):
        h1, h2 = self.hidden_dims
        return (f"ModelParams(visual_dim={self.visual_dim}, hidden=({h1}, {h2}), "
                f"vocab={self.vocab_size}, biases={self.biases}, n={self.theta.size})")


def init_model(vocab, visual_dim, hidden, rng, scale=0.08, biases=True):
    """Fresh model with uniform weights and zero biases."""
    p = ModelParams(vocab, visual_dim, hidden, biases=biases)
    for name, shape in p.layout:
        if name.endswith(".b"):
            continue
        rows, cols = shape
        p.arrays[name][...] = uniform_init(rng, rows, cols, scale)
    return p


def _layer1_input(p, v, prev_word):
    x = np.zeros(p.visual_dim + p.vocab_size, dtype=DTYPE)
    x[:p.visual_dim] = v
    x[p.visual_dim + prev_word] = 1.0
    return x


def model_step(p, v, prev_word, s1, s2):
    """One decoding step.

    Returns ``(logits, s1, s2, (cache1, cache2))``; ``softmax(logits)`` is the
    next-word distribution.
    """
    if v.shape != (p.visual_dim,):
        raise ValueError(f"visual feature has shape {v.shape}, model expects ({p.visual_dim},)")
    if not 0 <= prev_word < p.vocab_size:
        raise ValueError(f"word index {prev_word} outside vocabulary of {p.vocab_size}")
    s1, cache1 = lstm_step_forward(p.layer1, _layer1_input(p, v, prev_word), s1)
    s2, cache2 = lstm_step_forward(p.layer2, s1.h, s2)
    logits = p.output_proj @ s2.h
    return logits, s1, s2, (cache1, cache2)


@dataclass
class SequenceCache:
    tokens: list
    caches: list  # per step: (cache1, cache2)
    probs: list   # per step softmax output


def _check_sequence(p, tokens):
    eos = p.vocab.eos
    if not tokens or tokens[-1] != eos or eos in tokens[:-1]:
        raise ValueError("token sequence must contain exactly one EOS, at the end")
    if min(tokens) < 0 or max(tokens) >= p.vocab_size:
        raise ValueError("token index outside vocabulary")


def sequence_forward(p, v, tokens):
    """Teacher-forced negative log-likelihood of ``tokens`` given ``v``.

    The loss is summed over all N tokens (EOS included) and carries the
    dtype of the parameters. Returns ``(loss, SequenceCache)``.
    """
    tokens = list(tokens)
    _check_sequence(p, tokens)
    h1, h2 = p.hidden_dims
    s1, s2 = LstmState.zeros(h1), LstmState.zeros(h2)
    prev = p.vocab.bos
    loss = p.theta.dtype.type(0)
    caches, probs = [], []
    for w in tokens:
        logits, s1, s2, cache = model_step(p, v, prev, s1, s2)
        loss -= log_softmax(logits)[w]
        caches.append(cache)
        probs.append(softmax(logits))
        prev = w
    return loss, SequenceCache(tokens, caches, probs)


def sequence_backward(p, cache, tokens=None, grads=None):
    """Exact gradient of the summed NLL by backpropagation through time.

    Gradients are accumulated into ``grads`` (a zero ModelParams of the same
    layout is allocated when None) and returned.
    """
    if tokens is not None and list(tokens) != cache.tokens:
        raise ValueError("tokens do not match the forward cache")
    if grads is None:
        grads = p.zeros_like()
    elif not p.same_layout(grads):
        raise ValueError("gradient buffer layout does not match the model")
    h1, h2 = p.hidden_dims
    dh1_next, dc1_next = np.zeros(h1), np.zeros(h1)
    dh2_next, dc2_next = np.zeros(h2), np.zeros(h2)
    for t in range(len(cache.tokens) - 1, -1, -1):
        cache1, cache2 = cache.caches[t]
        dlogits = cache.probs[t].copy()
        dlogits[cache.tokens[t]] -= 1.0
        grads.output_proj += np.outer(dlogits, cache2.h)
        dh2 = p.output_proj.T @ dlogits + dh2_next
        _, dx2, dh2_next, dc2_next = lstm_step_backward(p.layer2, cache2, dh2, dc2_next, grads.layer2)
        dh1 = dx2 + dh1_next
        _, _, dh1_next, dc1_next = lstm_step_backward(p.layer1, cache1, dh1, dc1_next, grads.layer1)
    return grads


def loss_and_grad(p, v, tokens, grads=None):
    loss, cache = sequence_forward(p, v, tokens)
    return loss, sequence_backward(p, cache, grads=grads)


def greedy_decode(p, v, max_len=DEFAULT_MAX_LEN):
    """Feed back the argmax word until EOS or ``max_len`` words.

    Ties go to the lowest index (``np.argmax``). The result always ends in
    EOS, so it has at most ``max_len + 1`` tokens.
    """
    if max_len < 1:
        raise ValueError("max_len must be at least 1")
    h1, h2 = p.hidden_dims
    s1, s2 = LstmState.zeros(h1), LstmState.zeros(h2)
    eos = p.vocab.eos
    prev = p.vocab.bos
    out = []
    for _ in range(max_len):
        logits, s1, s2, _ = model_step(p, v, prev, s1, s2)
        w = int(np.argmax(logits))
        out.append(w)
        if w == eos:
            return out
        prev = w
    out.append(eos)
    return out
