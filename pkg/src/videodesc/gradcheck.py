"""Finite-difference check of the full-model BPTT gradient."""

import numpy as np

from .data import Vocabulary
from .model import init_model, sequence_backward, sequence_forward
from .numerics import finite_diff_gradient, make_rng, relative_error


def random_instance(seed, visual_dim=8, hidden=12, vocab_size=15, length=5, scale=0.08):
    """Seeded tiny model, feature vector and EOS-terminated token sequence.

    ``vocab_size`` counts the reserved tokens. Biases are drawn at random too
    so that their gradients are exercised.
    """
    if vocab_size < 4:
        raise ValueError("vocab_size must leave room for at least one real word")
    rng = make_rng(seed)
    vocab = Vocabulary([f"w{k:03d}" for k in range(vocab_size - 3)])
    p = init_model(vocab, visual_dim, hidden, rng, scale)
    for name in ("layer1.b", "layer2.b"):
        p.arrays[name][...] = rng.uniform(-scale, scale, p.arrays[name].shape)
    v = rng.standard_normal(visual_dim)
    words = [i for i in range(vocab_size) if i not in (vocab.bos, vocab.eos)]
    tokens = [int(w) for w in rng.choice(words, size=length - 1)] + [vocab.eos]
    return p, v, tokens


def gradient_pair(p, v, tokens, h=1e-5):
    """(analytic, numerical) flat gradients of the sequence NLL.

    The numerical side re-runs only the forward pass, in long double, with
    central differences of step ``h``.
    """
    _, cache = sequence_forward(p, v, tokens)
    analytic = sequence_backward(p, cache).theta.copy()
    q = p.copy(np.longdouble)
    numeric = finite_diff_gradient(lambda _: sequence_forward(q, v, tokens)[0], q.theta, h)
    return analytic, numeric


def check_model_gradient(seed, visual_dim=8, hidden=12, vocab_size=15, length=5, h=1e-5):
    """Max relative error between BPTT and finite differences on a random instance."""
    p, v, tokens = random_instance(seed, visual_dim, hidden, vocab_size, length)
    analytic, numeric = gradient_pair(p, v, tokens, h)
    return float(relative_error(analytic, numeric).max())
