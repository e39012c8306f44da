import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videodesc.data import Vocabulary
from videodesc.gradcheck import gradient_pair, random_instance
from videodesc.lstm import LstmState
from videodesc.model import (ModelParams, greedy_decode, init_model, mean_pool, model_step,
                             sequence_backward, sequence_forward)
from videodesc.numerics import make_rng, relative_error, softmax


def vocab_of(size):
    return Vocabulary([f"w{k:02d}" for k in range(size - 3)])


def tiny_model(seed=0, visual_dim=4, hidden=5, vocab_size=9, scale=0.5):
    rng = make_rng(seed)
    p = init_model(vocab_of(vocab_size), visual_dim, hidden, rng, scale)
    p.layer1.b[:] = rng.uniform(-scale, scale, 4 * hidden)
    p.layer2.b[:] = rng.uniform(-scale, scale, 4 * hidden)
    return p, rng.standard_normal(visual_dim)


def _cell(W_x, W_h, b, x, h, c):
    """Pure-python LSTM step over the stacked [i; f; o; c] blocks."""
    H = len(h)
    a = [sum(W_x[r, j] * x[j] for j in range(len(x))) + sum(W_h[r, j] * h[j] for j in range(H))
         + (b[r] if b is not None else 0.0) for r in range(4 * H)]
    sig = lambda z: 1 / (1 + math.exp(-z))  # noqa: E731
    new_c = [sig(a[H + k]) * c[k] + sig(a[k]) * math.tanh(a[3 * H + k]) for k in range(H)]
    new_h = [sig(a[2 * H + k]) * math.tanh(new_c[k]) for k in range(H)]
    return new_h, new_c


def reference_logits(p, v, inputs):
    """Logits at every step for the given input word sequence."""
    H1, H2 = p.hidden_dims
    h1, c1, h2, c2 = [0.0] * H1, [0.0] * H1, [0.0] * H2, [0.0] * H2
    out = []
    for w in inputs:
        x = list(v) + [1.0 if k == w else 0.0 for k in range(p.vocab_size)]
        h1, c1 = _cell(p.layer1.W_x, p.layer1.W_h, p.layer1.b, x, h1, c1)
        h2, c2 = _cell(p.layer2.W_x, p.layer2.W_h, p.layer2.b, h1, h2, c2)
        out.append([sum(p.output_proj[r, j] * h2[j] for j in range(H2)) for r in range(p.vocab_size)])
    return np.array(out)


class TestMeanPool:
    def test_values(self):
        np.testing.assert_array_equal(mean_pool([[1.0, 3.0], [3.0, 5.0]]), [2.0, 4.0])

    def test_single_frame(self):
        f = np.array([0.1, -7.25, 3e-9])
        out = mean_pool([f])
        np.testing.assert_array_equal(out, f)

    def test_permutation_bit_exact(self):
        rng = make_rng(3)
        frames = rng.standard_normal((5, 7)) * 10 ** rng.uniform(-3, 3, (5, 7))
        ref = mean_pool(frames)
        for perm in itertools.permutations(range(5)):
            assert mean_pool(frames[list(perm)]).tobytes() == ref.tobytes()

    def test_errors(self):
        with pytest.raises(ValueError):
            mean_pool(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            mean_pool([[1.0, 2.0], [1.0]])


class TestParams:
    def test_layout(self):
        p = ModelParams(vocab_of(10), 6, 4)
        assert p.layer1.W_x.shape == (16, 16)
        assert p.layer2.W_x.shape == (16, 4)
        assert p.output_proj.shape == (10, 4)
        assert p.theta.size == sum(a.size for a in p.arrays.values())

    def test_views_into_theta(self):
        p = ModelParams(vocab_of(5), 2, 3)
        p.theta[:] = np.arange(p.theta.size)
        assert p.layer1.W_x[0, 0] == 0.0
        assert p.output_proj[-1, -1] == p.theta.size - 1

    def test_copy_independent(self):
        p, _ = tiny_model()
        q = p.copy()
        q.theta[0] += 1.0
        assert p.theta[0] != q.theta[0]


class TestStep:
    def test_zero_model_uniform(self):
        p = ModelParams(vocab_of(7), 3, 4)
        logits, s1, s2, _ = model_step(p, np.ones(3), 0, LstmState.zeros(4), LstmState.zeros(4))
        np.testing.assert_array_equal(logits, np.zeros(7))
        np.testing.assert_allclose(softmax(logits), np.full(7, 1 / 7), atol=1e-15)

    def test_constructed_argmax(self):
        p, v = tiny_model(1)
        _, _, s2, _ = model_step(p, v, 0, LstmState.zeros(5), LstmState.zeros(5))
        p.output_proj[:] = 0.0
        p.output_proj[6] = 100.0 * s2.h
        logits, _, _, _ = model_step(p, v, 0, LstmState.zeros(5), LstmState.zeros(5))
        assert int(np.argmax(logits)) == 6

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_matches_transcription(self, seed):
        p, v = tiny_model(seed)
        inputs = [0, 4, 7, 3]
        s1, s2 = LstmState.zeros(5), LstmState.zeros(5)
        ref = reference_logits(p, v, inputs)
        for t, w in enumerate(inputs):
            logits, s1, s2, _ = model_step(p, v, w, s1, s2)
            np.testing.assert_allclose(logits, ref[t], atol=1e-13)

    def test_bad_inputs(self):
        p, v = tiny_model()
        z = LstmState.zeros(5)
        with pytest.raises(ValueError):
            model_step(p, np.ones(3), 0, z, z)
        with pytest.raises(ValueError):
            model_step(p, v, 9, z, z)


class TestSequenceLoss:
    def test_zero_model(self):
        p = ModelParams(vocab_of(16), 4, 3)
        loss, _ = sequence_forward(p, np.ones(4), [5, 6, p.vocab.eos])
        assert loss == pytest.approx(3 * math.log(16), abs=1e-12)
        assert loss == pytest.approx(8.3178, abs=1e-4)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(1, 12), st.integers(4, 30), st.integers(0, 2**32 - 1))
    def test_zero_model_any_length(self, n, vocab_size, seed):
        p = ModelParams(vocab_of(vocab_size), 3, 2)
        rng = make_rng(seed)
        toks = [int(t) for t in rng.integers(2, vocab_size, n - 1) if t != 1] + [1]
        loss, _ = sequence_forward(p, rng.standard_normal(3), toks)
        assert abs(loss - len(toks) * math.log(vocab_size)) <= 1e-9

    @pytest.mark.parametrize("seed", range(5))
    def test_transcription_and_sign(self, seed):
        p, v = tiny_model(seed)
        toks = [3, 8, 5, 1]
        loss, cache = sequence_forward(p, v, toks)
        ref = reference_logits(p, v, [0] + toks[:-1])
        expected = 0.0
        for t, w in enumerate(toks):
            z = ref[t]
            expected -= z[w] - math.log(sum(math.exp(x) for x in z))
        assert loss == pytest.approx(expected, abs=1e-12)
        assert loss >= 0
        for probs in cache.probs:
            assert abs(probs.sum() - 1.0) <= 1e-12

    def test_malformed(self):
        p, v = tiny_model()
        for bad in ([], [3, 4], [1, 3, 1], [3, 99, 1]):
            with pytest.raises(ValueError):
                sequence_forward(p, v, bad)


class TestSequenceGradient:
    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_finite_differences(self, seed):
        p, v, toks = random_instance(seed, visual_dim=8, hidden=12, vocab_size=15, length=5)
        analytic, numeric = gradient_pair(p, v, toks)
        assert relative_error(analytic, numeric).max() < 1e-4

    def test_bias_free_finite_differences(self):
        rng = make_rng(4)
        p = init_model(vocab_of(7), 3, 4, rng, 0.5, biases=False)
        analytic, numeric = gradient_pair(p, rng.standard_normal(3), [3, 4, 1])
        assert relative_error(analytic, numeric).max() < 1e-4

    def test_zero_model_single_step(self):
        p = ModelParams(vocab_of(6), 3, 2)
        _, cache = sequence_forward(p, np.ones(3), [p.vocab.eos])
        g = sequence_backward(p, cache)
        # every hidden state is zero, so nothing receives gradient
        assert not g.theta.any()

    def test_duplicate_pair_doubles_gradient(self):
        p, v = tiny_model(2)
        toks = [4, 6, 1]
        g1 = sequence_backward(p, sequence_forward(p, v, toks)[1])
        g2 = sequence_backward(p, sequence_forward(p, v, toks)[1], grads=g1.copy())
        np.testing.assert_allclose(g2.theta, 2 * g1.theta, rtol=1e-15, atol=0)

    def test_mismatch(self):
        p, v = tiny_model()
        _, cache = sequence_forward(p, v, [3, 1])
        with pytest.raises(ValueError):
            sequence_backward(p, cache, tokens=[4, 1])
        with pytest.raises(ValueError):
            sequence_backward(p, cache, grads=ModelParams(vocab_of(5), 4, 5))


class TestGreedyDecode:
    def test_eos_first(self):
        p = ModelParams(vocab_of(6), 2, 3)
        p.output_proj[:] = 0.0
        # zero hidden states make every logit zero: the tie goes to index 0 (BOS)
        assert greedy_decode(p, np.zeros(2), 4) == [0, 0, 0, 0, 1]
        p2, v = tiny_model(0)
        _, _, s2, _ = model_step(p2, v, 0, LstmState.zeros(5), LstmState.zeros(5))
        p2.output_proj[:] = 0.0
        p2.output_proj[p2.vocab.eos] = 50.0 * s2.h
        assert greedy_decode(p2, v) == [p2.vocab.eos]

    @pytest.mark.parametrize("seed", range(6))
    def test_bounds_and_determinism(self, seed):
        p, v = tiny_model(seed, scale=1.5)
        for max_len in (1, 3, 8):
            out = greedy_decode(p, v, max_len)
            assert out == greedy_decode(p, v, max_len)
            assert len(out) <= max_len + 1
            assert out[-1] == p.vocab.eos and p.vocab.eos not in out[:-1]

    def test_feeds_back_argmax(self):
        p, v = tiny_model(3, scale=1.5)
        out = greedy_decode(p, v, 6)
        s1, s2 = LstmState.zeros(5), LstmState.zeros(5)
        prev = p.vocab.bos
        for w in out[:6]:  # a 7th token can only be the appended EOS
            logits, s1, s2, _ = model_step(p, v, prev, s1, s2)
            assert w == int(np.argmax(logits))
            prev = w

    def test_bad_max_len(self):
        p, v = tiny_model()
        with pytest.raises(ValueError):
            greedy_decode(p, v, 0)
