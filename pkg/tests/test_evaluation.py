import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from videodesc.data import CaptionedItem, DataError, SyntheticSpec, Vocabulary, synth_generate, tokenize
from videodesc.evaluation import (EvalReport, PosLexicon, SvoTriple, bleu4, evaluate, extract_svo,
                                  slot_mode, svo_accuracy_any_valid, svo_accuracy_most_frequent)
from videodesc.model import ModelParams
from videodesc.numerics import make_rng

LEX = PosLexicon.from_synthetic(SyntheticSpec())

tokens = st.lists(st.sampled_from("abcde"), min_size=0, max_size=8)
corpora = st.lists(st.tuples(tokens, st.lists(tokens, min_size=1, max_size=3)), min_size=1, max_size=6)


def reference_bleu(hyps, refs):
    """Independent transcription of corpus BLEU-4 using explicit n-gram lists."""
    num, den = [0] * 4, [0] * 4
    c = r = 0
    for h, rs in zip(hyps, refs):
        c += len(h)
        r += len(min(rs, key=lambda x: (abs(len(x) - len(h)), len(x))))
        for n in range(1, 5):
            grams = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            for g in set(grams):
                cap = max([tuple(x[i:i + n]) for i in range(len(x) - n + 1)].count(g) for x in rs)
                num[n - 1] += min(grams.count(g), cap)
            den[n - 1] += len(grams)
    if c == 0 or 0 in num:
        return 0.0
    bp = 1.0 if c >= r else math.exp(1 - r / c)
    return bp * math.prod(m / d for m, d in zip(num, den)) ** 0.25


class TestBleu:
    def test_identity(self):
        hyps = [["a", "cat", "runs", "fast", "now"], ["the", "dog", "is", "here"]]
        assert bleu4(hyps, [[h] for h in hyps]) == 1.0

    def test_one_substitution(self):
        b = bleu4([["a", "b", "c", "d", "e"]], [[["a", "b", "c", "d", "f"]]])
        assert b == pytest.approx(0.2 ** 0.25, abs=1e-12)
        assert b == pytest.approx(0.66874, abs=1e-5)

    def test_clipping(self):
        assert bleu4([["a", "a", "a"]], [[["a", "b"]]]) == 0.0

    def test_brevity_penalty(self):
        # 4-word hypothesis against an 8-word reference: every n-gram matches, BP = e^(1 - 2)
        ref = "a b c d e f g h".split()
        assert bleu4([ref[:4]], [[ref]]) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_closest_reference_tie_prefers_shorter(self):
        hyp = "a b c d e".split()
        refs = ["a b c d".split(), "a b c d e f".split()]
        # both references are one word away; the shorter one gives r = 4 < c, so BP = 1
        assert bleu4([hyp], [refs]) == pytest.approx(reference_bleu([hyp], [refs]), abs=1e-15)
        assert bleu4([hyp], [refs]) > 0.7

    def test_errors(self):
        with pytest.raises(ValueError):
            bleu4([["a"]], [])
        with pytest.raises(ValueError):
            bleu4([["a"]], [[]])

    @settings(max_examples=200)
    @given(corpora)
    def test_matches_transcription(self, corpus):
        hyps, refs = [c[0] for c in corpus], [c[1] for c in corpus]
        assert bleu4(hyps, refs) == pytest.approx(reference_bleu(hyps, refs), abs=1e-12)

    @given(corpora, st.randoms(use_true_random=False))
    def test_permutation_invariant_and_bounded(self, corpus, rnd):
        hyps, refs = [c[0] for c in corpus], [c[1] for c in corpus]
        b = bleu4(hyps, refs)
        shuffled = list(corpus)
        rnd.shuffle(shuffled)
        assert bleu4([c[0] for c in shuffled], [c[1] for c in shuffled]) == pytest.approx(b, abs=1e-15)
        assert 0.0 <= b <= 1.0 + 1e-15


class TestExtract:
    def test_examples(self):
        assert extract_svo("a cat is playing with a toy", LEX) == SvoTriple("cat", "play", "toy")
        assert extract_svo("", LEX) == SvoTriple()
        assert extract_svo("a dog", LEX) == SvoTriple("dog")

    def test_verb_must_follow_subject(self):
        assert extract_svo("playing a dog", LEX) == SvoTriple("dog")
        assert extract_svo("a man is kicking", LEX) == SvoTriple("man", "kick")

    def test_template_grammar(self):
        d = synth_generate(SyntheticSpec(captions_per_item=3), make_rng(0), 200)
        for it in d.items:
            for c in it.captions:
                assert extract_svo(c, LEX).slots() == it.latent_svo

    def test_image_templates_leave_verb_empty(self):
        d = synth_generate(SyntheticSpec(domain="image"), make_rng(0), 50)
        for it in d.items:
            # the object slot is only searched after a verb, so it stays empty too
            for c in it.captions:
                assert extract_svo(c, LEX) == SvoTriple(it.latent_svo[0])

    @given(st.lists(st.sampled_from(sorted(LEX.tags) + ["a", "the", "is", "zzz"]), max_size=10))
    def test_total_and_in_lexicon(self, toks):
        t = extract_svo(toks, LEX)
        assert t == extract_svo(toks, LEX)
        assert t.subject is None or LEX.tag(t.subject) == "noun"
        assert t.object is None or LEX.tag(t.object) == "noun"
        assert t.verb is None or t.verb in SyntheticSpec().verbs
        if t.object is not None:
            assert t.verb is not None

    def test_lexicon_file_round_trip(self, tmp_path):
        LEX.save(tmp_path / "lex.tsv")
        assert PosLexicon.load(tmp_path / "lex.tsv") == LEX

    def test_lexicon_bad_line(self, tmp_path):
        (tmp_path / "lex.tsv").write_text("cat\tnoun\ndog\tanimal\n")
        with pytest.raises(DataError, match=":2"):
            PosLexicon.load(tmp_path / "lex.tsv")


triples = st.builds(SvoTriple, *[st.one_of(st.none(), st.sampled_from("xyz"))] * 3)


class TestSvoAccuracy:
    def test_identical(self):
        refs = [[SvoTriple("cat", "play", "toy"), SvoTriple("dog", "eat", "box")]]
        preds = [SvoTriple("dog", "eat", "box")]
        assert svo_accuracy_any_valid(preds, refs) == (100.0, 100.0, 100.0)
        same = [[SvoTriple("cat", "play", "toy")] * 3]
        assert svo_accuracy_most_frequent([SvoTriple("cat", "play", "toy")], same) == (100.0, 100.0, 100.0)

    def test_existential(self):
        refs = [[SvoTriple("a"), SvoTriple("b"), SvoTriple("c"), SvoTriple("d"), SvoTriple("e")]]
        s, _, _ = svo_accuracy_any_valid([SvoTriple("c")], refs)
        assert s == 100.0

    def test_mode(self):
        refs = [[SvoTriple("cat"), SvoTriple("cat"), SvoTriple("dog")]]
        assert svo_accuracy_most_frequent([SvoTriple("dog")], refs)[0] == 0.0
        assert svo_accuracy_any_valid([SvoTriple("dog")], refs)[0] == 100.0

    def test_mode_tie_is_lexicographic(self):
        assert slot_mode([SvoTriple("dog"), SvoTriple("cat")], 0) == "cat"

    def test_empty_slots_excluded(self):
        refs = [[SvoTriple("cat")], [SvoTriple("dog", "run")]]
        preds = [SvoTriple("cat"), SvoTriple("dog", "walk")]
        # only the second item has a verb reference; no item has an object
        assert svo_accuracy_any_valid(preds, refs) == (100.0, 0.0, 0.0)

    def test_count_mismatch(self):
        with pytest.raises(ValueError):
            svo_accuracy_any_valid([SvoTriple()], [])
        with pytest.raises(ValueError):
            svo_accuracy_most_frequent([], [[SvoTriple()]])

    @settings(max_examples=200)
    @given(st.lists(st.tuples(triples, st.lists(triples, min_size=1, max_size=5)), min_size=1, max_size=8))
    def test_any_valid_dominates(self, data):
        preds, refs = [d[0] for d in data], [d[1] for d in data]
        av = svo_accuracy_any_valid(preds, refs)
        mf = svo_accuracy_most_frequent(preds, refs)
        for a, m in zip(av, mf):
            assert 0.0 <= m <= a <= 100.0


class TestEvaluate:
    def items(self):
        return synth_generate(SyntheticSpec(visual_dim=4), make_rng(3), 5).items

    def eos_model(self):
        p = ModelParams(Vocabulary(tokenize(" ".join(SyntheticSpec().subjects))), 4, 3)
        p.layer2.b[8:12] = 5.0   # output gate open
        p.layer2.b[12:] = 3.0    # candidate on, so h2 is positive
        p.output_proj[p.vocab.eos] = 10.0
        return p

    def test_degenerate_eos_model(self):
        r = evaluate(self.eos_model(), self.items(), LEX)
        assert r.bleu4 == 0.0
        assert all(text == "" for _, text in r.sentences)
        assert r.svo_any_valid == (0.0, 0.0, 0.0)

    def test_deterministic(self):
        rng = make_rng(0)
        p = ModelParams(self.eos_model().vocab, 4, 3)
        p.theta[:] = rng.uniform(-1, 1, p.theta.size)
        items = self.items()
        assert evaluate(p, items, LEX) == evaluate(p, items, LEX)

    def test_empty(self):
        with pytest.raises(ValueError):
            evaluate(self.eos_model(), [], LEX)

    def test_report_file(self, tmp_path):
        r = EvalReport(0.5, (100.0, 50.0, 25.0), (100.0, 0.0, 0.0), [("v1", "a cat"), ("v2", "")])
        r.write(tmp_path / "r.txt")
        lines = (tmp_path / "r.txt").read_text().splitlines()
        assert lines[0] == "METRIC bleu4 0.5"
        assert "METRIC svo_any_valid_v 50.0" in lines
        assert "METRIC svo_most_frequent_s 100.0" in lines
        assert "METRIC meteor unavailable" in lines
        assert lines[-2:] == ["SENT v1 a cat", "SENT v2 "]

    def test_single_item_with_matching_caption(self):
        it = CaptionedItem("x", np.zeros((1, 4)), ["a cat is eating a toy"])
        r = evaluate(self.eos_model(), [it], LEX)
        assert r.svo_most_frequent == (0.0, 0.0, 0.0)
