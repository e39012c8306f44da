"""How the caption metrics behave on hand-made sentences.

BLEU-4 is computed over the whole corpus, so a single long rambling
hypothesis can drag everything down. With no smoothing, a corpus that shares
no 4-gram with its references scores exactly zero. SVO accuracy looks only at
the subject, verb and object that a closed lexicon finds in each sentence.

    python3 demos/03_metrics.py
"""

from videodesc.data import SyntheticSpec, tokenize
from videodesc.evaluation import (PosLexicon, bleu4, extract_svo, svo_accuracy_any_valid,
                                  svo_accuracy_most_frequent)

lex = PosLexicon.from_synthetic(SyntheticSpec())

refs = [
    ["a cat is playing a toy", "the cat is playing a toy", "a cat is holding a toy"],
    ["a man is kicking a ball", "a man is kicking the ball", "a boy is kicking a ball"],
]
for label, hyps in [
    ("exact", ["a cat is playing a toy", "a man is kicking a ball"]),
    ("wrong verb", ["a cat is eating a toy", "a man is throwing a ball"]),
    ("short", ["a cat", "a man"]),
    ("looping", ["a cat is playing a toy", "a man is a man is a man is a man is a man"]),
]:
    h = [tokenize(s) for s in hyps]
    r = [[tokenize(s) for s in rs] for rs in refs]
    preds = [extract_svo(s, lex) for s in h]
    ref_svo = [[extract_svo(s, lex) for s in rs] for rs in r]
    any_valid = svo_accuracy_any_valid(preds, ref_svo)
    most_freq = svo_accuracy_most_frequent(preds, ref_svo)
    print(f"{label:<11} BLEU-4 {bleu4(h, r):.3f}   SVO any-valid {any_valid}   most-frequent {most_freq}")

print(extract_svo("a cat is playing with a toy", lex))
