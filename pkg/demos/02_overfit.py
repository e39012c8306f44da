"""Memorise ten noiseless clips.

A model that cannot overfit a tiny corpus has a bug. Each synthetic clip is
the sum of a subject, a verb and an object prototype, and carries two
captions. After a few hundred epochs the training loss approaches its floor,
which is above zero wherever an item's two captions differ, and greedy
decoding reproduces one of the references.

    python3 demos/02_overfit.py [epochs]
"""

import sys

from videodesc.data import SyntheticSpec, synth_generate, tokenize
from videodesc.evaluation import bleu4, decode_items
from videodesc.numerics import make_rng
from videodesc.training import TrainConfig, train

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 500
d = synth_generate(SyntheticSpec(noise_sigma=0.0, captions_per_item=2), make_rng(0), 10)
ckpt, report = train(d, TrainConfig(learning_rate=0.1, epochs=epochs, hidden_dim=32, log_every=0))

for epoch in sorted({1, 10, 50, 100, epochs} & set(range(1, epochs + 1))):
    print(f"epoch {epoch:4d}  loss/word {report.train_loss[epoch - 1]:.4f}")

hyps = decode_items(ckpt.params, d.items)
refs = [[tokenize(c) for c in it.captions] for it in d.items]
for it, h, r in zip(d.items, hyps, refs):
    mark = "=" if h in r else "x"
    print(f"  {mark} {' '.join(h):<28} refs: {' | '.join(it.captions)}")
print(f"BLEU-4 against the training references: {bleu4(hyps, refs):.3f}")
