"""Pretrain on still images, then fine-tune on a small video set.

Image captions name a subject and an object ("a dog with a ball") but no
verb. Video captions add the action ("a dog is kicking a ball"). With only
twenty training clips, a model trained from scratch has trouble tying feature
directions to nouns. A model initialised from the image checkpoint already
knows the nouns and only has to pick up the verbs and the new sentence frame.

    python3 demos/04_transfer.py [seed]
"""

import sys

import numpy as np

from videodesc.data import SyntheticSpec, split, synth_generate
from videodesc.evaluation import PosLexicon, evaluate
from videodesc.training import TrainConfig, finetune, train

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0


def corpus(domain, n, stream):
    spec = SyntheticSpec(domain=domain, noise_sigma=0.1, captions_per_item=3)
    return synth_generate(spec, np.random.default_rng([seed, stream]), n)


images = corpus("image", 200, 10)
videos = split(corpus("video", 40, 20), (0.5, 0.25, 0.25), np.random.default_rng([seed, 30]))
print("image caption:", images.items[0].captions[0])
print("video caption:", videos.items[0].captions[0])

base, _ = train(images, TrainConfig(learning_rate=0.1, epochs=20, seed=seed, log_every=0))
cfg = TrainConfig(learning_rate=0.1, epochs=120, seed=seed, finetune_lr_factor=0.5, log_every=0)
scratch, rs = train(videos, cfg)
tuned, rf = finetune(base, videos, cfg)

lex = PosLexicon.from_synthetic(SyntheticSpec())
for name, ckpt, rep in (("scratch", scratch, rs), ("fine-tuned", tuned, rf)):
    ev = evaluate(ckpt.params, videos.subset("test"), lex)
    s, v, o = ev.svo_any_valid
    print(f"{name:<10} lr {rep.learning_rate:.3g}  val loss/word {rep.val_loss[-1]:.3f}  "
          f"test BLEU-4 {ev.bleu4:.3f}  SVO {s:.0f}/{v:.0f}/{o:.0f}%")
    for item_id, text in ev.sentences[:3]:
        print(f"    {item_id}: {text}")
