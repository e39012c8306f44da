"""Command-line entry point: synth, train, finetune, generate, evaluate, gradcheck.

Exit status is 0 on success, 1 on usage errors and 2 on data or model errors.
"""

import argparse
import logging
import sys

from .data import (CaptionedItem, DataError, SyntheticSpec, load_dataset, read_features,
                   save_dataset, synth_generate, write_captions)
from .evaluation import PosLexicon, decode_items, evaluate
from .gradcheck import check_model_gradient
from .model import DEFAULT_MAX_LEN
from .numerics import make_rng
from .training import (CheckpointError, TrainConfig, TrainingError, finetune, load_checkpoint,
                       save_checkpoint, train)

log = logging.getLogger("videodesc")

EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _train_flags(p):
    p.add_argument("--features", required=True, help="features file (id, dim, frame_count, values)")
    p.add_argument("--captions", required=True, help="captions file (id, caption)")
    p.add_argument("--seed", type=int, default=0, help="seed for init, fresh rows and shuffling")
    p.add_argument("--lr", type=float, default=0.1, help="SGD learning rate (default 0.1)")
    p.add_argument("--epochs", type=int, default=10, help="passes over the training pairs")
    p.add_argument("--hidden", type=int, default=32, help="hidden units per LSTM layer")
    p.add_argument("--clip", type=float, default=5.0, help="global gradient-norm clip (default 5)")
    p.add_argument("--no-clip", action="store_true", help="disable gradient clipping")
    p.add_argument("--no-bias", action="store_true", help="drop the gate biases (bias-free cell)")
    p.add_argument("--init-scale", type=float, default=0.08, help="uniform init half-width")
    p.add_argument("--out-ckpt", required=True, help="where to write the checkpoint")
    p.add_argument("--report", help="optional per-epoch loss table")


def build_parser():
    parser = _Parser(prog="videodesc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic scene corpus")
    p.add_argument("--items", type=int, required=True, help="number of items")
    p.add_argument("--seed", type=int, default=0, help="sampling seed")
    p.add_argument("--visual-dim", type=int, default=16, help="feature dimension")
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise sigma per frame")
    p.add_argument("--domain", choices=("image", "video"), default="video",
                   help="video captions carry the verb, image captions omit it")
    p.add_argument("--captions-per-item", type=int, default=2, help="references per item")
    p.add_argument("--out-features", required=True, help="features file to write")
    p.add_argument("--out-captions", required=True, help="captions file to write")
    p.add_argument("--out-lexicon", help="also write the part-of-speech lexicon for evaluate")

    p = sub.add_parser("train", help="train a fresh model")
    _train_flags(p)

    p = sub.add_parser("finetune", help="continue from a checkpoint on new data at a reduced rate")
    p.add_argument("--base-ckpt", required=True, help="pretrained checkpoint")
    p.add_argument("--lr-factor", type=float, default=0.1, help="multiplier on --lr (default 0.1)")
    _train_flags(p)

    p = sub.add_parser("generate", help="greedy-decode a caption for every item")
    p.add_argument("--ckpt", required=True, help="checkpoint to decode with")
    p.add_argument("--features", required=True, help="features file")
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN, help="word limit per caption")
    p.add_argument("--out", required=True, help="captions file to write")

    p = sub.add_parser("evaluate", help="BLEU-4 and SVO accuracy against reference captions")
    p.add_argument("--ckpt", required=True, help="checkpoint to evaluate")
    p.add_argument("--features", required=True, help="features file")
    p.add_argument("--captions", required=True, help="reference captions file")
    p.add_argument("--lexicon", required=True, help="word<TAB>noun|verb|other[<TAB>lemma] file")
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN, help="word limit per caption")
    p.add_argument("--out", required=True, help="report file to write")

    p = sub.add_parser("gradcheck", help="compare BPTT gradients with central differences")
    p.add_argument("--seed", type=int, default=0, help="model and sequence seed")
    p.add_argument("--visual-dim", type=int, default=8, help="feature dimension")
    p.add_argument("--hidden", type=int, default=12, help="hidden units per layer")
    p.add_argument("--vocab", type=int, default=15, help="vocabulary size incl. reserved tokens")
    p.add_argument("--length", type=int, default=5, help="tokens in the test sentence incl. EOS")
    p.add_argument("--h", type=float, default=1e-5, help="finite-difference step")
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error allowed")
    return parser


def _config(args, **extra):
    return TrainConfig(
        learning_rate=args.lr, epochs=args.epochs, seed=args.seed,
        grad_clip=None if args.no_clip else args.clip, init_scale=args.init_scale,
        hidden_dim=args.hidden, biases=not args.no_bias, **extra)


def _write_report(report, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# effective learning rate {report.learning_rate!r}\n")
        fh.write("epoch\ttrain_loss\tval_loss\n")
        for k, (tr, va) in enumerate(zip(report.train_loss, report.val_loss), 1):
            fh.write(f"{k}\t{tr!r}\t{va!r}\n")


def cmd_synth(args):
    spec = SyntheticSpec(visual_dim=args.visual_dim, noise_sigma=args.noise,
                         captions_per_item=args.captions_per_item, domain=args.domain)
    d = synth_generate(spec, make_rng(args.seed), args.items)
    save_dataset(d, args.out_features, args.out_captions)
    if args.out_lexicon:
        PosLexicon.from_synthetic(spec).save(args.out_lexicon)
    log.info("wrote %d items", len(d.items))


def cmd_train(args):
    d = load_dataset(args.features, args.captions)
    ckpt, report = train(d, _config(args))
    save_checkpoint(ckpt, args.out_ckpt)
    if args.report:
        _write_report(report, args.report)
    print(f"final train loss per word {report.train_loss[-1]:.6f}")


def cmd_finetune(args):
    base = load_checkpoint(args.base_ckpt)
    d = load_dataset(args.features, args.captions)
    ckpt, report = finetune(base, d, _config(args, finetune_lr_factor=args.lr_factor))
    save_checkpoint(ckpt, args.out_ckpt)
    if args.report:
        _write_report(report, args.report)
    print(f"effective lr {report.learning_rate:g}; final train loss per word {report.train_loss[-1]:.6f}")


def cmd_generate(args):
    p = load_checkpoint(args.ckpt).params
    feats = read_features(args.features)
    items = [CaptionedItem(i, f, ["-"]) for i, f in feats.items()]
    _check_dim(p, items, args.features)
    hyps = decode_items(p, items, args.max_len)
    out = [CaptionedItem(it.id, it.frames, [" ".join(h)]) for it, h in zip(items, hyps)]
    write_captions(out, args.out)


def cmd_evaluate(args):
    p = load_checkpoint(args.ckpt).params
    d = load_dataset(args.features, args.captions)
    _check_dim(p, d.items, args.features)
    lex = PosLexicon.load(args.lexicon)
    report = evaluate(p, d.items, lex, args.max_len)
    report.write(args.out)
    s, v, o = report.svo_any_valid
    print(f"BLEU-4 {report.bleu4:.4f}  SVO any-valid S {s:.2f} V {v:.2f} O {o:.2f}")


def cmd_gradcheck(args):
    err = check_model_gradient(args.seed, args.visual_dim, args.hidden, args.vocab,
                               args.length, h=args.h)
    ok = err < args.tol
    print(f"max relative error {err:.3e} ({'ok' if ok else 'FAIL'}, tol {args.tol:g})")
    return 0 if ok else EXIT_DATA


def _check_dim(p, items, path):
    if items and items[0].dim != p.visual_dim:
        raise DataError(f"{path}: features have dimension {items[0].dim}, model expects {p.visual_dim}")


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "finetune": cmd_finetune,
    "generate": cmd_generate, "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return exc.code or 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args) or 0
    except (DataError, CheckpointError, TrainingError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:  # flag values rejected by a config or model constructor
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
