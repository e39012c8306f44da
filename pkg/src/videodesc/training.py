"""Per-example SGD, checkpoint files and image-to-video fine-tuning."""

import ast
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .data import Vocabulary, build_vocabulary, mean_pool
from .model import ModelParams, init_model, sequence_backward, sequence_forward
from .numerics import make_rng, uniform_init

log = logging.getLogger(__name__)

MAGIC = "SEQCAP-CKPT"
FORMAT_VERSION = 1


class TrainingError(RuntimeError):
    """Training diverged or was given unusable data."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt or inconsistent."""


class VersionMismatchError(CheckpointError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    seed: int = 0
    grad_clip: float | None = 5.0
    init_scale: float = 0.08
    finetune_lr_factor: float = 0.1
    log_every: int = 1
    hidden_dim: int = 32
    biases: bool = True

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")
        if not 0 < self.finetune_lr_factor <= 1:
            raise ValueError("finetune_lr_factor must lie in (0, 1]")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be positive")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)  # mean NLL per word, per epoch
    val_loss: list = field(default_factory=list)    # nan when there is no val split
    learning_rate: float = 0.0                      # effective rate actually applied
    epoch_seconds: list = field(default_factory=list, compare=False)


@dataclass
class Checkpoint:
    params: ModelParams
    metadata: dict = field(default_factory=dict)  # str -> str

    @property
    def vocab(self):
        return self.params.vocab

    def __eq__(self, other):
        return (
            isinstance(other, Checkpoint)
            and self.params.vocab == other.params.vocab
            and self.params.same_layout(other.params)
            and self.params.visual_dim == other.params.visual_dim
            and np.array_equal(self.params.theta, other.params.theta)
            and self.metadata == other.metadata
        )


# ---------------------------------------------------------------------------
# SGD
# ---------------------------------------------------------------------------

def clip_gradient(grad, clip):
    """Return the flat gradient, rescaled to L2 norm ``clip`` if it is longer."""
    g = grad.theta
    if clip is None:
        return g
    norm = float(np.sqrt(np.dot(g, g)))
    if norm > clip:
        return g * (clip / norm)
    return g


def sgd_step(p, grad, lr, clip=None):
    """theta <- theta - lr * clip(grad), applied in place; returns ``p``."""
    if not p.same_layout(grad):
        raise ValueError("gradient does not match the parameter layout")
    if not np.all(np.isfinite(grad.theta)):
        raise TrainingError("non-finite gradient")
    g = clip_gradient(grad, clip)
    p.theta -= lr * g
    return p


def _pairs(items, vocab):
    """(pooled feature, encoded caption) for every caption of every item."""
    out = []
    for it in items:
        v = mean_pool(it.frames)
        for cap in it.captions:
            out.append((v, vocab.encode(cap)))
    return out


def mean_word_loss(p, pairs):
    """Summed NLL over ``pairs`` divided by the number of predicted words."""
    total, words = 0.0, 0
    for v, toks in pairs:
        loss, _ = sequence_forward(p, v, toks)
        total += float(loss)
        words += len(toks)
    return total / words if words else float("nan")


def _run_sgd(p, d, cfg, lr):
    # separate stream from the init draws so either can change independently
    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    train = _pairs(d.subset("train"), p.vocab)
    val = _pairs(d.subset("val"), p.vocab)
    if not train:
        raise TrainingError("training split is empty")
    report = TrainReport(learning_rate=lr)
    grad = p.zeros_like()
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        total, words = 0.0, 0
        for k in shuffle_rng.permutation(len(train)):
            v, toks = train[k]
            loss, cache = sequence_forward(p, v, toks)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}")
            grad.theta[:] = 0.0
            sequence_backward(p, cache, grads=grad)
            sgd_step(p, grad, lr, cfg.grad_clip)
            total += float(loss)
            words += len(toks)
        report.train_loss.append(total / words)
        report.val_loss.append(mean_word_loss(p, val))
        report.epoch_seconds.append(time.perf_counter() - start)
        if cfg.log_every and epoch % cfg.log_every == 0:
            log.info("epoch %d  train %.4f  val %.4f", epoch,
                     report.train_loss[-1], report.val_loss[-1])
    return report


def _metadata(cfg, report, extra=None):
    meta = {
        "epochs_completed": str(len(report.train_loss)),
        "final_loss": repr(report.train_loss[-1]),
        "learning_rate": repr(report.learning_rate),
    }
    for k, v in asdict(cfg).items():
        meta[f"config.{k}"] = repr(v)
    meta.update(extra or {})
    return meta


def train(d, cfg, init=None):
    """Fit a model to the train split of ``d`` by per-example SGD.

    ``init`` is None for a fresh model (vocabulary built from the training
    captions) or a Checkpoint to continue from.
    """
    items = d.subset("train")
    if not items:
        raise TrainingError("training split is empty")
    if init is None:
        vocab = build_vocabulary(d.captions("train"))
        p = init_model(vocab, d.visual_dim, cfg.hidden_dim, make_rng(cfg.seed),
                       cfg.init_scale, cfg.biases)
    else:
        p = init.params.copy()
        if p.visual_dim != d.visual_dim:
            raise TrainingError(f"checkpoint expects visual_dim {p.visual_dim}, data has {d.visual_dim}")
    report = _run_sgd(p, d, cfg, cfg.learning_rate)
    return Checkpoint(p, _metadata(cfg, report)), report


# ---------------------------------------------------------------------------
# Transfer
# ---------------------------------------------------------------------------

def transfer_params(base, vocab, rng, scale=0.08):
    """Re-index ``base`` onto ``vocab`` (a superset of its words).

    Word-dependent weights (the one-hot input columns of layer 1 and the rows
    of the output projection) move to their new indices unchanged; words new
    to ``vocab`` get fresh uniform draws. Everything else is copied.
    Returns ``(params, fresh_words)``.
    """
    missing = [w for w in base.vocab.words if w not in vocab]
    if missing:
        raise ValueError(f"target vocabulary lacks base words: {missing[:5]}")
    h1, h2 = base.hidden_dims
    p = ModelParams(vocab, base.visual_dim, h1, h2, base.biases)
    vd = base.visual_dim
    for name, _ in base.layout:
        if name not in ("layer1.W_x", "output_proj"):
            p.arrays[name][...] = base.arrays[name]
    p.layer1.W_x[:, :vd] = base.layer1.W_x[:, :vd]

    fresh = [w for w in vocab.words if w not in base.vocab]
    for w in vocab.words:
        new = vocab.index(w)
        if w in base.vocab:
            old = base.vocab.index(w)
            p.layer1.W_x[:, vd + new] = base.layer1.W_x[:, vd + old]
            p.output_proj[new] = base.output_proj[old]
        else:
            p.layer1.W_x[:, vd + new] = uniform_init(rng, 4 * h1, 1, scale)[:, 0]
            p.output_proj[new] = uniform_init(rng, 1, h2, scale)[0]
    return p, fresh


def finetune(base, d, cfg):
    """Initialise from ``base`` on the merged vocabulary, then train at a reduced rate."""
    if base.params.visual_dim != d.visual_dim:
        raise TrainingError(
            f"base model expects visual_dim {base.params.visual_dim}, data has {d.visual_dim}")
    vocab = build_vocabulary(base.vocab.words[3:], d.captions("train"))
    p, fresh = transfer_params(base.params, vocab, make_rng(cfg.seed), cfg.init_scale)
    lr = cfg.learning_rate * cfg.finetune_lr_factor
    log.info("finetune: %d shared words, %d new, lr %.4g", len(vocab) - len(fresh), len(fresh), lr)
    report = _run_sgd(p, d, cfg, lr)
    meta = _metadata(cfg, report, {"finetuned_from_vocab": str(len(base.vocab)),
                                   "fresh_words": str(len(fresh))})
    return Checkpoint(p, meta), report


# ---------------------------------------------------------------------------
# Checkpoint files
# ---------------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def _named_matrices(p):
    for layer in ("layer1", "layer2"):
        lp = getattr(p, layer)
        for name, arr in lp.named_blocks():
            yield f"{layer}.{name}", arr.reshape(arr.shape[0], -1)
    yield "output_proj", p.output_proj


def save_checkpoint(c, path):
    p = c.params
    h1, h2 = p.hidden_dims
    lines = [f"{MAGIC} v{FORMAT_VERSION}",
             f"META visual_dim {p.visual_dim}",
             f"META hidden1 {h1}",
             f"META hidden2 {h2}",
             f"META biases {int(p.biases)}"]
    for k in sorted(c.metadata):
        lines.append(f"INFO {k} {c.metadata[k]}")
    lines.append("VOCAB")
    lines.extend(p.vocab.words)
    lines.append("END")
    for name, m in _named_matrices(p):
        lines.append(f"MATRIX {name} {m.shape[0]} {m.shape[1]}")
        lines.extend(" ".join(_fmt(x) for x in row) for row in m)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CheckpointError(f"{path}: empty file")
    magic = lines[0].split()
    if len(magic) != 2 or magic[0] != MAGIC or not magic[1].startswith("v"):
        raise CheckpointError(f"{path}: not a checkpoint (bad magic line)")
    if magic[1] != f"v{FORMAT_VERSION}":
        raise VersionMismatchError(f"{path}: format {magic[1]}, this reader supports v{FORMAT_VERSION}")

    pos = 1
    header, metadata = {}, {}

    def fail(msg):
        raise CheckpointError(f"{path}:{pos + 1}: {msg}")

    while pos < len(lines) and lines[pos] != "VOCAB":
        kind, _, rest = lines[pos].partition(" ")
        key, _, value = rest.partition(" ")
        if kind == "META":
            header[key] = value
        elif kind == "INFO":
            metadata[key] = value
        else:
            fail(f"unexpected line {lines[pos]!r}")
        pos += 1
    try:
        visual_dim = int(header["visual_dim"])
        h1, h2 = int(header["hidden1"]), int(header["hidden2"])
        biases = bool(int(header["biases"]))
    except (KeyError, ValueError):
        fail("missing or invalid META header")
    if pos >= len(lines):
        fail("missing VOCAB section")
    pos += 1
    words = []
    while pos < len(lines) and lines[pos] != "END":
        words.append(lines[pos])
        pos += 1
    if pos >= len(lines):
        fail("unterminated VOCAB section")
    pos += 1
    if tuple(words[:3]) != Vocabulary([]).words:
        fail("vocabulary does not start with the reserved tokens")
    p = ModelParams(Vocabulary(words[3:]), visual_dim, h1, h2, biases)

    expected = dict(_named_matrices(p))
    seen = set()
    while pos < len(lines):
        head = lines[pos].split()
        if len(head) != 4 or head[0] != "MATRIX":
            fail(f"expected MATRIX header, got {lines[pos]!r}")
        name, rows, cols = head[1], int(head[2]), int(head[3])
        if name not in expected or name in seen:
            fail(f"unexpected matrix {name!r}")
        target = expected[name]
        if target.shape != (rows, cols):
            fail(f"matrix {name} is {rows}x{cols}, model needs {target.shape[0]}x{target.shape[1]}")
        if pos + rows >= len(lines):
            fail(f"truncated matrix {name}")
        try:
            block = np.array([[float(x) for x in lines[pos + 1 + r].split()] for r in range(rows)])
        except (ValueError, IndexError):
            fail(f"bad values in matrix {name}")
        if block.shape != (rows, cols):
            fail(f"matrix {name} has ragged or truncated rows")
        target[...] = block
        seen.add(name)
        pos += 1 + rows
    missing = set(expected) - seen
    if missing:
        raise CheckpointError(f"{path}: truncated, missing matrices {sorted(missing)}")
    return Checkpoint(p, metadata)


def config_from_metadata(meta, **overrides):
    """Rebuild the TrainConfig echoed into a checkpoint's metadata."""
    values = {}
    for f in fields(TrainConfig):
        key = f"config.{f.name}"
        if key in meta:
            values[f.name] = ast.literal_eval(meta[key])
    return replace(TrainConfig(**values), **overrides)
