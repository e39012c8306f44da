"""Vocabulary, caption encoding, dataset files, splitting and the synthetic corpus."""

import string
from dataclasses import dataclass, field

import numpy as np

from .numerics import DTYPE

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"
RESERVED = (BOS, EOS, UNK)

# 1200 / 100 / 670 videos
DEFAULT_FRACTIONS = (1200 / 1970, 100 / 1970, 670 / 1970)


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


def tokenize(caption):
    """Lowercase, split on whitespace, strip punctuation from token edges."""
    tokens = []
    for raw in caption.lower().split():
        tok = raw.strip(string.punctuation)
        if tok:
            tokens.append(tok)
    return tokens


class Vocabulary:
    """Word <-> index map. Reserved tokens take indices 0-2, then sorted words."""

    def __init__(self, words):
        words = [w for w in words if w not in RESERVED]
        if len(set(words)) != len(words):
            raise ValueError("vocabulary words must be unique")
        self.words = tuple(RESERVED) + tuple(words)
        self._index = {w: i for i, w in enumerate(self.words)}

    bos = property(lambda self: 0)
    eos = property(lambda self: 1)
    unk = property(lambda self: 2)

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.words == other.words

    def __repr__(self):
        return f"Vocabulary({len(self)} entries)"

    def index(self, word):
        return self._index.get(word, self.unk)

    def word(self, idx):
        return self.words[idx]

    def encode(self, caption):
        return [self.index(t) for t in tokenize(caption)] + [self.eos]

    def decode(self, tokens):
        """Index sequence -> words, stopping at (and dropping) EOS."""
        words = []
        for t in tokens:
            if t == self.eos:
                break
            words.append(self.words[t])
        return words


def build_vocabulary(*corpora):
    """Union of all caption words across one or more caption collections."""
    words = set()
    n = 0
    for corpus in corpora:
        for caption in corpus:
            n += 1
            words.update(tokenize(caption))
    if n == 0:
        raise DataError("cannot build a vocabulary from zero captions")
    return Vocabulary(sorted(words - set(RESERVED)))


def encode(vocab, caption):
    return vocab.encode(caption)


@dataclass
class CaptionedItem:
    id: str
    frames: np.ndarray  # (n_frames, dim)
    captions: list
    latent_svo: tuple | None = None

    def __post_init__(self):
        self.frames = np.atleast_2d(np.asarray(self.frames, dtype=DTYPE))
        if self.frames.shape[0] < 1:
            raise DataError(f"item {self.id!r} has no frames")
        if not self.captions:
            raise DataError(f"item {self.id!r} has no captions")

    @property
    def dim(self):
        return self.frames.shape[1]


@dataclass
class Dataset:
    items: list
    assignment: dict = field(default_factory=dict)  # id -> "train" | "val" | "test"

    def __post_init__(self):
        ids = [it.id for it in self.items]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate item ids")
        for it in self.items:
            self.assignment.setdefault(it.id, "train")

    def subset(self, name):
        return [it for it in self.items if self.assignment[it.id] == name]

    @property
    def visual_dim(self):
        return self.items[0].dim

    def captions(self, name=None):
        items = self.items if name is None else self.subset(name)
        return [c for it in items for c in it.captions]


def mean_pool(frames):
    """Elementwise mean over frames.

    Each column is summed in sorted order, so any permutation of the frames
    gives a bit-identical result.
    """
    frames = np.asarray(frames, dtype=DTYPE)
    if frames.ndim == 1:
        frames = frames[None, :]
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise DataError("mean_pool needs a non-empty list of equal-length frames")
    if frames.shape[0] == 1:
        return frames[0].copy()
    return np.sort(frames, axis=0).sum(axis=0) / frames.shape[0]


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def _data_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line


def read_features(path):
    """Parse ``id<TAB>dim<TAB>frame_count<TAB>v1,v2,...`` records."""
    feats = {}
    dim = None
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 4:
            raise DataError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        item_id, d, n, values = parts
        try:
            d, n = int(d), int(n)
            vals = [float(v) for v in values.split(",")]
        except ValueError as exc:
            raise DataError(f"{path}:{lineno}: {exc}") from None
        if d < 1 or n < 1:
            raise DataError(f"{path}:{lineno}: dim and frame_count must be positive")
        if len(vals) != d * n:
            raise DataError(f"{path}:{lineno}: expected {d}x{n}={d * n} values, got {len(vals)}")
        if not all(np.isfinite(vals)):
            raise DataError(f"{path}:{lineno}: non-finite feature value")
        if dim is None:
            dim = d
        elif d != dim:
            raise DataError(f"{path}:{lineno}: dimension {d} differs from earlier {dim}")
        if item_id in feats:
            raise DataError(f"{path}:{lineno}: duplicate id {item_id!r}")
        feats[item_id] = np.array(vals, dtype=DTYPE).reshape(n, d)
    return feats


def read_captions(path):
    """Parse ``id<TAB>caption`` records; repeated ids accumulate references."""
    caps = {}
    for lineno, line in _data_lines(path):
        item_id, sep, text = line.partition("\t")
        if not sep:
            raise DataError(f"{path}:{lineno}: expected id<TAB>caption")
        caps.setdefault(item_id, []).append(text)
    return caps


def load_dataset(features_path, captions_path):
    feats = read_features(features_path)
    caps = read_captions(captions_path)
    only_f = sorted(set(feats) - set(caps))
    only_c = sorted(set(caps) - set(feats))
    if only_f:
        raise DataError(f"ids without captions in {captions_path}: {', '.join(only_f[:5])}")
    if only_c:
        raise DataError(f"ids without features in {features_path}: {', '.join(only_c[:5])}")
    return Dataset([CaptionedItem(i, feats[i], caps[i]) for i in feats])


def _fmt(x):
    return format(float(x), ".17g")


def write_features(items, path):
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            n, d = it.frames.shape
            vals = ",".join(_fmt(x) for x in it.frames.ravel())
            fh.write(f"{it.id}\t{d}\t{n}\t{vals}\n")


def write_captions(items, path):
    with open(path, "w", encoding="utf-8") as fh:
        for it in items:
            for c in it.captions:
                fh.write(f"{it.id}\t{c}\n")


def save_dataset(d, features_path, captions_path):
    write_features(d.items, features_path)
    write_captions(d.items, captions_path)


# ---------------------------------------------------------------------------
# Synthetic scene corpus
# ---------------------------------------------------------------------------

SUBJECTS = ("baby", "boy", "cat", "dog", "girl", "man", "monkey", "woman")
VERBS = ("carry", "climb", "drink", "eat", "hold", "kick", "play", "pull", "push", "throw")
OBJECTS = ("ball", "bottle", "box", "car", "guitar", "ladder", "rope", "toy")

VIDEO_TEMPLATES = (
    "a {s} is {v} a {o}",
    "a {s} is {v} the {o}",
    "the {s} is {v} a {o}",
)
IMAGE_TEMPLATES = (
    "a {s} with a {o}",
    "a {s} and the {o}",
    "the {s} near a {o}",
)


def gerund(verb):
    return verb + "ing"


@dataclass
class SyntheticSpec:
    subjects: tuple = SUBJECTS
    verbs: tuple = VERBS
    objects: tuple = OBJECTS
    visual_dim: int = 16
    noise_sigma: float = 0.0
    captions_per_item: int = 2
    domain: str = "video"
    templates: tuple | None = None
    frames: tuple = (1, 5)
    prototype_seed: int = 20150101

    def __post_init__(self):
        words = set(self.subjects) | set(self.verbs) | set(self.objects)
        if not (self.subjects and self.verbs and self.objects):
            raise ValueError("subject, verb and object sets must be non-empty")
        if words & set(RESERVED):
            raise ValueError("word sets overlap reserved tokens")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.domain not in ("video", "image"):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.templates is None:
            self.templates = VIDEO_TEMPLATES if self.domain == "video" else IMAGE_TEMPLATES
        lo, hi = self.frames
        if not 1 <= lo <= hi:
            raise ValueError("frames must be a (min, max) range with min >= 1")

    def prototypes(self):
        """Fixed unit-variance random vector per (role, word).

        Drawn from ``prototype_seed`` only, so corpora in different domains
        share the same visual vocabulary.
        """
        rng = np.random.default_rng(self.prototype_seed)
        scale = 1.0 / np.sqrt(3.0)
        protos = {}
        for role, words in (("s", self.subjects), ("v", self.verbs), ("o", self.objects)):
            for w in words:
                protos[role, w] = rng.standard_normal(self.visual_dim) * scale
        return protos

    def render(self, template, s, v, o):
        return template.format(s=s, v=gerund(v), o=o)


def synth_generate(spec, rng, n_items, prefix=None):
    """Sample ``n_items`` captioned scenes with known (subject, verb, object)."""
    if n_items < 1:
        raise ValueError("n_items must be at least 1")
    protos = spec.prototypes()
    prefix = prefix if prefix is not None else spec.domain
    lo, hi = spec.frames
    items = []
    for k in range(n_items):
        s = spec.subjects[rng.integers(len(spec.subjects))]
        v = spec.verbs[rng.integers(len(spec.verbs))]
        o = spec.objects[rng.integers(len(spec.objects))]
        clean = protos["s", s] + protos["v", v] + protos["o", o]
        n_frames = int(rng.integers(lo, hi + 1))
        frames = np.tile(clean, (n_frames, 1))
        if spec.noise_sigma > 0:
            frames = frames + rng.standard_normal(frames.shape) * spec.noise_sigma
        caps = [
            spec.render(spec.templates[rng.integers(len(spec.templates))], s, v, o)
            for _ in range(spec.captions_per_item)
        ]
        items.append(CaptionedItem(f"{prefix}{k:05d}", frames, caps, (s, v, o)))
    return Dataset(items)


def split(d, fractions=DEFAULT_FRACTIONS, rng=None):
    """Seeded shuffle, then contiguous train/val/test blocks sized by ``fractions``."""
    if len(d.items) < 3:
        raise DataError("need at least 3 items to split")
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three positive numbers summing to 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    n = len(d.items)
    order = rng.permutation(n)
    n_train = int(round(n * fractions[0]))
    n_val = int(round(n * fractions[1]))
    assignment = {}
    for rank, idx in enumerate(order):
        name = "train" if rank < n_train else "val" if rank < n_train + n_val else "test"
        assignment[d.items[idx].id] = name
    return Dataset(list(d.items), assignment)
