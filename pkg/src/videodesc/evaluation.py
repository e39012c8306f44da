"""Corpus BLEU-4, subject/verb/object accuracy, and the decode-and-score pipeline."""

import math
from collections import Counter
from dataclasses import dataclass, field

from .data import DataError, gerund, mean_pool, tokenize
from .model import DEFAULT_MAX_LEN, greedy_decode

NOUN, VERB, OTHER = "noun", "verb", "other"


# ---------------------------------------------------------------------------
# BLEU
# ---------------------------------------------------------------------------

def _ngrams(tokens, n):
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hypotheses, references):
    """Corpus-level BLEU with uniform 1-4 gram weights and no smoothing.

    hypotheses: list of token lists.
    references: list of reference sets, each a non-empty list of token lists.

    Clipped n-gram matches and hypothesis n-gram counts are summed over the
    whole corpus before taking precisions. The brevity penalty uses, per
    segment, the reference length closest to the hypothesis length (the
    shorter one on ties). Returns 0.0 if any precision is zero.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses but {len(references)} reference sets")
    matches = [0] * 4
    totals = [0] * 4
    hyp_len = ref_len = 0
    for hyp, refs in zip(hypotheses, references):
        if not refs:
            raise ValueError("every hypothesis needs at least one reference")
        hyp = list(hyp)
        hyp_len += len(hyp)
        ref_len += min((abs(len(r) - len(hyp)), len(r)) for r in refs)[1]
        for n in range(1, 5):
            counts = _ngrams(hyp, n)
            max_ref = Counter()
            for r in refs:
                for g, c in _ngrams(list(r), n).items():
                    max_ref[g] = max(max_ref[g], c)
            matches[n - 1] += sum(min(c, max_ref[g]) for g, c in counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    if hyp_len == 0 or min(matches) == 0:
        return 0.0
    log_p = sum(math.log(m / t) for m, t in zip(matches, totals)) / 4
    bp = 1.0 if hyp_len >= ref_len else math.exp(1 - ref_len / hyp_len)
    return bp * math.exp(log_p)


# ---------------------------------------------------------------------------
# Subject / verb / object
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SvoTriple:
    subject: str | None = None
    verb: str | None = None
    object: str | None = None

    def slots(self):
        return (self.subject, self.verb, self.object)


@dataclass
class PosLexicon:
    """Closed-class tagger: word -> noun/verb/other, plus verb lemmas."""

    tags: dict = field(default_factory=dict)
    lemmas: dict = field(default_factory=dict)

    def tag(self, word):
        return self.tags.get(word, OTHER)

    def lemma(self, word):
        return self.lemmas.get(word, word)

    @classmethod
    def from_synthetic(cls, spec):
        tags, lemmas = {}, {}
        for w in (*spec.subjects, *spec.objects):
            tags[w] = NOUN
        for v in spec.verbs:
            for form in (v, gerund(v)):
                tags[form] = VERB
                lemmas[form] = v
        return cls(tags, lemmas)

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for w in sorted(self.tags):
                line = f"{w}\t{self.tags[w]}"
                if w in self.lemmas:
                    line += f"\t{self.lemmas[w]}"
                fh.write(line + "\n")

    @classmethod
    def load(cls, path):
        """Read ``word<TAB>noun|verb|other[<TAB>lemma]`` lines."""
        tags, lemmas = {}, {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) not in (2, 3) or parts[1] not in (NOUN, VERB, OTHER):
                    raise DataError(f"{path}:{lineno}: expected word<TAB>noun|verb|other[<TAB>lemma]")
                tags[parts[0]] = parts[1]
                if len(parts) == 3:
                    lemmas[parts[0]] = parts[2]
        return cls(tags, lemmas)


def extract_svo(tokens, lex):
    """First noun, then the first verb after it, then the first noun after that."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    subj = verb = obj = None
    k = 0
    n = len(tokens)
    while k < n and lex.tag(tokens[k]) != NOUN:
        k += 1
    if k < n:
        subj = tokens[k]
        k += 1
        while k < n and lex.tag(tokens[k]) != VERB:
            k += 1
        if k < n:
            verb = lex.lemma(tokens[k])
            k += 1
            while k < n and lex.tag(tokens[k]) != NOUN:
                k += 1
            if k < n:
                obj = tokens[k]
    return SvoTriple(subj, verb, obj)


def _percent(correct, counted):
    return 100.0 * correct / counted if counted else 0.0


def svo_accuracy_any_valid(preds, refs):
    """Per slot: correct if the prediction equals that slot of any reference.

    Items where no reference fills a slot are left out of that slot's
    denominator.
    """
    if len(preds) != len(refs):
        raise ValueError("prediction and reference counts differ")
    out = []
    for slot in range(3):
        correct = counted = 0
        for pred, triples in zip(preds, refs):
            valid = {t.slots()[slot] for t in triples} - {None}
            if not valid:
                continue
            counted += 1
            correct += pred.slots()[slot] in valid
        out.append(_percent(correct, counted))
    return tuple(out)


def slot_mode(triples, slot):
    counts = Counter(t.slots()[slot] for t in triples if t.slots()[slot] is not None)
    if not counts:
        return None
    best = max(counts.values())
    return min(w for w, c in counts.items() if c == best)


def svo_accuracy_most_frequent(preds, refs):
    """Per slot: correct only if the prediction equals the reference mode."""
    if len(preds) != len(refs):
        raise ValueError("prediction and reference counts differ")
    out = []
    for slot in range(3):
        correct = counted = 0
        for pred, triples in zip(preds, refs):
            mode = slot_mode(triples, slot)
            if mode is None:
                continue
            counted += 1
            correct += pred.slots()[slot] == mode
        out.append(_percent(correct, counted))
    return tuple(out)


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    bleu4: float
    svo_any_valid: tuple
    svo_most_frequent: tuple
    sentences: list  # (item id, decoded caption)
    meteor: float | None = None  # not computed

    def write(self, path):
        lines = [f"METRIC bleu4 {self.bleu4!r}"]
        for name, triple in (("svo_any_valid", self.svo_any_valid),
                             ("svo_most_frequent", self.svo_most_frequent)):
            for slot, value in zip("svo", triple):
                lines.append(f"METRIC {name}_{slot} {value!r}")
        lines.append("METRIC meteor unavailable")
        lines.extend(f"SENT {item_id} {text}" for item_id, text in self.sentences)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")


def decode_items(p, items, max_len=DEFAULT_MAX_LEN):
    """Greedy-decode every item; returns a list of word lists."""
    return [p.vocab.decode(greedy_decode(p, mean_pool(it.frames), max_len)) for it in items]


def evaluate(p, items, lex, max_len=DEFAULT_MAX_LEN):
    if not items:
        raise ValueError("nothing to evaluate: empty split")
    hyps = decode_items(p, items, max_len)
    refs = [[tokenize(c) for c in it.captions] for it in items]
    preds = [extract_svo(h, lex) for h in hyps]
    ref_svo = [[extract_svo(r, lex) for r in rs] for rs in refs]
    return EvalReport(
        bleu4=bleu4(hyps, refs),
        svo_any_valid=svo_accuracy_any_valid(preds, ref_svo),
        svo_most_frequent=svo_accuracy_most_frequent(preds, ref_svo),
        sentences=[(it.id, " ".join(h)) for it, h in zip(items, hyps)],
    )
