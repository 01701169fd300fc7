"""Synthetic two-domain corpus generator.

Builds a coarse-grained source tagging task and a fine-grained target task.
Every target entity type descends from one source type (its parent); its
surface forms are drawn either from the parent's vocabulary or, when a
mixture table is given, from several source vocabularies with configured
weights, so the source model's score distributions carry structure beyond
the parent identity. Each label also has context-cue words, and distractor
words appear as plain O tokens. Labels are cue/vocab-determined, so the
source task is learnable to high accuracy by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .data import TaggedCorpus


@dataclass
class SynthSpec:
    seed: int = 0
    source_labels: tuple[str, ...] = ("L1", "L2")
    target_parents: dict = field(
        default_factory=lambda: {"L1A": "L1", "L1B": "L1", "L2A": "L2", "L2B": "L2"}
    )
    # optional: per target label, weights over source labels for entity words;
    # defaults to all mass on the parent
    target_mixtures: dict | None = None
    entity_words_per_label: int = 6
    entity_word_noise: float = 0.0  # chance an entity word is drawn from a sibling's pool
    cross_parent_noise: float = 0.0  # chance an entity word comes from another parent's pool
    ambiguous_words: int = 0  # shared entity words usable by every label, disambiguated by cues
    ambiguous_prob: float = 0.0  # chance an entity surface comes from the shared pool
    cue_words_per_label: int = 2
    cue_prob: float = 0.9
    cue_placement: str = "adjacent"  # "adjacent" | "far" (>= 2 tokens from the entity)
    # "label": one cue word determines the full label.
    # "split": an adjacent cue carries the within-parent subtype (shared across
    # parents) and a far cue carries the parent, so the two halves of the label
    # travel through different channels.
    cue_scheme: str = "label"
    filler_vocab_size: int = 30
    distractor_words: int = 6
    distractor_prob: float = 0.15
    sentence_length: tuple[int, int] = (5, 10)
    entities_per_sentence: tuple[int, int] = (1, 2)
    entity_length: tuple[int, int] = (1, 2)
    source_sentences: int = 300
    source_test_sentences: int = 100
    target_train_sentences: int = 150
    target_test_sentences: int = 200

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        obj = json.loads(text)
        spec = cls()
        for key, value in obj.items():
            if not hasattr(spec, key):
                raise ValueError(f"unknown synth spec field: {key}")
            current = getattr(spec, key)
            if isinstance(current, tuple):
                value = tuple(value)
            setattr(spec, key, value)
        return spec

    def mixture(self, label: str) -> dict[str, float]:
        if self.target_mixtures and label in self.target_mixtures:
            mix = self.target_mixtures[label]
            total = sum(mix.values())
            return {s: w / total for s, w in mix.items()}
        return {self.target_parents[label]: 1.0}


@dataclass(frozen=True)
class SynthTask:
    source_train: TaggedCorpus
    source_test: TaggedCorpus
    target_train: TaggedCorpus
    target_test: TaggedCorpus
    spec: SynthSpec


def _source_vocab(spec: SynthSpec) -> dict[str, list[str]]:
    return {
        label: [f"{label.lower()}_e{i}" for i in range(spec.entity_words_per_label)]
        for label in spec.source_labels
    }


def _cue_vocab(spec: SynthSpec) -> dict[str, list[str]]:
    cues = {}
    for label in list(spec.source_labels) + sorted(spec.target_parents):
        cues[label] = [f"{label.lower()}_cue{i}" for i in range(spec.cue_words_per_label)]
    if spec.cue_scheme == "split":
        for label, parent in spec.target_parents.items():
            subtype = label[len(parent):] if label.startswith(parent) else label
            cues[f"sub:{label}"] = [
                f"sub{subtype.lower()}_cue{i}" for i in range(spec.cue_words_per_label)
            ]
            cues[f"par:{label}"] = [
                f"{parent.lower()}_cue{i}" for i in range(spec.cue_words_per_label)
            ]
    return cues


def _siblings(spec: SynthSpec, label: str) -> list[str]:
    parent = spec.target_parents[label]
    return [t for t, p in spec.target_parents.items() if p == parent and t != label]


def _make_sentence(rng, spec, labels, draw_word, cue_vocab, fillers, distractors, noisy=True):
    n = int(rng.integers(spec.sentence_length[0], spec.sentence_length[1] + 1))
    tokens = [str(rng.choice(fillers)) for _ in range(n)]
    tags = ["O"] * n
    n_ent = int(rng.integers(spec.entities_per_sentence[0], spec.entities_per_sentence[1] + 1))
    free = list(range(n))
    for _ in range(n_ent):
        if len(free) < 3:
            break
        label = str(rng.choice(labels))
        word_label = label
        if noisy and label in spec.target_parents:
            roll = rng.random()
            sibs = _siblings(spec, label)
            others = [t for t in spec.target_parents if spec.target_parents[t] != spec.target_parents[label]]
            if sibs and roll < spec.entity_word_noise:
                word_label = str(rng.choice(sibs))
            elif others and roll < spec.entity_word_noise + spec.cross_parent_noise:
                word_label = str(rng.choice(others))
        ambiguous = spec.ambiguous_words > 0 and rng.random() < spec.ambiguous_prob
        length = int(rng.integers(spec.entity_length[0], spec.entity_length[1] + 1))
        pos = int(rng.choice([p for p in free if p + length <= n])) if free else 0
        span = [p for p in range(pos, pos + length) if p in free]
        if len(span) < length:
            continue
        for j, p in enumerate(span):
            if ambiguous:
                tokens[p] = f"amb{int(rng.integers(spec.ambiguous_words))}"
            else:
                tokens[p] = draw_word(word_label, rng)
            tags[p] = ("B-" if j == 0 else "I-") + label
            free.remove(p)
        if spec.cue_scheme == "split" and label in spec.target_parents:
            # subtype cue sits next to the entity; parent cue sits far away
            if pos - 1 in free:
                tokens[pos - 1] = str(rng.choice(cue_vocab[f"sub:{label}"]))
                free.remove(pos - 1)
            if rng.random() < spec.cue_prob:
                slots = [p for p in free if p < pos - 2 or p > span[-1] + 2]
                if slots:
                    cue_pos = int(rng.choice(slots))
                    tokens[cue_pos] = str(rng.choice(cue_vocab[f"par:{label}"]))
                    free.remove(cue_pos)
        # ambiguous surfaces are only resolvable through the cue, so force it
        elif ambiguous or rng.random() < spec.cue_prob:
            if spec.cue_placement == "far":
                slots = [p for p in free if p < pos - 2 or p > span[-1] + 2]
            else:
                slots = [pos - 1] if pos - 1 in free else []
            if slots:
                cue_pos = int(rng.choice(slots))
                tokens[cue_pos] = str(rng.choice(cue_vocab[label]))
                free.remove(cue_pos)
    for p in list(free):
        if rng.random() < spec.distractor_prob and distractors:
            tokens[p] = str(rng.choice(distractors))
    return tuple(tokens), tuple(tags)


def generate(spec: SynthSpec) -> SynthTask:
    rng = np.random.default_rng(spec.seed)
    target_labels = sorted(spec.target_parents)
    source_vocab = _source_vocab(spec)
    cue_vocab = _cue_vocab(spec)
    fillers = [f"w{i}" for i in range(spec.filler_vocab_size)]
    distractors = [f"dx{i}" for i in range(spec.distractor_words)]

    def draw_word(label, rng):
        if label in source_vocab:
            return str(rng.choice(source_vocab[label]))
        mix = spec.mixture(label)
        sources = sorted(mix)
        weights = np.array([mix[s] for s in sources])
        src = sources[int(rng.choice(len(sources), p=weights))]
        return str(rng.choice(source_vocab[src]))

    def corpus(labels, count, noisy=True):
        sentences = tuple(
            _make_sentence(rng, spec, labels, draw_word, cue_vocab, fillers, distractors, noisy)
            for _ in range(count)
        )
        return TaggedCorpus(sentences)

    # label noise afflicts training data only; test sets stay clean
    return SynthTask(
        source_train=corpus(list(spec.source_labels), spec.source_sentences),
        source_test=corpus(list(spec.source_labels), spec.source_test_sentences, noisy=False),
        target_train=corpus(target_labels, spec.target_train_sentences),
        target_test=corpus(target_labels, spec.target_test_sentences, noisy=False),
        spec=spec,
    )


def write_task(task: SynthTask, out_dir: str):
    import os

    os.makedirs(out_dir, exist_ok=True)
    for name in ("source_train", "source_test", "target_train", "target_test"):
        with open(os.path.join(out_dir, f"{name}.conll"), "w", encoding="utf-8") as fh:
            fh.write(getattr(task, name).to_conll())
