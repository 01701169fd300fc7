"""Synthetic two-domain corpus generator."""

import os

import numpy as np
import pytest

from labeltransfer.data import entity_counts, extract_spans, parse_conll
from labeltransfer.synth import SynthSpec, generate, write_task


def test_generate_deterministic():
    a = generate(SynthSpec(seed=5))
    b = generate(SynthSpec(seed=5))
    assert a.source_train.sentences == b.source_train.sentences
    assert a.target_test.sentences == b.target_test.sentences


def test_generate_seed_sensitivity():
    a = generate(SynthSpec(seed=5))
    b = generate(SynthSpec(seed=6))
    assert a.source_train.sentences != b.source_train.sentences


def test_label_sets():
    task = generate(SynthSpec(seed=0))
    assert task.source_train.label_set == ("L1", "L2")
    assert task.target_train.label_set == ("L1A", "L1B", "L2A", "L2B")


def test_corpus_sizes():
    spec = SynthSpec(seed=0, source_sentences=17, source_test_sentences=5,
                     target_train_sentences=9, target_test_sentences=11)
    task = generate(spec)
    assert len(task.source_train.sentences) == 17
    assert len(task.source_test.sentences) == 5
    assert len(task.target_train.sentences) == 9
    assert len(task.target_test.sentences) == 11


def test_generated_tags_are_valid_bio():
    task = generate(SynthSpec(seed=1))
    for corpus in (task.source_train, task.target_train, task.target_test):
        text = corpus.to_conll()
        reparsed = parse_conll(text)
        assert reparsed.repairs == 0
        assert reparsed.sentences == corpus.sentences


def test_every_target_type_appears():
    task = generate(SynthSpec(seed=2))
    counts = entity_counts(task.target_train)
    assert set(counts) == {"L1A", "L1B", "L2A", "L2B"}
    assert all(c > 0 for c in counts.values())


def test_entity_length_bounds():
    spec = SynthSpec(seed=3, entity_length=(1, 1))
    task = generate(spec)
    for span in extract_spans(task.target_train):
        assert span.end - span.start == 1
    spec2 = SynthSpec(seed=3, entity_length=(2, 3))
    lengths = {s.end - s.start for s in extract_spans(generate(spec2).target_train)}
    assert lengths <= {2, 3}


def test_mixture_normalization_and_default():
    spec = SynthSpec(seed=0, target_mixtures={"L1A": {"L1": 3.0, "L2": 1.0}})
    assert spec.mixture("L1A") == {"L1": 0.75, "L2": 0.25}
    assert spec.mixture("L2B") == {"L2": 1.0}


def test_split_cue_scheme_places_subtype_cue_adjacent():
    spec = SynthSpec(seed=4, cue_scheme="split", cue_prob=1.0,
                     sentence_length=(8, 12), entity_length=(1, 1),
                     entities_per_sentence=(1, 1))
    task = generate(spec)
    seen_sub = 0
    for si, (tokens, tags) in enumerate(task.target_train.sentences):
        for span in extract_spans(task.target_train):
            if span.sentence_index != si or span.start == 0:
                continue
            prev = tokens[span.start - 1]
            if prev.startswith("sub"):
                seen_sub += 1
                subtype = span.entity_type[-1].lower()
                assert prev.startswith(f"sub{subtype}_cue")
    assert seen_sub > 50  # adjacent subtype cues are the norm under cue_prob=1


def test_from_json_round_trip_and_unknown_field():
    spec = SynthSpec.from_json('{"seed": 9, "sentence_length": [6, 8]}')
    assert spec.seed == 9 and spec.sentence_length == (6, 8)
    with pytest.raises(ValueError):
        SynthSpec.from_json('{"not_a_field": 1}')


def test_write_task_round_trip(tmp_path):
    task = generate(SynthSpec(seed=0, source_sentences=5, source_test_sentences=2,
                              target_train_sentences=3, target_test_sentences=2))
    write_task(task, str(tmp_path))
    for name in ("source_train", "source_test", "target_train", "target_test"):
        path = tmp_path / f"{name}.conll"
        assert path.exists()
        reparsed = parse_conll(path.read_text())
        assert reparsed.sentences == getattr(task, name).sentences
    assert len(os.listdir(tmp_path)) == 4
