"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from labeltransfer.data import TaggedCorpus, parse_conll
from labeltransfer.labelgraph import LabelGraph, build_graph


def random_prob_rows(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    """n random probability vectors of the given dimension (Dirichlet)."""
    return rng.dirichlet(np.ones(dim), size=n)


def random_graph(rng: np.random.Generator, n: int, dim: int | None = None,
                 threshold: float = 1.5) -> LabelGraph:
    """Non-degenerate random label graph with n nodes."""
    dim = dim or n + 1
    while True:
        rows = random_prob_rows(rng, n, dim)
        g = build_graph(rows, [f"L{i}" for i in range(n)], threshold)
        if not g.degenerate:
            return g


class StubTagger:
    """Fixed-logits tagger exposing the probabilistic-tagger protocol."""

    def __init__(self, type_labels, logits_by_token):
        self.type_labels = tuple(type_labels)
        self._logits = dict(logits_by_token)

    def type_logits(self, tokens):
        return np.stack([np.asarray(self._logits[t], dtype=np.float64) for t in tokens])


@pytest.fixture
def tiny_corpus() -> TaggedCorpus:
    text = (
        "the O\n"
        "acl B-CONF\n"
        "meeting I-CONF\n"
        "in O\n"
        "dublin B-LOC\n"
        "\n"
        "emnlp B-CONF\n"
        "visited O\n"
        "paris B-LOC\n"
        "today O\n"
    )
    return parse_conll(text)
