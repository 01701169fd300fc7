"""Label-semantics fusion network and its losses.

Token embeddings come from either a trainable toy encoder (embedding table
plus one window-3 mixing layer with residual) or a file of frozen per-token
vectors. Label-guided attention extracts one component per entity type,
a 2-layer GCN propagates the components over the source label graph, and
token-guided attention fuses them back into the token stream. Heads: a
per-token tag classifier (cross-entropy) and a sentence-level multi-label
entity-presence head (binary cross-entropy).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .labelgraph import LabelGraph

UNK = "<unk>"


class InputError(ValueError):
    pass


@dataclass
class ModelParams:
    """All trainable parameters. Tensors are float64 with requires_grad set."""

    d_h: int
    d_p: int
    n_types: int
    n_tags: int
    encoder_mode: str  # "toy" | "file"
    embed: Tensor | None = None          # vocab x d_h (toy mode)
    mix_left: Tensor | None = None       # d_h x d_h
    mix_center: Tensor | None = None
    mix_right: Tensor | None = None
    mix_bias: Tensor | None = None       # 1 x d_h
    label_reps: Tensor | None = None     # n_types x d_p
    proj_w: Tensor | None = None         # d_h x d_p
    proj_b: Tensor | None = None         # 1 x d_p
    out_w: Tensor | None = None          # d_p x d_h
    out_b: Tensor | None = None          # 1 x d_h
    gcn_w1: Tensor | None = None         # d_p x d_p
    gcn_w2: Tensor | None = None
    cls_w: Tensor | None = None          # d_h x n_tags
    cls_b: Tensor | None = None          # 1 x n_tags
    aux_w: Tensor | None = None          # d_h x n_types
    aux_b: Tensor | None = None          # 1 x n_types

    _ENCODER = ("embed", "mix_left", "mix_center", "mix_right", "mix_bias")
    _FUSION = (
        "label_reps", "proj_w", "proj_b", "out_w", "out_b",
        "gcn_w1", "gcn_w2", "cls_w", "cls_b", "aux_w", "aux_b",
    )

    def named_tensors(self) -> list[tuple[str, Tensor]]:
        out = []
        for name in self._ENCODER + self._FUSION:
            t = getattr(self, name)
            if t is not None:
                out.append((name, t))
        return out

    def trainable(self) -> list[Tensor]:
        return [t for _, t in self.named_tensors() if t.requires_grad]


def _uniform(rng: np.random.Generator, shape, scale: float, trainable=True) -> Tensor:
    return Tensor(rng.uniform(-scale, scale, size=shape), requires_grad=trainable)


def init_encoder_params(params: ModelParams, rng: np.random.Generator, vocab_size: int):
    d_h = params.d_h
    params.embed = _uniform(rng, (vocab_size, d_h), 0.1)
    params.mix_left = _uniform(rng, (d_h, d_h), 1.0 / np.sqrt(d_h))
    params.mix_center = _uniform(rng, (d_h, d_h), 1.0 / np.sqrt(d_h))
    params.mix_right = _uniform(rng, (d_h, d_h), 1.0 / np.sqrt(d_h))
    params.mix_bias = Tensor(np.zeros((1, d_h)), requires_grad=True)


def init_fusion_params(params: ModelParams, rng: np.random.Generator):
    d_h, d_p = params.d_h, params.d_p
    params.label_reps = _uniform(rng, (params.n_types, d_p), 0.1)
    params.proj_w = _uniform(rng, (d_h, d_p), 1.0 / np.sqrt(d_h))
    params.proj_b = Tensor(np.zeros((1, d_p)), requires_grad=True)
    params.out_w = _uniform(rng, (d_p, d_h), 1.0 / np.sqrt(d_p))
    params.out_b = Tensor(np.zeros((1, d_h)), requires_grad=True)
    params.gcn_w1 = _uniform(rng, (d_p, d_p), 1.0 / np.sqrt(d_p))
    params.gcn_w2 = _uniform(rng, (d_p, d_p), 1.0 / np.sqrt(d_p))
    params.cls_w = _uniform(rng, (d_h, params.n_tags), 1.0 / np.sqrt(d_h))
    params.cls_b = Tensor(np.zeros((1, params.n_tags)), requires_grad=True)
    params.aux_w = _uniform(rng, (d_h, params.n_types), 1.0 / np.sqrt(d_h))
    params.aux_b = Tensor(np.zeros((1, params.n_types)), requires_grad=True)


class Vocab:
    """Token-to-id mapping with a reserved UNK slot at index 0."""

    def __init__(self, tokens=()):
        self.itos: list[str] = [UNK]
        self.stoi: dict[str, int] = {UNK: 0}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def ids(self, tokens: list[str]) -> np.ndarray:
        return np.array([self.stoi.get(t, 0) for t in tokens], dtype=np.intp)

    def __len__(self):
        return len(self.itos)


def encode_toy(token_ids: np.ndarray, params: ModelParams) -> Tensor:
    """Embedding lookup plus one window-3 mixing layer with residual."""
    if len(token_ids) == 0:
        raise InputError("empty sentence")
    e = ad.rows_select(params.embed, token_ids)
    mixed = (
        ad.matmul(ad.shift_rows(e, 1), params.mix_left)
        + ad.matmul(e, params.mix_center)
        + ad.matmul(ad.shift_rows(e, -1), params.mix_right)
        + params.mix_bias
    )
    return e + ad.relu(mixed)


class EmbeddingFile:
    """Frozen per-sentence embeddings loaded from JSON Lines.

    Each line is {"tokens": [...], "vectors": [[...], ...]}; all vectors must
    share one dimension. Sentences are keyed by their token tuple.
    """

    def __init__(self, path: str):
        self.table: dict[tuple[str, ...], np.ndarray] = {}
        self.dim: int | None = None
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                vecs = np.asarray(obj["vectors"], dtype=np.float64)
                if vecs.ndim != 2 or vecs.shape[0] != len(obj["tokens"]):
                    raise InputError(f"line {lineno}: one vector per token required")
                if self.dim is None:
                    self.dim = vecs.shape[1]
                elif vecs.shape[1] != self.dim:
                    raise InputError(f"line {lineno}: inconsistent embedding dim")
                self.table[tuple(obj["tokens"])] = vecs

    def lookup(self, tokens: list[str]) -> np.ndarray:
        key = tuple(tokens)
        if key not in self.table:
            raise InputError(f"no stored embedding for sentence {key!r}")
        return self.table[key]


class FusionTrace(NamedTuple):
    q: Tensor        # n_s x d_p
    alpha: Tensor    # n_types x n_s
    u: Tensor        # n_types x d_p
    u_prime: Tensor  # n_types x d_p
    beta: Tensor     # n_s x n_types
    h_prime: Tensor  # n_s x d_h


def label_attention(h: Tensor, params: ModelParams):
    """Label-guided attention: per entity type, a softmax over tokens."""
    q = ad.matmul(h, params.proj_w) + params.proj_b
    scores = ad.matmul(params.label_reps, ad.transpose(q))  # n_types x n_s
    alpha = ad.softmax_rows(scores)
    u = ad.matmul(alpha, q)
    return q, alpha, u


def gcn_propagate(u: Tensor, graph: LabelGraph, params: ModelParams) -> Tensor:
    """Two GCN layers over the (self-looped, normalized) graph adjacency."""
    if graph.n != params.n_types:
        raise InputError("graph labels do not align with label components")
    a_hat = Tensor(graph.adjacency())
    hidden = ad.relu(ad.matmul(ad.matmul(a_hat, u), params.gcn_w1))
    return ad.matmul(ad.matmul(a_hat, hidden), params.gcn_w2)


def token_fusion(h: Tensor, q: Tensor, u_prime: Tensor, params: ModelParams):
    """Token-guided fusion: residual add of attention-weighted components."""
    scores = ad.matmul(q, ad.transpose(u_prime))  # n_s x n_types
    beta = ad.softmax_rows(scores)
    mix = ad.matmul(beta, u_prime)
    h_prime = h + ad.matmul(mix, params.out_w) + params.out_b
    return beta, h_prime


def fusion_forward(h: Tensor, graph: LabelGraph, params: ModelParams) -> FusionTrace:
    q, alpha, u = label_attention(h, params)
    u_prime = gcn_propagate(u, graph, params)
    beta, h_prime = token_fusion(h, q, u_prime, params)
    return FusionTrace(q, alpha, u, u_prime, beta, h_prime)


def tag_logits(h_prime: Tensor, params: ModelParams) -> Tensor:
    return ad.matmul(h_prime, params.cls_w) + params.cls_b


def classification_loss_from_logits(logits: Tensor, gold_tag_ids) -> Tensor:
    """Mean token-level cross-entropy of precomputed tag logits."""
    gold_tag_ids = np.asarray(gold_tag_ids, dtype=np.intp)
    if np.any(gold_tag_ids < 0) or np.any(gold_tag_ids >= logits.data.shape[1]):
        raise InputError("gold tag id outside tag set")
    logp = ad.log_softmax_rows(logits)
    return -ad.pick(logp, gold_tag_ids).sum() / float(len(gold_tag_ids))


def classification_loss(h_prime: Tensor, gold_tag_ids, params: ModelParams) -> Tensor:
    """Mean token-level cross-entropy of the tag head."""
    return classification_loss_from_logits(tag_logits(h_prime, params), gold_tag_ids)


def auxiliary_loss(h_prime: Tensor, present: np.ndarray, params: ModelParams) -> Tensor:
    """Sentence-level multi-label BCE on mean-pooled fused embeddings.

    ``present`` is the multi-hot vector of entity types in the sentence.
    """
    present = np.asarray(present, dtype=np.float64).reshape(1, -1)
    n_s = h_prime.data.shape[0]
    pooled = h_prime.sum(axis=0, keepdims=True) / float(n_s)
    z = ad.matmul(pooled, params.aux_w) + params.aux_b
    # BCE with logits: softplus(z) - z*y, averaged over types
    loss = ad.softplus(z) - z * Tensor(present)
    return loss.sum() / float(present.size)
