"""End-to-end orchestration: source training, graph freezing, fine-tuning.

The source model is a plain token tagger. Fine-tuning starts from its
encoder, adds the fusion network and fresh heads, and minimizes

    total = cls + lambda1 * aux + lambda2 * gw

per batch, where the graph-matching term compares the frozen source label
graph against a target graph rebuilt from the current batch predictions.
"""

from __future__ import annotations

import dataclasses
import io
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import fusion as fu
from .autodiff import Tensor
from .data import InputError, TaggedCorpus, extract_spans, micro_f1
from .gw import gromov_wasserstein_distances, gw_fixed_plan_loss
from .labelgraph import (
    LabelGraph,
    estimate_conditionals,
    entity_type,
    graph_from_table,
    target_graph_from_batch,
)

MAGIC = b"LTCK"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    temperature: float = 4.0
    edge_threshold: float = 1.5
    lambda1: float = 0.1
    lambda2: float = 0.01
    epsilon: float = 0.05
    inner_iter: int = 200
    outer_iter: int = 20
    gw_tol: float = 1e-6
    learning_rate: float = 0.05
    epochs: int = 40
    batch_size: int = 8
    d_h: int = 32
    d_p: int = 32
    seed: int = 0
    ablate_aux: bool = False
    ablate_gw: bool = False
    encoder_mode: str = "toy"  # "toy" | "file"
    embedding_file: str | None = None

    def __post_init__(self):
        if self.temperature <= 0 or self.edge_threshold <= 0:
            raise InputError("temperature and edge_threshold must be positive")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("loss weights must be nonnegative")
        if self.encoder_mode not in ("toy", "file"):
            raise InputError("encoder_mode must be 'toy' or 'file'")

    @classmethod
    def from_json(cls, text: str) -> "TrainConfig":
        obj = json.loads(text)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InputError(f"unknown config fields: {sorted(unknown)}")
        return cls(**obj)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)


def tags_for(labels) -> tuple[str, ...]:
    tags = ["O"]
    for label in labels:
        tags.extend((f"B-{label}", f"I-{label}"))
    return tuple(tags)


def _tag_groups(labels, tags) -> list[list[int]]:
    """Column indices of the B-/I- tags of each entity type, in label order."""
    index = {t: i for i, t in enumerate(tags)}
    return [[index[f"B-{l}"], index[f"I-{l}"]] for l in labels]


def _graph_to_meta(graph: LabelGraph) -> dict:
    return {
        "labels": list(graph.labels),
        "nodes": [list(map(float, row)) for row in graph.nodes],
        "raw_nodes": [list(map(float, row)) for row in graph.raw_nodes],
        "edges": [[i, j, float(w)] for (i, j), w in sorted(graph.edges.items())],
        "threshold": graph.threshold,
        "degenerate": graph.degenerate,
    }


def _graph_from_meta(obj: dict) -> LabelGraph:
    return LabelGraph(
        labels=tuple(obj["labels"]),
        nodes=np.asarray(obj["nodes"], dtype=np.float64),
        raw_nodes=np.asarray(obj["raw_nodes"], dtype=np.float64),
        edges={(i, j): w for i, j, w in obj["edges"]},
        threshold=obj["threshold"],
        degenerate=obj["degenerate"],
    )


class Model:
    """A checkpointable tagger: plain source tagger or label-fusion model."""

    def __init__(self, kind, params, vocab, labels, config, source_graph=None):
        self.kind = kind  # "source" | "fused"
        self.params: fu.ModelParams = params
        self.vocab: fu.Vocab = vocab
        self.labels: tuple[str, ...] = tuple(labels)
        self.tags: tuple[str, ...] = tags_for(self.labels)
        self.config: TrainConfig = config
        self.source_graph: LabelGraph | None = source_graph
        self._groups = _tag_groups(self.labels, self.tags)
        self._embeddings: fu.EmbeddingFile | None = None

    # -- forward ---------------------------------------------------------

    def encode(self, tokens) -> Tensor:
        if not tokens:
            raise InputError("empty sentence")
        if self.config.encoder_mode == "file":
            if self._embeddings is None:
                if not self.config.embedding_file:
                    raise InputError("encoder_mode='file' requires embedding_file")
                self._embeddings = fu.EmbeddingFile(self.config.embedding_file)
            return Tensor(self._embeddings.lookup(list(tokens)))
        return fu.encode_toy(self.vocab.ids(list(tokens)), self.params)

    def forward(self, tokens):
        """Returns (tag-logits tensor, fusion trace or None)."""
        h = self.encode(tokens)
        if self.kind == "source":
            return fu.tag_logits(h, self.params), None
        trace = fu.fusion_forward(h, self.source_graph, self.params)
        return fu.tag_logits(trace.h_prime, self.params), trace

    def tag_logits_array(self, tokens) -> np.ndarray:
        return self.forward(tokens)[0].data

    def predict_tags(self, tokens) -> list[str]:
        logits = self.tag_logits_array(tokens)
        return [self.tags[i] for i in logits.argmax(axis=1)]

    # probabilistic-tagger protocol used by label-graph estimation
    @property
    def type_labels(self) -> tuple[str, ...]:
        return self.labels

    def type_logits(self, tokens) -> np.ndarray:
        """Per-token entity-type logits: log-sum-exp over each type's B/I tags."""
        logits, _ = self.forward(tokens)
        return ad.logsumexp_cols(logits, self._groups).data

    def type_logits_tensor(self, tag_logit_tensor: Tensor) -> Tensor:
        return ad.logsumexp_cols(tag_logit_tensor, self._groups)

    # -- checkpoint I/O ----------------------------------------------------

    def save_bytes(self) -> bytes:
        meta = {
            "kind": self.kind,
            "labels": list(self.labels),
            "vocab": list(self.vocab.itos[1:]),  # UNK slot is implicit
            "config": dataclasses.asdict(self.config),
            "source_graph": _graph_to_meta(self.source_graph) if self.source_graph else None,
            "dims": {
                "d_h": self.params.d_h,
                "d_p": self.params.d_p,
                "n_types": self.params.n_types,
                "n_tags": self.params.n_tags,
            },
        }
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        buf = io.BytesIO()
        buf.write(MAGIC)
        buf.write(struct.pack("<B", FORMAT_VERSION))
        buf.write(struct.pack("<I", len(blob)))
        buf.write(blob)
        blocks = self.params.named_tensors()
        buf.write(struct.pack("<I", len(blocks)))
        for name, tensor in blocks:
            enc = name.encode("utf-8")
            buf.write(struct.pack("<H", len(enc)))
            buf.write(enc)
            buf.write(struct.pack("<B", tensor.data.ndim))
            for dim in tensor.data.shape:
                buf.write(struct.pack("<I", dim))
            buf.write(tensor.data.astype("<f8").tobytes())
        return buf.getvalue()

    def save(self, path: str):
        with open(path, "wb") as fh:
            fh.write(self.save_bytes())

    @classmethod
    def load_bytes(cls, raw: bytes) -> "Model":
        buf = io.BytesIO(raw)
        if buf.read(4) != MAGIC:
            raise InputError("not a checkpoint file")
        (version,) = struct.unpack("<B", buf.read(1))
        if version != FORMAT_VERSION:
            raise InputError(f"unsupported checkpoint version {version}")
        (mlen,) = struct.unpack("<I", buf.read(4))
        meta = json.loads(buf.read(mlen).decode("utf-8"))
        config = TrainConfig(**meta["config"])
        dims = meta["dims"]
        params = fu.ModelParams(
            d_h=dims["d_h"], d_p=dims["d_p"], n_types=dims["n_types"],
            n_tags=dims["n_tags"], encoder_mode=config.encoder_mode,
        )
        (nblocks,) = struct.unpack("<I", buf.read(4))
        for _ in range(nblocks):
            (nlen,) = struct.unpack("<H", buf.read(2))
            name = buf.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<B", buf.read(1))
            shape = tuple(struct.unpack("<I", buf.read(4))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(buf.read(8 * count), dtype="<f8").reshape(shape).copy()
            setattr(params, name, Tensor(data, requires_grad=True))
        vocab = fu.Vocab(meta["vocab"])
        graph = _graph_from_meta(meta["source_graph"]) if meta["source_graph"] else None
        return cls(meta["kind"], params, vocab, meta["labels"], config, source_graph=graph)

    @classmethod
    def load(cls, path: str) -> "Model":
        with open(path, "rb") as fh:
            return cls.load_bytes(fh.read())


def _sgd_step(params: fu.ModelParams, lr: float, clip: float = 5.0):
    tensors = [t for t in params.trainable() if t.grad is not None]
    norm = float(np.sqrt(sum(float(np.sum(t.grad * t.grad)) for t in tensors)))
    scale = clip / norm if clip and norm > clip else 1.0
    for tensor in tensors:
        tensor.data -= lr * scale * tensor.grad
        tensor.grad = None


def _zero_grads(params: fu.ModelParams):
    for tensor in params.trainable():
        tensor.grad = None


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_source(corpus: TaggedCorpus, config: TrainConfig) -> Model:
    """Train the source tagger (encoder + tag head, token cross-entropy only)."""
    if not corpus.sentences:
        raise InputError("empty corpus")
    labels = corpus.label_set
    tags = tags_for(labels)
    tag_index = {t: i for i, t in enumerate(tags)}
    vocab = fu.Vocab()
    for _, _, tok, _ in corpus.tokens():
        vocab.add(tok)
    rng = np.random.default_rng(config.seed)
    params = fu.ModelParams(
        d_h=config.d_h, d_p=config.d_p, n_types=len(labels),
        n_tags=len(tags), encoder_mode=config.encoder_mode,
    )
    if config.encoder_mode == "toy":
        fu.init_encoder_params(params, rng, len(vocab))
    params.cls_w = fu._uniform(rng, (config.d_h, len(tags)), 1.0 / np.sqrt(config.d_h))
    params.cls_b = Tensor(np.zeros((1, len(tags))), requires_grad=True)
    model = Model("source", params, vocab, labels, config)

    sentences = corpus.sentences
    for _ in range(config.epochs):
        for batch in _batches(len(sentences), config.batch_size, rng):
            _zero_grads(params)
            losses = []
            weights = []
            for si in batch:
                tokens, sent_tags = sentences[si]
                logits, _ = model.forward(tokens)
                ids = [tag_index[t] for t in sent_tags]
                losses.append(fu.classification_loss_from_logits(logits, ids))
                weights.append(len(tokens))
            total = sum(w for w in weights)
            loss = sum((w / total) * l for w, l in zip(weights, losses))
            loss.backward()
            _sgd_step(params, config.learning_rate)
    return model


def build_source_graph(f0: Model, corpus_t: TaggedCorpus, config: TrainConfig) -> LabelGraph:
    """Frozen source label graph: conditionals of f0 over target tokens."""
    labels = corpus_t.label_set
    if not labels:
        raise InputError("target corpus has no entity labels")
    table = estimate_conditionals(f0, corpus_t, config.temperature, list(labels))
    return graph_from_table(table, config.edge_threshold)


def _init_finetune_model(f0: Model, corpus_t: TaggedCorpus, config: TrainConfig) -> Model:
    labels = corpus_t.label_set
    tags = tags_for(labels)
    rng = np.random.default_rng(config.seed)
    vocab = fu.Vocab(f0.vocab.itos[1:])
    for _, _, tok, _ in corpus_t.tokens():
        vocab.add(tok)
    params = fu.ModelParams(
        d_h=config.d_h, d_p=config.d_p, n_types=len(labels),
        n_tags=len(tags), encoder_mode=config.encoder_mode,
    )
    if config.encoder_mode == "toy":
        # encoder transfers from f0; embeddings for new tokens are fresh
        fu.init_encoder_params(params, rng, len(vocab))
        n_old = len(f0.vocab)
        params.embed.data[:n_old] = f0.params.embed.data.copy()
        for name in ("mix_left", "mix_center", "mix_right", "mix_bias"):
            setattr(params, name, Tensor(getattr(f0.params, name).data.copy(), requires_grad=True))
    fu.init_fusion_params(params, rng)
    graph = build_source_graph(f0, corpus_t, config)
    return Model("fused", params, vocab, labels, config, source_graph=graph)


def finetune(f0: Model, corpus_t: TaggedCorpus, config: TrainConfig):
    """Fine-tune on target data only; returns (model, per-epoch log).

    The GW term is active unless ablated, weighted to zero, or the batch's
    target graph is degenerate (< 2 distinct entity types in the batch).
    """
    if not corpus_t.label_set:
        raise InputError("target corpus has no entity labels")
    model = _init_finetune_model(f0, corpus_t, config)
    params = model.params
    tag_index = {t: i for i, t in enumerate(model.tags)}
    label_index = {l: i for i, l in enumerate(model.labels)}
    ds_full = model.source_graph
    rng = np.random.default_rng(config.seed + 1)  # training order stream
    sentences = corpus_t.sentences
    aux_on = (not config.ablate_aux) and config.lambda1 > 0
    gw_on = (not config.ablate_gw) and config.lambda2 > 0
    log = []
    for epoch in range(config.epochs):
        epoch_cls, epoch_aux, epoch_gw, epoch_total = [], [], [], []
        gw_skips = 0
        for batch in _batches(len(sentences), config.batch_size, rng):
            _zero_grads(params)
            cls_losses, weights, aux_losses = [], [], []
            batch_type_logits, batch_gold_types = [], []
            for si in batch:
                tokens, sent_tags = sentences[si]
                logits, trace = model.forward(tokens)
                ids = [tag_index[t] for t in sent_tags]
                cls_losses.append(fu.classification_loss_from_logits(logits, ids))
                weights.append(len(tokens))
                if aux_on:
                    present = np.zeros(len(model.labels))
                    for t in sent_tags:
                        et = entity_type(t)
                        if et is not None:
                            present[label_index[et]] = 1.0
                    aux_losses.append(fu.auxiliary_loss(trace.h_prime, present, params))
                if gw_on:
                    types = [entity_type(t) for t in sent_tags]
                    ent = [k for k, t in enumerate(types) if t is not None]
                    if ent:
                        tl = model.type_logits_tensor(logits)
                        # keep only entity-token rows
                        sel = np.zeros((len(ent), len(tokens)))
                        sel[np.arange(len(ent)), ent] = 1.0
                        batch_type_logits.append(ad.matmul(Tensor(sel), tl))
                        batch_gold_types.extend(types[k] for k in ent)
            total_tokens = float(sum(weights))
            cls_loss = sum((w / total_tokens) * l for w, l in zip(weights, cls_losses))
            loss = cls_loss
            aux_val = 0.0
            if aux_on:
                aux_loss = sum(aux_losses) / float(len(aux_losses))
                loss = loss + config.lambda1 * aux_loss
                aux_val = aux_loss.item()
            gw_val = 0.0
            if gw_on:
                gw_term = _batch_gw_term(model, ds_full, batch_type_logits, batch_gold_types, config)
                if gw_term is None:
                    gw_skips += 1
                else:
                    loss = loss + config.lambda2 * gw_term
                    gw_val = gw_term.item()
            loss.backward()
            _sgd_step(params, config.learning_rate)
            epoch_cls.append(cls_loss.item())
            epoch_aux.append(aux_val)
            epoch_gw.append(gw_val)
            epoch_total.append(loss.item())
        _, _, train_f1 = evaluate(model, corpus_t)
        log.append(
            {
                "epoch": epoch,
                "cls": float(np.mean(epoch_cls)),
                "aux": float(np.mean(epoch_aux)),
                "gw": float(np.mean(epoch_gw)),
                "total": float(np.mean(epoch_total)),
                "train_f1": train_f1,
                "gw_skips": gw_skips,
            }
        )
    return model, log


def _batch_gw_term(model, ds_full, batch_type_logits, gold_types, config):
    """Envelope GW loss for one batch, or None (skip) when degenerate."""
    if not batch_type_logits:
        return None
    type_logits = (
        batch_type_logits[0]
        if len(batch_type_logits) == 1
        else ad.concat_rows(batch_type_logits)
    )
    tgb = target_graph_from_batch(
        type_logits, list(gold_types), config.temperature, config.edge_threshold
    )
    if tgb is None:
        return None
    gs_sub = ds_full.subgraph(list(tgb.labels))
    if gs_sub.degenerate:
        return None
    d_s = gs_sub.distance_matrix()
    result = gromov_wasserstein_distances(
        d_s,
        tgb.distances.data,
        epsilon=config.epsilon,
        outer_iter=config.outer_iter,
        inner_iter=config.inner_iter,
        tol=config.gw_tol,
        anneal=False,  # per-step loss: speed over plan sharpness
    )
    return gw_fixed_plan_loss(tgb.distances, d_s, result.plan.matrix)


def target_graph_from_corpus(model: Model, corpus: TaggedCorpus, config: TrainConfig):
    """Detached target graph over a whole corpus (for export/inspection)."""
    logits_rows, gold_types = [], []
    for tokens, sent_tags in corpus.sentences:
        tl = model.type_logits(tokens)
        for k, tag in enumerate(sent_tags):
            et = entity_type(tag)
            if et is not None:
                logits_rows.append(tl[k])
                gold_types.append(et)
    if len(set(gold_types)) < 2:
        return None
    tgb = target_graph_from_batch(
        Tensor(np.stack(logits_rows)), gold_types, config.temperature, config.edge_threshold
    )
    return tgb.graph if tgb is not None else None


def evaluate(model: Model, corpus: TaggedCorpus):
    """Micro P/R/F1 of greedy per-token decoding against gold spans."""
    unknown = set(corpus.label_set) - set(model.labels)
    if unknown:
        raise InputError(f"corpus labels not in model label set: {sorted(unknown)}")
    pred_sentences = []
    for tokens, _ in corpus.sentences:
        pred_sentences.append((tokens, tuple(model.predict_tags(tokens))))
    gold = extract_spans(corpus)
    pred = extract_spans(TaggedCorpus(tuple(pred_sentences)))
    return micro_f1(gold, pred)


def aggregate(values) -> dict:
    arr = np.asarray(list(values), dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std(ddof=0)),
        "values": [float(v) for v in arr],
    }


SWEEP_PARAMS = {
    "T": "temperature",
    "delta": "edge_threshold",
    "lambda1": "lambda1",
    "lambda2": "lambda2",
}


def sweep(param: str, values, f0: Model, train_corpus: TaggedCorpus,
          test_corpus: TaggedCorpus, base: TrainConfig, seeds=None) -> str:
    """Run finetune+evaluate per value; CSV rows (value, mean_f1, std_f1)."""
    if param not in SWEEP_PARAMS:
        raise InputError(f"unknown sweep parameter {param!r}; use one of {sorted(SWEEP_PARAMS)}")
    if not values:
        raise InputError("sweep values must be nonempty")
    seeds = list(seeds) if seeds is not None else [base.seed]
    lines = ["value,mean_f1,std_f1"]
    for value in values:
        f1s = []
        for seed in seeds:
            config = replace(base, seed=seed, **{SWEEP_PARAMS[param]: value})
            model, _ = finetune(f0, train_corpus, config)
            _, _, f1 = evaluate(model, test_corpus)
            f1s.append(f1)
        agg = aggregate(f1s)
        lines.append(f"{value},{agg['mean']:.6f},{agg['std']:.6f}")
    return "\n".join(lines) + "\n"
