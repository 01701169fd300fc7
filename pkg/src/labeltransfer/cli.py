"""Command-line interface.

Subcommands: train-source, finetune, evaluate, sample, export-graph, sweep,
synth. Config files are JSON mirroring TrainConfig; CLI flags override file
values and the LST_SEED environment variable overrides the seed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import pipeline, synth
from .data import greedy_sample, parse_conll
from .gw import gromov_wasserstein, plan_to_csv
from .pipeline import Model, TrainConfig, aggregate, build_source_graph, evaluate, finetune, train_source


def load_config(path: str | None, overrides: dict | None = None) -> TrainConfig:
    config = TrainConfig.from_json(open(path).read()) if path else TrainConfig()
    fields = dataclasses.asdict(config)
    if overrides:
        fields.update({k: v for k, v in overrides.items() if v is not None})
    if "LST_SEED" in os.environ:
        fields["seed"] = int(os.environ["LST_SEED"])
    return TrainConfig(**fields)


def _read_corpus(path: str):
    with open(path, "rb") as fh:
        return parse_conll(fh.read())


def cmd_train_source(args):
    config = load_config(args.config)
    corpus = _read_corpus(args.train)
    model = train_source(corpus, config)
    model.save(args.out)
    print(json.dumps({"labels": list(model.labels), "out": args.out}))


def cmd_finetune(args):
    overrides = {"ablate_gw": args.ablate_gw or None, "ablate_aux": args.ablate_aux or None}
    config = load_config(args.config, overrides)
    f0 = Model.load(args.source_model)
    corpus = _read_corpus(args.train)
    model, log = finetune(f0, corpus, config)
    model.save(args.out)
    print(json.dumps({"labels": list(model.labels), "out": args.out, "log": log}))


def cmd_evaluate(args):
    corpus = _read_corpus(args.test)
    if args.seeds and "{seed}" in args.model:
        paths = [args.model.format(seed=s) for s in range(args.seeds)]
    else:
        paths = [args.model] * (args.seeds or 1)
    results = []
    for path in paths:
        p, r, f1 = evaluate(Model.load(path), corpus)
        results.append({"precision": p, "recall": r, "f1": f1})
    out = {"runs": results, "f1": aggregate(r["f1"] for r in results)}
    print(json.dumps(out, indent=2))


def cmd_sample(args):
    corpus = _read_corpus(args.train)
    sampled = greedy_sample(corpus, args.k, args.seed)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(sampled.to_conll())
    print(json.dumps({"sentences": len(sampled.sentences), "out": args.out}))


def cmd_export_graph(args):
    config = load_config(args.config)
    f0 = Model.load(args.source_model)
    corpus = _read_corpus(args.train)
    graph = build_source_graph(f0, corpus, config)
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(graph.to_json())
    if args.plan:
        if not args.target_model:
            raise SystemExit("--plan requires --target-model")
        target = Model.load(args.target_model)
        tgraph = pipeline.target_graph_from_corpus(target, corpus, config)
        if tgraph is None:
            raise SystemExit("target graph is degenerate; no plan to export")
        gs = graph.subgraph(list(tgraph.labels))
        result = gromov_wasserstein(
            gs, tgraph, epsilon=config.epsilon,
            outer_iter=config.outer_iter, inner_iter=config.inner_iter, tol=config.gw_tol,
        )
        if result is None:
            raise SystemExit("graphs degenerate; no plan to export")
        with open(args.plan, "w", encoding="utf-8") as fh:
            fh.write(plan_to_csv(gs.labels, tgraph.labels, result.plan.matrix))
    print(json.dumps({"out": args.out, "plan": args.plan}))


def cmd_sweep(args):
    config = load_config(args.config)
    f0 = Model.load(args.source_model)
    train_corpus = _read_corpus(args.train)
    test_corpus = _read_corpus(args.test)
    values = [float(v) for v in args.values.split(",")]
    seeds = list(range(args.seeds)) if args.seeds else None
    csv_text = pipeline.sweep(args.param, values, f0, train_corpus, test_corpus, config, seeds=seeds)
    sys.stdout.write(csv_text)


def cmd_synth(args):
    spec = synth.SynthSpec.from_json(open(args.spec).read()) if args.spec else synth.SynthSpec()
    task = synth.generate(spec)
    synth.write_task(task, args.out_dir)
    print(json.dumps({"out_dir": args.out_dir, "target_labels": sorted(spec.target_parents)}))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="labeltransfer")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train-source", help="train the source-domain tagger")
    p.add_argument("--train", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_source)

    p = sub.add_parser("finetune", help="fine-tune on target data with graph matching")
    p.add_argument("--source-model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--ablate-gw", action="store_true")
    p.add_argument("--ablate-aux", action="store_true")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("evaluate", help="micro P/R/F1 of a checkpoint on a test set")
    p.add_argument("--model", required=True, help="checkpoint path; may contain {seed}")
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sample", help="greedy few-shot sampling of a training set")
    p.add_argument("--train", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("export-graph", help="export the source label graph (and a transport plan)")
    p.add_argument("--source-model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="also export the transport plan CSV to this path")
    p.add_argument("--target-model", help="fine-tuned checkpoint used for the plan")
    p.set_defaults(func=cmd_export_graph)

    p = sub.add_parser("sweep", help="hyperparameter sweep; CSV to stdout")
    p.add_argument("--param", required=True, choices=sorted(pipeline.SWEEP_PARAMS))
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--source-model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--config")
    p.add_argument("--seeds", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", help="generate a synthetic two-domain corpus")
    p.add_argument("--spec", help="JSON synth spec (defaults used when omitted)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    args.func(args)


if __name__ == "__main__":
    main()
