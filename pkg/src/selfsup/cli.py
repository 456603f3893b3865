"""Batch command-line entry points.

Every command reads an optional flat JSON config file; flags override
file values. Exit codes: 0 success, 2 validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from selfsup.corpus import (
    CorpusError,
    GoldAccess,
    build_feature_universe,
    load_corpus,
    load_eval_corpus,
)
from selfsup.evidence import EvidenceError, FactorGraph, load_evidences
from selfsup.inference import BPConfig, bp_posterior
from selfsup.learning import EMConfig
from selfsup.loop import (
    OracleChannel,
    Oracle,
    S4Config,
    evaluate,
    run_s4,
    self_train_baseline,
    simulate_oracle,
)
from selfsup.predictor import AttentionClassifier, PredictorConfig
from selfsup.proposers import attention_table, entropy_score

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

_S4_KEYS = {
    "outer": "outer_iterations",
    "budget": "budget",
    "strategy": "strategy",
    "sst_enabled": "sst_enabled",
    "sst_alpha": "sst_alpha",
    "max_inner": "max_inner",
    "proposal_batch": "proposal_batch",
    "seed": "seed",
    "reinit_per_outer": "reinit_per_outer",
    "universe_fraction": "universe_fraction",
    "proposal_weight": "proposal_weight",
    "instance_threshold": "instance_threshold",
}
_EM_KEYS = {
    "em_iterations": "em_iterations",
    "epochs": "epochs",
    "lr": "lr",
    "weight_step_size": "weight_step_size",
    "weight_steps": "weight_steps",
    "l2": "l2",
    "train_instances": "train_instances",
}
_BP_KEYS = {
    "damping": "damping",
    "max_sweeps": "max_sweeps",
    "tolerance": "tolerance",
    "schedule": "schedule",
}
_PRED_KEYS = {
    "dim": "dim",
    "context_dim": "context_dim",
    "batch_size": "batch_size",
    "predictor_lr": "lr",
    "predictor_epochs": "epochs",
}


def build_config(values: dict) -> S4Config:
    """Assemble an S4Config from a flat key/value mapping."""
    bp = BPConfig(**{f: values[k] for k, f in _BP_KEYS.items() if values.get(k) is not None})
    em = EMConfig(bp=bp, **{f: values[k] for k, f in _EM_KEYS.items() if values.get(k) is not None})
    pred = PredictorConfig(**{f: values[k] for k, f in _PRED_KEYS.items() if values.get(k) is not None})
    return S4Config(
        em=em,
        predictor=pred,
        **{f: values[k] for k, f in _S4_KEYS.items() if values.get(k) is not None},
    )


def _merge_config(args: argparse.Namespace) -> dict:
    values: dict = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ValueError("config file must hold a flat JSON object")
        values.update(file_values)
    for key, val in vars(args).items():
        if val is not None and key not in ("config", "command", "func"):
            values[key] = val
    return values


def _load_oracle(path: str, corpus) -> Oracle:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    token_to_label = {}
    for tok, label in data["token_to_label"].items():
        if tok in corpus.vocab:
            token_to_label[corpus.vocab.id_for(tok)] = corpus.label_id(label)
    return Oracle(token_to_label)


def _save_oracle(path: str, oracle: Oracle, corpus) -> None:
    data = {
        "token_to_label": {
            corpus.vocab.token(t): corpus.labels[l] for t, l in sorted(oracle.token_to_label.items())
        }
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)


# ---- commands ----


def cmd_run(args: argparse.Namespace, dpl_only: bool) -> int:
    values = _merge_config(args)
    corpus = load_corpus(args.train, format=values.get("format", "jsonl"))
    seeds = load_evidences(args.seed_file, corpus)
    if dpl_only:
        values.update(outer=1, budget=0)
        values["sst_enabled"] = False
    cfg = build_config(values)
    eval_corpus = None
    if getattr(args, "test", None):
        eval_corpus = load_eval_corpus(args.test, corpus, format=values.get("format", "jsonl"))

    channel = None
    if cfg.budget > 0:
        if getattr(args, "interactive", False):
            return _serve_interactive(args, values)
        if not getattr(args, "oracle", None):
            raise ValueError("budget > 0 needs --oracle FILE or --interactive")
        channel = OracleChannel(_load_oracle(args.oracle, corpus))

    state, graph, history = run_s4(
        corpus, seeds, cfg,
        channel=channel, eval_corpus=eval_corpus, checkpoint_dir=getattr(args, "out", None),
    )
    for row in history.rows:
        print(",".join(str(v) for v in row.values()))
    if eval_corpus is not None:
        print(f"final_accuracy={evaluate(state, eval_corpus):.4f}")
    return EXIT_OK


def _serve_interactive(args, values) -> int:
    import uvicorn

    from selfsup.service import LoopService, create_app

    service = LoopService()
    app = create_app(service)
    payload = dict(values)
    payload.update(train=args.train, seed_evidence=args.seed_file, test=getattr(args, "test", None))
    if getattr(args, "out", None):
        payload["checkpoint_dir"] = args.out
    service.start_run(payload)
    uvicorn.run(app, host=values.get("host", "127.0.0.1"), port=int(values.get("port", 8000)))
    return EXIT_OK


def cmd_make_oracle(args: argparse.Namespace) -> int:
    values = _merge_config(args)
    corpus = load_corpus(args.train, format=values.get("format", "jsonl"))
    oracle = simulate_oracle(corpus, GoldAccess(), k=args.top_k, l1_strength=args.l1)
    _save_oracle(args.out, oracle, corpus)
    print(f"oracle written to {args.out} ({len(oracle.token_to_label)} tokens)")
    return EXIT_OK


def cmd_self_train(args: argparse.Namespace) -> int:
    values = _merge_config(args)
    corpus = load_corpus(args.train, format=values.get("format", "jsonl"))
    if not corpus.has_gold():
        raise ValueError("self-train needs labels in the training file for its labeled subset")
    access = GoldAccess()
    rng = np.random.default_rng(values.get("seed", 0))
    chosen = rng.permutation(len(corpus))[: args.labeled]
    labeled = {int(i): corpus.gold_label(int(i), access) for i in chosen}
    eval_corpus = None
    if getattr(args, "test", None):
        eval_corpus = load_eval_corpus(args.test, corpus, format=values.get("format", "jsonl"))
    cfg = build_config(values)
    state, _, history = self_train_baseline(
        corpus, labeled, rounds=args.rounds, threshold=args.threshold, cfg=cfg, eval_corpus=eval_corpus
    )
    for row in history.rows:
        print(",".join(str(v) for v in row.values()))
    if eval_corpus is not None:
        print(f"final_accuracy={evaluate(state, eval_corpus):.4f}")
    return EXIT_OK


def cmd_score(args: argparse.Namespace) -> int:
    values = _merge_config(args)
    corpus = load_corpus(args.train, format=values.get("format", "jsonl"))
    seeds = load_evidences(args.seed_file, corpus) if args.seed_file else []
    graph = FactorGraph(corpus)
    for e in seeds:
        graph.attach(e)
    cfg = build_config(values)
    if getattr(args, "model", None):
        state = AttentionClassifier.load(args.model)
    else:
        state = AttentionClassifier(len(corpus.vocab), corpus.n_labels, cfg.predictor)
    universe = build_feature_universe(corpus, cfg.universe_fraction)
    q = bp_posterior(graph, state.predict_corpus(corpus), cfg.em.bp)

    rows: list[tuple] = []
    if cfg.strategy == "entropy":
        for t in universe.token_ids:
            rep = entropy_score(t, q, corpus)
            rows.append((rep.score, corpus.vocab.token(t), corpus.labels[rep.stats["label"]]))
        rows.sort(key=lambda r: -r[0])
    else:
        table = attention_table(corpus, q, state, universe)
        scores = 2 * table - table.sum(axis=1, keepdims=True)
        for r, t in enumerate(universe.token_ids):
            for l in range(corpus.n_labels):
                rows.append((float(scores[r, l]), corpus.vocab.token(t), corpus.labels[l]))
        rows.sort(key=lambda r: -r[0])
    print("score,candidate,label")
    for score, tok, label in rows[:50]:
        print(f"{score},{tok},{label}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    values = _merge_config(args)
    train = load_corpus(args.train, format=values.get("format", "jsonl"))
    test = load_eval_corpus(args.test, train, format=values.get("format", "jsonl"))
    state = AttentionClassifier.load(args.model)
    print(f"accuracy={evaluate(state, test):.4f}")
    return EXIT_OK


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    from selfsup import synth

    params = synth.generate(
        args.out,
        seed=args.seed,
        n_train=args.n_train,
        n_test=args.n_test,
    )
    if args.seed_tokens:
        import os

        synth.write_seeds(os.path.join(args.out, "seeds.jsonl"), args.seed_tokens)
    print(f"synthetic corpus written to {args.out} (seed={params['seed']})")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from selfsup.service import LoopService, create_app

    app = create_app(LoopService())
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, train=True) -> None:
    p.add_argument("--config", help="flat JSON config file; flags override")
    p.add_argument("--format", choices=["jsonl", "tsv"], default=None)
    if train:
        p.add_argument("--train", required=True, help="training corpus file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="selfsup")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, dpl_only in (("run-dpl", True), ("run-s4", False)):
        p = sub.add_parser(name, help="run learning" + ("" if dpl_only else " with the proposal loop"))
        _add_common(p)
        p.add_argument("--seed", dest="seed_file", required=True, help="seed evidence file (jsonl)")
        p.add_argument("--rng-seed", dest="seed", type=int, default=None)
        p.add_argument("--test", help="held-out corpus for accuracy reporting")
        p.add_argument("--out", help="checkpoint directory")
        p.add_argument(
            "--train-instances", dest="train_instances",
            choices=["all", "covered"], default=None,
            help="train the predictor on every instance or only on those touched by evidence",
        )
        if not dpl_only:
            p.add_argument("--budget", dest="budget", type=int, default=None)
            p.add_argument("--outer", dest="outer", type=int, default=None)
            p.add_argument("--strategy", choices=["attention", "entropy", "joint"], default=None)
            p.add_argument("--oracle", help="oracle file for simulated decisions")
            p.add_argument("--interactive", action="store_true", help="serve queries over HTTP")
        p.set_defaults(func=lambda a, d=dpl_only: cmd_run(a, d))

    p = sub.add_parser("make-oracle", help="build a simulated expert from gold labels")
    _add_common(p)
    p.add_argument("--top-k", type=int, default=100)
    p.add_argument("--l1", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_oracle)

    p = sub.add_parser("self-train", help="self-training baseline")
    _add_common(p)
    p.add_argument("--labeled", type=int, required=True)
    p.add_argument("--rounds", type=int, default=10)
    p.add_argument("--threshold", type=float, default=0.9)
    p.add_argument("--test")
    p.set_defaults(func=cmd_self_train)

    p = sub.add_parser("score", help="dump the top-50 proposal scores")
    _add_common(p)
    p.add_argument("--seed", dest="seed_file", help="seed evidence file")
    p.add_argument("--model", help="predictor checkpoint (.npz)")
    p.add_argument("--strategy", choices=["attention", "entropy"], default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a test set")
    _add_common(p)
    p.add_argument("--test", required=True)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen-synthetic", help="write the seeded planted corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-test", type=int, default=1000)
    p.add_argument("--seed-tokens", type=int, default=3, help="seed evidence tokens per class")
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("serve", help="run the HTTP review service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (CorpusError, EvidenceError, ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
