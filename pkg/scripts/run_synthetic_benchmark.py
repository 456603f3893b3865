"""Compare seed-only learning, the full proposal loop, self-training,
and active-learning queries on the planted synthetic corpus.

Reproduces the numbers behind the end-to-end tests; takes a few minutes.
"""

import argparse
import os
import sys
import tempfile
import warnings

import numpy as np

from selfsup import synth
from selfsup.corpus import GoldAccess, load_corpus, load_eval_corpus
from selfsup.evidence import load_evidences
from selfsup.learning import EMConfig
from selfsup.loop import (
    OracleChannel,
    S4Config,
    evaluate,
    run_s4,
    self_train_baseline,
    simulate_oracle,
)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", help="corpus directory; generated fresh when omitted")
    ap.add_argument("--gen-seed", type=int, default=7)
    ap.add_argument("--outer", type=int, default=10)
    ap.add_argument("--labeled", type=int, default=50, help="labels for the self-training baseline")
    args = ap.parse_args(argv)

    data = args.data or tempfile.mkdtemp(prefix="synth_")
    if not os.path.exists(os.path.join(data, "train.jsonl")):
        synth.generate(data, seed=args.gen_seed)
        synth.write_seeds(os.path.join(data, "seeds.jsonl"), tokens_per_class=3)
        synth.write_seeds(os.path.join(data, "seeds2.jsonl"), tokens_per_class=2)
    print(f"corpus: {data}")

    train = load_corpus(os.path.join(data, "train.jsonl"))
    test = load_eval_corpus(os.path.join(data, "test.jsonl"), train)
    seeds6 = load_evidences(os.path.join(data, "seeds.jsonl"), train)
    seeds4 = load_evidences(os.path.join(data, "seeds2.jsonl"), train)
    results = {}

    covered = EMConfig(train_instances="covered")
    state, _, _ = run_s4(train, seeds6, S4Config(outer_iterations=1, sst_enabled=False, em=covered))
    results["seed evidence only (6 tokens)"] = evaluate(state, test)

    state, graph, _ = run_s4(train, seeds6, S4Config(outer_iterations=args.outer, em=covered))
    results[f"with auto-proposals ({args.outer} rounds)"] = evaluate(state, test)
    added = [e for e in graph.evidences if e.source == "sst"]
    print(f"auto-proposals added: {len(added)}")

    rng = np.random.default_rng(0)
    access = GoldAccess()
    chosen = rng.choice(len(train), size=args.labeled, replace=False)
    labeled = {int(i): train.gold_label(int(i), access) for i in chosen}
    state, _, _ = self_train_baseline(train, labeled)
    results[f"self-training ({args.labeled} labels)"] = evaluate(state, test)

    state, _, _ = run_s4(train, seeds4, S4Config(outer_iterations=1, sst_enabled=False))
    results["seed evidence only (4 tokens)"] = evaluate(state, test)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        oracle = simulate_oracle(train, GoldAccess())
    cfg = S4Config(outer_iterations=args.outer, budget=args.outer, sst_enabled=False)
    state, _, hist = run_s4(train, seeds4, cfg, channel=OracleChannel(oracle))
    results[f"+ {hist.rows[-1]['fal_issued']} oracle queries"] = evaluate(state, test)

    width = max(len(k) for k in results)
    print()
    for name, acc in results.items():
        print(f"{name:<{width}}  {acc:.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
