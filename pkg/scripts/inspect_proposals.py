"""Print the top proposal candidates under each scoring strategy for a
corpus plus seed evidence, to eyeball what the loop would add next."""

import argparse
import sys

import numpy as np

from selfsup.corpus import build_feature_universe, load_corpus
from selfsup.evidence import FactorGraph, load_evidences
from selfsup.inference import BPConfig, bp_posterior
from selfsup.learning import EMConfig, dpl_learn
from selfsup.predictor import AttentionClassifier, PredictorConfig
from selfsup.proposers import attention_table, entropy_score


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--train", required=True)
    ap.add_argument("--seed", dest="seed_file", required=True)
    ap.add_argument("--top", type=int, default=15)
    ap.add_argument("--universe-fraction", type=float, default=0.025)
    ap.add_argument("--skip-training", action="store_true")
    args = ap.parse_args(argv)

    corpus = load_corpus(args.train)
    graph = FactorGraph(corpus)
    for e in load_evidences(args.seed_file, corpus):
        graph.attach(e)
    state = AttentionClassifier(len(corpus.vocab), corpus.n_labels, PredictorConfig())
    if args.skip_training:
        q = bp_posterior(graph, state.predict_corpus(corpus), BPConfig())
    else:
        state, graph, q = dpl_learn(graph, state, EMConfig())
    universe = build_feature_universe(corpus, args.universe_fraction)

    table = attention_table(corpus, q, state, universe)
    scores = 2 * table - table.sum(axis=1, keepdims=True)
    flat = [
        (float(scores[r, l]), universe.token_ids[r], l)
        for r in range(len(universe.token_ids))
        for l in range(corpus.n_labels)
    ]
    print(f"top {args.top} by attention score:")
    for s, t, l in sorted(flat, reverse=True)[: args.top]:
        print(f"  {s:+.4f}  {corpus.vocab.token(t)} -> {corpus.labels[l]}")

    ents = [(entropy_score(t, q, corpus).stats["entropy"], t) for t in universe.token_ids]
    print(f"\ntop {args.top} by average-posterior entropy (active-learning order):")
    for ent, t in sorted(ents, reverse=True)[: args.top]:
        avg = entropy_score(t, q, corpus).stats["avg_posterior"]
        probs = " ".join(f"{p:.2f}" for p in np.asarray(avg))
        print(f"  {ent:.4f}  {corpus.vocab.token(t)}  avg=({probs})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
