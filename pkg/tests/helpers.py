"""Shared builders for the test suite: in-memory corpora and random factor graphs."""

from __future__ import annotations

import numpy as np

from selfsup.corpus import Corpus, Instance, Vocabulary, tokenize
from selfsup.evidence import (
    KIND_INSTANCE,
    KIND_PAIR,
    KIND_TOKEN,
    FactorGraph,
    VirtualEvidence,
)


def build_corpus(texts, labels=("neg", "pos"), gold=None, max_tokens=512):
    """Construct a Corpus directly from raw texts (no file round trip)."""
    vocab = Vocabulary()
    instances = []
    for i, text in enumerate(texts):
        ids = vocab._add_document(tokenize(text, max_tokens))
        instances.append(Instance(id=i, tokens=tuple(ids), raw_text=text))
    g = list(gold) if gold is not None else [None] * len(texts)
    return Corpus(instances, list(labels), vocab, g)


def uniform_pred(corpus):
    n, L = len(corpus), corpus.n_labels
    return np.full((n, L), 1.0 / L)


def random_pred(corpus, rng):
    return rng.dirichlet(np.ones(corpus.n_labels), size=len(corpus))


def random_tree_graph(rng, max_weight=3.0):
    """Random acyclic factor graph: pair factors form a forest, unary factors free.

    Returns (graph, pred). Label count and instance count are capped so the
    brute-force oracle enumerates at most a few thousand assignments.
    """
    n_labels = int(rng.integers(2, 5))
    max_n = 12 if n_labels == 2 else 6
    n = int(rng.integers(2, max_n + 1))
    texts = []
    for i in range(n):
        toks = [f"t{i}"]
        if rng.random() < 0.5:
            toks.append(f"shared{rng.integers(0, 3)}")
        texts.append(" ".join(toks))
    labels = [f"l{k}" for k in range(n_labels)]
    corpus = build_corpus(texts, labels=labels)
    g = FactorGraph(corpus)

    for i in range(n):  # unary factors never create cycles
        if rng.random() < 0.6:
            g.attach(VirtualEvidence(
                KIND_INSTANCE, instance=i, label=int(rng.integers(n_labels)),
                weight=float(rng.uniform(-max_weight, max_weight)),
            ))
    for s in range(3):
        tid = corpus.vocab.id_for(f"shared{s}") if f"shared{s}" in corpus.vocab else None
        if tid is not None and rng.random() < 0.5:
            g.attach(VirtualEvidence(
                KIND_TOKEN, token=tid, label=int(rng.integers(n_labels)),
                weight=float(rng.uniform(-max_weight, max_weight)),
            ))
    # a random forest over the instances keeps the pairwise part acyclic
    for i in range(1, n):
        if rng.random() < 0.7:
            j = int(rng.integers(0, i))
            g.attach(VirtualEvidence(
                KIND_PAIR, pair=(j, i),
                weight=float(rng.uniform(-max_weight, max_weight)),
            ))
    pred = random_pred(corpus, rng)
    return g, pred


def random_loopy_graph(rng, max_weight=2.5, density=0.3):
    """Random graph where pair factors may form cycles (binary labels, <= 10 nodes)."""
    n = int(rng.integers(3, 11))
    corpus = build_corpus([f"t{i}" for i in range(n)])
    g = FactorGraph(corpus)
    for i in range(n):
        if rng.random() < 0.7:
            g.attach(VirtualEvidence(
                KIND_INSTANCE, instance=i, label=int(rng.integers(2)),
                weight=float(rng.uniform(-max_weight, max_weight)),
            ))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < density:
                g.attach(VirtualEvidence(
                    KIND_PAIR, pair=(i, j),
                    weight=float(rng.uniform(-max_weight, max_weight)),
                ))
    pred = random_pred(corpus, rng)
    return g, pred


def total_variation(p, q):
    return 0.5 * np.abs(p - q).sum(axis=1)
