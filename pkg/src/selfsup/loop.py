"""Outer orchestration: seed -> EM learning -> self-training until the
evidence-only labels settle -> one human query per outer round while
budget remains. Also the simulated oracle, the self-training baseline,
and evaluation."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from selfsup.corpus import Corpus, FeatureUniverse, GoldAccess, build_feature_universe
from selfsup.evidence import (
    DEFAULT_WEIGHT,
    KIND_INSTANCE,
    FactorGraph,
    VirtualEvidence,
    save_evidences,
)
from selfsup.inference import evidence_only_marginals
from selfsup.learning import EMConfig, dpl_learn
from selfsup.predictor import AttentionClassifier, PredictorConfig
from selfsup.proposers import (
    FeatureQuery,
    ProposalLedger,
    label_flip_fraction,
    prop_fal,
    prop_sst,
)

log = logging.getLogger(__name__)

HARD_WEIGHT = 20.0  # stands in for an infinite-weight (hard) factor


@dataclass
class S4Config:
    outer_iterations: int = 10
    budget: int = 0
    strategy: str = "attention"  # attention | entropy | joint | instance
    sst_enabled: bool = True
    sst_alpha: float = 0.01
    max_inner: int = 50
    proposal_batch: int | None = None  # None: 1, or 10 for the joint strategy
    em: EMConfig = field(default_factory=EMConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    seed: int = 0
    # fresh predictor at each outer iteration (EM within an iteration always warm-starts)
    reinit_per_outer: bool = True
    universe_fraction: float = 0.025
    stop_tokens: tuple[str, ...] = ()
    proposal_weight: float = DEFAULT_WEIGHT
    proposal_learnable: bool = True
    instance_threshold: float = 0.9

    def __post_init__(self) -> None:
        if self.outer_iterations < 1 or self.budget < 0:
            raise ValueError("need outer_iterations >= 1 and budget >= 0")

    def batch(self) -> int:
        if self.proposal_batch is not None:
            return self.proposal_batch
        return 10 if self.strategy == "joint" else 1


@dataclass
class Decision:
    accepted: bool
    label: int | None = None


class OracleChannel:
    """Decision channel backed by a simulated oracle."""

    def __init__(self, oracle: "Oracle"):
        self.oracle = oracle

    def decide(self, query: FeatureQuery) -> Decision:
        return self.oracle.decide(query)


@dataclass
class Oracle:
    """Accepts a single-token query iff the token belongs to its map."""

    token_to_label: dict[int, int]

    def decide(self, query: FeatureQuery) -> Decision:
        if len(query.predicate) != 1:
            return Decision(False)
        label = self.token_to_label.get(query.predicate[0])
        if label is None:
            return Decision(False)
        return Decision(True, label)


@dataclass
class RunHistory:
    rows: list[dict] = field(default_factory=list)

    def append(self, **row) -> None:
        self.rows.append(row)

    def to_csv(self, path: str) -> None:
        if not self.rows:
            return
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            writer.writeheader()
            writer.writerows(self.rows)


def corpus_hash(corpus: Corpus) -> str:
    payload = json.dumps(
        {
            "labels": corpus.labels,
            "tokens": [[corpus.vocab.token(t) for t in i.tokens] for i in corpus.instances],
        }
    ).encode()
    return hashlib.sha256(payload).hexdigest()


def _cross_entropy(pred: np.ndarray, targets: np.ndarray) -> float:
    return float(-np.mean(np.sum(targets * np.log(np.clip(pred, 1e-300, None)), axis=1)))


def _fresh_predictor(corpus: Corpus, cfg: S4Config) -> AttentionClassifier:
    pcfg = replace(cfg.predictor, seed=cfg.seed)
    return AttentionClassifier(len(corpus.vocab), corpus.n_labels, pcfg)


def run_s4(
    corpus: Corpus,
    seeds: list[VirtualEvidence],
    cfg: S4Config,
    channel=None,
    eval_corpus: Corpus | None = None,
    checkpoint_dir: str | None = None,
    universe: FeatureUniverse | None = None,
    on_phase=None,
    history: RunHistory | None = None,
    observer=None,
) -> tuple[AttentionClassifier, FactorGraph, RunHistory]:
    """The full self-supervision loop: learn, propose, attach, repeat.

    channel supplies human decisions for active-learning queries; with
    budget 0 it is never consulted. on_phase, when given, is called with
    a phase name at loop boundaries (used by the service for pause points
    and checkpoints).
    """
    if cfg.budget > 0 and channel is None:
        raise ValueError("a decision channel is required when budget > 0")
    gate = on_phase or (lambda phase: None)

    graph = FactorGraph(corpus)
    ledger = ProposalLedger()
    for seed in seeds:
        # copy: weight updates must not leak back into the caller's seed list
        e = graph.attach(replace(seed, id=-1))
        if e.token is not None and not ledger.proposed(("predicate", e.token)):
            # seed tokens are never re-proposed as queries
            ledger.register(("predicate", e.token), "seed", 0.0, decision="seed")
    universe = universe or build_feature_universe(corpus, cfg.universe_fraction, cfg.stop_tokens)
    state = _fresh_predictor(corpus, cfg)
    baseline = state.clone()  # pre-training snapshot, for joint-similarity scoring
    history = history if history is not None else RunHistory()
    if observer is not None:
        observer(graph, state)
    queries_issued = 0
    queries_accepted = 0
    sst_added = 0
    next_query_id = 0

    for outer in range(1, cfg.outer_iterations + 1):
        gate("outer")
        if cfg.reinit_per_outer and outer > 1:
            state = _fresh_predictor(corpus, cfg)

        prev_eo = None
        delta_frac = float("nan")
        inner = 0
        loss = float("nan")
        q = None
        while True:
            gate("learn")
            state, graph, q = dpl_learn(graph, state, cfg.em)
            inner += 1
            loss = _cross_entropy(state.predict_corpus(corpus), q.probs)
            eo = evidence_only_marginals(graph, cfg.em.bp)
            if prev_eo is not None:
                delta_frac = label_flip_fraction(prev_eo, eo)
                if delta_frac < cfg.sst_alpha:
                    break
            prev_eo = eo
            if not cfg.sst_enabled or inner >= cfg.max_inner:
                break
            proposals = prop_sst(
                graph,
                state,
                q,
                ledger,
                universe,
                strategy=cfg.strategy,
                batch=cfg.batch(),
                baseline=baseline,
                weight=cfg.proposal_weight,
                learnable=cfg.proposal_learnable,
                instance_threshold=cfg.instance_threshold,
            )
            if not proposals:
                log.info("SST candidates exhausted at outer %d", outer)
                break
            for e in proposals:
                graph.attach(e)
                sst_added += 1

        if queries_issued < cfg.budget:
            gate("query")
            query = prop_fal(
                graph, state, q, ledger, universe,
                query_id=next_query_id, weight=cfg.proposal_weight,
            )
            if query is not None:
                next_query_id += 1
                queries_issued += 1
                decision = channel.decide(query)
                t = query.predicate[0] if len(query.predicate) == 1 else query.predicate
                if decision.accepted:
                    queries_accepted += 1
                    ledger.set_decision(("predicate", t), f"accepted:{decision.label}")
                    chosen = next(c for c in query.candidates if c.label == decision.label)
                    if not graph.has(chosen.key()):
                        graph.attach(chosen)
                else:
                    ledger.set_decision(("predicate", t), "rejected")
                    for c in query.candidates:
                        if not graph.has(c.key()):
                            c.status = "rejected"
                            graph.attach(c)

        accuracy = evaluate(state, eval_corpus) if eval_corpus is not None else float("nan")
        history.append(
            iteration=outer,
            evidence_count=len(graph.active_evidences()),
            inner_iterations=inner,
            sst_added=sst_added,
            fal_issued=queries_issued,
            fal_accepted=queries_accepted,
            delta_fraction=delta_frac,
            loss=loss,
            accuracy=accuracy,
        )
        if checkpoint_dir:
            save_checkpoint(checkpoint_dir, corpus, graph, state, ledger, history)
        if observer is not None:
            observer(graph, state)
        gate("iteration_done")

    return state, graph, history


def save_checkpoint(
    directory: str,
    corpus: Corpus,
    graph: FactorGraph,
    state: AttentionClassifier,
    ledger: ProposalLedger,
    history: RunHistory,
) -> None:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "corpus_hash.txt"), "w") as fh:
        fh.write(corpus_hash(corpus) + "\n")
    save_evidences(os.path.join(directory, "evidence.jsonl"), graph.evidences, corpus)
    state.save(os.path.join(directory, "model.npz"))
    with open(os.path.join(directory, "ledger.jsonl"), "w") as fh:
        for rec in ledger.records:
            fh.write(json.dumps(rec) + "\n")
    history.to_csv(os.path.join(directory, "history.csv"))


def simulate_oracle(
    corpus: Corpus,
    access: GoldAccess,
    k: int = 100,
    l1_strength: float = 1.0,
) -> Oracle:
    """Stand-in for the human expert, built from held-out gold labels.

    Fits an L1-regularized bag-of-words linear model on the gold labels
    and keeps the k tokens with the largest positive weight per class.
    """
    from scipy.sparse import lil_matrix
    from sklearn.linear_model import LogisticRegression

    if not corpus.has_gold():
        raise ValueError("oracle simulation needs gold labels")
    n, v = len(corpus), len(corpus.vocab)
    x = lil_matrix((n, v), dtype=np.float64)
    y = np.empty(n, dtype=np.int64)
    for inst in corpus.instances:
        gold = corpus.gold_label(inst.id, access)
        if gold is None:
            raise ValueError(f"instance {inst.id} has no gold label")
        y[inst.id] = gold
        for t in inst.token_set:
            x[inst.id, t] = 1.0
    model = LogisticRegression(penalty="l1", C=l1_strength, solver="liblinear", random_state=0)
    model.fit(x.tocsr(), y)

    coef = model.coef_
    per_class: dict[int, np.ndarray] = {}
    if coef.shape[0] == 1:  # binary: one row, positive weights favor classes_[1]
        neg, pos = int(model.classes_[0]), int(model.classes_[1])
        per_class[pos] = coef[0]
        per_class[neg] = -coef[0]
    else:
        for row, cls in enumerate(model.classes_):
            per_class[int(cls)] = coef[row]

    token_to_label: dict[int, int] = {}
    for cls in sorted(per_class):
        w = per_class[cls]
        eligible = np.flatnonzero(w > 0)
        if len(eligible) < k:
            warnings.warn(
                f"class {corpus.labels[cls]}: only {len(eligible)} positive-weight tokens (< {k})",
                stacklevel=2,
            )
        top = eligible[np.argsort(-w[eligible], kind="stable")][:k]
        for t in top:
            token_to_label[int(t)] = cls
    return Oracle(token_to_label)


def evaluate(state: AttentionClassifier, corpus: Corpus) -> float:
    """Fraction of argmax-correct predictions on a gold-labeled corpus."""
    access = GoldAccess()
    pred = state.predict_corpus(corpus)
    guesses = np.argmax(pred, axis=1)
    gold = np.array([corpus.gold_label(i, access) for i in range(len(corpus))])
    return float(np.mean(guesses == gold))


def self_train_baseline(
    corpus: Corpus,
    labeled: dict[int, int],
    rounds: int = 10,
    threshold: float = 0.9,
    cfg: S4Config | None = None,
    eval_corpus: Corpus | None = None,
) -> tuple[AttentionClassifier, FactorGraph, RunHistory]:
    """Classic self-training, expressed as a run with hard per-instance
    evidence and a most-confident-instance proposal strategy."""
    base = cfg or S4Config()
    st_cfg = replace(
        base,
        strategy="instance",
        budget=0,
        sst_enabled=True,
        outer_iterations=rounds,
        proposal_weight=HARD_WEIGHT,
        proposal_learnable=False,
        instance_threshold=threshold,
        em=replace(base.em, train_instances="covered"),
    )
    seeds = [
        VirtualEvidence(
            KIND_INSTANCE, instance=i, label=l,
            weight=HARD_WEIGHT, learnable=False, source="seed",
        )
        for i, l in sorted(labeled.items())
    ]
    return run_s4(corpus, seeds, st_cfg, eval_corpus=eval_corpus)
