"""Candidate self-supervision generation.

Self-training side (prop_sst): attention, entropy, and joint-similarity
scorers pick the most confident unproposed candidates. Active-learning
side (prop_fal): the least confident candidate (maximum average posterior
entropy) is turned into a human query. Both share a proposal ledger so no
identity is ever proposed twice.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from selfsup.corpus import Corpus, FeatureUniverse
from selfsup.evidence import (
    DEFAULT_WEIGHT,
    KIND_INSTANCE,
    KIND_PAIR,
    KIND_TOKEN,
    FactorGraph,
    VirtualEvidence,
)
from selfsup.inference import Marginals
from selfsup.predictor import AttentionClassifier, pad_batch

ENTROPY_EPS = 1e-6  # caps 1/Ent when the average posterior is deterministic


class ProposalError(ValueError):
    pass


@dataclass
class ScoreReport:
    candidate: tuple
    score: float
    stats: dict = field(default_factory=dict)


@dataclass
class ProposalLedger:
    """Append-only record of every proposed identity (auto-added, accepted, or rejected)."""

    records: list[dict] = field(default_factory=list)
    log_path: str | None = None
    _keys: set = field(default_factory=set)

    def proposed(self, key: tuple) -> bool:
        return key in self._keys

    def register(self, key: tuple, strategy: str, score: float, decision: str = "auto") -> None:
        if key in self._keys:
            raise ProposalError(f"identity {key} proposed twice")
        self._keys.add(key)
        rec = {
            "key": list(key),
            "strategy": strategy,
            "score": score,
            "decision": decision,
            "timestamp": time.time(),
        }
        self.records.append(rec)
        if self.log_path:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec) + "\n")

    def set_decision(self, key: tuple, decision: str) -> None:
        for rec in reversed(self.records):
            if tuple(rec["key"]) == key:
                rec["decision"] = decision
                return
        raise ProposalError(f"no ledger record for {key}")


# ---- scoring ----


def attention_table(
    corpus: Corpus, q: Marginals, state: AttentionClassifier, universe: FeatureUniverse
) -> np.ndarray:
    """Average weighted attention Attn(t, l) for every universe token.

    Attn(t, l) = (1 / C_t) * sum over occurrences of t of q_i(l) * A(X_i, j).
    Rows follow universe.token_ids order.
    """
    n_labels = corpus.n_labels
    col = {t: r for r, t in enumerate(universe.token_ids)}
    num = np.zeros((len(universe.token_ids), n_labels))
    for start in range(0, len(corpus), 256):
        chunk = corpus.instances[start : start + 256]
        tokens, mask = pad_batch(chunk)
        att = state.attention_batch(tokens, mask)
        for r, inst in enumerate(chunk):
            qi = q.dist(inst.id)
            for j, t in enumerate(inst.tokens):
                c = col.get(t)
                if c is not None:
                    num[c] += att[r, j] * qi
    counts = np.array([universe.count(t) for t in universe.token_ids], dtype=float)
    return num / counts[:, None]


def attn_score(
    t: int,
    l: int,
    q: Marginals,
    state: AttentionClassifier,
    universe: FeatureUniverse,
    corpus: Corpus,
) -> ScoreReport:
    """Relative average weighted attention for a token-label candidate."""
    if t not in universe:
        raise ProposalError(f"token {t} outside the feature universe")
    attn = np.zeros(corpus.n_labels)
    for i in corpus.instances_with_token(t):
        inst = corpus.instances[i]
        a = state.attention(inst)
        qi = q.dist(i)
        for j, tok in enumerate(inst.tokens):
            if tok == t:
                attn += a[j] * qi
    attn /= universe.count(t)
    score = float(attn[l] - (attn.sum() - attn[l]))
    return ScoreReport((KIND_TOKEN, t, l), score, {"attn": attn, "count": universe.count(t)})


def average_posterior(b: int | tuple[int, ...], q: Marginals, corpus: Corpus) -> tuple[np.ndarray, int]:
    """Mean posterior over instances where predicate b holds, plus C_b."""
    tokens = (b,) if isinstance(b, int) else tuple(b)
    need = set(tokens)
    rows = [q.dist(inst.id) for inst in corpus.instances if need <= inst.token_set]
    if not rows:
        raise ProposalError(f"predicate {tokens} matches no instance")
    return np.mean(rows, axis=0), len(rows)


def shannon_entropy(p: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def entropy_score(b: int | tuple[int, ...], q: Marginals, corpus: Corpus) -> ScoreReport:
    """1 / Ent(b) where Ent is the entropy of the average posterior (nats)."""
    avg, c_b = average_posterior(b, q, corpus)
    ent = shannon_entropy(avg)
    score = 1.0 / max(ent, ENTROPY_EPS)
    label = int(np.argmax(avg))
    key = b if isinstance(b, int) else tuple(b)
    return ScoreReport(
        ("predicate", key), score, {"entropy": ent, "avg_posterior": avg, "count": c_b, "label": label}
    )


def sim(i: int, j: int, state: AttentionClassifier, corpus: Corpus) -> float:
    """Cosine similarity of the pooled document embeddings."""
    return _cosine(state.embed(corpus.instances[i]), state.embed(corpus.instances[j]))


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ProposalError("cosine similarity undefined for a zero-norm embedding")
    return float(np.dot(u, v) / (nu * nv))


def joint_score(
    i: int,
    j: int,
    state: AttentionClassifier,
    baseline: AttentionClassifier,
    corpus: Corpus,
) -> ScoreReport:
    """Similarity gained during training: cos(current) - cos(initial snapshot)."""
    if i == j:
        raise ProposalError("joint factors need two distinct instances")
    s_now = sim(i, j, state, corpus)
    s_base = sim(i, j, baseline, corpus)
    return ScoreReport((KIND_PAIR, min(i, j), max(i, j)), s_now - s_base, {"sim": s_now, "sim_baseline": s_base})


# ---- proposal ----


def _new_token_evidence(t: int, l: int, weight: float, learnable: bool, source: str) -> VirtualEvidence:
    return VirtualEvidence(KIND_TOKEN, token=t, label=l, weight=weight, learnable=learnable, source=source)


def prop_sst(
    g: FactorGraph,
    state: AttentionClassifier,
    q: Marginals,
    ledger: ProposalLedger,
    universe: FeatureUniverse,
    strategy: str = "attention",
    batch: int = 1,
    baseline: AttentionClassifier | None = None,
    weight: float = DEFAULT_WEIGHT,
    learnable: bool = True,
    instance_threshold: float = 0.9,
) -> list[VirtualEvidence]:
    """Top-scoring unproposed candidates under the chosen strategy.

    Returns [] when all candidates are exhausted (the caller treats that
    as SST convergence). Proposals are registered in the ledger.
    """
    corpus = g.corpus
    out: list[VirtualEvidence] = []

    if strategy == "attention":
        table = attention_table(corpus, q, state, universe)
        scores = 2 * table - table.sum(axis=1, keepdims=True)
        cands = [
            (float(scores[r, l]), t, l)
            for r, t in enumerate(universe.token_ids)
            for l in range(corpus.n_labels)
        ]
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        for s, t, l in cands:
            key = (KIND_TOKEN, t, l)
            if ledger.proposed(key) or g.has(key):
                continue
            ledger.register(key, "sst:attention", s)
            out.append(_new_token_evidence(t, l, weight, learnable, "sst"))
            if len(out) >= batch:
                break

    elif strategy == "entropy":
        reports = []
        for t in universe.token_ids:
            if ledger.proposed(("predicate", t)):
                continue
            reports.append(entropy_score(t, q, corpus))
        reports.sort(key=lambda r: (-r.score, r.candidate[1]))
        for rep in reports:
            t = rep.candidate[1]
            l = rep.stats["label"]
            key = (KIND_TOKEN, t, l)
            if g.has(key):
                continue
            ledger.register(("predicate", t), "sst:entropy", rep.score)
            out.append(_new_token_evidence(t, l, weight, learnable, "sst"))
            if len(out) >= batch:
                break

    elif strategy == "joint":
        emb = state.embed_corpus(corpus)
        emb0 = baseline.embed_corpus(corpus) if baseline is not None else emb
        diff = _cosine_matrix(emb) - _cosine_matrix(emb0)
        n = len(corpus)
        iu = np.triu_indices(n, k=1)
        order = np.argsort(-diff[iu], kind="stable")
        for idx in order:
            i, j = int(iu[0][idx]), int(iu[1][idx])
            key = (KIND_PAIR, i, j)
            if ledger.proposed(key) or g.has(key):
                continue
            ledger.register(key, "sst:joint", float(diff[i, j]))
            out.append(
                VirtualEvidence(KIND_PAIR, pair=(i, j), weight=weight, learnable=learnable, source="sst")
            )
            if len(out) >= batch:
                break

    elif strategy == "instance":
        # self-training special case: pseudo-label the most confident uncovered instance
        pred = state.predict_corpus(corpus)
        conf = pred.max(axis=1)
        order = np.argsort(-conf, kind="stable")
        for i in order:
            i = int(i)
            if conf[i] < instance_threshold:
                break
            l = int(np.argmax(pred[i]))
            key = (KIND_INSTANCE, i, l)
            if ledger.proposed(key) or any(g.has((KIND_INSTANCE, i, ll)) for ll in range(corpus.n_labels)):
                continue
            ledger.register(key, "sst:instance", float(conf[i]))
            out.append(
                VirtualEvidence(
                    KIND_INSTANCE, instance=i, label=l, weight=weight, learnable=learnable, source="sst"
                )
            )
            if len(out) >= batch:
                break

    else:
        raise ProposalError(f"unknown SST strategy {strategy!r}")

    return out


def _cosine_matrix(emb: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(emb, axis=1)
    if (norms == 0).any():
        raise ProposalError("cosine similarity undefined for a zero-norm embedding")
    unit = emb / norms[:, None]
    return unit @ unit.T


@dataclass
class FeatureQuery:
    """A pending human query: one predicate, candidate evidence per label."""

    query_id: int
    predicate: tuple[int, ...]
    candidates: list[VirtualEvidence]
    entropy: float
    avg_posterior: np.ndarray


def prop_fal(
    g: FactorGraph,
    state: AttentionClassifier,
    q: Marginals,
    ledger: ProposalLedger,
    universe: FeatureUniverse,
    query_id: int = 0,
    weight: float = DEFAULT_WEIGHT,
) -> FeatureQuery | None:
    """Maximum-average-entropy unproposed predicate, or None when exhausted."""
    best = None
    for t in universe.token_ids:
        if ledger.proposed(("predicate", t)):
            continue
        rep = entropy_score(t, q, g.corpus)
        ent = rep.stats["entropy"]
        if best is None or ent > best[0] or (ent == best[0] and t < best[1]):
            best = (ent, t, rep)
    if best is None:
        return None
    ent, t, rep = best
    ledger.register(("predicate", t), "fal", ent, decision="pending")
    candidates = [
        VirtualEvidence(KIND_TOKEN, token=t, label=l, weight=weight, source="fal")
        for l in range(g.corpus.n_labels)
    ]
    return FeatureQuery(query_id, (t,), candidates, ent, rep.stats["avg_posterior"])


# ---- SST convergence ----


def label_flip_fraction(prev: Marginals, cur: Marginals) -> float:
    """Fraction of instances whose evidence-only argmax label changed."""
    if prev.probs.shape != cur.probs.shape:
        raise ProposalError("marginals cover different corpora")
    return float(np.mean(np.argmax(prev.probs, axis=1) != np.argmax(cur.probs, axis=1)))


def sst_converged(prev: Marginals, cur: Marginals, alpha: float = 0.01) -> bool:
    return label_flip_fraction(prev, cur) < alpha
