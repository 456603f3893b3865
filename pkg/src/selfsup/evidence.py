"""Virtual evidences (weighted logical factors) and the factor graph."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from selfsup.corpus import Corpus

DEFAULT_WEIGHT = 2.2  # log-odds of 90% belief
DEFAULT_L2 = 5e-8

KIND_TOKEN = "token_label"
KIND_FEATURE = "feature_label"
KIND_INSTANCE = "instance_label"
KIND_PAIR = "pair_agree"


class EvidenceError(ValueError):
    pass


class DuplicateEvidenceError(EvidenceError):
    def __init__(self, existing_id: int, key: tuple):
        self.existing_id = existing_id
        super().__init__(f"evidence {key} already present with id {existing_id}")


@dataclass
class VirtualEvidence:
    """One weighted logical factor over instance labels.

    kind/arguments:
      token_label    -- token `token` present and label == `label`
      feature_label  -- all tokens in `predicate` present and label == `label`
      instance_label -- instance `instance` has label == `label`
      pair_agree     -- instances `pair` share a label
    """

    kind: str
    weight: float = DEFAULT_WEIGHT
    prior_strength: float = DEFAULT_L2
    learnable: bool = True
    source: str = "seed"  # seed | sst | fal
    status: str = "active"  # active | rejected
    token: int | None = None
    predicate: tuple[int, ...] | None = None
    instance: int | None = None
    pair: tuple[int, int] | None = None
    label: int | None = None
    id: int = -1

    def __post_init__(self) -> None:
        if not math.isfinite(self.weight):
            raise EvidenceError(f"weight must be finite, got {self.weight}")
        if self.prior_strength < 0:
            raise EvidenceError(f"prior_strength must be >= 0, got {self.prior_strength}")
        if self.kind == KIND_TOKEN:
            if self.token is None or self.label is None:
                raise EvidenceError("token_label needs token and label")
        elif self.kind == KIND_FEATURE:
            if not self.predicate or self.label is None:
                raise EvidenceError("feature_label needs a predicate and label")
            self.predicate = tuple(sorted(set(self.predicate)))
            if len(self.predicate) > 2:
                raise EvidenceError("feature_label predicates are limited to <= 2 tokens")
        elif self.kind == KIND_INSTANCE:
            if self.instance is None or self.label is None:
                raise EvidenceError("instance_label needs instance and label")
        elif self.kind == KIND_PAIR:
            if self.pair is None or self.pair[0] == self.pair[1]:
                raise EvidenceError("pair_agree needs two distinct instances")
            self.pair = (min(self.pair), max(self.pair))
        else:
            raise EvidenceError(f"unknown evidence kind {self.kind!r}")

    def key(self) -> tuple:
        """Identity: kind plus identifying arguments (weight-independent)."""
        if self.kind == KIND_TOKEN:
            return (self.kind, self.token, self.label)
        if self.kind == KIND_FEATURE:
            return (self.kind, self.predicate, self.label)
        if self.kind == KIND_INSTANCE:
            return (self.kind, self.instance, self.label)
        return (self.kind, self.pair)

    def touched_instances(self, corpus: Corpus) -> list[int]:
        """Instance ids this evidence grounds on (where its predicate can fire)."""
        if self.kind == KIND_TOKEN:
            return corpus.instances_with_token(self.token)
        if self.kind == KIND_FEATURE:
            need = set(self.predicate)
            return [inst.id for inst in corpus.instances if need <= inst.token_set]
        if self.kind == KIND_INSTANCE:
            return [self.instance]
        return list(self.pair)


def eval_formula(e: VirtualEvidence, assignment: dict[int, int], corpus: Corpus) -> int:
    """Evaluate the binary formula under a label assignment of touched instances."""
    if e.kind == KIND_PAIR:
        i, j = e.pair
        _require(assignment, i, e)
        _require(assignment, j, e)
        return int(assignment[i] == assignment[j])
    if e.kind == KIND_INSTANCE:
        _require(assignment, e.instance, e)
        return int(assignment[e.instance] == e.label)
    # token/feature evidence against a single instance in the assignment
    if len(assignment) != 1:
        raise EvidenceError(f"unary evidence expects exactly one assigned instance, got {assignment}")
    (i, y), = assignment.items()
    inst = corpus.instances[i]
    if e.kind == KIND_TOKEN:
        holds = e.token in inst.token_set
    else:
        holds = set(e.predicate) <= inst.token_set
    return int(holds and y == e.label)


def _require(assignment: dict[int, int], instance: int, e: VirtualEvidence) -> None:
    if instance not in assignment:
        raise EvidenceError(f"assignment missing instance {instance} touched by {e.key()}")


def potential(e: VirtualEvidence, assignment: dict[int, int], corpus: Corpus) -> float:
    """exp(w * f); equals 1.0 exactly when the formula is false."""
    return math.exp(e.weight * eval_formula(e, assignment, corpus))


@dataclass
class FactorGraph:
    """Instances plus attached evidences: the structure of P(K, Y | X)."""

    corpus: Corpus
    evidences: list[VirtualEvidence] = field(default_factory=list)
    groundings: dict[int, list[int]] = field(default_factory=dict)  # evidence id -> instances
    adjacency: dict[int, list[int]] = field(default_factory=dict)  # instance -> evidence ids
    _keys: dict[tuple, int] = field(default_factory=dict)

    def attach(self, e: VirtualEvidence) -> VirtualEvidence:
        key = e.key()
        if key in self._keys:
            raise DuplicateEvidenceError(self._keys[key], key)
        if e.kind == KIND_PAIR:
            n = len(self.corpus)
            if not (0 <= e.pair[0] < n and 0 <= e.pair[1] < n):
                raise EvidenceError(f"pair {e.pair} references missing instances")
        e.id = len(self.evidences)
        self.evidences.append(e)
        self._keys[key] = e.id
        touched = e.touched_instances(self.corpus)
        self.groundings[e.id] = touched
        for i in touched:
            self.adjacency.setdefault(i, []).append(e.id)
        return e

    def has(self, key: tuple) -> bool:
        return key in self._keys

    def active_evidences(self) -> list[VirtualEvidence]:
        return [e for e in self.evidences if e.status == "active"]

    def unary_log_potentials(self, out=None):
        """N x L array of summed unary evidence weights per (instance, label)."""
        n, n_labels = len(self.corpus), self.corpus.n_labels
        theta = out if out is not None else np.zeros((n, n_labels))
        theta[:] = 0.0
        for e in self.active_evidences():
            if e.kind == KIND_PAIR:
                continue
            for i in self.groundings[e.id]:
                theta[i, e.label] += e.weight
        return theta

    def pair_factors(self) -> list[VirtualEvidence]:
        return [e for e in self.active_evidences() if e.kind == KIND_PAIR]


def evidence_to_record(e: VirtualEvidence, corpus: Corpus) -> dict:
    rec = {
        "kind": e.kind,
        "weight": e.weight,
        "learnable": e.learnable,
        "source": e.source,
        "status": e.status,
    }
    if e.kind == KIND_TOKEN:
        rec["token"] = corpus.vocab.token(e.token)
        rec["label"] = corpus.labels[e.label]
    elif e.kind == KIND_FEATURE:
        rec["predicate"] = [corpus.vocab.token(t) for t in e.predicate]
        rec["label"] = corpus.labels[e.label]
    elif e.kind == KIND_INSTANCE:
        rec["instance"] = e.instance
        rec["label"] = corpus.labels[e.label]
    else:
        rec["pair"] = list(e.pair)
    return rec


def evidence_from_record(rec: dict, corpus: Corpus) -> VirtualEvidence:
    kind = rec["kind"]
    common = dict(
        weight=float(rec.get("weight", DEFAULT_WEIGHT)),
        learnable=bool(rec.get("learnable", True)),
        source=rec.get("source", "seed"),
        status=rec.get("status", "active"),
    )
    if kind == KIND_TOKEN:
        tok = rec["token"]
        if tok not in corpus.vocab:
            raise EvidenceError(f"token {tok!r} not in corpus vocabulary")
        return VirtualEvidence(kind, token=corpus.vocab.id_for(tok), label=corpus.label_id(rec["label"]), **common)
    if kind == KIND_FEATURE:
        pred = tuple(corpus.vocab.id_for(t) for t in rec["predicate"])
        return VirtualEvidence(kind, predicate=pred, label=corpus.label_id(rec["label"]), **common)
    if kind == KIND_INSTANCE:
        return VirtualEvidence(kind, instance=int(rec["instance"]), label=corpus.label_id(rec["label"]), **common)
    if kind == KIND_PAIR:
        return VirtualEvidence(kind, pair=tuple(int(x) for x in rec["pair"]), **common)
    raise EvidenceError(f"unknown evidence kind {kind!r}")


def save_evidences(path: str, evidences: list[VirtualEvidence], corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for e in evidences:
            fh.write(json.dumps(evidence_to_record(e, corpus)) + "\n")


def load_evidences(path: str, corpus: Corpus) -> list[VirtualEvidence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(evidence_from_record(json.loads(line), corpus))
            except (json.JSONDecodeError, KeyError) as exc:
                raise EvidenceError(f"{path}:{lineno}: bad evidence record: {exc}") from exc
    return out
