"""Variational EM: alternate posterior inference over labels with
predictor training and evidence-weight updates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from selfsup.evidence import FactorGraph
from selfsup.inference import (
    BPConfig,
    Marginals,
    bp_posterior,
    evidence_only_marginals,
    expected_feature,
)
from selfsup.predictor import AttentionClassifier

log = logging.getLogger(__name__)

WEIGHT_CLAMP = 20.0  # at this magnitude a factor is effectively hard


@dataclass
class EMConfig:
    em_iterations: int = 3
    epochs: int = 5
    lr: float | None = None  # None: use the predictor's configured rate
    weight_step_size: float = 0.1
    weight_steps: int = 25
    weight_tol: float = 0.0  # stop the weight loop early when max |grad| <= tol
    l2: float = 5e-8
    bp: BPConfig = field(default_factory=BPConfig)
    # "covered" trains the predictor only on instances touched by active
    # evidence (self-training semantics); "all" uses every instance.
    train_instances: str = "all"

    def __post_init__(self) -> None:
        if self.em_iterations < 1 or self.epochs < 0 or self.weight_steps < 0:
            raise ValueError("EMConfig fields must be positive")


def update_weights(g: FactorGraph, q: Marginals, cfg: EMConfig) -> float:
    """Gradient descent on the learnable evidence weights with q frozen.

    Descends (E_evidence[f_v] - E_q[f_v]) + 2*l2*w_v per weight, so the
    stationary point matches the evidence-only moments to the E-step
    moments. The evidence-only expectation is refreshed every step since
    it depends on the moving weights. Returns the final max |gradient|.
    """
    learnable = [e for e in g.active_evidences() if e.learnable]
    if not learnable:
        return 0.0
    e_q = {e.id: expected_feature(g, e, q) for e in learnable}
    max_grad = np.inf
    for _ in range(cfg.weight_steps):
        eo = evidence_only_marginals(g, cfg.bp)
        grads = {}
        for e in learnable:
            grads[e.id] = (expected_feature(g, e, eo) - e_q[e.id]) + 2 * cfg.l2 * e.weight
        max_grad = max(abs(v) for v in grads.values())
        if cfg.weight_tol and max_grad <= cfg.weight_tol:
            break
        for e in learnable:
            e.weight -= cfg.weight_step_size * grads[e.id]
            if abs(e.weight) > WEIGHT_CLAMP:
                log.warning("clamping weight of %s at %s", e.key(), WEIGHT_CLAMP)
                e.weight = float(np.clip(e.weight, -WEIGHT_CLAMP, WEIGHT_CLAMP))
    return max_grad


def dpl_learn(
    g: FactorGraph,
    state: AttentionClassifier,
    cfg: EMConfig | None = None,
) -> tuple[AttentionClassifier, FactorGraph, Marginals]:
    """Run variational EM; returns the updated predictor, graph, and last E-step marginals.

    Each iteration: E-step q = posterior(graph, predictor); M-step trains
    the predictor on q (warm start, Adam history reset) and moves the
    learnable evidence weights toward moment matching against the frozen q.
    """
    cfg = cfg or EMConfig()
    corpus = g.corpus
    train_ids = None
    if cfg.train_instances == "covered":
        active = {e.id for e in g.active_evidences()}
        train_ids = sorted(i for i, eids in g.adjacency.items() if any(e in active for e in eids))
    q: Marginals | None = None
    for it in range(cfg.em_iterations):
        pred = state.predict_corpus(corpus)
        q = bp_posterior(g, pred, cfg.bp)
        if not q.converged:
            log.warning("BP did not converge at EM iteration %d (residual %.3g)", it, q.residual)
        if train_ids is None or train_ids:
            loss = state.train(
                corpus, q.probs, epochs=cfg.epochs, lr=cfg.lr,
                reset_optimizer=True, instance_ids=train_ids,
            )
        else:
            loss = float("nan")
        update_weights(g, q, cfg)
        log.debug("EM iteration %d: loss %.4f", it, loss)
    return state, g, q
