"""Self-supervision engine: train a text classifier from labeled features.

Evidence about latent labels is expressed as weighted logical factors over
a corpus, combined with a neural predictor in a factor graph, and fit with
variational EM. A proposal loop then grows the evidence set automatically
(structured self-training) or by querying a human (feature-based active
learning).
"""

from selfsup.corpus import Corpus, FeatureUniverse, GoldAccess, Instance, load_corpus, tokenize
from selfsup.evidence import FactorGraph, VirtualEvidence
from selfsup.inference import BPConfig, Marginals, bp_posterior, brute_force_posterior, evidence_only_marginals
from selfsup.predictor import AttentionClassifier, PredictorConfig
from selfsup.learning import EMConfig, dpl_learn
from selfsup.loop import Oracle, RunHistory, S4Config, evaluate, run_s4, self_train_baseline, simulate_oracle

__all__ = [
    "AttentionClassifier",
    "BPConfig",
    "Corpus",
    "EMConfig",
    "FactorGraph",
    "FeatureUniverse",
    "GoldAccess",
    "Instance",
    "Marginals",
    "Oracle",
    "PredictorConfig",
    "RunHistory",
    "S4Config",
    "VirtualEvidence",
    "bp_posterior",
    "brute_force_posterior",
    "dpl_learn",
    "evaluate",
    "evidence_only_marginals",
    "load_corpus",
    "run_s4",
    "self_train_baseline",
    "simulate_oracle",
    "tokenize",
]
