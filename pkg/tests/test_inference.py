import math

import numpy as np
import pytest

from helpers import (
    build_corpus,
    random_loopy_graph,
    random_tree_graph,
    total_variation,
    uniform_pred,
)
from selfsup.evidence import (
    KIND_INSTANCE,
    KIND_PAIR,
    KIND_TOKEN,
    FactorGraph,
    VirtualEvidence,
)
from selfsup.inference import (
    BPConfig,
    InferenceError,
    bp_posterior,
    brute_force_posterior,
    evidence_only_marginals,
    expected_feature,
)

TIGHT = BPConfig(max_sweeps=200, damping=0.0, tolerance=1e-12)


class TestBPPosterior:
    def test_single_true_factor_gives_090(self):
        c = build_corpus(["good film"])
        g = FactorGraph(c)
        g.attach(VirtualEvidence(
            KIND_TOKEN, token=c.vocab.id_for("good"), label=1, weight=math.log(9)
        ))
        m = bp_posterior(g, uniform_pred(c), TIGHT)
        assert m.dist(0)[1] == pytest.approx(0.9, abs=1e-9)

    def test_no_evidence_returns_predictor(self):
        c = build_corpus(["a", "b", "c"])
        g = FactorGraph(c)
        rng = np.random.default_rng(0)
        pred = rng.dirichlet(np.ones(2), size=3)
        m = bp_posterior(g, pred, TIGHT)
        np.testing.assert_allclose(m.probs, pred, atol=1e-12)

    def test_two_instance_tree_matches_enumeration(self):
        c = build_corpus(["good", "other"])
        g = FactorGraph(c)
        g.attach(VirtualEvidence(KIND_TOKEN, token=c.vocab.id_for("good"), label=1, weight=2.0))
        g.attach(VirtualEvidence(KIND_PAIR, pair=(0, 1), weight=1.0))
        pred = uniform_pred(c)
        bp = bp_posterior(g, pred, TIGHT)
        exact = brute_force_posterior(g, pred)
        np.testing.assert_allclose(bp.probs, exact.probs, atol=1e-8)

    def test_tree_exactness_random(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            g, pred = random_tree_graph(rng)
            bp = bp_posterior(g, pred, TIGHT)
            exact = brute_force_posterior(g, pred)
            assert np.abs(bp.probs - exact.probs).max() <= 1e-8

    def test_loopy_median_tv(self):
        rng = np.random.default_rng(5)
        errs = []
        for _ in range(50):
            g, pred = random_loopy_graph(rng)
            bp = bp_posterior(g, pred)  # default damping/schedule
            exact = brute_force_posterior(g, pred)
            errs.extend(total_variation(bp.probs, exact.probs))
        assert np.median(errs) <= 0.05

    def test_schedules_agree_on_trees(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            g, pred = random_tree_graph(rng)
            seq = bp_posterior(g, pred, BPConfig(max_sweeps=200, damping=0.0, tolerance=1e-12, schedule="sequential"))
            syn = bp_posterior(g, pred, BPConfig(max_sweeps=200, damping=0.0, tolerance=1e-12, schedule="synchronous"))
            np.testing.assert_allclose(seq.probs, syn.probs, atol=1e-6)

    def test_monotone_evidence(self):
        c = build_corpus(["good"])
        g = FactorGraph(c)
        e = g.attach(VirtualEvidence(KIND_TOKEN, token=0, label=1, weight=0.0))
        prev = -np.inf
        for w in np.linspace(-3, 3, 13):
            e.weight = float(w)
            q1 = bp_posterior(g, uniform_pred(c), TIGHT).dist(0)[1]
            assert q1 >= prev
            # closed form on a single binary instance: sigmoid(w)
            assert q1 == pytest.approx(1 / (1 + math.exp(-w)), abs=1e-9)
            prev = q1

    def test_nonconvergence_is_flagged(self):
        rng = np.random.default_rng(8)
        g, pred = random_loopy_graph(rng, max_weight=2.5, density=0.5)
        m = bp_posterior(g, pred, BPConfig(max_sweeps=1, damping=0.9, tolerance=1e-15))
        assert not m.converged
        assert m.residual > 1e-15
        assert m.iterations == 1

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(21)
        for _ in range(10):
            g, pred = random_loopy_graph(rng)
            m = bp_posterior(g, pred)
            np.testing.assert_allclose(m.probs.sum(axis=1), 1.0, atol=1e-9)
            assert (m.probs >= 0).all()


class TestEvidenceOnly:
    def test_default_weight_marginal(self):
        c = build_corpus(["good", "other"])
        g = FactorGraph(c)
        g.attach(VirtualEvidence(KIND_TOKEN, token=c.vocab.id_for("good"), label=1, weight=2.2))
        m = evidence_only_marginals(g, TIGHT)
        # closed form e^w / (e^w + 1)
        assert m.dist(0)[1] == pytest.approx(0.9002, abs=1e-4)
        np.testing.assert_allclose(m.dist(1), [0.5, 0.5], atol=1e-12)

    def test_independent_of_predictor(self):
        c = build_corpus(["good", "other"])
        g = FactorGraph(c)
        g.attach(VirtualEvidence(KIND_TOKEN, token=0, label=0, weight=1.5))
        assert np.array_equal(
            evidence_only_marginals(g, TIGHT).probs,
            evidence_only_marginals(g, TIGHT).probs,
        )


class TestBruteForce:
    def test_empty_graph_returns_pred(self):
        c = build_corpus(["a", "b"])
        g = FactorGraph(c)
        pred = np.array([[0.3, 0.7], [0.6, 0.4]])
        m = brute_force_posterior(g, pred)
        np.testing.assert_allclose(m.probs, pred)

    def test_subset_too_large(self):
        c = build_corpus([f"t{i}" for i in range(16)])
        g = FactorGraph(c)
        with pytest.raises(InferenceError):
            brute_force_posterior(g, uniform_pred(c), subset=list(range(16)))

    def test_subset_must_be_factor_closed(self):
        c = build_corpus(["a", "b"])
        g = FactorGraph(c)
        g.attach(VirtualEvidence(KIND_PAIR, pair=(0, 1), weight=1.0))
        with pytest.raises(InferenceError):
            brute_force_posterior(g, uniform_pred(c), subset=[0])

    def test_label_swap_symmetry(self):
        rng = np.random.default_rng(17)
        c = build_corpus(["a b", "b c", "c a"])
        g = FactorGraph(c)
        weights = {}
        for i in range(3):
            w = float(rng.uniform(-2, 2))
            weights[i] = w
            g.attach(VirtualEvidence(KIND_INSTANCE, instance=i, label=0, weight=w))
        pred = rng.dirichlet(np.ones(2), size=3)
        m1 = brute_force_posterior(g, pred)
        # flip every weight sign and swap the predictor columns
        g2 = FactorGraph(c)
        for i in range(3):
            g2.attach(VirtualEvidence(KIND_INSTANCE, instance=i, label=0, weight=-weights[i]))
        m2 = brute_force_posterior(g2, pred[:, ::-1])
        # an instance-label factor with weight -w on label 0 mirrors +w on label 1
        np.testing.assert_allclose(m1.probs, m2.probs[:, ::-1], atol=1e-12)


class TestExpectedFeature:
    def test_unary_mean_over_groundings(self):
        c = build_corpus(["good a", "good b", "other"])
        g = FactorGraph(c)
        e = g.attach(VirtualEvidence(KIND_TOKEN, token=c.vocab.id_for("good"), label=1))
        from selfsup.inference import Marginals

        probs = np.array([[0.1, 0.9], [0.3, 0.7], [0.5, 0.5]])
        m = Marginals(probs, (0, 1, 2))
        assert expected_feature(g, e, m) == pytest.approx(0.8)

    def test_pair_uniform(self):
        c = build_corpus(["a", "b"])
        g = FactorGraph(c)
        e = g.attach(VirtualEvidence(KIND_PAIR, pair=(0, 1), weight=0.0))
        m = bp_posterior(g, uniform_pred(c), TIGHT)
        assert expected_feature(g, e, m) == pytest.approx(0.5, abs=1e-9)

    def test_pair_against_exact_marginal(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            c = build_corpus(["a", "b"])
            g = FactorGraph(c)
            g.attach(VirtualEvidence(
                KIND_INSTANCE, instance=0, label=0, weight=float(rng.uniform(-2, 2))
            ))
            e = g.attach(VirtualEvidence(KIND_PAIR, pair=(0, 1), weight=float(rng.uniform(-2, 2))))
            pred = rng.dirichlet(np.ones(2), size=2)
            bp = bp_posterior(g, pred, TIGHT)
            exact = brute_force_posterior(g, pred)
            assert abs(expected_feature(g, e, bp) - expected_feature(g, e, exact)) <= 1e-8


class TestBPConfig:
    def test_damping_range(self):
        with pytest.raises(InferenceError):
            BPConfig(damping=1.0)

    def test_unknown_schedule(self):
        with pytest.raises(InferenceError):
            BPConfig(schedule="random")
