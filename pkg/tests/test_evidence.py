import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import build_corpus
from selfsup.evidence import (
    KIND_FEATURE,
    KIND_INSTANCE,
    KIND_PAIR,
    KIND_TOKEN,
    DuplicateEvidenceError,
    EvidenceError,
    FactorGraph,
    VirtualEvidence,
    eval_formula,
    load_evidences,
    potential,
    save_evidences,
)


@pytest.fixture
def corpus():
    return build_corpus(["good movie fun", "bad plot", "good good acting"])


class TestConstruction:
    def test_weight_must_be_finite(self):
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_TOKEN, token=0, label=0, weight=float("inf"))

    def test_prior_nonnegative(self):
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_TOKEN, token=0, label=0, prior_strength=-1.0)

    def test_pair_distinct(self):
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_PAIR, pair=(2, 2))

    def test_pair_canonical_order(self):
        e = VirtualEvidence(KIND_PAIR, pair=(5, 1))
        assert e.pair == (1, 5)

    def test_feature_predicate_limit(self):
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_FEATURE, predicate=(1, 2, 3), label=0)

    def test_missing_arguments(self):
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_TOKEN, label=0)
        with pytest.raises(EvidenceError):
            VirtualEvidence(KIND_INSTANCE, instance=0)
        with pytest.raises(EvidenceError):
            VirtualEvidence("unknown_kind")


class TestEvalFormula:
    def test_token_label(self, corpus):
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1)
        assert eval_formula(e, {0: 1}, corpus) == 1
        assert eval_formula(e, {0: 0}, corpus) == 0

    def test_token_absent(self, corpus):
        bad = corpus.vocab.id_for("bad")
        e = VirtualEvidence(KIND_TOKEN, token=bad, label=1)
        # instance 0 does not contain "bad": formula is false regardless of label
        assert eval_formula(e, {0: 1}, corpus) == 0

    def test_feature_label_conjunction(self, corpus):
        good = corpus.vocab.id_for("good")
        fun = corpus.vocab.id_for("fun")
        e = VirtualEvidence(KIND_FEATURE, predicate=(good, fun), label=1)
        assert eval_formula(e, {0: 1}, corpus) == 1  # both tokens present
        assert eval_formula(e, {2: 1}, corpus) == 0  # only "good" present

    def test_instance_label(self, corpus):
        e = VirtualEvidence(KIND_INSTANCE, instance=1, label=0)
        assert eval_formula(e, {1: 0}, corpus) == 1
        assert eval_formula(e, {1: 1}, corpus) == 0

    def test_pair_agree(self, corpus):
        e = VirtualEvidence(KIND_PAIR, pair=(0, 1))
        assert eval_formula(e, {0: 0, 1: 0}, corpus) == 1
        assert eval_formula(e, {0: 0, 1: 1}, corpus) == 0

    def test_missing_assignment(self, corpus):
        e = VirtualEvidence(KIND_PAIR, pair=(0, 1))
        with pytest.raises(EvidenceError):
            eval_formula(e, {0: 0}, corpus)


class TestPotential:
    def test_true_formula(self, corpus):
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=2.2)
        assert potential(e, {0: 1}, corpus) == pytest.approx(math.exp(2.2))
        assert potential(e, {0: 1}, corpus) == pytest.approx(9.0250, abs=1e-4)

    def test_false_formula_is_one(self, corpus):
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=17.0)
        assert potential(e, {0: 0}, corpus) == 1.0

    def test_zero_weight_inert(self, corpus):
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=0.0)
        assert potential(e, {0: 1}, corpus) == 1.0

    @given(st.floats(-5, 5), st.integers(0, 1), st.integers(0, 1))
    @settings(max_examples=50)
    def test_equals_exp_weight_times_formula(self, w, inst, lab):
        corpus = build_corpus(["good movie", "bad movie"])
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=w)
        f = eval_formula(e, {inst: lab}, corpus)
        assert potential(e, {inst: lab}, corpus) == pytest.approx(math.exp(w * f))


class TestFactorGraph:
    def test_token_grounding(self, corpus):
        g = FactorGraph(corpus)
        good = corpus.vocab.id_for("good")
        e = g.attach(VirtualEvidence(KIND_TOKEN, token=good, label=1))
        assert sorted(g.groundings[e.id]) == [0, 2]
        assert e.id in g.adjacency[0]
        assert e.id in g.adjacency[2]
        assert e.id not in g.adjacency.get(1, [])

    def test_grounding_completeness_recount(self, corpus):
        g = FactorGraph(corpus)
        for tok in ("good", "bad", "movie"):
            t = corpus.vocab.id_for(tok)
            e = g.attach(VirtualEvidence(KIND_TOKEN, token=t, label=0))
            expected = {i.id for i in corpus.instances if t in i.token_set}
            assert set(g.groundings[e.id]) == expected

    def test_duplicate_rejected_with_existing_id(self, corpus):
        g = FactorGraph(corpus)
        good = corpus.vocab.id_for("good")
        e = g.attach(VirtualEvidence(KIND_TOKEN, token=good, label=1))
        with pytest.raises(DuplicateEvidenceError) as exc:
            g.attach(VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=0.5))
        assert exc.value.existing_id == e.id

    def test_pair_adjacency(self, corpus):
        g = FactorGraph(corpus)
        e = g.attach(VirtualEvidence(KIND_PAIR, pair=(1, 2)))
        assert e.id in g.adjacency[1]
        assert e.id in g.adjacency[2]

    def test_pair_requires_existing_instances(self, corpus):
        g = FactorGraph(corpus)
        with pytest.raises(EvidenceError):
            g.attach(VirtualEvidence(KIND_PAIR, pair=(0, 99)))

    def test_rejected_not_active(self, corpus):
        g = FactorGraph(corpus)
        good = corpus.vocab.id_for("good")
        e = VirtualEvidence(KIND_TOKEN, token=good, label=1, status="rejected")
        g.attach(e)
        assert e not in g.active_evidences()
        assert g.has(e.key())

    def test_unary_log_potentials(self, corpus):
        g = FactorGraph(corpus)
        good = corpus.vocab.id_for("good")
        g.attach(VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=2.0))
        g.attach(VirtualEvidence(KIND_INSTANCE, instance=0, label=1, weight=0.5))
        theta = g.unary_log_potentials()
        expected = np.zeros((3, 2))
        expected[0, 1] = 2.5  # token factor + instance factor
        expected[2, 1] = 2.0  # token factor only
        np.testing.assert_allclose(theta, expected)


class TestSerialization:
    def test_round_trip(self, tmp_path, corpus):
        good = corpus.vocab.id_for("good")
        evs = [
            VirtualEvidence(KIND_TOKEN, token=good, label=1, weight=2.2, source="seed"),
            VirtualEvidence(KIND_INSTANCE, instance=1, label=0, weight=20.0, learnable=False),
            VirtualEvidence(KIND_PAIR, pair=(0, 2), weight=1.0, source="sst"),
            VirtualEvidence(KIND_TOKEN, token=0, label=0, source="fal", status="rejected"),
        ]
        path = tmp_path / "ev.jsonl"
        save_evidences(str(path), evs, corpus)
        loaded = load_evidences(str(path), corpus)
        assert len(loaded) == len(evs)
        for a, b in zip(evs, loaded):
            assert a.key() == b.key()
            assert a.weight == b.weight
            assert a.learnable == b.learnable
            assert a.source == b.source
            assert a.status == b.status

    def test_unknown_token_rejected(self, tmp_path, corpus):
        path = tmp_path / "ev.jsonl"
        path.write_text('{"kind": "token_label", "token": "zzz", "label": "pos"}\n')
        with pytest.raises(EvidenceError):
            load_evidences(str(path), corpus)


class TestPotentialEnumeration:
    def test_all_assignments_consistent(self):
        """potential == exp(w * formula) over every assignment of a small graph."""
        corpus = build_corpus(["a b", "b c", "c a"])
        evs = [
            VirtualEvidence(KIND_TOKEN, token=corpus.vocab.id_for("b"), label=0, weight=1.3),
            VirtualEvidence(KIND_PAIR, pair=(0, 2), weight=-0.7),
            VirtualEvidence(KIND_INSTANCE, instance=1, label=1, weight=2.0),
        ]
        for e in evs:
            touched = e.touched_instances(corpus)
            if e.kind == KIND_PAIR:
                assignments = [
                    dict(zip(touched, labels))
                    for labels in itertools.product(range(2), repeat=len(touched))
                ]
            else:
                # unary kinds are evaluated one grounding at a time
                assignments = [{i: y} for i in touched for y in range(2)]
            for a in assignments:
                assert potential(e, a, corpus) == pytest.approx(
                    math.exp(e.weight * eval_formula(e, a, corpus))
                )
