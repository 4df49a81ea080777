"""Entity detection, relevance features, and the logistic scorer."""

import numpy as np
import pytest

from cybernews.newsstore import TokenizedDoc, normalize
from cybernews.relevance import (
    FEATURE_NAMES,
    Gazetteer,
    RelevanceModel,
    RelevanceTrainConfig,
    build_training_set,
    featurize,
    find_entities,
    logistic_loss_and_grad,
    relevance_probability,
    sigmoid,
    train_relevance,
)
from cybernews.synthdata import FIXTURE_SEED_TERMS, fixture_gazetteer, relevance_fixture

TERMDB = [t.replace(" ", "_") for t in FIXTURE_SEED_TERMS]


def doc(text, article_id="d1"):
    return TokenizedDoc(article_id, normalize(text))


class TestFindEntities:
    def test_single_direct_match(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        mentions = find_entities(doc("tesla data breach blamed on insider"), gaz)
        assert len(mentions) == 1
        assert mentions[0].canonical == "tesla"
        assert mentions[0].span == (0, 1)

    def test_no_matches(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        assert find_entities(doc("royal mail hit by cyber attack"), gaz) == []

    def test_longest_match_wins_over_alias(self):
        gaz = Gazetteer()
        gaz.add("jpmorgan_chase", aliases=["jpmorgan"])
        mentions = find_entities(doc("jpmorgan chase must face lawsuit"), gaz)
        assert len(mentions) == 1
        assert mentions[0].canonical == "jpmorgan_chase"
        assert mentions[0].span == (0, 2)

    def test_alias_maps_to_canonical(self):
        gaz = Gazetteer()
        gaz.add("mclaren_health_care", aliases=["mclaren"])
        mentions = find_entities(doc("mclaren sued over breach"), gaz)
        assert mentions[0].canonical == "mclaren_health_care"

    def test_conflicting_alias_rejected(self):
        gaz = Gazetteer()
        gaz.add("meta", aliases=["m"])
        with pytest.raises(ValueError):
            gaz.add("mastercard", aliases=["m"])

    def test_non_overlapping_sorted_spans(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        gaz.add("meta")
        mentions = find_entities(doc("tesla and meta and tesla again"), gaz)
        spans = [m.span for m in mentions]
        assert spans == sorted(spans)
        for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
            assert e1 <= s2

    def test_multi_token_name(self):
        gaz = fixture_gazetteer()
        mentions = find_entities(
            doc("mclaren health care facing 3 lawsuits in ransomware hack"), gaz
        )
        assert mentions[0].canonical == "mclaren_health_care"
        assert mentions[0].span == (0, 3)


class TestFeaturize:
    def test_position_zero(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        d = doc("tesla data breach hits thousands of customer accounts ok")
        (m,) = find_entities(d, gaz)
        phi = featurize(d, m, TERMDB)
        assert phi[FEATURE_NAMES.index("relative_position")] == 0.0
        assert phi[FEATURE_NAMES.index("bias")] == 1.0
        assert len(phi) == 6

    def test_attribution_flag_set(self):
        gaz = Gazetteer()
        gaz.add("y_bank")
        d = doc("cyber attacks rise, says y bank")
        (m,) = find_entities(d, gaz)
        phi = featurize(d, m, TERMDB)
        assert phi[FEATURE_NAMES.index("attribution_pattern")] == 1.0

    def test_attribution_flag_clear_for_subject(self):
        gaz = Gazetteer()
        gaz.add("seiko")
        d = doc("seiko confirms breach in cyberattack")
        (m,) = find_entities(d, gaz)
        phi = featurize(d, m, TERMDB)
        assert phi[FEATURE_NAMES.index("attribution_pattern")] == 0.0

    def test_cyber_term_count(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        d = doc("tesla data breach and ransomware attack")
        (m,) = find_entities(d, gaz)
        phi = featurize(d, m, TERMDB)
        assert phi[FEATURE_NAMES.index("cyber_term_count")] == 2.0

    def test_first_entity_flag(self):
        gaz = Gazetteer()
        gaz.add("tesla")
        gaz.add("meta")
        d = doc("tesla and meta breached")
        mentions = find_entities(d, gaz)
        phi_first = featurize(d, mentions[0], TERMDB, mentions)
        phi_second = featurize(d, mentions[1], TERMDB, mentions)
        assert phi_first[FEATURE_NAMES.index("is_first_entity")] == 1.0
        assert phi_second[FEATURE_NAMES.index("is_first_entity")] == 0.0

    def test_span_outside_doc_errors(self):
        from cybernews.relevance import EntityMention

        d = doc("short doc")
        bad = EntityMention("d1", "x", (1, 5), "x")
        with pytest.raises(ValueError):
            featurize(d, bad, TERMDB)


class TestProbability:
    def test_zero_weights_half(self):
        model = RelevanceModel(np.zeros(6))
        assert relevance_probability(model, np.ones(6)) == 0.5

    def test_large_score_saturates(self):
        model = RelevanceModel(np.array([30.0, 0, 0, 0, 0, 0]))
        assert relevance_probability(model, np.array([1.0, 0, 0, 0, 0, 0])) > 0.999999

    def test_dimension_mismatch(self):
        model = RelevanceModel(np.zeros(6))
        with pytest.raises(ValueError):
            relevance_probability(model, np.zeros(4))

    def test_negated_weights_complement(self):
        rng = np.random.default_rng(0)
        w = rng.normal(size=6)
        phi = rng.normal(size=6)
        p = relevance_probability(RelevanceModel(w), phi)
        q = relevance_probability(RelevanceModel(-w), phi)
        assert p + q == pytest.approx(1.0, abs=1e-12)

    def test_monotone_in_score(self):
        zs = np.linspace(-8, 8, 200)
        ps = sigmoid(zs)
        assert np.all(np.diff(ps) > 0)


class TestTraining:
    def test_separable_fixture_perfect_at_half(self):
        rng = np.random.default_rng(4)
        pos = [(np.concatenate([rng.normal(2, 0.3, 5), [1.0]]), True) for _ in range(20)]
        neg = [(np.concatenate([rng.normal(-2, 0.3, 5), [1.0]]), False) for _ in range(20)]
        model = train_relevance(pos + neg, RelevanceTrainConfig(epochs=100))
        correct = sum(
            (relevance_probability(model, phi) >= 0.5) == label for phi, label in pos + neg
        )
        assert correct == 40

    def test_deterministic(self):
        docs, rows = relevance_fixture()
        examples = build_training_set(docs, fixture_gazetteer(), TERMDB, rows)
        m1 = train_relevance(examples, RelevanceTrainConfig())
        m2 = train_relevance(examples, RelevanceTrainConfig())
        np.testing.assert_array_equal(m1.weights, m2.weights)

    def test_single_class_errors(self):
        examples = [(np.ones(6), True), (np.zeros(6), True)]
        with pytest.raises(ValueError):
            train_relevance(examples)

    def test_loss_decreases(self):
        docs, rows = relevance_fixture()
        examples = build_training_set(docs, fixture_gazetteer(), TERMDB, rows)
        x = np.vstack([phi for phi, _ in examples])
        y = np.array([1.0 if r else 0.0 for _, r in examples])
        initial, _ = logistic_loss_and_grad(np.zeros(6), x, y)
        model = train_relevance(examples, RelevanceTrainConfig())
        final, _ = logistic_loss_and_grad(model.weights, x, y)
        assert final < initial

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(12, 6))
        y = (rng.random(12) > 0.5).astype(float)
        w = rng.normal(size=6)
        _, grad = logistic_loss_and_grad(w, x, y)
        h = 1e-6
        fd = np.zeros(6)
        for i in range(6):
            w[i] += h
            up, _ = logistic_loss_and_grad(w, x, y)
            w[i] -= 2 * h
            down, _ = logistic_loss_and_grad(w, x, y)
            w[i] += h
            fd[i] = (up - down) / (2 * h)
        assert np.abs(grad - fd).max() / max(np.abs(grad).max(), np.abs(fd).max()) <= 1e-4

    def test_labels_file_roundtrip(self, tmp_path):
        import json

        from cybernews.relevance import load_relevance_labels

        rows = [
            {"article_id": "a1", "span": [0, 2], "relevant": True},
            {"article_id": "a2", "span": [4, 5], "relevant": False},
        ]
        path = tmp_path / "relevance_labels.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        assert load_relevance_labels(path) == rows

    def test_model_file_roundtrip(self, tmp_path):
        from cybernews.relevance import load_relevance_model, save_relevance_model

        model = RelevanceModel(np.array([0.5, -1.0, 2.0, 0.0, 0.25, -0.75]))
        path = tmp_path / "relevance.json"
        save_relevance_model(model, path)
        np.testing.assert_array_equal(load_relevance_model(path).weights, model.weights)

    def test_fixture_attribution_vs_subject_pinned(self):
        """Attributive mention scores below 0.5, subject mention above."""
        docs, rows = relevance_fixture()
        gaz = fixture_gazetteer()
        examples = build_training_set(docs, gaz, TERMDB, rows)
        model = train_relevance(examples, RelevanceTrainConfig())

        d_attr = doc("Cyber attacks rise, says Y Bank", "ex-attr")
        mentions = find_entities(d_attr, gaz)
        p_attr = relevance_probability(model, featurize(d_attr, mentions[0], TERMDB, mentions))

        d_subj = doc(
            "Seiko confirms thousands of user accounts were breached in cyberattack",
            "ex-subj",
        )
        mentions = find_entities(d_subj, gaz)
        p_subj = relevance_probability(model, featurize(d_subj, mentions[0], TERMDB, mentions))

        assert p_attr < 0.5 < p_subj
        # pinned outputs of the seeded fixture training
        assert p_attr == pytest.approx(0.0014, abs=2e-3)
        assert p_subj == pytest.approx(0.9916, abs=2e-3)
