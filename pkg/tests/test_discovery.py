"""Discovery loop: candidate filtering, human decisions, stopping, replay."""

import numpy as np
import pytest

from cybernews.discovery import (
    APPROVED,
    REJECTED,
    STOP_MAX_RUNS,
    STOP_NO_CANDIDATES,
    NoSeedsError,
    PendingDecisionsError,
    SessionStoppedError,
    UnknownDecisionError,
    append_audit,
    apply_decisions,
    approve_all,
    is_duplicate_or_extension,
    load_audit,
    load_termdb,
    new_session,
    propose_candidates,
    reject_all,
    replay_audit,
    restore_session,
    run_until_stop,
    save_termdb,
)
from cybernews.embed import EmbeddingModel, SkipGramConfig, Vocabulary

AT = "2023-09-01 00:00:00.000"


def angle_model(terms_at_degrees):
    """2-d embedding with terms placed at given angles; cosine = cos(delta)."""
    terms = [t for t, _ in terms_at_degrees]
    vecs = np.array(
        [[np.cos(np.radians(d)), np.sin(np.radians(d))] for _, d in terms_at_degrees]
    )
    vocab = Vocabulary(terms, [1] * len(terms))
    config = SkipGramConfig(dimension=2, min_count=1)
    return EmbeddingModel(vocab, vecs, np.zeros_like(vecs), config)


# Adjacent terms are ~0.75 similar, two steps apart ~0.14: each run discovers
# exactly the next link of the chain.
CHAIN = angle_model(
    [("ransomware", 0), ("lockbit", 41), ("blackcat", 82),
     ("bianlian", 123), ("clop", 164), ("royalgang", 205)]
)


class TestDuplicateOrExtension:
    def test_exact_duplicate(self):
        assert is_duplicate_or_extension("ransomware", {"ransomware"})

    def test_extension_of_existing(self):
        assert is_duplicate_or_extension("ransomware_attack", {"ransomware"})

    def test_existing_extends_candidate(self):
        assert is_duplicate_or_extension("data", {"data_breach"})

    def test_unrelated_passes(self):
        assert not is_duplicate_or_extension("lockbit", {"ransomware", "data_breach"})

    def test_token_level_not_substring(self):
        # "war" is a substring of "software" but not a token of it
        assert not is_duplicate_or_extension("war", {"software"})

    def test_space_and_underscore_phrases_equivalent(self):
        assert is_duplicate_or_extension("zero day", {"zero_day_attack"})


class TestPropose:
    def test_exactly_cluster_members(self, planted):
        model, cluster_a, _ = planted
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        assert {c.term for c in cands} == set(cluster_a) - {"ransomware"}
        assert all(c.status == "pending" for c in cands)
        assert all(c.run_index == 0 for c in cands)
        assert all(c.similarity >= session.threshold for c in cands)

    def test_saturated_db_proposes_nothing(self, planted):
        model, cluster_a, _ = planted
        session = new_session(cluster_a, at=AT)
        assert propose_candidates(session, model, at=AT) == []

    def test_dual_seed_keeps_max_similarity_provenance(self):
        model = angle_model([("a", 0), ("b", 30), ("x", 50)])
        session = new_session(["a", "b"], at=AT)
        (cand,) = propose_candidates(session, model, at=AT)
        assert cand.term == "x"
        assert cand.seed == "b"  # cos(20°) beats cos(50°)
        assert cand.similarity == pytest.approx(np.cos(np.radians(20)), abs=1e-9)

    def test_no_in_vocab_seeds_errors(self, planted):
        model, _, _ = planted
        session = new_session(["not_a_term"], at=AT)
        with pytest.raises(NoSeedsError):
            propose_candidates(session, model, at=AT)

    def test_oov_seed_skipped_with_survivors(self, planted):
        model, cluster_a, _ = planted
        session = new_session(["ransomware", "not_a_term"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        assert {c.seed for c in cands} == {"ransomware"}

    def test_pending_blocks_next_propose(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        propose_candidates(session, model, at=AT)
        with pytest.raises(PendingDecisionsError):
            propose_candidates(session, model, at=AT)


class TestApplyDecisions:
    def test_approved_term_seeds_next_run(self):
        session = new_session(["ransomware"], at=AT)
        propose_candidates(session, CHAIN, at=AT)
        apply_decisions(session, [("lockbit", APPROVED)], at=AT)
        assert session.seeds_current == ["lockbit"]
        assert session.run_index == 1
        assert session.termdb["lockbit"].origin == "discovered"
        assert session.termdb["lockbit"].ancestor == "ransomware"
        # next round discovers the next chain link
        cands = propose_candidates(session, CHAIN, at=AT)
        assert {c.term for c in cands} == {"blackcat"}

    def test_reject_everything_stops(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        apply_decisions(session, reject_all(cands), at=AT)
        assert session.seeds_current == []
        assert session.stopped
        assert session.stop_reason == STOP_NO_CANDIDATES

    def test_two_approvals_with_ancestors(self, planted):
        model, cluster_a, _ = planted
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        picks = [c.term for c in cands[:2]]
        decisions = [(picks[0], APPROVED), (picks[1], APPROVED)] + [
            (c.term, REJECTED) for c in cands[2:]
        ]
        apply_decisions(session, decisions, at=AT)
        for term in picks:
            assert session.termdb[term].ancestor == "ransomware"
        assert sorted(session.seeds_current) == sorted(picks)

    def test_unknown_term_errors(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        propose_candidates(session, model, at=AT)
        with pytest.raises(UnknownDecisionError):
            apply_decisions(session, [("never_proposed", APPROVED)], at=AT)

    def test_settled_term_errors(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        term = cands[0].term
        rest = [(c.term, REJECTED) for c in cands[1:]]
        apply_decisions(session, [(term, APPROVED)] + rest, at=AT)
        with pytest.raises((UnknownDecisionError, SessionStoppedError)):
            apply_decisions(session, [(term, REJECTED)], at=AT)

    def test_rejected_never_reproposed(self):
        session = new_session(["ransomware"], at=AT)
        propose_candidates(session, CHAIN, at=AT)
        apply_decisions(session, [("lockbit", REJECTED)], at=AT)
        assert session.stopped  # nothing approved -> no seeds
        # fresh session along the chain: reject mid-chain, approve the rest
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, CHAIN, at=AT)
        apply_decisions(session, approve_all(cands), at=AT)
        cands = propose_candidates(session, CHAIN, at=AT)  # blackcat
        apply_decisions(session, reject_all(cands), at=AT)
        assert "blackcat" in session.rejected
        assert session.stopped

    def test_rejected_filtered_in_later_runs(self):
        # x is near both a (its proposer in run 0) and b; once rejected it must
        # not resurface when run 1 runs from the newly approved seed b.
        model = angle_model([("a", 0), ("b", 41), ("x", 50)])
        session = new_session(["a"], at=AT)
        cands = propose_candidates(session, model, at=AT)
        assert {c.term for c in cands} == {"b", "x"}
        apply_decisions(session, [("x", REJECTED), ("b", APPROVED)], at=AT)
        cands = propose_candidates(session, model, at=AT)  # run 1, seeded by b
        assert {c.term for c in cands} == set()  # x stays rejected, a is in db


class TestRunUntilStop:
    def test_max_runs_zero_stops_immediately(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], max_runs=0, at=AT)
        run_until_stop(session, model, approve_all, at=AT)
        assert session.stopped
        assert session.stop_reason == STOP_MAX_RUNS
        assert session.run_index == 0

    def test_reject_all_stops_after_first_run(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        run_until_stop(session, model, reject_all, at=AT)
        assert session.stop_reason == STOP_NO_CANDIDATES
        assert session.run_index == 1

    def test_chain_recovered_transitively(self):
        session = new_session(["ransomware"], at=AT)
        run_until_stop(session, CHAIN, approve_all, at=AT)
        discovered = {t for t, r in session.termdb.items() if r.origin == "discovered"}
        assert discovered == {"lockbit", "blackcat", "bianlian", "clop", "royalgang"}
        # one new link per run
        assert session.termdb["lockbit"].run_index == 0
        assert session.termdb["blackcat"].run_index == 1
        assert session.termdb["royalgang"].run_index == 4
        assert session.stopped

    def test_termdb_only_grows_and_threshold_enforced(self, planted):
        model, _, _ = planted
        session = new_session(["ransomware"], at=AT)
        sizes = [len(session.termdb)]

        def tracking_source(cands):
            assert all(c.similarity >= session.threshold for c in cands)
            sizes.append(len(session.termdb))
            return approve_all(cands)

        run_until_stop(session, model, tracking_source, at=AT)
        assert sizes == sorted(sizes)


class TestAuditAndPersistence:
    def test_replay_reproduces_termdb(self):
        session = new_session(["ransomware"], at=AT)
        run_until_stop(session, CHAIN, approve_all, at=AT)
        assert replay_audit(session.audit) == session.termdb

    def test_restore_session_matches(self):
        session = new_session(["ransomware"], at=AT)
        propose_candidates(session, CHAIN, at=AT)
        apply_decisions(session, [("lockbit", APPROVED)], at=AT)
        restored = restore_session(session.audit)
        assert restored.termdb == session.termdb
        assert restored.seeds_current == session.seeds_current
        assert restored.run_index == session.run_index
        assert restored.rejected == session.rejected
        assert [c.__dict__ for c in restored.candidates] == [
            c.__dict__ for c in session.candidates
        ]

    def test_audit_file_roundtrip(self, tmp_path):
        session = new_session(["ransomware"], at=AT)
        run_until_stop(session, CHAIN, approve_all, at=AT)
        path = tmp_path / "audit.jsonl"
        append_audit(session.audit, path)
        assert load_audit(path) == session.audit

    def test_termdb_file_roundtrip(self, tmp_path):
        session = new_session(["ransomware", "data_breach"], at=AT)
        path = tmp_path / "termdb.json"
        save_termdb(session.termdb, path)
        assert load_termdb(path) == session.termdb

    def test_ancestor_chain_terminates_at_seed(self):
        session = new_session(["ransomware"], at=AT)
        run_until_stop(session, CHAIN, approve_all, at=AT)
        for record in session.termdb.values():
            seen = set()
            node = record
            while node.origin == "discovered":
                assert node.term not in seen
                seen.add(node.term)
                node = session.termdb[node.ancestor]
            assert node.origin == "seed"

    def test_acceptance_rate_telemetry(self):
        session = new_session(["ransomware"], at=AT)
        cands = propose_candidates(session, CHAIN, at=AT)
        assert session.acceptance_rate() is None
        apply_decisions(session, approve_all(cands), at=AT)
        assert session.acceptance_rate() == 1.0
