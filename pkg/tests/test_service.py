"""Review service HTTP API: state, decisions, stepping, durability."""

import pytest
from fastapi.testclient import TestClient

from cybernews import discovery, pipeline
from cybernews.service import ReviewState, create_app
from cybernews.synthdata import _article

from test_discovery import CHAIN

AT = "2023-09-01 00:00:00.000"


def fresh_state(tmp_path, articles=None, alerts_path=None, max_runs=10):
    session = discovery.new_session(["ransomware"], max_runs=max_runs, at=AT)
    return ReviewState(
        session, CHAIN, tmp_path / "audit.jsonl", articles, alerts_path
    )


@pytest.fixture
def client_state(tmp_path):
    articles = [
        _article("s1", "LockBit ransomware gang strikes again"),
        _article("s2", "BlackCat hits hospital network"),
        _article("s3", "LockBit demands payment"),
    ]
    state = fresh_state(tmp_path, articles)
    return TestClient(create_app(state)), state


class TestBasics:
    def test_health(self, client_state):
        client, _ = client_state
        response = client.get("/api/health")
        assert response.status_code == 200
        assert response.json() == {"status": "ok"}

    def test_session_view(self, client_state):
        client, _ = client_state
        body = client.get("/api/session").json()
        assert body["run_index"] == 0
        assert body["termdb_size"] == 1
        assert body["pending_count"] == 0
        assert body["stopped"] is False

    def test_step_proposes_candidates(self, client_state):
        client, _ = client_state
        body = client.post("/api/session/step").json()
        assert [c["term"] for c in body["candidates"]] == ["lockbit"]
        assert body["session"]["pending_count"] == 1

    def test_candidates_filter_and_samples(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        pending = client.get("/api/candidates", params={"status": "pending"}).json()
        assert len(pending) == 1
        cand = pending[0]
        assert cand["term"] == "lockbit"
        assert cand["seed"] == "ransomware"
        assert 0.6 <= cand["similarity"] <= 1.0
        # sample headlines come from the article store
        assert cand["sample_headlines"] == [
            "LockBit ransomware gang strikes again",
            "LockBit demands payment",
        ]
        assert client.get("/api/candidates", params={"status": "approved"}).json() == []

    def test_alerts_endpoint(self, tmp_path):
        from cybernews.newsstore import CategoryDistribution, CyberCategory
        from cybernews.pipeline import Alert

        alerts_path = tmp_path / "alerts.jsonl"
        alert = Alert(
            "a1", "Tesla breach", [("tesla", 0.9)], ["ransomware"],
            CyberCategory.Litigation, CategoryDistribution([0.1, 0.1, 0.1, 0.1, 0.6]), AT,
        )
        pipeline.save_alerts([alert], alerts_path)
        state = fresh_state(tmp_path, alerts_path=alerts_path)
        client = TestClient(create_app(state))
        body = client.get("/api/alerts").json()
        assert len(body) == 1
        assert body[0]["category"] == "Litigation"
        assert body[0]["entities"] == [{"name": "tesla", "relevance": 0.9}]

    def test_alerts_empty_when_no_file(self, client_state):
        client, _ = client_state
        assert client.get("/api/alerts").json() == []


class TestDecisions:
    def test_approve_flows_into_termdb(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        response = client.post(
            "/api/decisions", json=[{"term": "lockbit", "decision": "approved"}]
        )
        assert response.status_code == 200
        body = response.json()
        assert body["applied"] == 1
        assert body["session"]["run_index"] == 1
        assert body["session"]["seeds_current"] == ["lockbit"]
        termdb = client.get("/api/termdb").json()
        assert {r["term"] for r in termdb} == {"ransomware", "lockbit"}
        lockbit = next(r for r in termdb if r["term"] == "lockbit")
        assert lockbit["origin"] == "discovered"
        assert lockbit["ancestor"] == "ransomware"

    def test_settled_term_conflict_409(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        client.post("/api/decisions", json=[{"term": "lockbit", "decision": "approved"}])
        response = client.post(
            "/api/decisions", json=[{"term": "lockbit", "decision": "rejected"}]
        )
        assert response.status_code == 409

    def test_unknown_term_conflict_409(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        response = client.post(
            "/api/decisions", json=[{"term": "zzz", "decision": "approved"}]
        )
        assert response.status_code == 409

    def test_step_with_pending_409(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        assert client.post("/api/session/step").status_code == 409

    def test_malformed_body_400(self, client_state):
        client, _ = client_state
        client.post("/api/session/step")
        response = client.post(
            "/api/decisions", json=[{"term": "lockbit", "decision": "maybe"}]
        )
        assert response.status_code == 400
        assert client.post("/api/decisions", json={"not": "a list"}).status_code == 400
        assert client.post("/api/decisions", json=[]).status_code == 400

    def test_stopped_session_409(self, tmp_path):
        state = fresh_state(tmp_path, max_runs=0)
        client = TestClient(create_app(state))
        first = client.post("/api/session/step")
        assert first.status_code == 200
        assert first.json()["session"]["stopped"] is True
        assert first.json()["session"]["stop_reason"] == "max_runs"
        assert client.post("/api/session/step").status_code == 409
        assert (
            client.post("/api/decisions", json=[{"term": "x", "decision": "approved"}]).status_code
            == 409
        )


def run_http_flow(client, decide):
    """Drive the service until the session stops; decide(candidates) -> decisions."""
    while True:
        session = client.get("/api/session").json()
        if session["stopped"]:
            return
        response = client.post("/api/session/step")
        if response.status_code == 409:
            return
        candidates = response.json()["candidates"]
        if not candidates:
            return
        client.post(
            "/api/decisions",
            json=[{"term": c["term"], "decision": decide(c)} for c in candidates],
        )


class TestStaticUi:
    def test_built_frontend_served_when_present(self, tmp_path):
        import pathlib

        dist = pathlib.Path(__file__).parent.parent / "frontend" / "dist"
        if not dist.is_dir():
            pytest.skip("frontend not built")
        state = fresh_state(tmp_path)
        client = TestClient(create_app(state, static_dir=dist))
        response = client.get("/")
        assert response.status_code == 200
        assert "Cyber term review" in response.text
        # API routes still win over the static mount
        assert client.get("/api/health").json() == {"status": "ok"}


class TestDurabilityAndEquivalence:
    def test_acknowledged_decision_survives_restart(self, tmp_path):
        state = fresh_state(tmp_path)
        client = TestClient(create_app(state))
        client.post("/api/session/step")
        response = client.post(
            "/api/decisions", json=[{"term": "lockbit", "decision": "approved"}]
        )
        assert response.status_code == 200
        # simulate restart: rebuild from the on-disk audit log alone
        resumed = ReviewState.resume(CHAIN, tmp_path / "audit.jsonl")
        assert "lockbit" in resumed.session.termdb
        assert resumed.session.run_index == state.session.run_index
        assert resumed.session.seeds_current == state.session.seeds_current
        # and a settled term still conflicts after the restart
        client2 = TestClient(create_app(resumed))
        second = client2.post(
            "/api/decisions", json=[{"term": "lockbit", "decision": "approved"}]
        )
        assert second.status_code == 409

    def test_http_flow_matches_library_run(self, tmp_path):
        state = fresh_state(tmp_path)
        client = TestClient(create_app(state))
        run_http_flow(client, lambda c: "approved")

        library = discovery.new_session(["ransomware"], at=AT)
        discovery.run_until_stop(library, CHAIN, discovery.approve_all, at=AT)

        def shape(termdb):
            return {
                (r.term, r.origin, r.ancestor, r.run_index) for r in termdb.values()
            }

        assert shape(state.session.termdb) == shape(library.termdb)
        assert state.session.stopped and library.stopped

    def test_http_flow_reject_some(self, tmp_path):
        # mixed decisions drive identical termdb through HTTP and the library
        def decide(cand):
            return "rejected" if cand["term"] in ("bianlian",) else "approved"

        state = fresh_state(tmp_path)
        run_http_flow(TestClient(create_app(state)), decide)

        library = discovery.new_session(["ransomware"], at=AT)

        def source(cands):
            return [
                (c.term, "rejected" if c.term == "bianlian" else "approved")
                for c in cands
            ]

        discovery.run_until_stop(library, CHAIN, source, at=AT)
        assert set(state.session.termdb) == set(library.termdb)
        assert state.session.rejected == library.rejected
