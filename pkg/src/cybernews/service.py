"""HTTP review service backing the human-in-the-loop UI.

Wraps a discovery session behind a JSON API: inspect session state, list
candidates with sample headlines, submit approve/reject decisions, and step
the loop. Decisions are appended to the on-disk audit log before the request
is acknowledged, so an acknowledged decision survives a restart (the session
is rebuilt by replaying that log). Session mutation is single-writer behind a
lock; reads are free.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Literal

from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import discovery, pipeline
from .discovery import DiscoverySession, append_audit, load_audit, restore_session
from .embed import EmbeddingModel
from .newsstore import Article, normalize


class HealthResponse(BaseModel):
    status: str = "ok"


class SessionView(BaseModel):
    threshold: float
    max_runs: int
    run_index: int
    seeds_current: list[str]
    stopped: bool
    stop_reason: str | None
    termdb_size: int
    pending_count: int
    acceptance_rate: float | None


class CandidateView(BaseModel):
    term: str
    seed: str
    similarity: float
    run_index: int
    status: str
    sample_headlines: list[str]


class TermRecordView(BaseModel):
    term: str
    origin: str
    ancestor: str | None
    approved_at: str
    run_index: int


class DecisionItem(BaseModel):
    term: str
    decision: Literal["approved", "rejected"]


class DecisionsResponse(BaseModel):
    applied: int
    session: SessionView


class StepResponse(BaseModel):
    session: SessionView
    candidates: list[CandidateView]


class AlertEntityView(BaseModel):
    name: str
    relevance: float


class AlertView(BaseModel):
    article_id: str
    headline: str
    entities: list[AlertEntityView]
    signals: list[str]
    category_code: int
    category: str
    distribution: list[float]
    produced_at: str


class ReviewState:
    """Mutable service state; one writer at a time via the lock."""

    def __init__(
        self,
        session: DiscoverySession,
        model: EmbeddingModel,
        audit_path: str | Path,
        articles: list[Article] | None = None,
        alerts_path: str | Path | None = None,
    ):
        self.session = session
        self.model = model
        self.audit_path = Path(audit_path)
        self.alerts_path = Path(alerts_path) if alerts_path else None
        self.lock = threading.Lock()
        self._headline_tokens = [
            (a.headline, normalize(a.headline)) for a in (articles or [])
        ]
        # Seed events produced before the service started must reach the log
        # once, or a restart would lose them.
        if not self.audit_path.exists() and session.audit:
            append_audit(session.audit, self.audit_path)

    @classmethod
    def resume(
        cls,
        model: EmbeddingModel,
        audit_path: str | Path,
        threshold: float = 0.60,
        max_runs: int = 10,
        articles: list[Article] | None = None,
        alerts_path: str | Path | None = None,
    ) -> "ReviewState":
        session = restore_session(load_audit(audit_path), threshold, max_runs)
        return cls(session, model, audit_path, articles, alerts_path)

    def sample_headlines(self, term: str, limit: int = 5) -> list[str]:
        needle = discovery.term_tokens(term)
        out = []
        for headline, tokens in self._headline_tokens:
            if len(needle) <= len(tokens) and any(
                tokens[i : i + len(needle)] == needle
                for i in range(len(tokens) - len(needle) + 1)
            ):
                out.append(headline)
                if len(out) >= limit:
                    break
        return out


def _session_view(session: DiscoverySession) -> SessionView:
    return SessionView(
        threshold=session.threshold,
        max_runs=session.max_runs,
        run_index=session.run_index,
        seeds_current=list(session.seeds_current),
        stopped=session.stopped,
        stop_reason=session.stop_reason,
        termdb_size=len(session.termdb),
        pending_count=len(session.pending()),
        acceptance_rate=session.acceptance_rate(),
    )


def _candidate_view(state: ReviewState, cand: discovery.TermCandidate) -> CandidateView:
    return CandidateView(
        term=cand.term,
        seed=cand.seed,
        similarity=cand.similarity,
        run_index=cand.run_index,
        status=cand.status,
        sample_headlines=state.sample_headlines(cand.term),
    )


def create_app(state: ReviewState, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="cybernews review service")

    @app.exception_handler(RequestValidationError)
    async def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.get("/api/health", response_model=HealthResponse)
    def health():
        return HealthResponse()

    @app.get("/api/session", response_model=SessionView)
    def session_state():
        return _session_view(state.session)

    @app.get("/api/candidates", response_model=list[CandidateView])
    def candidates(status: str | None = None):
        cands = state.session.candidates
        if status is not None:
            cands = [c for c in cands if c.status == status]
        return [_candidate_view(state, c) for c in cands]

    @app.get("/api/termdb", response_model=list[TermRecordView])
    def termdb():
        records = sorted(state.session.termdb.values(), key=lambda r: (r.run_index, r.term))
        return [TermRecordView(**r.__dict__) for r in records]

    @app.post("/api/decisions", response_model=DecisionsResponse)
    def decisions(items: list[DecisionItem]):
        if not items:
            raise HTTPException(status_code=400, detail="empty decision list")
        with state.lock:
            session = state.session
            if session.stopped:
                raise HTTPException(status_code=409, detail="session stopped")
            pending = {c.term for c in session.pending()}
            for item in items:
                if item.term not in pending:
                    raise HTTPException(
                        status_code=409, detail=f"term {item.term!r} is not pending"
                    )
            before = len(session.audit)
            try:
                discovery.apply_decisions(
                    session, [(i.term, i.decision) for i in items]
                )
            except discovery.UnknownDecisionError as exc:
                raise HTTPException(status_code=409, detail=str(exc)) from exc
            # Durable before acknowledgment.
            append_audit(session.audit[before:], state.audit_path)
        return DecisionsResponse(applied=len(items), session=_session_view(session))

    @app.post("/api/session/step", response_model=StepResponse)
    def step():
        with state.lock:
            session = state.session
            if session.stopped:
                raise HTTPException(
                    status_code=409, detail=f"session stopped ({session.stop_reason})"
                )
            if session.pending():
                raise HTTPException(
                    status_code=409, detail="candidates are still pending review"
                )
            before = len(session.audit)
            if session.run_index >= session.max_runs:
                session._stop(discovery.STOP_MAX_RUNS, discovery._now())
                proposed = []
            else:
                try:
                    proposed = discovery.propose_candidates(session, state.model)
                except discovery.NoSeedsError as exc:
                    raise HTTPException(status_code=409, detail=str(exc)) from exc
                if not proposed:
                    session._stop(discovery.STOP_NO_CANDIDATES, discovery._now())
            append_audit(session.audit[before:], state.audit_path)
        return StepResponse(
            session=_session_view(session),
            candidates=[_candidate_view(state, c) for c in proposed],
        )

    @app.get("/api/alerts", response_model=list[AlertView])
    def alerts():
        if state.alerts_path is None or not state.alerts_path.exists():
            return []
        return [AlertView(**row) for row in pipeline.load_alerts(state.alerts_path)]

    if static_dir is not None and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app
