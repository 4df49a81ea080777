"""Emerging cyber signal discovery loop.

Each run proposes embedding neighbors of the current seed terms above a
similarity threshold, filters terms that duplicate or merely extend the
terminology database, and waits for human decisions. Approved terms join the
database and seed the next run; the loop halts after max_runs or when a run
yields no candidates. Every proposal and decision is appended to an audit
trail from which the final database can be replayed.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field, asdict
from datetime import datetime
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .embed import EmbeddingModel, nearest_terms
from .newsstore import format_timestamp

logger = logging.getLogger(__name__)

PENDING = "pending"
APPROVED = "approved"
REJECTED = "rejected"

STOP_MAX_RUNS = "max_runs"
STOP_NO_CANDIDATES = "no_candidates"


class SessionStoppedError(Exception):
    """The session has halted and accepts no further steps."""


class PendingDecisionsError(Exception):
    """A new run cannot start while candidates await decisions."""


class NoSeedsError(Exception):
    """No current seed term is present in the embedding vocabulary."""


class UnknownDecisionError(Exception):
    """Decision received for a term that is not pending in this session."""


@dataclass
class TermRecord:
    term: str
    origin: str  # "seed" | "discovered"
    ancestor: str | None
    approved_at: str
    run_index: int


@dataclass
class TermCandidate:
    term: str
    seed: str
    similarity: float
    run_index: int
    status: str = PENDING


@dataclass
class DiscoverySession:
    threshold: float = 0.60
    max_runs: int = 10
    run_index: int = 0
    seeds_current: list[str] = field(default_factory=list)
    candidates: list[TermCandidate] = field(default_factory=list)
    termdb: dict[str, TermRecord] = field(default_factory=dict)
    rejected: set[str] = field(default_factory=set)
    stopped: bool = False
    stop_reason: str | None = None
    audit: list[dict] = field(default_factory=list)

    def pending(self) -> list[TermCandidate]:
        return [c for c in self.candidates if c.status == PENDING]

    def acceptance_rate(self) -> float | None:
        decided = [c for c in self.candidates if c.status != PENDING]
        if not decided:
            return None
        return sum(1 for c in decided if c.status == APPROVED) / len(decided)

    def _stop(self, reason: str, at: str) -> None:
        self.stopped = True
        self.stop_reason = reason
        self.audit.append(
            {"run": self.run_index, "action": "stopped", "term": None,
             "seed": None, "similarity": None, "at": at, "reason": reason}
        )


def _now() -> str:
    return format_timestamp(datetime.now())


def term_tokens(term: str) -> list[str]:
    """Token sequence of a term; phrases may be underscore- or space-joined."""
    return [t for t in re.split(r"[_\s]+", term) if t]


def _contains(haystack: list[str], needle: list[str]) -> bool:
    if len(needle) > len(haystack):
        return False
    return any(
        haystack[i : i + len(needle)] == needle
        for i in range(len(haystack) - len(needle) + 1)
    )


def is_duplicate_or_extension(candidate: str, termdb: Iterable[str]) -> bool:
    """True iff the candidate equals, contains, or is contained by a known term.

    Containment is contiguous on token sequences, so "ransomware_attack" is an
    extension of "ransomware" but "lockbit" is unrelated to both.
    """
    cand = term_tokens(candidate)
    for existing in termdb:
        known = term_tokens(existing)
        if _contains(cand, known) or _contains(known, cand):
            return True
    return False


def new_session(
    seed_terms: Sequence[str],
    threshold: float = 0.60,
    max_runs: int = 10,
    at: str | None = None,
) -> DiscoverySession:
    """Start a session with the given seed terms already in the database."""
    at = at or _now()
    session = DiscoverySession(threshold=threshold, max_runs=max_runs)
    for term in seed_terms:
        if term in session.termdb:
            continue
        session.termdb[term] = TermRecord(term, "seed", None, at, 0)
        session.seeds_current.append(term)
        session.audit.append(
            {"run": 0, "action": "seeded", "term": term, "seed": None,
             "similarity": None, "at": at}
        )
    return session


def propose_candidates(
    session: DiscoverySession, model: EmbeddingModel, at: str | None = None
) -> list[TermCandidate]:
    """Collect pending candidates for the current run from all seeds.

    Per seed: embedding neighbors at or above the session threshold, minus
    duplicates/extensions of the database and terms already rejected this
    session. A term reachable from several seeds keeps its highest-similarity
    provenance.
    """
    if session.stopped:
        raise SessionStoppedError(f"session stopped ({session.stop_reason})")
    if session.pending():
        raise PendingDecisionsError("previous run still has undecided candidates")
    at = at or _now()

    in_vocab = []
    for seed in sorted(session.seeds_current):
        if seed in model.vocab:
            in_vocab.append(seed)
        else:
            logger.warning("seed %r not in embedding vocabulary; skipped", seed)
    if not in_vocab:
        raise NoSeedsError("no current seed term is in the embedding vocabulary")

    best: dict[str, tuple[float, str]] = {}
    for seed in in_vocab:
        for term, sim in nearest_terms(model, seed, session.threshold, len(model.vocab)):
            if term in session.rejected:
                continue
            if is_duplicate_or_extension(term, session.termdb):
                continue
            if term not in best or sim > best[term][0]:
                best[term] = (sim, seed)

    proposed = [
        TermCandidate(term, seed, sim, session.run_index)
        for term, (sim, seed) in best.items()
    ]
    proposed.sort(key=lambda c: (-c.similarity, c.term))
    session.candidates.extend(proposed)
    for cand in proposed:
        session.audit.append(
            {"run": cand.run_index, "action": "proposed", "term": cand.term,
             "seed": cand.seed, "similarity": cand.similarity, "at": at}
        )
    return proposed


def apply_decisions(
    session: DiscoverySession,
    decisions: Sequence[tuple[str, str]],
    at: str | None = None,
) -> DiscoverySession:
    """Apply (term, approved|rejected) decisions to pending candidates.

    Approved terms enter the database with their seed as ancestor and seed the
    next run; rejected terms are never re-proposed within the session. Once no
    candidate is pending the run counter advances, and the session stops if
    nothing was approved or the run limit is reached.
    """
    if session.stopped:
        raise SessionStoppedError(f"session stopped ({session.stop_reason})")
    at = at or _now()
    pending_by_term = {c.term: c for c in session.pending()}

    for term, decision in decisions:
        cand = pending_by_term.get(term)
        if cand is None:
            raise UnknownDecisionError(f"term {term!r} is not pending in this session")
        if decision == APPROVED:
            cand.status = APPROVED
            session.termdb[term] = TermRecord(
                term, "discovered", cand.seed, at, cand.run_index
            )
        elif decision == REJECTED:
            cand.status = REJECTED
            session.rejected.add(term)
        else:
            raise ValueError(f"unknown decision {decision!r}")
        del pending_by_term[term]
        session.audit.append(
            {"run": cand.run_index, "action": cand.status, "term": term,
             "seed": cand.seed, "similarity": cand.similarity, "at": at}
        )

    if not session.pending():
        approved_this_run = [
            c.term for c in session.candidates
            if c.run_index == session.run_index and c.status == APPROVED
        ]
        session.run_index += 1
        session.seeds_current = approved_this_run
        if not approved_this_run:
            session._stop(STOP_NO_CANDIDATES, at)
        elif session.run_index >= session.max_runs:
            session._stop(STOP_MAX_RUNS, at)
    return session


DecisionSource = Callable[[Sequence[TermCandidate]], Sequence[tuple[str, str]]]


def approve_all(candidates: Sequence[TermCandidate]) -> list[tuple[str, str]]:
    return [(c.term, APPROVED) for c in candidates]


def reject_all(candidates: Sequence[TermCandidate]) -> list[tuple[str, str]]:
    return [(c.term, REJECTED) for c in candidates]


def run_until_stop(
    session: DiscoverySession,
    model: EmbeddingModel,
    decision_source: DecisionSource,
    at: str | None = None,
) -> DiscoverySession:
    """Loop propose -> decide until max_runs or a run with no candidates."""
    while not session.stopped:
        if session.run_index >= session.max_runs:
            session._stop(STOP_MAX_RUNS, at or _now())
            break
        proposed = propose_candidates(session, model, at=at)
        if not proposed:
            session._stop(STOP_NO_CANDIDATES, at or _now())
            break
        decisions = decision_source(proposed)
        apply_decisions(session, decisions, at=at)
        if session.pending():
            raise PendingDecisionsError(
                "decision source left candidates undecided for this run"
            )
    return session


def replay_audit(audit: Iterable[dict]) -> dict[str, TermRecord]:
    """Rebuild the terminology database from an audit trail."""
    termdb: dict[str, TermRecord] = {}
    for event in audit:
        if event["action"] == "seeded":
            termdb[event["term"]] = TermRecord(event["term"], "seed", None, event["at"], 0)
        elif event["action"] == APPROVED:
            termdb[event["term"]] = TermRecord(
                event["term"], "discovered", event["seed"], event["at"], event["run"]
            )
    return termdb


def restore_session(
    audit: Iterable[dict], threshold: float = 0.60, max_runs: int = 10
) -> DiscoverySession:
    """Rebuild full session state (not just the termdb) from an audit trail."""
    session = DiscoverySession(threshold=threshold, max_runs=max_runs)
    for event in audit:
        action = event["action"]
        if action == "seeded":
            session.termdb[event["term"]] = TermRecord(
                event["term"], "seed", None, event["at"], 0
            )
            session.seeds_current.append(event["term"])
        elif action == "proposed":
            session.candidates.append(
                TermCandidate(event["term"], event["seed"], event["similarity"], event["run"])
            )
        elif action in (APPROVED, REJECTED):
            cand = next(
                c for c in session.candidates
                if c.term == event["term"] and c.status == PENDING
            )
            cand.status = action
            if action == APPROVED:
                session.termdb[event["term"]] = TermRecord(
                    event["term"], "discovered", event["seed"], event["at"], event["run"]
                )
            else:
                session.rejected.add(event["term"])
            if not session.pending():
                approved_run = [
                    c.term for c in session.candidates
                    if c.run_index == session.run_index and c.status == APPROVED
                ]
                session.run_index += 1
                session.seeds_current = approved_run
        elif action == "stopped":
            session.stopped = True
            session.stop_reason = event.get("reason")
        session.audit.append(event)
    return session


def save_termdb(termdb: dict[str, TermRecord], path: str | Path) -> None:
    records = [asdict(termdb[term]) for term in sorted(termdb)]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2)
        fh.write("\n")


def load_termdb(path: str | Path) -> dict[str, TermRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        records = json.load(fh)
    return {r["term"]: TermRecord(**r) for r in records}


def append_audit(events: Iterable[dict], path: str | Path) -> None:
    """Durably append audit events as JSON Lines (flushed before returning)."""
    with open(path, "a", encoding="utf-8") as fh:
        for event in events:
            fh.write(json.dumps(event) + "\n")
        fh.flush()


def load_audit(path: str | Path) -> list[dict]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                events.append(json.loads(line))
    return events
