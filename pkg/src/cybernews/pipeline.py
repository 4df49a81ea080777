"""End-to-end orchestration: classify headlines into alerts.

Per article: normalize the headline, detect gazetteer entities and score
their relevance, match terminology-database signals, encode and classify.
Articles that fail inside a model are quarantined to a dead-letter list
instead of aborting the stream, and alerts keep input order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Iterable, Sequence

from . import classifier, relevance
from .classifier import Argmax, CanalModel, DecisionRule, encode, model_distribution
from .discovery import TermRecord, term_tokens
from .embed import EmbeddingModel
from .newsstore import (
    Article,
    CategoryDistribution,
    CyberCategory,
    TokenizedDoc,
    format_timestamp,
    normalize,
)
from .relevance import Gazetteer, RelevanceModel


@dataclass
class Alert:
    article_id: str
    headline: str
    entities: list[tuple[str, float]]  # (canonical name, relevance probability)
    signals: list[str]
    category: CyberCategory
    distribution: CategoryDistribution
    produced_at: str

    def to_dict(self) -> dict:
        return {
            "article_id": self.article_id,
            "headline": self.headline,
            "entities": [{"name": n, "relevance": p} for n, p in self.entities],
            "signals": self.signals,
            "category_code": self.category.value,
            "category": self.category.name,
            "distribution": self.distribution.as_list(),
            "produced_at": self.produced_at,
        }


@dataclass
class DeadLetter:
    article_id: str
    error: str


@dataclass
class ClassifyResult:
    alerts: list[Alert]
    dead_letters: list[DeadLetter] = field(default_factory=list)


@dataclass
class PipelineModels:
    embedding: EmbeddingModel
    canal: CanalModel
    relevance_model: RelevanceModel | None = None
    rule: DecisionRule = Argmax()


def match_signals(tokens: Sequence[str], termdb: Iterable[str]) -> list[str]:
    """Terminology-database terms whose token sequence occurs in the headline."""
    toks = list(tokens)
    found = []
    for term in sorted(termdb):
        needle = term_tokens(term)
        if not needle or len(needle) > len(toks):
            continue
        if any(
            toks[i : i + len(needle)] == needle
            for i in range(len(toks) - len(needle) + 1)
        ):
            found.append(term)
    return found


def classify_stream(
    articles: Iterable[Article],
    models: PipelineModels,
    termdb: dict[str, TermRecord] | Iterable[str],
    gazetteer: Gazetteer,
    at: str | None = None,
) -> ClassifyResult:
    terms = list(termdb.keys()) if isinstance(termdb, dict) else list(termdb)
    produced_at = at or format_timestamp(datetime.now())
    result = ClassifyResult([])
    for article in articles:
        try:
            tokens = normalize(article.headline)
            doc = TokenizedDoc(article.id, tokens)
            mentions = relevance.find_entities(doc, gazetteer)
            entities = []
            for mention in mentions:
                if models.relevance_model is not None:
                    features = relevance.featurize(doc, mention, terms, mentions)
                    prob = relevance.relevance_probability(models.relevance_model, features)
                else:
                    prob = 1.0
                entities.append((mention.canonical, prob))
            signals = match_signals(tokens, terms)
            h0 = encode(doc, models.embedding).vector
            dist = model_distribution(models.canal, h0)
            category = classifier.decide(dist, models.rule)
            result.alerts.append(
                Alert(article.id, article.headline, entities, signals, category, dist, produced_at)
            )
        except Exception as exc:  # quarantine, never abort the stream
            result.dead_letters.append(DeadLetter(article.id, f"{type(exc).__name__}: {exc}"))
    return result


def save_alerts(alerts: Iterable[Alert], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for alert in alerts:
            fh.write(json.dumps(alert.to_dict(), ensure_ascii=False) + "\n")
            count += 1
    return count


def load_alerts(path: str | Path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


@dataclass
class PipelineConfig:
    """Paths and knobs for the serving layer; file references must exist."""

    store_path: str | None = None
    termdb_path: str | None = None
    embedding_path: str | None = None
    classifier_path: str | None = None
    relevance_model_path: str | None = None
    gazetteer_path: str | None = None
    alerts_path: str | None = None
    audit_log_path: str | None = None
    decision_rule: str = "argmax"  # "argmax" | "threshold:<tau>:<fallback>"
    relevance_threshold: float = 0.5
    bind: str = "127.0.0.1:8787"
    discovery_threshold: float = 0.60
    max_runs: int = 10
    seed_terms: list[str] = field(default_factory=list)

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        config = cls(**raw)
        for key in (
            "store_path", "termdb_path", "embedding_path", "classifier_path",
            "relevance_model_path", "gazetteer_path",
        ):
            value = getattr(config, key)
            if value is not None and not Path(value).exists():
                raise FileNotFoundError(f"{key} references missing file {value}")
        return config


def parse_decision_rule(text: str) -> DecisionRule:
    """argmax, or threshold:<tau>:<fallback category name>."""
    if text == "argmax":
        return Argmax()
    if text.startswith("threshold:"):
        _, tau, fallback = text.split(":")
        return classifier.Threshold(float(tau), _category_from_text(fallback))
    raise ValueError(f"unknown decision rule {text!r}")


def _category_from_text(text: str) -> CyberCategory:
    for category in CyberCategory:
        if category.name.lower() == text.lower():
            return category
    raise ValueError(f"unknown category {text!r}")
