"""Entity relevance: gazetteer mention detection plus a sigmoid scorer.

Detection is longest-match gazetteer lookup (a stand-in for an external NER
tagger); the contribution is the relevance model, a logistic layer over six
fixed features that separates subject entities from incidental or attributive
mentions ("..., says Y Bank"). Models are immutable after training and all
scoring is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .discovery import term_tokens
from .newsstore import TokenizedDoc

N_FEATURES = 6

FEATURE_NAMES = (
    "relative_position",
    "attribution_pattern",
    "cyber_term_count",
    "is_first_entity",
    "headline_length",
    "bias",
)

_ATTRIBUTION_CUES = {"says", "warns", "reports", "according"}
_ATTRIBUTION_WINDOW = 2


@dataclass
class Gazetteer:
    """Canonical entity names with aliases; every alias maps to one canonical."""

    canonical: list[str] = field(default_factory=list)
    aliases: dict[str, str] = field(default_factory=dict)  # alias -> canonical

    def add(self, name: str, aliases: Iterable[str] = ()) -> None:
        if not name:
            raise ValueError("entity name must be non-empty")
        if name not in self.canonical:
            self.canonical.append(name)
        for alias in aliases:
            existing = self.aliases.get(alias)
            if existing is not None and existing != name:
                raise ValueError(f"alias {alias!r} already maps to {existing!r}")
            self.aliases[alias] = name

    def surface_forms(self) -> list[tuple[list[str], str]]:
        """(token sequence, canonical name) for every name and alias."""
        forms = [(term_tokens(name), name) for name in self.canonical]
        forms.extend((term_tokens(alias), canon) for alias, canon in self.aliases.items())
        return forms


def load_gazetteer(path: str | Path) -> Gazetteer:
    """One canonical name per line, optional |alias suffixes; # comments skipped."""
    gaz = Gazetteer()
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split("|")]
            gaz.add(parts[0], [p for p in parts[1:] if p])
    return gaz


@dataclass
class EntityMention:
    article_id: str
    canonical: str
    span: tuple[int, int]  # token [start, end)
    surface: str


def find_entities(doc: TokenizedDoc, gazetteer: Gazetteer) -> list[EntityMention]:
    """Non-overlapping longest gazetteer matches, left to right."""
    by_head: dict[str, list[tuple[list[str], str]]] = {}
    for tokens, canonical in gazetteer.surface_forms():
        if tokens:
            by_head.setdefault(tokens[0], []).append((tokens, canonical))
    for entries in by_head.values():
        entries.sort(key=lambda item: len(item[0]), reverse=True)

    mentions: list[EntityMention] = []
    toks = doc.tokens
    i = 0
    while i < len(toks):
        matched = False
        for form, canonical in by_head.get(toks[i], ()):
            end = i + len(form)
            if end <= len(toks) and toks[i:end] == form:
                mentions.append(
                    EntityMention(doc.article_id, canonical, (i, end), " ".join(form))
                )
                i = end
                matched = True
                break
        if not matched:
            i += 1
    return mentions


def count_cyber_terms(tokens: Sequence[str], termdb: Iterable[str]) -> int:
    """Distinct terminology-database terms whose token sequence occurs in tokens."""
    toks = list(tokens)
    found = 0
    for term in termdb:
        needle = term_tokens(term)
        if not needle or len(needle) > len(toks):
            continue
        if any(
            toks[i : i + len(needle)] == needle
            for i in range(len(toks) - len(needle) + 1)
        ):
            found += 1
    return found


def featurize(
    doc: TokenizedDoc,
    mention: EntityMention,
    termdb: Iterable[str],
    all_mentions: Sequence[EntityMention] | None = None,
) -> np.ndarray:
    """Six fixed features, in FEATURE_NAMES order, for one mention.

    The attribution flag fires when an attribution cue (says/warns/reports/
    according) appears within two tokens of either side of the mention.
    """
    start, end = mention.span
    n = len(doc.tokens)
    if not (0 <= start < end <= n):
        raise ValueError(f"mention span {mention.span} outside document of {n} tokens")

    before = doc.tokens[max(0, start - _ATTRIBUTION_WINDOW) : start]
    after = doc.tokens[end : end + _ATTRIBUTION_WINDOW]
    attribution = 1.0 if _ATTRIBUTION_CUES & set(before + after) else 0.0

    if all_mentions:
        is_first = 1.0 if start == min(m.span[0] for m in all_mentions) else 0.0
    else:
        is_first = 1.0

    return np.array(
        [
            start / max(1, n - 1),
            attribution,
            float(count_cyber_terms(doc.tokens, termdb)),
            is_first,
            n / 32.0,
            1.0,
        ]
    )


@dataclass
class RelevanceModel:
    weights: np.ndarray  # 6 reals; bias rides on the constant feature


def sigmoid(z: float | np.ndarray):
    arr = np.asarray(z, dtype=np.float64)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    ez = np.exp(arr[~pos])
    out[~pos] = ez / (1.0 + ez)
    return float(out[0]) if scalar else out


def relevance_probability(model: RelevanceModel, features: np.ndarray) -> float:
    """P(relevant) = sigmoid(W . phi)."""
    features = np.asarray(features, dtype=np.float64)
    if features.shape != model.weights.shape:
        raise ValueError(
            f"feature dim {features.shape} does not match weights {model.weights.shape}"
        )
    return float(sigmoid(model.weights @ features))


def logistic_loss_and_grad(
    weights: np.ndarray, x: np.ndarray, y: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean negative log likelihood of labels y in {0,1} and its gradient."""
    p = sigmoid(x @ weights)
    clamped = np.clip(p, 1e-12, 1 - 1e-12)
    loss = float(-(y * np.log(clamped) + (1 - y) * np.log(1 - clamped)).mean())
    grad = x.T @ (p - y) / len(y)
    return loss, grad


@dataclass
class RelevanceTrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    seed: int = 7
    batch_size: int = 8


def train_relevance(
    examples: Sequence[tuple[np.ndarray, bool]],
    config: RelevanceTrainConfig = RelevanceTrainConfig(),
) -> RelevanceModel:
    """Seeded mini-batch gradient descent on the logistic loss, zero-init weights."""
    if not examples:
        raise ValueError("no training examples")
    x = np.vstack([np.asarray(f, dtype=np.float64) for f, _ in examples])
    y = np.array([1.0 if rel else 0.0 for _, rel in examples])
    if len(np.unique(y)) < 2:
        raise ValueError("training data must contain both classes")

    weights = np.zeros(x.shape[1])
    rng = np.random.default_rng(config.seed)
    for _ in range(config.epochs):
        perm = rng.permutation(len(y))
        for start in range(0, len(perm), config.batch_size):
            batch = perm[start : start + config.batch_size]
            _, grad = logistic_loss_and_grad(weights, x[batch], y[batch])
            weights -= config.learning_rate * grad
    return RelevanceModel(weights)


def save_relevance_model(model: RelevanceModel, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"weights": model.weights.tolist()}, fh)


def load_relevance_model(path: str | Path) -> RelevanceModel:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return RelevanceModel(np.asarray(raw["weights"], dtype=np.float64))


def load_relevance_labels(path: str | Path) -> list[dict]:
    """JSON Lines of {article_id, span: [start, end), relevant: bool}."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


def build_training_set(
    docs: Sequence[TokenizedDoc],
    gazetteer: Gazetteer,
    termdb: Iterable[str],
    label_rows: Sequence[dict],
) -> list[tuple[np.ndarray, bool]]:
    """Join annotation rows onto detected mentions by (article_id, span)."""
    termdb = list(termdb)
    doc_map = {d.article_id: d for d in docs}
    mention_map: dict[tuple[str, tuple[int, int]], tuple[TokenizedDoc, EntityMention, list]] = {}
    for doc in docs:
        mentions = find_entities(doc, gazetteer)
        for m in mentions:
            mention_map[(doc.article_id, m.span)] = (doc, m, mentions)
    examples = []
    for row in label_rows:
        key = (row["article_id"], tuple(row["span"]))
        if key not in mention_map:
            raise KeyError(f"no detected mention for label row {row}")
        doc, mention, mentions = mention_map[key]
        examples.append((featurize(doc, mention, termdb, mentions), bool(row["relevant"])))
    return examples
