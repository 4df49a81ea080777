"""Random forest silver labeling over TF-IDF headline features.

A from-scratch entropy/information-gain forest is trained on gold labels and
applied to the unlabeled pool; predictions whose top class probability clears
a high confidence cutoff (default 0.98) become silver-provenance training
labels. Trees may be built independently (each derives its RNG from
random_state + tree index) and a fitted forest is immutable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .newsstore import Article, CategoryDistribution, CyberCategory, normalize

N_CLASSES = len(CyberCategory)


class NotFittedError(Exception):
    """Transform called before fit."""


@dataclass
class TfidfVectorizer:
    """Unigram+bigram TF-IDF with smoothed idf and L2-normalized rows."""

    feature_terms: list[str] = field(default_factory=list)
    idf: np.ndarray | None = None
    doc_count: int = 0
    _index: dict[str, int] = field(default_factory=dict, repr=False)

    @property
    def n_features(self) -> int:
        return len(self.feature_terms)


def _ngrams(tokens: Sequence[str]) -> list[str]:
    grams = list(tokens)
    grams.extend(f"{a} {b}" for a, b in zip(tokens, tokens[1:]))
    return grams


def fit_tfidf(docs: Sequence[Sequence[str]]) -> TfidfVectorizer:
    """Fit feature terms and idf = ln((1+N)/(1+df)) + 1 on tokenized docs."""
    if not docs:
        raise ValueError("cannot fit TF-IDF on an empty corpus")
    df: dict[str, int] = {}
    for tokens in docs:
        for gram in set(_ngrams(tokens)):
            df[gram] = df.get(gram, 0) + 1
    terms = sorted(df)
    n = len(docs)
    idf = np.array([np.log((1 + n) / (1 + df[t])) + 1.0 for t in terms])
    vec = TfidfVectorizer(terms, idf, n)
    vec._index = {t: i for i, t in enumerate(terms)}
    return vec


def transform(vectorizer: TfidfVectorizer, tokens: Sequence[str]) -> np.ndarray:
    """Project one tokenized doc onto the fitted feature space (unseen terms drop)."""
    if vectorizer.idf is None:
        raise NotFittedError("transform called before fit")
    x = np.zeros(vectorizer.n_features)
    for gram in _ngrams(tokens):
        i = vectorizer._index.get(gram)
        if i is not None:
            x[i] += 1.0
    x *= vectorizer.idf
    norm = np.linalg.norm(x)
    if norm > 0:
        x /= norm
    return x


def transform_many(vectorizer: TfidfVectorizer, docs: Sequence[Sequence[str]]) -> np.ndarray:
    return np.vstack([transform(vectorizer, tokens) for tokens in docs])


def entropy(class_counts: Sequence[float]) -> float:
    """Shannon entropy in bits; 0*log0 is taken as 0."""
    counts = np.asarray(class_counts, dtype=np.float64)
    if (counts < 0).any():
        raise ValueError("class counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("entropy undefined for all-zero counts")
    p = counts / total
    nonzero = p > 0
    return float(-(p[nonzero] * np.log2(p[nonzero])).sum())


def information_gain(
    parent_counts: Sequence[float], child_counts: Sequence[Sequence[float]]
) -> float:
    """Expected entropy reduction of a partition of the parent."""
    parent = np.asarray(parent_counts, dtype=np.float64)
    children = [np.asarray(c, dtype=np.float64) for c in child_counts]
    recombined = np.sum(children, axis=0)
    if not np.allclose(recombined, parent, rtol=1e-9, atol=1e-9):
        raise ValueError("children do not partition the parent counts")
    total = parent.sum()
    gain = entropy(parent)
    for child in children:
        weight = child.sum() / total
        if weight > 0:
            gain -= weight * entropy(child)
    return float(gain)


@dataclass
class ForestHyperparams:
    n_estimators: int = 100
    criterion: str = "entropy"
    max_depth: int = 10
    max_features: str = "sqrt"  # "sqrt" | "all"
    bootstrap: bool = True
    random_state: int = 42
    class_weight: bool = True  # inverse-frequency weighting inside the split criterion

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ValueError("n_estimators must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.criterion != "entropy":
            raise ValueError("only the entropy criterion is supported")
        if self.max_features not in ("sqrt", "all"):
            raise ValueError("max_features must be 'sqrt' or 'all'")


@dataclass
class TreeNode:
    feature_index: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class_counts: np.ndarray | None = None  # leaf only, raw sample counts

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class ForestModel:
    trees: list[TreeNode]
    n_features: int
    hyperparams: ForestHyperparams


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Entropy in bits per row of a (m, C) count matrix."""
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        plogp = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -plogp.sum(axis=1)


def _best_split(
    x: np.ndarray, y: np.ndarray, features: np.ndarray, class_weights: np.ndarray
) -> tuple[float, int, float] | None:
    """Highest weighted information gain over midpoint thresholds.

    Features are scanned in ascending index and thresholds in ascending value,
    with strictly-greater comparison, so ties resolve to the lowest feature
    index then the lowest threshold.
    """
    n = len(y)
    weighted = np.zeros((n, N_CLASSES))
    weighted[np.arange(n), y] = class_weights[y]
    parent = weighted.sum(axis=0)
    total = parent.sum()
    parent_entropy = _entropy_rows(parent[None, :])[0]

    best: tuple[float, int, float] | None = None
    for f in np.sort(features):
        vals = x[:, f]
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        if sv[0] == sv[-1]:
            continue
        cum = np.cumsum(weighted[order], axis=0)
        idx = np.nonzero(sv[:-1] < sv[1:])[0]
        thresholds = (sv[idx] + sv[idx + 1]) / 2.0
        # Guard float collapse: a midpoint must strictly separate its neighbors.
        ok = (thresholds > sv[idx]) & (thresholds < sv[idx + 1])
        idx, thresholds = idx[ok], thresholds[ok]
        if len(idx) == 0:
            continue
        left = cum[idx]
        right = parent[None, :] - left
        gains = (
            parent_entropy
            - (left.sum(axis=1) / total) * _entropy_rows(left)
            - (right.sum(axis=1) / total) * _entropy_rows(right)
        )
        j = int(np.argmax(gains))  # first maximum -> lowest threshold
        if best is None or gains[j] > best[0]:
            best = (float(gains[j]), int(f), float(thresholds[j]))
    return best


def _build_tree(
    x: np.ndarray,
    y: np.ndarray,
    depth: int,
    hp: ForestHyperparams,
    class_weights: np.ndarray,
    rng: np.random.Generator,
) -> TreeNode:
    counts = np.bincount(y, minlength=N_CLASSES)
    if depth >= hp.max_depth or np.count_nonzero(counts) <= 1:
        return TreeNode(class_counts=counts)

    n_features = x.shape[1]
    if hp.max_features == "sqrt":
        m = max(1, int(np.sqrt(n_features)))
        features = rng.choice(n_features, size=m, replace=False)
    else:
        features = np.arange(n_features)

    best = _best_split(x, y, features, class_weights)
    if best is None or best[0] <= 1e-12:
        return TreeNode(class_counts=counts)
    _, f, threshold = best
    mask = x[:, f] <= threshold
    return TreeNode(
        feature_index=f,
        threshold=threshold,
        left=_build_tree(x[mask], y[mask], depth + 1, hp, class_weights, rng),
        right=_build_tree(x[~mask], y[~mask], depth + 1, hp, class_weights, rng),
    )


def train_forest(x: np.ndarray, y: Sequence[int], hp: ForestHyperparams) -> ForestModel:
    """Bootstrap + random-feature-subset trees split by information gain.

    Deterministic for a fixed random_state: tree i draws everything from
    default_rng(random_state + i), so serial and per-tree-parallel builds
    agree.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("X and y must be aligned, X two-dimensional")
    if len(y) < 2:
        raise ValueError("need at least two training examples")
    counts = np.bincount(y, minlength=N_CLASSES)
    present = np.count_nonzero(counts)
    if present < 2:
        raise ValueError("training data must contain at least two classes")

    if hp.class_weight:
        weights = np.zeros(N_CLASSES)
        nonzero = counts > 0
        weights[nonzero] = len(y) / (present * counts[nonzero])
    else:
        weights = np.ones(N_CLASSES)

    n = len(y)
    trees = []
    for i in range(hp.n_estimators):
        rng = np.random.default_rng(hp.random_state + i)
        if hp.bootstrap:
            sample = rng.integers(0, n, size=n)
        else:
            sample = np.arange(n)
        trees.append(_build_tree(x[sample], y[sample], 0, hp, weights, rng))
    return ForestModel(trees, x.shape[1], hp)


def _walk(tree: TreeNode, x: np.ndarray) -> TreeNode:
    node = tree
    while not node.is_leaf:
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node


def predict_distribution(forest: ForestModel, x: np.ndarray) -> CategoryDistribution:
    """Mean of per-tree leaf class frequencies."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (forest.n_features,):
        raise ValueError(f"expected {forest.n_features} features, got {x.shape}")
    acc = np.zeros(N_CLASSES)
    for tree in forest.trees:
        leaf = _walk(tree, x)
        acc += leaf.class_counts / leaf.class_counts.sum()
    return CategoryDistribution(acc / len(forest.trees))


@dataclass
class LabeledExample:
    article_id: str
    category: CyberCategory
    provenance: str  # "gold" | "silver"
    confidence: float = 1.0


@dataclass
class SilverLabelingResult:
    labels: list[LabeledExample]
    per_class_counts: dict[int, int]
    considered: int
    cutoff: float


def generate_silver_labels(
    forest: ForestModel,
    vectorizer: TfidfVectorizer,
    articles: Iterable[Article],
    cutoff: float = 0.98,
) -> SilverLabelingResult:
    """Silver-label articles whose top class probability reaches the cutoff.

    The comparison is inclusive (>= cutoff); everything below is omitted.
    """
    if not 0 < cutoff <= 1:
        raise ValueError("cutoff must lie in (0, 1]")
    labels: list[LabeledExample] = []
    per_class = {c.value: 0 for c in CyberCategory}
    considered = 0
    for article in articles:
        considered += 1
        dist = predict_distribution(forest, transform(vectorizer, normalize(article.headline)))
        top = dist.argmax()
        confidence = dist[top.value]
        if confidence >= cutoff:
            labels.append(LabeledExample(article.id, top, "silver", confidence))
            per_class[top.value] += 1
    return SilverLabelingResult(labels, per_class, considered, cutoff)


def save_labels(labels: Iterable[LabeledExample], path: str | Path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for label in labels:
            fh.write(
                json.dumps(
                    {
                        "article_id": label.article_id,
                        "category_code": label.category.value,
                        "provenance": label.provenance,
                        "confidence": label.confidence,
                    }
                )
                + "\n"
            )
            count += 1
    return count


def load_labels(path: str | Path) -> list[LabeledExample]:
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            raw = json.loads(line)
            labels.append(
                LabeledExample(
                    raw["article_id"],
                    CyberCategory(raw["category_code"]),
                    raw["provenance"],
                    raw.get("confidence", 1.0),
                )
            )
    return labels


def _tree_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"counts": [int(c) for c in node.class_counts]}
    return {
        "f": node.feature_index,
        "t": node.threshold,
        "l": _tree_to_dict(node.left),
        "r": _tree_to_dict(node.right),
    }


def _tree_from_dict(raw: dict) -> TreeNode:
    if "counts" in raw:
        return TreeNode(class_counts=np.asarray(raw["counts"], dtype=np.int64))
    return TreeNode(
        feature_index=raw["f"],
        threshold=raw["t"],
        left=_tree_from_dict(raw["l"]),
        right=_tree_from_dict(raw["r"]),
    )


def save_forest(
    forest: ForestModel, vectorizer: TfidfVectorizer, path: str | Path
) -> None:
    payload = {
        "hyperparams": forest.hyperparams.__dict__,
        "n_features": forest.n_features,
        "vectorizer": {
            "feature_terms": vectorizer.feature_terms,
            "idf": vectorizer.idf.tolist(),
            "doc_count": vectorizer.doc_count,
        },
        "trees": [_tree_to_dict(t) for t in forest.trees],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_forest(path: str | Path) -> tuple[ForestModel, TfidfVectorizer]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    hp = ForestHyperparams(**payload["hyperparams"])
    trees = [_tree_from_dict(t) for t in payload["trees"]]
    raw_vec = payload["vectorizer"]
    vec = TfidfVectorizer(
        raw_vec["feature_terms"], np.asarray(raw_vec["idf"]), raw_vec["doc_count"]
    )
    vec._index = {t: i for i, t in enumerate(vec.feature_terms)}
    return ForestModel(trees, payload["n_features"], hp), vec
