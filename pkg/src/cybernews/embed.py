"""Skip-gram word embeddings over the headline corpus.

Training maximizes the average log probability of context words within a
window around each center word. Two estimators are available: exact
full-softmax gradient ascent (quadratic in vocabulary size, kept for
small-vocabulary verification) and the default negative-sampling SGD with a
frequency^(3/4) noise distribution. Trained models are immutable and safe to
query from any thread.
"""

from __future__ import annotations

import base64
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .newsstore import TokenizedDoc


class EmptyVocabularyError(Exception):
    """No token survived the min_count filter."""


class OutOfVocabularyError(KeyError):
    def __init__(self, term: str):
        super().__init__(term)
        self.term = term


class ZeroVectorError(ValueError):
    """Cosine similarity is undefined for a zero-norm vector."""


class TrainingDivergedError(Exception):
    def __init__(self, epoch: int):
        super().__init__(f"non-finite parameter at epoch {epoch}")
        self.epoch = epoch


@dataclass
class Vocabulary:
    terms: list[str]
    counts: list[int]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {term: i for i, term in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index


@dataclass
class SkipGramConfig:
    dimension: int = 100
    window: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    min_count: int = 5
    negative_samples: int = 5  # 0 selects exact full-softmax training
    seed: int = 42

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.min_count < 1:
            raise ValueError("min_count must be >= 1")
        if self.negative_samples < 0:
            raise ValueError("negative_samples must be >= 0")


@dataclass
class EmbeddingModel:
    vocab: Vocabulary
    input_vectors: np.ndarray  # W x dimension
    output_vectors: np.ndarray  # W x dimension
    config: SkipGramConfig
    epoch_objectives: list[float] = field(default_factory=list)

    def vector(self, term: str) -> np.ndarray:
        if term not in self.vocab:
            raise OutOfVocabularyError(term)
        return self.input_vectors[self.vocab.index[term]]

    def _check_consistency(self) -> None:
        w = len(self.vocab)
        for name, matrix in (("input", self.input_vectors), ("output", self.output_vectors)):
            if matrix.shape != (w, self.config.dimension):
                raise ValueError(
                    f"vocabulary mismatch: {name} matrix is {matrix.shape}, "
                    f"expected {(w, self.config.dimension)}"
                )


def build_vocabulary(docs: Iterable[TokenizedDoc], min_count: int = 1) -> Vocabulary:
    """Count tokens and keep those with frequency >= min_count.

    Terms are ordered by descending frequency, ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter[str] = Counter()
    for doc in docs:
        counter.update(doc.tokens)
    kept = [(term, n) for term, n in counter.items() if n >= min_count]
    if not kept:
        raise EmptyVocabularyError(f"no token reached min_count={min_count}")
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary([t for t, _ in kept], [n for _, n in kept])


def _context_pairs(
    docs: Iterable[TokenizedDoc], vocab: Vocabulary, window: int
) -> tuple[np.ndarray, int]:
    """All (center, context) index pairs; OOV tokens are dropped first.

    Returns the pair array and T, the total in-vocabulary token count.
    """
    pairs: list[tuple[int, int]] = []
    total = 0
    for doc in docs:
        ids = [vocab.index[tok] for tok in doc.tokens if tok in vocab.index]
        n = len(ids)
        total += n
        for t in range(n):
            lo = max(0, t - window)
            hi = min(n, t + window + 1)
            for j in range(lo, hi):
                if j != t:
                    pairs.append((ids[t], ids[j]))
    if not pairs:
        return np.empty((0, 2), dtype=np.int64), total
    return np.asarray(pairs, dtype=np.int64), total


def full_softmax_prob(model: EmbeddingModel, center: str, context: str) -> float:
    """p(context | center) under the full softmax over output vectors."""
    model._check_consistency()
    for term in (center, context):
        if term not in model.vocab:
            raise OutOfVocabularyError(term)
    scores = model.output_vectors @ model.input_vectors[model.vocab.index[center]]
    scores = scores - scores.max()
    exp = np.exp(scores)
    return float(exp[model.vocab.index[context]] / exp.sum())


def skipgram_objective(model: EmbeddingModel, docs: Iterable[TokenizedDoc]) -> float:
    """Average log probability of observed context words (full softmax).

    Out-of-vocabulary tokens are skipped; an empty pair set yields 0.
    """
    model._check_consistency()
    pairs, total = _context_pairs(docs, model.vocab, model.config.window)
    if len(pairs) == 0 or total == 0:
        return 0.0
    obj, _, _ = _exact_objective_and_grads(
        model.input_vectors, model.output_vectors, pairs, total, want_grads=False
    )
    return obj


def _exact_objective_and_grads(
    w_in: np.ndarray,
    w_out: np.ndarray,
    pairs: np.ndarray,
    total_tokens: int,
    want_grads: bool = True,
) -> tuple[float, np.ndarray | None, np.ndarray | None]:
    """Objective (1/T) sum log softmax(context|center) and its gradients.

    Pairs are grouped by center word so each softmax is computed once.
    """
    w = w_out.shape[0]
    objective = 0.0
    g_in = np.zeros_like(w_in) if want_grads else None
    g_out = np.zeros_like(w_out) if want_grads else None

    centers = pairs[:, 0]
    contexts = pairs[:, 1]
    for center in np.unique(centers):
        ctx = contexts[centers == center]
        ctx_counts = np.bincount(ctx, minlength=w).astype(np.float64)
        m = float(ctx_counts.sum())
        v = w_in[center]
        scores = w_out @ v
        shifted = scores - scores.max()
        exp = np.exp(shifted)
        log_z = np.log(exp.sum()) + scores.max()
        objective += float(ctx_counts @ scores) - m * log_z
        if want_grads:
            p = exp / exp.sum()
            residual = ctx_counts - m * p
            g_out += np.outer(residual, v)
            g_in[center] += residual @ w_out
    objective /= total_tokens
    if want_grads:
        g_in /= total_tokens
        g_out /= total_tokens
    return objective, g_in, g_out


def _init_matrices(w: int, dim: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    # word2vec convention: input uniform in [-0.5/dim, 0.5/dim], output all-zero.
    rng = np.random.default_rng(seed)
    w_in = (rng.random((w, dim)) - 0.5) / dim
    w_out = np.zeros((w, dim))
    return w_in, w_out


def _noise_cumulative(counts: Sequence[int]) -> np.ndarray:
    weights = np.asarray(counts, dtype=np.float64) ** 0.75
    return np.cumsum(weights / weights.sum())


def train_skipgram(
    docs: Sequence[TokenizedDoc], config: SkipGramConfig
) -> EmbeddingModel:
    """Train skip-gram vectors; deterministic for a fixed seed.

    negative_samples == 0 runs exact full-batch gradient ascent on the full
    softmax objective and records that objective per epoch; otherwise runs
    per-pair negative-sampling SGD and records the running mean of the
    sampling objective.
    """
    vocab = build_vocabulary(docs, config.min_count)
    pairs, total = _context_pairs(docs, vocab, config.window)
    if len(pairs) == 0:
        raise EmptyVocabularyError("corpus yields no context pairs after filtering")
    w_in, w_out = _init_matrices(len(vocab), config.dimension, config.seed)

    objectives: list[float] = []
    if config.negative_samples == 0:
        for epoch in range(config.epochs):
            _, g_in, g_out = _exact_objective_and_grads(w_in, w_out, pairs, total)
            w_in += config.learning_rate * g_in
            w_out += config.learning_rate * g_out
            if not (np.isfinite(w_in).all() and np.isfinite(w_out).all()):
                raise TrainingDivergedError(epoch)
            obj, _, _ = _exact_objective_and_grads(
                w_in, w_out, pairs, total, want_grads=False
            )
            objectives.append(obj)
    else:
        rng = np.random.default_rng(config.seed)
        cumulative = _noise_cumulative(vocab.counts)
        k = config.negative_samples
        lr = config.learning_rate
        for epoch in range(config.epochs):
            epoch_obj = 0.0
            for center, context in pairs:
                v = w_in[center]
                negatives = np.searchsorted(cumulative, rng.random(k))
                update = np.zeros_like(v)
                for word, label in ((context, 1.0), *((n, 0.0) for n in negatives)):
                    if label == 0.0 and word == context:
                        continue  # drawn negative collides with the observed context
                    score = float(w_out[word] @ v)
                    sig = 1.0 / (1.0 + np.exp(-score))
                    epoch_obj += np.log(max(sig if label else 1.0 - sig, 1e-12))
                    g = lr * (label - sig)
                    update += g * w_out[word]
                    w_out[word] += g * v
                w_in[center] += update
            if not (np.isfinite(w_in).all() and np.isfinite(w_out).all()):
                raise TrainingDivergedError(epoch)
            objectives.append(epoch_obj / len(pairs))

    return EmbeddingModel(vocab, w_in, w_out, config, objectives)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Directional similarity dot(a, b) / (|a| * |b|), in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    norm_a = np.linalg.norm(a)
    norm_b = np.linalg.norm(b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine undefined for zero-norm vector")
    return float(a @ b / (norm_a * norm_b))


def nearest_terms(
    model: EmbeddingModel, query: str, min_sim: float, k: int
) -> list[tuple[str, float]]:
    """Input-vector cosine neighbors of `query` at or above min_sim.

    Descending similarity, ties broken lexicographically; the query itself is
    never returned.
    """
    if query not in model.vocab:
        raise OutOfVocabularyError(query)
    q = model.input_vectors[model.vocab.index[query]]
    q_norm = np.linalg.norm(q)
    if q_norm == 0.0:
        raise ZeroVectorError(f"query term {query!r} has a zero vector")
    norms = np.linalg.norm(model.input_vectors, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sims = (model.input_vectors @ q) / (norms * q_norm)
    sims[~np.isfinite(sims)] = -np.inf

    candidates = [
        (term, float(sims[i]))
        for i, term in enumerate(model.vocab.terms)
        if term != query and sims[i] >= min_sim
    ]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return candidates[:k]


def save_model(model: EmbeddingModel, path: str | Path) -> None:
    """Write header JSON plus one `term count <in-b64> <out-b64>` line per term.

    Vector blocks are little-endian float32, base64-encoded.
    """
    model._check_consistency()
    header = {
        "dimension": model.config.dimension,
        "vocab_size": len(model.vocab),
        "window": model.config.window,
        "seed": model.config.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for i, term in enumerate(model.vocab.terms):
            blocks = (
                base64.b64encode(model.input_vectors[i].astype("<f4").tobytes()).decode(),
                base64.b64encode(model.output_vectors[i].astype("<f4").tobytes()).decode(),
            )
            fh.write(f"{term} {model.vocab.counts[i]} {blocks[0]} {blocks[1]}\n")


def load_model(path: str | Path) -> EmbeddingModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        dim = header["dimension"]
        terms: list[str] = []
        counts: list[int] = []
        in_rows: list[np.ndarray] = []
        out_rows: list[np.ndarray] = []
        for line in fh:
            term, count, in_b64, out_b64 = line.split()
            terms.append(term)
            counts.append(int(count))
            in_rows.append(np.frombuffer(base64.b64decode(in_b64), dtype="<f4"))
            out_rows.append(np.frombuffer(base64.b64decode(out_b64), dtype="<f4"))
    if len(terms) != header["vocab_size"]:
        raise ValueError(
            f"model file lists {len(terms)} terms but header says {header['vocab_size']}"
        )
    vocab = Vocabulary(terms, counts)
    config = SkipGramConfig(dimension=dim, window=header["window"], seed=header["seed"])
    return EmbeddingModel(
        vocab,
        np.vstack(in_rows).astype(np.float64),
        np.vstack(out_rows).astype(np.float64),
        config,
    )
