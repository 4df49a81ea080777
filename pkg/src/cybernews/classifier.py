"""Headline classifier: pluggable text encoder feeding a linear+softmax head.

The encoder stand-in is the mean of skip-gram input vectors followed by a
trainable square projection (identity at init); the head is a 5-way linear
layer with optional low-rank adapter on its weight matrix. Three regimes pick
the trainable subset: full (projection + head), frozen encoder (head only),
and low-rank adaptation (adapter only, head frozen). Optimization is
cross-entropy with decoupled-weight-decay adaptive moments; per-epoch losses
and validation recalls are recorded and the best-validation epoch can be kept.
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .embed import EmbeddingModel
from .newsstore import CategoryDistribution, CyberCategory, TokenizedDoc
from .silverforest import LabeledExample

N_CLASSES = len(CyberCategory)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
WEIGHT_DECAY = 0.01


class TrainingDivergedError(Exception):
    def __init__(self, epoch: int, batch: int):
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch


class EncodedDoc(NamedTuple):
    vector: np.ndarray
    all_oov: bool


@dataclass
class LinearHead:
    W: np.ndarray  # 5 x d
    b: np.ndarray  # 5


@dataclass
class LoraAdapter:
    A: np.ndarray  # r x d
    B: np.ndarray  # 5 x r
    rank: int = 8
    scaling: float = 1.0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        d = self.A.shape[1]
        if self.rank >= d:
            raise ValueError(f"rank {self.rank} must be smaller than input dim {d}")
        if self.A.shape != (self.rank, d) or self.B.shape != (N_CLASSES, self.rank):
            raise ValueError("adapter matrix shapes disagree with rank")


@dataclass(frozen=True)
class Full:
    pass


@dataclass(frozen=True)
class FrozenEncoder:
    pass


@dataclass(frozen=True)
class Lora:
    r: int = 8
    scaling: float = 1.0


TrainingRegime = Full | FrozenEncoder | Lora


def parse_regime(text: str, rank: int = 8) -> TrainingRegime:
    key = text.strip().lower()
    if key == "full":
        return Full()
    if key == "frozen":
        return FrozenEncoder()
    if key == "lora":
        return Lora(r=rank)
    raise ValueError(f"unknown regime {text!r} (expected full|frozen|lora)")


@dataclass
class TrainConfig:
    # 2e-5 is the usual transformer fine-tuning rate; the linear stand-in
    # trains three orders of magnitude faster, hence the x1000 default.
    learning_rate: float = 2e-2
    batch_size: int = 8
    epochs: int = 10
    data_seed: int = 727
    seed: int = 767
    keep_best_by_validation: bool = True

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class TrainingHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    per_class_recall: list[list[float]] = field(default_factory=list)
    macro_recall: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["epoch", "train_loss", "val_loss"] + [f"recall_{c}" for c in range(N_CLASSES)]
            )
            for i in range(len(self.train_loss)):
                writer.writerow(
                    [i, self.train_loss[i], self.val_loss[i]] + list(self.per_class_recall[i])
                )


@dataclass
class CanalModel:
    dim: int
    regime: str
    projection: np.ndarray  # d x d, identity unless the full regime trained it
    head: LinearHead
    adapter: LoraAdapter | None = None
    seeds: tuple[int, int] = (767, 727)


@dataclass(frozen=True)
class Argmax:
    pass


@dataclass(frozen=True)
class Threshold:
    tau: float
    fallback: CyberCategory

    def __post_init__(self):
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")


DecisionRule = Argmax | Threshold


def encode(doc: TokenizedDoc, embedding: EmbeddingModel) -> EncodedDoc:
    """Mean input vector of in-vocabulary tokens; all-OOV docs flag a zero vector."""
    rows = [
        embedding.input_vectors[embedding.vocab.index[tok]]
        for tok in doc.tokens
        if tok in embedding.vocab
    ]
    if not rows:
        return EncodedDoc(np.zeros(embedding.config.dimension), True)
    return EncodedDoc(np.mean(rows, axis=0), False)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def forward(
    head: LinearHead, adapter: LoraAdapter | None, x: np.ndarray
) -> CategoryDistribution:
    """softmax(W x + b [+ scaling * B (A x)]); stabilized by max subtraction."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (head.W.shape[1],):
        raise ValueError(f"input dim {x.shape} does not match head dim {head.W.shape[1]}")
    logits = head.W @ x + head.b
    if adapter is not None:
        if adapter.A.shape[1] != x.shape[0]:
            raise ValueError("adapter input dim does not match feature dim")
        logits = logits + adapter.scaling * (adapter.B @ (adapter.A @ x))
    return CategoryDistribution(softmax(logits))


def model_distribution(model: CanalModel, h0: np.ndarray) -> CategoryDistribution:
    return forward(model.head, model.adapter, model.projection @ h0)


def decide(dist: CategoryDistribution, rule: DecisionRule) -> CyberCategory:
    """Argmax with lowest-code tie-break, or thresholded argmax with fallback."""
    top = dist.argmax()
    if isinstance(rule, Threshold) and dist[top.value] < rule.tau:
        return rule.fallback
    return top


def lora_delta_rank(adapter: LoraAdapter) -> int:
    """Numerical rank of the low-rank update B @ A; always <= the adapter rank."""
    singular = np.linalg.svd(adapter.B @ adapter.A, compute_uv=False)
    if singular.size == 0:
        return 0
    return int((singular > 1e-9 * singular.max()).sum())


# --- training -------------------------------------------------------------

_PARAM_NAMES = ("projection", "W", "b", "A", "B")


def _trainable_names(regime: TrainingRegime) -> tuple[str, ...]:
    if isinstance(regime, Full):
        return ("projection", "W", "b")
    if isinstance(regime, FrozenEncoder):
        return ("W", "b")
    return ("A", "B")


def batch_loss_and_grads(
    params: dict[str, np.ndarray],
    scaling: float,
    h0: np.ndarray,
    y: np.ndarray,
    with_adapter: bool,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over a batch and its gradients for every parameter.

    `h0` is the raw encoder output (batch x d); the projection is applied
    inside so its gradient is available to the full regime.
    """
    proj, w, b = params["projection"], params["W"], params["b"]
    x = h0 @ proj.T
    logits = x @ w.T + b
    if with_adapter:
        z = x @ params["A"].T
        logits = logits + scaling * (z @ params["B"].T)
    probs = softmax(logits)
    n = len(y)
    clamped = np.clip(probs[np.arange(n), y], 1e-15, None)
    loss = float(-np.log(clamped).mean())

    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    grads = {
        "W": dlogits.T @ x,
        "b": dlogits.sum(axis=0),
    }
    dx = dlogits @ w
    if with_adapter:
        db_mat = dlogits @ params["B"]  # batch x r
        grads["B"] = scaling * (dlogits.T @ z)
        grads["A"] = scaling * (db_mat.T @ x)
        dx = dx + scaling * (db_mat @ params["A"])
    grads["projection"] = dx.T @ h0
    return loss, grads


def _init_params(
    dim: int, regime: TrainingRegime, seed: int
) -> tuple[dict[str, np.ndarray], float]:
    rng = np.random.default_rng(seed)
    params = {
        "projection": np.eye(dim),
        "W": rng.normal(0.0, 0.02, size=(N_CLASSES, dim)),
        "b": np.zeros(N_CLASSES),
    }
    scaling = 1.0
    if isinstance(regime, Lora):
        # A random, B zero: the adapted forward starts identical to the base.
        params["A"] = rng.normal(0.0, 0.02, size=(regime.r, dim))
        params["B"] = np.zeros((N_CLASSES, regime.r))
        scaling = regime.scaling
        LoraAdapter(params["A"], params["B"], regime.r, scaling)  # shape/rank checks
    return params, scaling


def _regime_name(regime: TrainingRegime) -> str:
    if isinstance(regime, Full):
        return "full"
    if isinstance(regime, FrozenEncoder):
        return "frozen"
    return f"lora:r={regime.r}"


def _val_metrics(
    params: dict[str, np.ndarray], scaling: float, with_adapter: bool,
    h0: np.ndarray, y: np.ndarray,
) -> tuple[float, list[float], float]:
    loss, _ = batch_loss_and_grads(params, scaling, h0, y, with_adapter)
    x = h0 @ params["projection"].T
    logits = x @ params["W"].T + params["b"]
    if with_adapter:
        logits = logits + scaling * ((x @ params["A"].T) @ params["B"].T)
    preds = np.argmax(logits, axis=1)
    recalls = []
    for c in range(N_CLASSES):
        mask = y == c
        recalls.append(float((preds[mask] == c).mean()) if mask.any() else float("nan"))
    macro = float(np.nanmean(recalls)) if not all(np.isnan(recalls)) else float("nan")
    return loss, recalls, macro


def train_canal(
    regime: TrainingRegime,
    examples: Sequence[LabeledExample],
    docs: Iterable[TokenizedDoc],
    embedding: EmbeddingModel,
    config: TrainConfig = TrainConfig(),
) -> tuple[CanalModel, TrainingHistory]:
    """Train the regime's parameter subset on gold+silver labels.

    The 90/10 validation split is a deterministic shuffle from data_seed;
    batch order derives from seed. Frozen parameters are bit-identical before
    and after. With keep_best_by_validation the returned parameters are those
    of the epoch with minimum validation loss.
    """
    doc_map = {d.article_id: d for d in docs}
    h_rows, y_rows = [], []
    for ex in examples:
        doc = doc_map.get(ex.article_id)
        if doc is None:
            raise KeyError(f"no tokenized doc for labeled article {ex.article_id!r}")
        h_rows.append(encode(doc, embedding).vector)
        y_rows.append(ex.category.value)
    h_all = np.vstack(h_rows)
    y_all = np.asarray(y_rows, dtype=np.int64)
    if len(np.unique(y_all)) < 2:
        raise ValueError("training data must contain at least two classes")

    order = np.random.default_rng(config.data_seed).permutation(len(y_all))
    n_val = max(1, len(y_all) // 10)
    val_idx, train_idx = order[:n_val], order[n_val:]
    h_train, y_train = h_all[train_idx], y_all[train_idx]
    h_val, y_val = h_all[val_idx], y_all[val_idx]

    dim = embedding.config.dimension
    params, scaling = _init_params(dim, regime, config.seed)
    with_adapter = isinstance(regime, Lora)
    trainable = _trainable_names(regime)

    adam_m = {k: np.zeros_like(params[k]) for k in trainable}
    adam_v = {k: np.zeros_like(params[k]) for k in trainable}
    step = 0
    rng = np.random.default_rng(config.seed)
    history = TrainingHistory()
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in params.items()}

    for epoch in range(config.epochs):
        perm = rng.permutation(len(y_train))
        batch_losses = []
        for start in range(0, len(perm), config.batch_size):
            batch = perm[start : start + config.batch_size]
            loss, grads = batch_loss_and_grads(
                params, scaling, h_train[batch], y_train[batch], with_adapter
            )
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, start // config.batch_size)
            batch_losses.append(loss)
            step += 1
            for name in trainable:
                g = grads[name]
                adam_m[name] = ADAM_BETA1 * adam_m[name] + (1 - ADAM_BETA1) * g
                adam_v[name] = ADAM_BETA2 * adam_v[name] + (1 - ADAM_BETA2) * g * g
                m_hat = adam_m[name] / (1 - ADAM_BETA1**step)
                v_hat = adam_v[name] / (1 - ADAM_BETA2**step)
                params[name] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                if name != "b":  # biases are exempt from decoupled decay
                    params[name] -= config.learning_rate * WEIGHT_DECAY * params[name]

        val_loss, recalls, macro = _val_metrics(params, scaling, with_adapter, h_val, y_val)
        history.train_loss.append(float(np.mean(batch_losses)))
        history.val_loss.append(val_loss)
        history.per_class_recall.append(recalls)
        history.macro_recall.append(macro)
        if val_loss < best_loss:
            best_loss = val_loss
            history.best_epoch = epoch
            if config.keep_best_by_validation:
                best_params = {k: v.copy() for k, v in params.items()}

    final = best_params if config.keep_best_by_validation else params
    adapter = None
    if isinstance(regime, Lora):
        adapter = LoraAdapter(final["A"], final["B"], regime.r, regime.scaling)
    model = CanalModel(
        dim=dim,
        regime=_regime_name(regime),
        projection=final["projection"],
        head=LinearHead(final["W"], final["b"]),
        adapter=adapter,
        seeds=(config.seed, config.data_seed),
    )
    return model, history


# --- persistence ----------------------------------------------------------


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f4").tobytes()).decode("ascii")


def _unb64(blob: str, shape: tuple[int, ...]) -> np.ndarray:
    return np.frombuffer(base64.b64decode(blob), dtype="<f4").astype(np.float64).reshape(shape)


def save_model(model: CanalModel, path: str | Path) -> None:
    """Persist the classifier; the projection folds into W (and A) on save."""
    w_eff = model.head.W @ model.projection
    header = {
        "dim": model.dim,
        "regime": model.regime,
        "seeds": list(model.seeds),
        "rank": model.adapter.rank if model.adapter else None,
        "scaling": model.adapter.scaling if model.adapter else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        fh.write(_b64(w_eff) + "\n")
        fh.write(_b64(model.head.b) + "\n")
        if model.adapter is not None:
            fh.write(_b64(model.adapter.A @ model.projection) + "\n")
            fh.write(_b64(model.adapter.B) + "\n")


def load_model(path: str | Path) -> CanalModel:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        dim = header["dim"]
        w = _unb64(fh.readline().strip(), (N_CLASSES, dim))
        b = _unb64(fh.readline().strip(), (N_CLASSES,))
        adapter = None
        if header.get("rank"):
            rank = header["rank"]
            a = _unb64(fh.readline().strip(), (rank, dim))
            b_mat = _unb64(fh.readline().strip(), (N_CLASSES, rank))
            adapter = LoraAdapter(a, b_mat, rank, header.get("scaling") or 1.0)
    return CanalModel(
        dim=dim,
        regime=header["regime"],
        projection=np.eye(dim),
        head=LinearHead(w, b),
        adapter=adapter,
        seeds=tuple(header.get("seeds", (0, 0))),
    )
