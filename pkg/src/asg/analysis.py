"""Reconstruction error, facet neighbours and a linear probe."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import AsgModel
from .embed_io import Vocab, check_embeddings
from .errors import ShapeError, ValidationError

PROBE_EPOCHS = 500
PROBE_STEP = 0.1
PROBE_L2 = 1e-4
PROBE_TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class ErrorStats:
    total_mse: float
    per_segment_mse: tuple[float, ...]
    max_row_error: float
    worst_token: int

    def as_dict(self) -> dict:
        return {
            "total_mse": self.total_mse,
            "per_segment_mse": list(self.per_segment_mse),
            "max_row_error": self.max_row_error,
            "worst_token": self.worst_token,
        }


def quantization_error(E, reconstructed, m: int | None = None) -> ErrorStats:
    """MSE over all entries, optionally split into ``m`` contiguous segments.

    Segment entries are each segment's squared error divided by ``V*D``, so
    they add up to ``total_mse``. ``max_row_error`` is the largest per-token
    sum of squared errors.
    """
    a = np.asarray(E, dtype=np.float64)
    b = np.asarray(reconstructed, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    V, D = a.shape
    sq = (a - b) ** 2
    row = sq.sum(axis=1)
    if m is None:
        per_segment = (float(sq.sum() / (V * D)),)
    else:
        if D % m:
            raise ShapeError(f"D={D} is not divisible by m={m}")
        seg = sq.reshape(V, m, D // m).sum(axis=(0, 2)) / (V * D)
        per_segment = tuple(float(s) for s in seg)
    worst = int(np.argmax(row))
    return ErrorStats(float(row.sum() / (V * D)), per_segment, float(row[worst]), worst)


@dataclass(frozen=True)
class FacetReport:
    query_token: str
    segment: int
    concept_id: int
    co_clustered: tuple[tuple[str, float], ...]


def segment_neighbors(model: AsgModel, vocab: Vocab, token: str, segment: int,
                      limit: int = 10, embeddings=None) -> FacetReport:
    """Tokens sharing ``token``'s Concept Vector at ``segment``.

    With ``embeddings`` the listed distance is between each token's original
    sub-vector and the shared Concept Vector; without it all distances are 0
    and order falls back to token index.
    """
    if len(vocab) != model.V:
        raise ShapeError(f"vocab has {len(vocab)} tokens, model has V={model.V}")
    if not 0 <= segment < model.m:
        raise ValidationError(f"segment {segment} out of range [0, {model.m})")
    if limit < 0:
        raise ValidationError(f"limit must be >= 0, got {limit}")
    q = vocab.index(token)
    cid = int(model.ids[q, segment])
    members = np.flatnonzero(model.ids[:, segment] == cid)
    if embeddings is None:
        dist = np.zeros(members.size)
    else:
        E = check_embeddings(embeddings)
        if E.shape != (model.V, model.D):
            raise ShapeError(f"embeddings shape {E.shape} does not match model ({model.V}, {model.D})")
        w = model.config.seg_dim
        sub = E[members, segment * w:(segment + 1) * w].astype(np.float64)
        dist = np.sqrt(((sub - model.codebooks[cid].astype(np.float64)) ** 2).sum(axis=1))
    order = np.lexsort((members, dist))[:limit]
    listed = tuple((vocab[int(members[j])], float(dist[j])) for j in order)
    return FacetReport(token, segment, cid, listed)


@dataclass(frozen=True)
class ProbeResult:
    base_accuracy: float
    quantized_accuracy: float

    @property
    def relative(self) -> float:
        if self.base_accuracy == 0:
            return float("nan")
        return self.quantized_accuracy / self.base_accuracy

    def as_dict(self) -> dict:
        return {"base_accuracy": self.base_accuracy, "quantized_accuracy": self.quantized_accuracy,
                "relative": self.relative}


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n)
    cut = int(round(PROBE_TRAIN_FRACTION * n))
    return perm[:cut], perm[cut:]


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit_softmax(X, y, n_classes: int):
    """Multinomial logistic regression by full-batch gradient descent from zero weights."""
    n, d = X.shape
    W = np.zeros((d, n_classes))
    b = np.zeros(n_classes)
    Y = np.eye(n_classes)[y]
    for _ in range(PROBE_EPOCHS):
        G = (_softmax(X @ W + b) - Y) / n
        W -= PROBE_STEP * (X.T @ G + PROBE_L2 * W)
        b -= PROBE_STEP * G.sum(axis=0)
    return W, b


def probe_accuracy(X_train, y_train, X_test, y_test, n_classes: int) -> float:
    W, b = fit_softmax(X_train, y_train, n_classes)
    pred = np.argmax(X_test @ W + b, axis=1)
    return float(np.mean(pred == y_test))


def probe_eval(E, E_hat, labels, split_seed: int = 0) -> ProbeResult:
    """Train the same probe on original and reconstructed rows under one split."""
    X = np.asarray(E, dtype=np.float64)
    X_hat = np.asarray(E_hat, dtype=np.float64)
    y = np.asarray(labels)
    if X.shape != X_hat.shape or X.ndim != 2:
        raise ShapeError(f"shape mismatch: {X.shape} vs {X_hat.shape}")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"expected {X.shape[0]} labels, got shape {y.shape}")
    classes, y = np.unique(y, return_inverse=True)
    counts = np.bincount(y)
    if classes.size < 2 or counts.min() < 4:
        raise ValidationError("probe needs at least 2 classes with at least 4 members each")
    tr, te = split_indices(X.shape[0], split_seed)
    n_classes = classes.size
    base = probe_accuracy(X[tr], y[tr], X[te], y[te], n_classes)
    quant = probe_accuracy(X_hat[tr], y[tr], X_hat[te], y[te], n_classes)
    return ProbeResult(base, quant)
