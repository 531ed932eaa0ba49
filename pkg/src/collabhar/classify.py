"""Class-weighted one-vs-all logistic regression and soft-vote smoothing."""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .features import Standardizer

log = logging.getLogger(__name__)

MODEL_FORMAT = "collabhar-ova"
MODEL_VERSION = 1


@dataclass(frozen=True)
class Hyperparams:
    learning_rate: float = 0.1
    epochs: int = 300
    l2: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


@dataclass
class OvaModel:
    classes: list[str]
    weights: np.ndarray  # (n_classes, n_features)
    bias: np.ndarray  # (n_classes,)
    hyperparams: Hyperparams
    standardizer: Standardizer | None = None
    schema: list[str] = field(default_factory=list)
    final_learning_rates: np.ndarray | None = None
    loss_history: np.ndarray | None = None

    def to_json(self) -> str:
        doc = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "classes": list(self.classes),
            "schema": list(self.schema),
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
            "hyperparams": asdict(self.hyperparams),
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OvaModel":
        doc = json.loads(text)
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ValueError(f"unsupported model format {doc.get('format')!r} v{doc.get('version')!r}")
        std = doc.get("standardizer")
        return cls(
            classes=list(doc["classes"]),
            weights=np.asarray(doc["weights"], dtype=np.float64).reshape(len(doc["classes"]), -1),
            bias=np.asarray(doc["bias"], dtype=np.float64),
            hyperparams=Hyperparams(**doc["hyperparams"]),
            standardizer=Standardizer.from_dict(std) if std else None,
            schema=list(doc["schema"]),
        )


def instance_weights(purity, targets) -> np.ndarray:
    """Purity times inverse class frequency, rescaled to a mean of one.

    ``targets`` must be the training fold's own target classes, so every
    class that occurs has a non-zero count.
    """
    purity = np.asarray(purity, dtype=np.float64)
    targets = np.asarray(targets)
    if len(purity) != len(targets) or len(targets) == 0:
        raise ValueError("purity and targets must be non-empty and equally long")
    classes, inverse, counts = np.unique(targets, return_inverse=True, return_counts=True)
    if np.any(counts == 0):
        raise ValueError("zero count for a present class")
    raw = purity * (len(targets) / (len(classes) * counts[inverse]))
    return raw / raw.mean()


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _sigmoid(z):
    return np.exp(z - _softplus(z))


def _loss_and_grad(W, b, X, Y, sample_weight, l2, need_grad=True):
    Z = X @ W.T + b
    sp = _softplus(Z)
    n = X.shape[0]
    # y * softplus(-z) + (1 - y) * softplus(z) == softplus(z) - y * z
    loss = (sample_weight @ (sp - Y * Z)) / n + 0.5 * l2 * np.sum(W * W, axis=1)
    if not need_grad:
        return loss, None, None
    R = (np.exp(Z - sp) - Y) * sample_weight[:, None]
    return loss, R.T @ X / n + l2 * W, R.sum(axis=0) / n


def weighted_loss(W, b, X, Y, sample_weight, l2):
    """Per-class weighted mean binary cross-entropy plus L2 on the weights.

    ``W`` is ``(K, D)``, ``Y`` a ``(N, K)`` 0/1 indicator matrix. Returns a
    length-K vector.
    """
    return _loss_and_grad(W, b, X, Y, sample_weight, l2, need_grad=False)[0]


def loss_gradient(W, b, X, Y, sample_weight, l2):
    """Gradient of :func:`weighted_loss` as ``(dW, db)``."""
    _, dW, db = _loss_and_grad(W, b, X, Y, sample_weight, l2)
    return dW, db


def train(X, y, sample_weight, hp: Hyperparams = Hyperparams(), classes=None) -> OvaModel:
    """Full-batch gradient descent from zero for one binary model per class.

    A class whose loss rises between epochs has its learning rate halved for
    the remaining epochs.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    w = np.asarray(sample_weight, dtype=np.float64)
    if X.ndim != 2 or not (len(X) == len(y) == len(w)) or len(X) < 2:
        raise ValueError("need at least two instances with matching X, y and weights")
    present = sorted(set(y.tolist()))
    if len(present) < 2:
        raise ValueError(f"training set holds a single class ({present[0]!r})")
    classes = list(classes) if classes is not None else present
    stray = set(present) - set(classes)
    if stray:
        raise ValueError(f"labels outside the class list: {sorted(stray)}")
    Y = (y[:, None] == np.asarray(classes)[None, :]).astype(np.float64)
    K, D = len(classes), X.shape[1]
    W = np.zeros((K, D))
    b = np.zeros(K)
    lr = np.full(K, float(hp.learning_rate))
    history = np.empty((hp.epochs + 1, K))
    prev = None
    for epoch in range(hp.epochs):
        loss, dW, db = _loss_and_grad(W, b, X, Y, w, hp.l2)
        history[epoch] = loss
        if prev is not None:
            rising = loss > prev
            if rising.any():
                lr = np.where(rising, lr / 2, lr)
                for k in np.flatnonzero(rising):
                    log.info("loss rose for class %s at epoch %d; learning rate now %g", classes[k], epoch, lr[k])
        prev = loss
        W = W - lr[:, None] * dW
        b = b - lr * db
    history[hp.epochs] = weighted_loss(W, b, X, Y, w, hp.l2)
    return OvaModel(classes, W, b, hp, final_learning_rates=lr, loss_history=history)


def predict_proba(model: OvaModel, X) -> np.ndarray:
    """One-vs-all sigmoid scores normalised to sum to one per row."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != model.weights.shape[1]:
        raise ValueError(f"expected {model.weights.shape[1]} features, got {X.shape[1]}")
    if model.standardizer is not None:
        X = model.standardizer.apply(X)
    S = _sigmoid(X @ model.weights.T + model.bias)
    total = S.sum(axis=1, keepdims=True)
    K = S.shape[1]
    P = np.where(total > 0, S / np.where(total > 0, total, 1.0), 1.0 / K)
    return P[0] if single else P


def predict(model: OvaModel, X) -> list[str]:
    P = np.atleast_2d(predict_proba(model, X))
    return [model.classes[i] for i in np.argmax(P, axis=1)]


def smooth_predictions(probas, radius: int = 3) -> np.ndarray:
    """Soft vote over ``radius`` windows either side; returns class indices."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    probas = np.asarray(probas, dtype=np.float64)
    if probas.size == 0:
        return np.zeros(0, dtype=np.int64)
    return _kernels.soft_vote(np.atleast_2d(probas), int(radius))
