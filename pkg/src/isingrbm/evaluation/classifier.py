"""Multinomial logistic-regression readout on RBM hidden features."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, softmax


@dataclass
class LogisticHead:
    weights: np.ndarray  # (features + 1) x classes, last row is the bias
    classes: np.ndarray
    loss_history: list = field(default_factory=list)

    def decision(self, features):
        x = np.asarray(features, dtype=np.float64)
        return x @ self.weights[:-1] + self.weights[-1]

    def predict(self, features):
        return self.classes[np.argmax(self.decision(features), axis=1)]


def _loss_and_grad(Wb, X1, Y, reg):
    logits = X1 @ Wb
    n = X1.shape[0]
    loss = -np.sum(Y * log_softmax(logits, axis=1)) / n + 0.5 * reg * np.sum(Wb[:-1] ** 2)
    grad = X1.T @ (softmax(logits, axis=1) - Y) / n
    grad[:-1] += reg * Wb[:-1]
    return loss, grad


def classifier_head_train(hidden_features, labels, reg: float = 1e-4, max_iter: int = 500, tol: float = 1e-7) -> LogisticHead:
    """Full-batch gradient descent with step 1/L.

    L = lambda_max(X^T X) / (2n) + reg bounds the curvature of the softmax
    cross-entropy, so the loss never increases between iterations.
    """
    X = np.asarray(hidden_features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("features must be a 2-D array with one row per label")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("need at least two classes to train a classifier")
    Y = (y[:, None] == classes[None, :]).astype(np.float64)
    X1 = np.hstack([X, np.ones((X.shape[0], 1))])
    lipschitz = np.linalg.eigvalsh(X1.T @ X1 / X1.shape[0]).max() / 2.0 + reg
    step = 1.0 / lipschitz
    Wb = np.zeros((X1.shape[1], classes.size))
    history = []
    loss, grad = _loss_and_grad(Wb, X1, Y, reg)
    history.append(loss)
    for _ in range(max_iter):
        Wb -= step * grad
        new_loss, grad = _loss_and_grad(Wb, X1, Y, reg)
        history.append(new_loss)
        if loss - new_loss < tol * max(1.0, abs(loss)):
            break
        loss = new_loss
    return LogisticHead(Wb, classes, history)


def classifier_accuracy(head: LogisticHead, features, labels) -> float:
    labels = np.asarray(labels)
    return float(np.mean(head.predict(features) == labels))
