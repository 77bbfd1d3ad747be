"""Contact-shape classifier: standardized features into a softmax model.

Training minimizes mean cross-entropy with the adaptive-moment optimizer
(decay 0.9/0.999, epsilon 1e-8) over seeded shuffled mini-batches, so runs
are reproducible bit for bit. Feature standardization statistics live inside
the model; prediction needs nothing but an image.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from .features import extract_feature_matrix, extract_features
from .tactile import TactileImage

__all__ = [
    "SoftmaxShapeClassifier",
    "train_on_images",
    "classify_image",
    "gradient_check",
    "cross_entropy",
    "confusion_matrix",
    "save_model",
    "load_model",
]


def _add_bias(X: np.ndarray, value: float = 1.0) -> np.ndarray:
    return np.hstack([np.full((X.shape[0], 1), value), X])


def _softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs / probs.sum(axis=1, keepdims=True)


def cross_entropy(weights: np.ndarray, Xb: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of a weight matrix on a bias-augmented batch."""
    scores = Xb @ weights.T
    shifted = scores - scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    return float(np.mean(log_z - shifted[np.arange(len(labels)), labels]))


def _loss_and_grad(
    weights: np.ndarray, Xb: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    probs = _softmax(Xb @ weights.T)
    n = len(labels)
    loss = float(-np.mean(np.log(probs[np.arange(n), labels] + 1e-300)))
    probs[np.arange(n), labels] -= 1.0
    grad = probs.T @ Xb / n
    return loss, grad


class SoftmaxShapeClassifier(BaseEstimator, ClassifierMixin):
    """Multinomial softmax over contact features, trained from scratch.

    fit expects X as a (n, n_features) matrix and y as label strings (or any
    hashables); images go through train_on_images/classify_image instead.
    """

    def __init__(
        self,
        epochs: int = 5,
        batch_size: int = 64,
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
        logit_gain: float = 50.0,
        seed: int = 0,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.logit_gain = logit_gain
        self.seed = seed

    def fit(self, X, y) -> "SoftmaxShapeClassifier":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError(f"expected matching (n, f) features and n labels, got {X.shape}")
        self.classes_, y_idx = np.unique(y, return_inverse=True)
        if len(self.classes_) < 2:
            raise ValueError("training needs at least two classes")

        # Standardize by the pooled within-class deviation (floored so exotic
        # features like the topology count stay finite), then apply the logit
        # gain to every column including the bias. Within-class scaling keeps
        # fine but clean class gaps O(1); the gain makes logits respond
        # strongly to the small weights the short training budget can reach.
        within_var = np.mean(
            [X[y_idx == c].var(axis=0) for c in range(len(self.classes_))], axis=0
        )
        scale = np.maximum(np.sqrt(within_var), np.maximum(0.05 * X.std(axis=0), 1e-12))
        self.feature_mean_ = X.mean(axis=0)
        self.feature_std_ = scale / self.logit_gain
        Xb = _add_bias((X - self.feature_mean_) / self.feature_std_, value=self.logit_gain)

        n, dim = Xb.shape
        n_classes = len(self.classes_)
        weights = np.zeros((n_classes, dim))
        m = np.zeros_like(weights)
        v = np.zeros_like(weights)
        rng = np.random.default_rng(self.seed)
        step = 0
        self.loss_history_ = [cross_entropy(weights, Xb, y_idx)]
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                batch = order[start : start + self.batch_size]
                _, grad = _loss_and_grad(weights, Xb[batch], y_idx[batch])
                step += 1
                m = self.beta1 * m + (1.0 - self.beta1) * grad
                v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
                m_hat = m / (1.0 - self.beta1**step)
                v_hat = v / (1.0 - self.beta2**step)
                weights -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
            self.loss_history_.append(cross_entropy(weights, Xb, y_idx))
        self.weights_ = weights
        self.final_loss_ = self.loss_history_[-1]
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("classifier must be fitted first")

    def _standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return _add_bias((X - self.feature_mean_) / self.feature_std_, value=self.logit_gain)

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        return _softmax(self._standardize(X) @ self.weights_.T)

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]


def train_on_images(images, **params) -> SoftmaxShapeClassifier:
    """Extract features from labelled images and fit a classifier."""
    labels = [img.label for img in images]
    if any(label is None for label in labels):
        raise ValueError("all training images must carry a label")
    X = extract_feature_matrix(images)
    return SoftmaxShapeClassifier(**params).fit(X, labels)


def classify_image(clf: SoftmaxShapeClassifier, image: TactileImage):
    """(label, per-class probabilities) for one image."""
    probs = clf.predict_proba(extract_features(image)[None, :])[0]
    return str(clf.classes_[int(np.argmax(probs))]), probs


def gradient_check(
    weights: np.ndarray,
    X: np.ndarray,
    labels: np.ndarray,
    step: float = 1e-5,
) -> float:
    """Max mismatch between the analytic gradient and central differences.

    The error is relative for large entries and absolute for small ones
    (denominator max(1, |analytic|, |numeric|)), evaluated over every weight.
    """
    weights = np.asarray(weights, dtype=float)
    Xb = _add_bias(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=int)
    if len(labels) == 0:
        raise ValueError("gradient check needs a nonempty batch")
    _, analytic = _loss_and_grad(weights, Xb, labels)
    worst = 0.0
    for index in np.ndindex(weights.shape):
        probe = weights.copy()
        probe[index] += step
        upper = cross_entropy(probe, Xb, labels)
        probe[index] -= 2 * step
        lower = cross_entropy(probe, Xb, labels)
        numeric = (upper - lower) / (2 * step)
        denom = max(1.0, abs(analytic[index]), abs(numeric))
        worst = max(worst, abs(analytic[index] - numeric) / denom)
    return worst


def confusion_matrix(y_true, y_pred, labels) -> np.ndarray:
    """Counts[i, j] of true label i predicted as label j."""
    index = {label: i for i, label in enumerate(labels)}
    counts = np.zeros((len(labels), len(labels)), dtype=int)
    for t, p in zip(y_true, y_pred):
        counts[index[t], index[p]] += 1
    return counts


def save_confusion_csv(path, counts: np.ndarray, labels) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["true\\pred"] + list(labels))
        for label, row in zip(labels, counts):
            writer.writerow([label] + [int(c) for c in row])


def save_model(path, clf: SoftmaxShapeClassifier) -> None:
    """Standardization rows, then one row per class: label, bias, weights."""
    clf._check_fitted()
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["mean"] + [f"{x:.17g}" for x in clf.feature_mean_])
        writer.writerow(["std"] + [f"{x:.17g}" for x in clf.feature_std_])
        writer.writerow(["scale", f"{clf.logit_gain:.17g}"])
        for label, row in zip(clf.classes_, clf.weights_):
            writer.writerow([str(label)] + [f"{x:.17g}" for x in row])


def load_model(path) -> SoftmaxShapeClassifier:
    rows = list(csv.reader(open(Path(path), newline="")))
    if len(rows) < 4 or rows[0][0] != "mean" or rows[1][0] != "std" or rows[2][0] != "scale":
        raise ValueError(f"{path} is not a classifier model file")
    clf = SoftmaxShapeClassifier(logit_gain=float(rows[2][1]))
    clf.feature_mean_ = np.array([float(x) for x in rows[0][1:]])
    clf.feature_std_ = np.array([float(x) for x in rows[1][1:]])
    clf.classes_ = np.array([row[0] for row in rows[3:]])
    clf.weights_ = np.array([[float(x) for x in row[1:]] for row in rows[3:]])
    clf.final_loss_ = float("nan")
    return clf
