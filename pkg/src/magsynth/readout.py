"""Readout models for the benchmark tasks: closed-form ridge (regression and
one-vs-rest classification), gradient-descent logistic regression, and k-NN.

Every model standardizes features by training-set statistics internally.
Classifier class order is the sorted unique label order; prediction ties break
to the lowest class index.
"""

from __future__ import annotations

import numpy as np

LOGISTIC_MAX_ITER = 5000
LOGISTIC_GRAD_TOL = 1e-6


def _standardize_fit(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


def _check_features(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite feature values")
    return x


class RidgeRegressor:
    """L2-regularized least squares, solved in closed form on standardized features."""

    def __init__(self, lam: float = 1.0):
        self.lam = float(lam)

    def fit(self, x, y):
        x = _check_features(x)
        y = np.asarray(y, dtype=np.float64)
        self._mean, self._std = _standardize_fit(x)
        xs = (x - self._mean) / self._std
        self._y_mean = y.mean()
        gram = xs.T @ xs + self.lam * np.eye(xs.shape[1])
        self.coef_ = np.linalg.solve(gram, xs.T @ (y - self._y_mean))
        return self

    def predict(self, x):
        xs = (_check_features(x) - self._mean) / self._std
        return xs @ self.coef_ + self._y_mean


class RidgeClassifier:
    """Ridge on +/-1 targets, one-vs-rest for more than two classes, argmax decision."""

    def __init__(self, lam: float = 1.0):
        self.lam = float(lam)

    def fit(self, x, y):
        x = _check_features(x)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        if any((y == c).sum() == 0 for c in self.classes_):
            raise ValueError("empty class in training data")
        self._mean, self._std = _standardize_fit(x)
        xs = (x - self._mean) / self._std
        gram = xs.T @ xs + self.lam * np.eye(xs.shape[1])
        targets = np.stack([np.where(y == c, 1.0, -1.0) for c in self.classes_], axis=1)
        self._intercepts = targets.mean(axis=0)
        self._coefs = np.linalg.solve(gram, xs.T @ (targets - self._intercepts))
        return self

    def decision_scores(self, x):
        xs = (_check_features(x) - self._mean) / self._std
        return xs @ self._coefs + self._intercepts

    def predict(self, x):
        return self.classes_[np.argmax(self.decision_scores(x), axis=1)]


class LogisticRegressionGD:
    """Multinomial logistic regression by full-batch gradient descent.

    Runs until the gradient norm drops below 1e-6 or 5000 iterations; the step
    size is the inverse of the softmax-loss Lipschitz bound, so descent is
    stable without a line search.
    """

    def __init__(self, max_iter: int = LOGISTIC_MAX_ITER, tol: float = LOGISTIC_GRAD_TOL):
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, x, y):
        x = _check_features(x)
        y = np.asarray(y)
        self.classes_ = np.unique(y)
        self._mean, self._std = _standardize_fit(x)
        xs = (x - self._mean) / self._std
        n, d = xs.shape
        k = self.classes_.size
        design = np.concatenate([xs, np.ones((n, 1))], axis=1)
        onehot = np.stack([(y == c).astype(np.float64) for c in self.classes_], axis=1)

        sv_max = np.linalg.norm(design, ord=2)
        lr = 1.0 / max(0.5 * sv_max**2 / n, 1e-12)
        w = np.zeros((d + 1, k))
        for _ in range(self.max_iter):
            logits = design @ w
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            grad = design.T @ (p - onehot) / n
            if np.linalg.norm(grad) < self.tol:
                break
            w -= lr * grad
        self._w = w
        return self

    def predict_proba(self, x):
        xs = (_check_features(x) - self._mean) / self._std
        design = np.concatenate([xs, np.ones((xs.shape[0], 1))], axis=1)
        logits = design @ self._w
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        return p / p.sum(axis=1, keepdims=True)

    def decision_scores(self, x):
        return self.predict_proba(x)

    def predict(self, x):
        return self.classes_[np.argmax(self.predict_proba(x), axis=1)]


class KnnClassifier:
    """Euclidean k-NN majority vote on standardized features; ties take the lowest class index."""

    def __init__(self, k: int = 5):
        self.k = int(k)

    def fit(self, x, y):
        x = _check_features(x)
        self._y = np.asarray(y)
        self.classes_ = np.unique(self._y)
        self._mean, self._std = _standardize_fit(x)
        self._x = (x - self._mean) / self._std
        return self

    def vote_fractions(self, x):
        xs = (_check_features(x) - self._mean) / self._std
        k = min(self.k, self._x.shape[0])
        d2 = ((xs[:, None, :] - self._x[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        votes = np.zeros((xs.shape[0], self.classes_.size))
        for ci, c in enumerate(self.classes_):
            votes[:, ci] = (self._y[nearest] == c).sum(axis=1)
        return votes / k

    def decision_scores(self, x):
        return self.vote_fractions(x)

    def predict(self, x):
        return self.classes_[np.argmax(self.vote_fractions(x), axis=1)]


def fit_predict_readout(model: str, train_x, train_y, test_x, hyper=None):
    """Train one readout and return its test predictions.

    hyper: {"lambda": ...} for the ridge family, {"k": ...} for knn.
    """
    hyper = hyper or {}
    if model == "ridge_regressor":
        return RidgeRegressor(lam=hyper.get("lambda", 1.0)).fit(train_x, train_y).predict(test_x)
    if model == "ridge_classifier":
        return RidgeClassifier(lam=hyper.get("lambda", 1.0)).fit(train_x, train_y).predict(test_x)
    if model == "logistic":
        return LogisticRegressionGD().fit(train_x, train_y).predict(test_x)
    if model == "knn_classifier":
        return KnnClassifier(k=hyper.get("k", 5)).fit(train_x, train_y).predict(test_x)
    raise ValueError(f"unknown readout model {model!r}")
