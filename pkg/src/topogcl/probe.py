"""Linear probe: multinomial logistic regression on frozen embeddings."""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp, softmax
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

__all__ = ["ProbeError", "LogisticProbe"]


class ProbeError(ValueError):
    pass


class LogisticProbe(BaseEstimator, ClassifierMixin):
    """L2-regularised multinomial logistic regression fit by full-batch
    gradient descent with step ``1/L`` (``L`` the smoothness constant).

    Features are standardised with the training mean and deviation.

    Parameters
    ----------
    reg : float
        L2 penalty on the weights (the intercept is not penalised).
    max_iter : int
        Maximum number of gradient steps.
    tol : float
        Stop once the gradient norm drops below ``tol``.
    """

    def __init__(self, reg=1e-3, max_iter=2000, tol=1e-6):
        self.reg = reg
        self.max_iter = max_iter
        self.tol = tol

    def _design(self, X):
        Xs = (X - self.mean_) / self.scale_
        return np.hstack([Xs, np.ones((len(Xs), 1))])

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = unique_labels(y)
        if len(self.classes_) < 2:
            raise ProbeError("the probe needs at least two classes")
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        A = self._design(X)
        n, d = A.shape
        k = len(self.classes_)
        Y = (y[:, None] == self.classes_[None, :]).astype(np.float64)
        penalty = np.full((d, 1), self.reg)
        penalty[-1] = 0.0
        lipschitz = 0.5 * np.linalg.norm(A, 2) ** 2 / n + self.reg
        step = 1.0 / lipschitz
        W = np.zeros((d, k))
        for it in range(self.max_iter):
            P = softmax(A @ W, axis=1)
            grad = A.T @ (P - Y) / n + penalty * W
            if np.linalg.norm(grad) < self.tol:
                break
            W -= step * grad
        self.coef_ = W
        self.n_iter_ = it + 1
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return self._design(X) @ self.coef_

    def predict_proba(self, X):
        scores = self.decision_function(X)
        return np.exp(scores - logsumexp(scores, axis=1, keepdims=True))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
