"""Binary logistic regression: loss, gradient and fitting.

Weights are packed as ``w = [bias, coef...]``; only the coefficients are
penalised.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(w, X, y, l2: float = 0.0) -> float:
    z = w[0] + X @ w[1:]
    # log(1 + e^z) - y z, computed stably
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * np.dot(w[1:], w[1:]))


def log_loss_grad(w, X, y, l2: float = 0.0):
    """Mean L2-regularised log loss and its gradient."""
    z = w[0] + X @ w[1:]
    # one exp serves both the stable softplus and the sigmoid
    e = np.exp(-np.abs(z))
    loss = np.mean(np.maximum(z, 0.0) + np.log1p(e) - y * z) + 0.5 * l2 * np.dot(w[1:], w[1:])
    p = np.where(z >= 0, 1.0, e) / (1.0 + e)
    r = (p - y) / len(y)
    g = np.empty_like(w)
    g[0] = r.sum()
    g[1:] = r @ X + l2 * w[1:]
    return float(loss), g


@dataclass
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X) -> "Scaler":
        X = np.asarray(X, dtype=np.float64)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    @classmethod
    def identity(cls, d: int) -> "Scaler":
        return cls(np.zeros(d), np.ones(d))

    def __call__(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


def check_binary(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    u = np.unique(y)
    if not np.all(np.isin(u, (0.0, 1.0))):
        raise ValueError("labels must be 0/1")
    if len(u) < 2:
        raise ValueError("training data must contain both classes")
    return y


def fit_logistic(X, y, l2: float = 1e-4, solver: str = "lbfgs", lr: float = 0.5, epochs: int = 2000,
                 tol: float = 1e-9, seed: int = 0, init=None) -> np.ndarray:
    """Minimise the regularised log loss; returns ``[bias, coef...]``.

    ``solver='gd'`` runs plain full-batch gradient descent for ``epochs`` steps
    (or until the gradient norm drops below ``tol``); ``'lbfgs'`` is the
    default quasi-Newton route. Both start from a seeded small random point
    unless ``init`` gives a warm start.
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_binary(y)
    rng = np.random.default_rng(seed)
    w0 = rng.normal(0.0, 1e-3, X.shape[1] + 1) if init is None else np.array(init, dtype=np.float64)
    if solver == "gd":
        w = w0
        for _ in range(epochs):
            _, g = log_loss_grad(w, X, y, l2)
            if np.linalg.norm(g) < tol:
                break
            w = w - lr * g
        return w
    if solver != "lbfgs":
        raise ValueError(f"unknown solver {solver!r}")
    res = minimize(log_loss_grad, w0, args=(X, y, l2), jac=True, method="L-BFGS-B",
                   options={"maxiter": 5000, "gtol": tol, "ftol": 1e-14})
    return res.x


def kfold_indices(n: int, k: int, block: int = 0, seed: int = 0):
    """Train/test index pairs for k-fold cross-validation.

    With ``block == 0`` folds are contiguous. Otherwise the samples are cut into
    runs of ``block`` and the runs are dealt to folds in a seeded random order,
    so every fold spans the whole corpus while neighbouring samples (which share
    windows) mostly stay together.
    """
    if not 2 <= k <= n:
        raise ValueError("need 2 <= k <= n")
    idx = np.arange(n)
    if block <= 0:
        for test in np.array_split(idx, k):
            yield np.setdiff1d(idx, test, assume_unique=True), test
        return
    runs = np.array_split(idx, max(int(np.ceil(n / block)), k))
    order = np.random.default_rng(seed).permutation(len(runs))
    for f in range(k):
        test = np.sort(np.concatenate([runs[j] for j in order[f::k]]))
        yield np.setdiff1d(idx, test, assume_unique=True), test
