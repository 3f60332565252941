"""Slot-level correction of the boundary estimator with RBF kernel ridge regression.

Per-frame estimates are averaged over short slots. The means of the last
``d`` slots, together with the spread and frame count of the latest slot,
predict the true mean aggregation of that slot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..logistic import Scaler, kfold_indices

log = logging.getLogger(__name__)

GAMMA_GRID = (0.01, 0.03, 0.1, 0.3, 1.0)
LAMBDA_GRID = (1e-3, 1e-2, 1e-1, 1.0)


@dataclass
class SlotStats:
    slot: np.ndarray  # slot index
    mu: np.ndarray
    sd: np.ndarray
    count: np.ndarray


def slot_stats(times_us, agg, slot: float = 0.1) -> SlotStats:
    """Mean, std and count of per-frame values grouped into ``slot``-second bins; empty bins omitted."""
    t = np.asarray(times_us, dtype=np.float64)
    a = np.asarray(agg, dtype=np.float64)
    if t.shape != a.shape:
        raise ValueError("times and values differ in length")
    if len(t) == 0:
        z = np.zeros(0)
        return SlotStats(z.astype(np.int64), z, z, z.astype(np.int64))
    k = np.floor(t / (slot * 1e6)).astype(np.int64)
    keys, inv, cnt = np.unique(k, return_inverse=True, return_counts=True)
    s1 = np.bincount(inv, weights=a)
    s2 = np.bincount(inv, weights=a * a)
    mu = s1 / cnt
    var = np.maximum(s2 / cnt - mu * mu, 0.0)
    return SlotStats(keys, mu, np.sqrt(var), cnt)


def slot_features(stats: SlotStats, d: int = 5) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``[mu_{i-d+1} .. mu_i, sd_i, count_i]`` over runs of consecutive slots.

    Returns the feature matrix and, per row, the position in ``stats`` it
    describes. Rows need ``d`` consecutive non-empty slots.
    """
    n = len(stats.slot)
    if n < d:
        return np.zeros((0, d + 2)), np.zeros(0, np.int64)
    consecutive = np.ones(n, dtype=np.int64)
    for i in range(1, n):
        if stats.slot[i] == stats.slot[i - 1] + 1:
            consecutive[i] = consecutive[i - 1] + 1
    rows = np.flatnonzero(consecutive >= d)
    if len(rows) == 0:
        return np.zeros((0, d + 2)), rows
    mus = np.stack([stats.mu[rows - (d - 1 - j)] for j in range(d)], axis=1)
    X = np.hstack((mus, stats.sd[rows, None], stats.count[rows, None].astype(np.float64)))
    return X, rows


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


@dataclass
class RbfModel:
    support: np.ndarray  # scaled training features
    weights: np.ndarray
    gamma: float
    bias: float
    scaler: Scaler
    d: int = 5
    n_max: int = 128
    lam: float = 0.0
    cv_rmse: dict = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.support.shape[1]:
            raise ValueError(f"feature dimension {X.shape[1]} != {self.support.shape[1]}")
        K = rbf_kernel(self.scaler(X), self.support, self.gamma)
        return np.clip(K @ self.weights + self.bias, 1.0, self.n_max)


def rbf_predict(model: RbfModel, X) -> np.ndarray:
    return model.predict(X)


def _solve(K, r, lam):
    """(K + lam I) a = r, raising lam until the Cholesky factorisation succeeds."""
    n = len(K)
    bumped = False
    while True:
        try:
            c = cho_factor(K + lam * np.eye(n), lower=True, check_finite=True)
            return cho_solve(c, r), lam, bumped
        except LinAlgError:
            lam = max(lam * 10.0, 1e-10)
            bumped = True


def fit_kernel_ridge(X, y, gamma: float, lam: float):
    """Kernel ridge with an unpenalised constant offset at the target mean."""
    b = float(np.mean(y))
    K = rbf_kernel(X, X, gamma)
    a, lam_used, bumped = _solve(K, y - b, lam)
    if bumped:
        log.warning("kernel system was singular; regularisation raised to %g", lam_used)
    return a, b, lam_used


def train_rbf(X, y, gamma: Optional[float] = None, lam: Optional[float] = None, seed: int = 0,
              folds: int = 5, d: int = 5, n_max: int = 128, max_points: int = 2000,
              gammas: Sequence[float] = GAMMA_GRID, lams: Sequence[float] = LAMBDA_GRID) -> RbfModel:
    """Fit the corrector; hyper-parameters left as None are chosen by k-fold CV RMSE.

    At most ``max_points`` rows (a seeded random subset) are kept as support.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(y) < max(d, 2):
        raise ValueError("not enough labelled slots")
    if len(y) > max_points:
        keep = np.sort(np.random.default_rng(seed).choice(len(y), max_points, replace=False))
        X, y = X[keep], y[keep]
    sc = Scaler.fit(X)
    Z = sc(X)
    g_grid = [gamma] if gamma is not None else list(gammas)
    l_grid = [lam] if lam is not None else list(lams)
    scores = {}
    if len(g_grid) * len(l_grid) > 1:
        # shuffle before the contiguous split so each fold spans all load levels
        perm = np.random.default_rng(seed).permutation(len(y))
        Zp, yp = Z[perm], y[perm]
        for g in g_grid:
            for lm in l_grid:
                err = []
                for tr, te in kfold_indices(len(yp), min(folds, len(yp))):
                    a, b, _ = fit_kernel_ridge(Zp[tr], yp[tr], g, lm)
                    pred = np.clip(rbf_kernel(Zp[te], Zp[tr], g) @ a + b, 1.0, n_max)
                    err.append(np.mean((pred - yp[te]) ** 2))
                scores[(g, lm)] = float(np.sqrt(np.mean(err)))
        g_best, l_best = min(scores, key=lambda k: (scores[k], k))
    else:
        g_best, l_best = g_grid[0], l_grid[0]
    a, b, lam_used = fit_kernel_ridge(Z, y, g_best, l_best)
    return RbfModel(Z, a, g_best, b, sc, d, n_max, lam_used, scores)
