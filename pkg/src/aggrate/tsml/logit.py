"""Frame-boundary detection from kernel receive timestamps.

Each packet gets a feature vector made of the last ``m`` inter-arrival times
(microseconds) plus, optionally, their standard deviation. A logistic model
estimates the probability that the packet opens a new aggregated frame.
Counting packets between detected boundaries gives per-frame aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..logistic import Scaler, check_binary, fit_logistic, kfold_indices, sigmoid
from ..metrics import f1_score


def build_boundary_features(ts_us, m: int = 20, use_sigma: bool = True) -> np.ndarray:
    """Row ``j`` describes packet ``j + m``: its ``m`` preceding inter-arrivals, oldest first."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ts = np.asarray(ts_us, dtype=np.float64)
    dim = m + 1 if use_sigma else m
    if len(ts) <= m:
        return np.zeros((0, dim))
    gaps = np.diff(ts)
    if np.any(gaps < 0):
        raise ValueError("timestamps must be non-decreasing")
    win = sliding_window_view(gaps, m)
    if not use_sigma:
        return np.ascontiguousarray(win)
    return np.hstack((win, win.std(axis=1, keepdims=True)))


def boundary_labels(frame_ids) -> np.ndarray:
    """1 where a packet's frame differs from the previous packet's."""
    f = np.asarray(frame_ids)
    if len(f) == 0:
        return np.zeros(0, np.int8)
    return np.concatenate(([1], (f[1:] != f[:-1]))).astype(np.int8)


@dataclass
class LogitModel:
    theta0: float
    theta: np.ndarray
    m: int
    uses_sigma: bool = True
    scaler: Optional[Scaler] = None
    cv_f1: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.m + 1 if self.uses_sigma else self.m

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (self.dim,):
            raise ValueError(f"theta must have {self.dim} entries")
        if not (np.all(np.isfinite(self.theta)) and np.isfinite(self.theta0)):
            raise ValueError("weights must be finite")
        if self.scaler is None:
            self.scaler = Scaler.identity(self.dim)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.dim:
            raise ValueError(f"feature dimension {X.shape[1]} != model dimension {self.dim}")
        return sigmoid(self.theta0 + self.scaler(X) @ self.theta)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def logit_predict(model: LogitModel, X) -> np.ndarray:
    return model.predict_proba(X)


@dataclass
class ThresholdModel:
    """m=1 baseline: a packet opens a frame when its inter-arrival reaches ``threshold``."""

    threshold: float

    def predict(self, gaps) -> np.ndarray:
        g = np.asarray(gaps, dtype=np.float64).reshape(len(gaps), -1)[:, -1]
        return (g >= self.threshold).astype(np.int8)


def fit_threshold(gaps, y) -> ThresholdModel:
    """Threshold maximising accuracy on the training gaps."""
    g = np.asarray(gaps, dtype=np.float64).reshape(len(gaps), -1)[:, -1]
    y = check_binary(y)
    order = np.argsort(g, kind="stable")
    gs, ys = g[order], y[order]
    # predicting 1 for all gaps >= gs[i]: correct = zeros below i + ones from i on
    zeros_below = np.concatenate(([0], np.cumsum(1 - ys)))
    ones_from = np.concatenate((np.cumsum(ys[::-1])[::-1], [0]))
    acc = zeros_below + ones_from
    cut = np.flatnonzero(np.concatenate(([True], gs[1:] != gs[:-1], [True])))
    i = cut[np.argmax(acc[cut])]
    if i == 0:
        thr = gs[0]
    elif i == len(gs):
        thr = np.nextafter(gs[-1], np.inf)
    else:
        thr = 0.5 * (gs[i - 1] + gs[i])
    return ThresholdModel(float(thr))


def train_logit(X, y, m: int, uses_sigma: bool = True, l2: float = 1e-4, seed: int = 0,
                folds: int = 0, solver: str = "lbfgs", lr: float = 0.5, epochs: int = 2000,
                block: int = 2000) -> LogitModel:
    """Fit on standardised features; ``folds > 1`` also records k-fold F1 scores.

    Folds are built from runs of ``block`` consecutive rows (see ``kfold_indices``).
    """
    X = np.asarray(X, dtype=np.float64)
    y = check_binary(y)
    sc = Scaler.fit(X)
    w = fit_logistic(sc(X), y, l2, solver, lr, epochs, seed=seed)
    cv = []
    if folds > 1:
        # fold fits start from the full-data solution; only the optimum matters
        for tr, te in kfold_indices(len(y), folds, block, seed):
            fsc = Scaler.fit(X[tr])
            init = w if solver == "lbfgs" else None
            wf = fit_logistic(fsc(X[tr]), y[tr], l2, solver, lr, epochs, seed=seed, init=init)
            pred = sigmoid(wf[0] + fsc(X[te]) @ wf[1:]) >= 0.5
            cv.append(f1_score(y[te], pred))
    return LogitModel(float(w[0]), w[1:], m, uses_sigma, sc, cv)


def labels_to_agg(labels, n_max: int) -> np.ndarray:
    """Frame sizes between successive boundary labels, split at ``n_max``.

    Packets before the first boundary and the still-open last frame are not
    reported.
    """
    return segment_frames(labels, n_max)[1]


def segment_frames(labels, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    """Start index and size of every closed frame implied by ``labels``."""
    lab = np.asarray(labels).astype(bool)
    ones = np.flatnonzero(lab)
    if len(ones) == 0:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    starts, sizes = [], []
    for a, b in zip(ones[:-1].tolist(), ones[1:].tolist()):
        n = b - a
        s = a
        while n > n_max:
            starts.append(s)
            sizes.append(n_max)
            s += n_max
            n -= n_max
        starts.append(s)
        sizes.append(n)
    # a full-size frame inside the open tail is closed by the cap
    tail = len(lab) - ones[-1]
    s = int(ones[-1])
    while tail > n_max:
        starts.append(s)
        sizes.append(n_max)
        s += n_max
        tail -= n_max
    return np.asarray(starts, np.int64), np.asarray(sizes, np.int64)
