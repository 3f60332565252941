"""Locating the bottleneck (WLAN or backhaul) from aggregation and loss.

When the AP is the bottleneck its queue builds, frames grow and packets are
not lost until aggregation saturates. When the backhaul is the bottleneck the
AP sees a thinned arrival stream, so frames stay small while the upstream
queue drops packets. A logistic model over the last ``n`` frame sizes and the
loss fraction of the last ``p`` packets separates the two.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .logistic import Scaler, check_binary, fit_logistic, kfold_indices, sigmoid
from .meter import ObservedFrame
from .metrics import f1_score


class ClfFeatureStream:
    """Online feature builder for one flow.

    Loss is counted end to end: a missing sequence number is only charged once
    the frame after the one that exposed it has been seen, which leaves room
    for the usual dedicated retransmission frame to fill it.
    """

    def __init__(self, n: int = 5, p: int = 100, first_seq: int = 0):
        if n < 1 or p < 1:
            raise ValueError("n and p must be >= 1")
        self.n, self.p = n, p
        self.first = first_seq
        self.max_seq = first_seq - 1
        self._got = np.zeros(4096, dtype=bool)
        self._aggs: list = []

    def _mark(self, seqs):
        idx = np.asarray(seqs, dtype=np.int64) - self.first
        idx = idx[idx >= 0]
        if len(idx) and idx.max() >= len(self._got):
            grow = np.zeros(max(len(self._got) * 2, int(idx.max()) + 1), dtype=bool)
            grow[:len(self._got)] = self._got
            self._got = grow
        self._got[idx] = True

    def push(self, frame: ObservedFrame) -> Optional[np.ndarray]:
        """Feed one received frame; returns a feature row for fresh frames once warmed up."""
        seqs = frame.received_seqs
        prior_max = self.max_seq
        old = seqs[seqs <= prior_max]
        if len(old):
            self._mark(old)
        fresh = seqs[seqs > prior_max]
        if len(fresh) == 0:
            return None
        top = int(fresh.max())
        # loss over the p sequence numbers that ended with the previous frame
        hi = prior_max - self.first + 1
        lo = max(hi - self.p, 0)
        window = hi - lo
        lost = window - int(np.count_nonzero(self._got[lo:hi])) if window > 0 else 0
        self._mark(fresh)
        self.max_seq = top
        agg = frame.inferred_tx_count if frame.inferred_tx_count else top - prior_max
        self._aggs.append(agg)
        if len(self._aggs) > self.n:
            del self._aggs[0]
        if len(self._aggs) < self.n or window < self.p:
            return None
        return np.array(self._aggs + [lost / self.p], dtype=np.float64)


def build_clf_features(frames: Iterable[ObservedFrame], n: int = 5, p: int = 100,
                       first_seq: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Feature rows ``[N_{i-n+1} .. N_i, loss]`` and the index of the frame each describes."""
    st = ClfFeatureStream(n, p, first_seq)
    rows, idx = [], []
    for i, f in enumerate(frames):
        x = st.push(f)
        if x is not None:
            rows.append(x)
            idx.append(i)
    if not rows:
        return np.zeros((0, n + 1)), np.zeros(0, np.int64)
    return np.vstack(rows), np.asarray(idx, np.int64)


@dataclass
class ClfModel:
    bias: float
    weights: np.ndarray
    n: int = 5
    p: int = 100
    scaler: Optional[Scaler] = None
    cv_f1: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.n + 1,):
            raise ValueError(f"weights must have n+1 = {self.n + 1} entries")
        if self.scaler is None:
            self.scaler = Scaler.identity(self.n + 1)

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.n + 1:
            raise ValueError(f"feature dimension {X.shape[1]} != {self.n + 1}")
        return sigmoid(self.bias + self.scaler(X) @ self.weights)

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(np.int8)


def clf_predict(model: ClfModel, X) -> np.ndarray:
    return model.predict_proba(X)


def balance_classes(X, y, seed: int = 0):
    """Subsample the larger class down to the size of the smaller one (order kept)."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    i0, i1 = np.flatnonzero(y == 0), np.flatnonzero(y == 1)
    k = min(len(i0), len(i1))
    keep = np.sort(np.concatenate((rng.choice(i0, k, replace=False), rng.choice(i1, k, replace=False))))
    return np.asarray(X)[keep], y[keep]


def train_clf(X, y, n: int = 5, p: int = 100, l2: float = 1e-4, seed: int = 0, folds: int = 0,
              balance: bool = True) -> ClfModel:
    """Fit the classifier; ``folds > 1`` records k-fold F1 (folds are shuffled blocks)."""
    X = np.asarray(X, dtype=np.float64)
    y = check_binary(y)
    if balance:
        X, y = balance_classes(X, y, seed)
    cv = []
    if folds > 1:
        perm = np.random.default_rng(seed).permutation(len(y))
        Xp, yp = X[perm], y[perm]
        for tr, te in kfold_indices(len(yp), folds):
            sc = Scaler.fit(Xp[tr])
            w = fit_logistic(sc(Xp[tr]), yp[tr], l2, seed=seed)
            cv.append(f1_score(yp[te], sigmoid(w[0] + sc(Xp[te]) @ w[1:]) >= 0.5))
    sc = Scaler.fit(X)
    w = fit_logistic(sc(X), y, l2, seed=seed)
    return ClfModel(float(w[0]), w[1:], n, p, sc, cv)


@dataclass(frozen=True)
class Transition:
    t: float
    state: int


def detect_transitions(times: Sequence[float], labels: Sequence[int], h: int = 3,
                       initial: Optional[int] = None) -> list[Transition]:
    """Switch state after ``h`` consecutive labels disagree with it.

    The state starts at ``initial`` or, if None, at the first label. Each
    transition is stamped with the time of the label that completed the run.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    out = []
    if len(labels) == 0:
        return out
    state = int(labels[0]) if initial is None else int(initial)
    run = 0
    for t, lab in zip(times, labels):
        if int(lab) != state:
            run += 1
            if run >= h:
                state = int(lab)
                out.append(Transition(float(t), state))
                run = 0
        else:
            run = 0
    return out
