"""Shared corpora and trained models; built once per session because they are slow."""

import time
from collections import defaultdict

import pytest

from aggrate.bottleneck import train_clf
from aggrate.harness import corpus as cp
from aggrate.harness.presets import TSML_RATES
from aggrate.metrics import f1_score
from aggrate.tsml.logit import fit_threshold, train_logit
from aggrate.tsml.rbf import train_rbf

BOUNDARY_SECONDS = 6.0  # shorter traces leave the high-load corrector under-trained
CLF_SECONDS = 2.0


@pytest.fixture(scope="session")
def boundary_train():
    return cp.boundary_corpus(TSML_RATES, 1, BOUNDARY_SECONDS)


@pytest.fixture(scope="session")
def boundary_test():
    return cp.boundary_corpus(TSML_RATES, 2, BOUNDARY_SECONDS)


@pytest.fixture(scope="session")
def logit20(boundary_train):
    X, y, _ = cp.boundary_dataset(boundary_train, 20, True)
    return train_logit(X, y, 20, True, folds=20)


@pytest.fixture(scope="session")
def threshold(boundary_train):
    X, y, _ = cp.boundary_dataset(boundary_train, 1, False)
    return fit_threshold(X, y)


@pytest.fixture(scope="session")
def corrector(boundary_train, logit20):
    s = cp.slot_dataset(boundary_train, logit20)
    return train_rbf(s.X, s.y)


@pytest.fixture(scope="session")
def clf_train_runs():
    return cp.clf_corpus(1, CLF_SECONDS)


@pytest.fixture(scope="session")
def clf_test_runs():
    return cp.clf_corpus(2, CLF_SECONDS)


@pytest.fixture(scope="session")
def clf_model(clf_train_runs):
    d = cp.clf_dataset(clf_train_runs, 5, 100)
    return train_clf(d.X, d.y, 5, 100)


# -- acceptance verdicts -------------------------------------------------------------

N_CRITERIA = 13
_VERDICTS = defaultdict(list)
_T0 = {}


def pytest_sessionstart(session):
    _T0["session"] = time.time()


def session_elapsed() -> float:
    return time.time() - _T0["session"]


@pytest.fixture
def verdict():
    """Record one checked part of an acceptance criterion and assert it."""
    def record(num: int, ok: bool, detail: str):
        _VERDICTS[num].append((bool(ok), detail))
        assert ok, f"criterion {num}: {detail}"
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in range(1, N_CRITERIA + 1):
        parts = _VERDICTS.get(num)
        if not parts:
            tr.write_line(f"criterion {num:2d}: NOT RUN")
            continue
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {num:2d}: {status} | " + "; ".join(d for _, d in parts))


# -- bottleneck (n, p) grid ------------------------------------------------------------

CLF_GRID_N = (1, 2, 5, 10)
CLF_GRID_P = (10, 50, 100, 200, 500)


@pytest.fixture(scope="session")
def clf_grid(clf_train_runs, clf_test_runs):
    """Held-out F1 for every (n, p) of the sweep grid."""
    out = {}
    for n in CLF_GRID_N:
        for p in CLF_GRID_P:
            a, b = cp.clf_dataset(clf_train_runs, n, p), cp.clf_dataset(clf_test_runs, n, p)
            out[n, p] = f1_score(b.y, train_clf(a.X, a.y, n, p).predict(b.X))
    return out
