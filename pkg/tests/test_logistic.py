import numpy as np
import pytest
from hypothesis import example, given, settings, strategies as st

from aggrate.logistic import fit_logistic, kfold_indices, log_loss, log_loss_grad, sigmoid
from aggrate.metrics import f1_score, jain_index, rmse


def central_diff(w, X, y, l2, h=1e-6):
    g = np.zeros_like(w)
    for i in range(len(w)):
        e = np.zeros_like(w)
        e[i] = h
        g[i] = (log_loss(w + e, X, y, l2) - log_loss(w - e, X, y, l2)) / (2 * h)
    return g


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(100):
        n, d = rng.integers(5, 40), rng.integers(1, 6)
        X = rng.normal(size=(n, d))
        y = (rng.random(n) < 0.5).astype(float)
        w = rng.normal(size=d + 1)
        l2 = float(rng.choice([0.0, 1e-3, 0.1]))
        _, g = log_loss_grad(w, X, y, l2)
        num = central_diff(w, X, y, l2)
        worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12))
    assert worst < 1e-6


def test_loss_values_agree():
    rng = np.random.default_rng(1)
    X, y, w = rng.normal(size=(20, 3)), (rng.random(20) < 0.5).astype(float), rng.normal(size=4)
    assert log_loss_grad(w, X, y, 0.01)[0] == pytest.approx(log_loss(w, X, y, 0.01))


def test_sigmoid_stable():
    z = np.array([-1000.0, 0.0, 1000.0])
    assert sigmoid(z).tolist() == [0.0, 0.5, 1.0]


@pytest.mark.parametrize("solver", ["lbfgs", "gd"])
def test_separable_fit(solver):
    rng = np.random.default_rng(0)
    X = np.concatenate((rng.normal(-2, 0.3, (50, 2)), rng.normal(2, 0.3, (50, 2))))
    y = np.repeat([0, 1], 50)
    w = fit_logistic(X, y, l2=1e-3, solver=solver, epochs=3000)
    pred = sigmoid(w[0] + X @ w[1:]) >= 0.5
    assert f1_score(y, pred) == 1.0


def test_solvers_agree():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3))
    y = (X @ [1.0, -2.0, 0.5] + rng.normal(size=200) > 0).astype(float)
    a = fit_logistic(X, y, l2=0.01)
    b = fit_logistic(X, y, l2=0.01, solver="gd", lr=1.0, epochs=20000, tol=1e-10)
    assert np.allclose(a, b, atol=1e-4)


def test_single_class_rejected():
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((5, 1)), np.zeros(5))
    with pytest.raises(ValueError):
        fit_logistic(np.zeros((5, 1)), [0, 1, 2, 0, 1])


@given(n=st.integers(10, 500), k=st.integers(2, 10), block=st.sampled_from([0, 1, 7, 50]))
def test_kfold_partitions(n, k, block):
    tests = [te for _, te in kfold_indices(n, k, block, seed=3)]
    assert len(tests) == k
    allidx = np.sort(np.concatenate(tests))
    assert allidx.tolist() == list(range(n))
    for tr, te in kfold_indices(n, k, block, seed=3):
        assert len(np.intersect1d(tr, te)) == 0 and len(tr) + len(te) == n


def test_metrics_basics():
    assert f1_score([1, 0, 1], [1, 0, 1]) == 1.0
    assert f1_score([1, 1, 0, 0], [1, 0, 1, 0]) == 0.5
    assert rmse([1, 2], [1, 2]) == 0.0
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))


def test_jain():
    assert jain_index([3, 3, 3]) == 1.0
    assert jain_index([1, 0]) == 0.5  # (1)^2 / (2 * 1)
    with pytest.raises(ValueError):
        jain_index([0, 0])
    with pytest.raises(ValueError):
        jain_index([])


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1e9), min_size=1, max_size=20).filter(lambda v: sum(v) > 0),
       st.floats(1e-3, 1e3))
@example([1.6e-287], 1.0)  # squares underflow unless values are normalised first
def test_jain_range_and_scaling(v, c):
    j = jain_index(v)
    assert 1 / len(v) - 1e-12 <= j <= 1 + 1e-12
    assert jain_index(np.asarray(v) * c) == pytest.approx(j)
