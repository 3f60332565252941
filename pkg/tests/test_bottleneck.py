import numpy as np
import pytest

from aggrate.bottleneck import (ClfFeatureStream, ClfModel, build_clf_features, detect_transitions, train_clf)
from aggrate.meter import ObservedFrame
from aggrate.metrics import f1_score


def pairs(seqs, t0=0):
    return [ObservedFrame(t0 + 10 * i, np.array(seqs[j:j + 2])) for i, j in enumerate(range(0, len(seqs), 2))]


def test_window_arithmetic():
    holes = {110, 130, 150, 170, 190}
    seqs = [s for s in range(201) if s not in holes]
    X, idx = build_clf_features(pairs(seqs), n=5, p=100)
    assert X[-1].tolist() == [2, 2, 2, 2, 2, 0.05]
    assert idx[-1] == len(pairs(seqs)) - 1


def test_no_losses():
    X, _ = build_clf_features(pairs(list(range(400))), n=5, p=100)
    assert len(X) and np.all(X[:, -1] == 0)


def test_n1_two_features():
    X, _ = build_clf_features(pairs(list(range(300))), n=1, p=100)
    assert X.shape[1] == 2


def test_warm_up_needs_n_frames_and_p_packets():
    X, _ = build_clf_features(pairs(list(range(50))), n=5, p=100)
    assert len(X) == 0


def test_retransmission_fills_hole():
    # 10 is missing from the first frame but arrives right after; no loss charged
    fr = [ObservedFrame(0, np.arange(0, 10)), ObservedFrame(1, np.array([10]))]
    fr += [ObservedFrame(2 + i, np.arange(11 + 10 * i, 21 + 10 * i)) for i in range(20)]
    st = ClfFeatureStream(n=2, p=50)
    rows = [st.push(f) for f in fr]
    rows = [r for r in rows if r is not None]
    assert rows and all(r[-1] == 0 for r in rows)


def test_zero_weights_half_and_dimension():
    m = ClfModel(0.0, np.zeros(6))
    assert np.all(m.predict_proba(np.random.default_rng(0).normal(size=(4, 6))) == 0.5)
    with pytest.raises(ValueError):
        m.predict_proba(np.zeros((1, 5)))


def corner_cases(k=200, seed=0):
    rng = np.random.default_rng(seed)
    wlan = np.hstack((rng.uniform(30, 64, (k, 5)), rng.uniform(0, 0.005, (k, 1))))
    bh = np.hstack((rng.uniform(1, 8, (k, 5)), rng.uniform(0.1, 0.6, (k, 1))))
    return np.vstack((wlan, bh)), np.repeat([0, 1], k)


def test_separable_corner_cases():
    X, y = corner_cases()
    m = train_clf(X, y, folds=5)
    assert f1_score(y, m.predict(X)) == 1.0
    assert m.predict(np.array([[60, 60, 60, 60, 60, 0.0]]))[0] == 0
    assert m.predict(np.array([[2, 2, 2, 2, 2, 0.4]]))[0] == 1
    assert np.mean(m.cv_f1) == 1.0


def test_deterministic_fit():
    X, y = corner_cases(seed=3)
    a, b = train_clf(X, y, seed=4), train_clf(X, y, seed=4)
    assert a.bias == b.bias and np.array_equal(a.weights, b.weights)


def test_single_class_rejected():
    X, _ = corner_cases()
    with pytest.raises(ValueError):
        train_clf(X, np.zeros(len(X)))


def test_transitions_constant():
    assert detect_transitions(np.arange(50.0), np.ones(50, int)) == []


def test_single_flip_below_hysteresis():
    lab = np.zeros(30, int)
    lab[10] = 1
    assert detect_transitions(np.arange(30.0), lab, h=3) == []
    lab[10:12] = 1
    assert detect_transitions(np.arange(30.0), lab, h=3) == []


def test_transition_stamped_at_completion():
    lab = np.array([0] * 10 + [1] * 10 + [0] * 10)
    ev = detect_transitions(np.arange(30.0), lab, h=3)
    assert [(e.t, e.state) for e in ev] == [(12.0, 1), (22.0, 0)]


def test_grid_all_usable(clf_grid):
    assert min(clf_grid.values()) >= 0.9


@pytest.mark.xfail(strict=True, reason="on the simulated corpus a longer loss window keeps helping; "
                                        "F1 peaks at the largest p rather than around 100-200")
def test_best_loss_window_is_moderate(clf_grid):
    ps = sorted({p for _, p in clf_grid})
    mean_f1 = [np.mean([v for (n, p), v in clf_grid.items() if p == q]) for q in ps]
    assert ps[int(np.argmax(mean_f1))] in (100, 200)
