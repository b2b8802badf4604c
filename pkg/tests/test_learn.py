import json

import numpy as np
import pytest

from oracles import dual_value, kkt_max_violation, qp_dual
from qkmar.errors import ConfigError, DataError
from qkmar.kernels import KernelSpec, cross_gram, gram
from qkmar.learn import (
    ConvergenceWarning,
    KrcModel,
    SvcModel,
    dual_objective,
    krc_decision,
    model_from_dict,
    svc_decision,
    train_krc,
    train_svc,
)


def two_point():
    K = gram(KernelSpec.linear(), [[-1.0], [1.0]])
    return K, np.array([-1.0, 1.0])


def random_problem(seed, m=10, variant="rbf"):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(m, 3))
    y = np.where(rng.random(m) < 0.5, -1.0, 1.0)
    y[:2] = [1, -1]
    spec = KernelSpec.linear() if variant == "linear" else KernelSpec.rbf(0.5)
    return gram(spec, X).matrix, y, X, spec


def test_two_point_closed_form():
    K, y = two_point()
    model = train_svc(K, y, C=10)
    np.testing.assert_allclose(model.alphas, [0.5, 0.5], atol=1e-9)
    assert model.bias == pytest.approx(0.0, abs=1e-9)
    # brute force over the feasible segment alpha1 = alpha2 = a
    grid = np.linspace(0, 10, 100001)
    best = grid[np.argmax([dual_value(np.array([a, a]), y, K.matrix) for a in grid])]
    assert best == pytest.approx(0.5, abs=1e-4)
    scores, pred = svc_decision(model, [[-0.2, 0.2]])
    assert scores[0] == pytest.approx(0.2, abs=1e-9) and pred[0] == 1


def test_separable_large_c_fits_training_set():
    rng = np.random.default_rng(0)
    X = np.r_[rng.normal(size=(15, 2)) + 3, rng.normal(size=(15, 2)) - 3]
    y = np.r_[np.ones(15), -np.ones(15)]
    K = gram(KernelSpec.linear(), X)
    model = train_svc(K, y, C=1e4)
    _, pred = svc_decision(model, K.matrix)
    assert np.all(pred == y)
    _, pred = svc_decision(model, K.matrix[3:4])
    assert pred[0] == y[3]


@pytest.mark.parametrize("seed", range(12))
def test_svc_matches_qp_oracle(seed):
    K, y, _, _ = random_problem(seed, m=4 + seed % 9, variant=("linear", "rbf")[seed % 2])
    C = (0.1, 1.0, 10.0)[seed % 3]
    model = train_svc(K, y, C)
    ref = dual_value(qp_dual(K, y, C), y, K)
    assert abs(dual_objective(model.alphas, y, K) - ref) <= 1e-6
    assert kkt_max_violation(model.alphas, model.bias, y, K, C) <= 1e-3
    assert np.all(model.alphas >= 0) and np.all(model.alphas <= C)
    assert abs(model.alphas @ y) <= 1e-8


def test_bias_only_model():
    model = SvcModel(alphas=np.zeros(3), bias=0.3, labels=np.array([1.0, -1, 1]), C=1.0)
    scores, pred = svc_decision(model, np.random.default_rng(0).normal(size=(4, 3)))
    np.testing.assert_allclose(scores, 0.3)
    assert np.all(pred == 1)


def test_svc_label_symmetry():
    K, y, X, spec = random_problem(3, m=12)
    a, b = train_svc(K, y, 1.0), train_svc(K, -y, 1.0)
    Q = cross_gram(spec, np.random.default_rng(1).normal(size=(6, 3)), X)
    np.testing.assert_allclose(svc_decision(a, Q)[0], -svc_decision(b, Q)[0], atol=1e-8)


def test_svc_errors():
    K, y = two_point()
    with pytest.raises(DataError):
        train_svc(K, [1.0, 1.0], 1.0)
    with pytest.raises(DataError):
        train_svc(K, [0.0, 1.0], 1.0)
    with pytest.raises(ConfigError):
        train_svc(K, y, 0.0)
    model = train_svc(K, y, 1.0)
    with pytest.raises(ConfigError):
        svc_decision(model, np.zeros((1, 3)))


def test_svc_iteration_cap_reports_nonconvergence(monkeypatch):
    import qkmar.learn as learn

    K, y, _, _ = random_problem(5, m=40, variant="linear")
    monkeypatch.setattr(learn._Smo, "polish", lambda self, max_iter: False)
    with pytest.warns(ConvergenceWarning):
        model = train_svc(K, y, 1e4, max_passes=1)
    assert not model.converged
    # the returned iterate is still feasible
    assert np.all(model.alphas >= 0) and np.all(model.alphas <= 1e4)
    assert abs(model.alphas @ y) <= 1e-8


def test_krc_examples():
    m = train_krc([[1.0]], [1.0], 1.0)
    np.testing.assert_array_equal(m.alphas, [0.5])
    m = train_krc(np.eye(3), [1.0, -1.0, 1.0], 0.1)
    np.testing.assert_array_equal(m.alphas, np.array([1, -1, 1]) / 1.1)
    m = train_krc([[1.0]], [1.0], 1e-6)
    _, pred = krc_decision(m, [[1.0]])
    assert pred[0] == 1
    m = KrcModel(alphas=np.array([0.5, -0.5]), lam=1.0)
    scores, pred = krc_decision(m, [[1.0, 1.0]])
    assert scores[0] == 0 and pred[0] == 1


def test_krc_residual_and_determinism():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 4))
    K = gram(KernelSpec.rbf(0.4), X).matrix
    y = np.where(rng.random(20) < 0.5, -1.0, 1.0)
    for lam in (1e-4, 1e-2, 1.0, 1e4):
        m = train_krc(K, y, lam)
        assert np.max(np.abs((K + lam * np.eye(20)) @ m.alphas - y)) <= 1e-8 * (1 + 1)
        np.testing.assert_array_equal(train_krc(K, y, lam).alphas, m.alphas)
        np.testing.assert_array_equal(train_krc(K, -y, lam).alphas, -m.alphas)
    Q = rng.normal(size=(5, 20))
    scores, _ = krc_decision(m, Q)
    np.testing.assert_allclose(scores, [sum(q[i] * m.alphas[i] for i in range(20)) for q in Q], atol=1e-12)


def test_krc_errors():
    with pytest.raises(ConfigError):
        train_krc(np.eye(2), [1.0, -1.0], 0.0)
    with pytest.raises(ConfigError):
        train_krc(np.eye(2), [1.0, -1.0, 1.0], 1.0)


def test_model_json_round_trip():
    K, y = two_point()
    svc = train_svc(K, y, 10.0)
    back = model_from_dict(json.loads(json.dumps(svc.to_dict())))
    assert isinstance(back, SvcModel)
    np.testing.assert_array_equal(back.alphas, svc.alphas)
    assert back.kernel == KernelSpec.linear() and back.bias == svc.bias
    krc = train_krc(K, y, 0.5)
    back = model_from_dict(json.loads(json.dumps(krc.to_dict())))
    assert isinstance(back, KrcModel) and back.lam == 0.5
    np.testing.assert_array_equal(back.alphas, krc.alphas)
