import math

import numpy as np
import pytest

from synthdetect.errors import ArgumentError, TrainingError
from synthdetect.oracles import projected_gradient_dual
from synthdetect.svm import (SvmConfig, SvmModel, decision_score, decision_scores, dual_objective, full_alphas,
                             kernel_matrix, predict, predict_batch, rbf_kernel, scale_gamma, smo_train)

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def two_moons(n=40, noise=0.1, seed=0):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, math.pi, size=n)
    half = n // 2
    x = np.empty((n, 2))
    x[:half] = np.c_[np.cos(t[:half]), np.sin(t[:half])]
    x[half:] = np.c_[1 - np.cos(t[half:]), 0.5 - np.sin(t[half:])]
    y = np.r_[np.ones(half), -np.ones(n - half)]
    return x + rng.normal(scale=noise, size=x.shape), y


def random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 25))
    X = rng.normal(size=(n, int(rng.integers(1, 5))))
    y = np.where(X[:, 0] + 0.7 * rng.normal(size=n) > 0, 1.0, -1.0)
    y[:2] = (1.0, -1.0)
    C = float(rng.choice([0.1, 1.0, 10.0]))
    gamma = float(rng.uniform(0.2, 2.0))
    return X, y, C, gamma


def kkt_violation(model, X, y):
    alpha = full_alphas(model, X)
    margin = y * decision_scores(model, X)
    C = model.C
    worst = 0.0
    for a, m in zip(alpha, margin):
        if a <= 0:
            worst = max(worst, 1 - m)
        elif a >= C:
            worst = max(worst, m - 1)
        else:
            worst = max(worst, abs(m - 1))
    return worst, alpha


def test_rbf_examples():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 0.3) == 1.0
    assert rbf_kernel([0, 0], [1, 1], 0.5) == pytest.approx(math.exp(-1), abs=1e-15)
    vals = [rbf_kernel([0.0], [d], 1.0) for d in (0.5, 1, 2, 4, 8)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    with pytest.raises(ArgumentError):
        rbf_kernel([0, 0], [0, 0, 0], 1.0)


def test_kernel_matrix_is_psd():
    for seed in range(5):
        X = np.random.default_rng(seed).normal(size=(15, 3))
        K = kernel_matrix(X, X, 0.7)
        assert np.array_equal(K, K.T) or np.allclose(K, K.T, atol=1e-15)
        assert np.linalg.eigvalsh(K).min() >= -1e-8
        assert K[2, 5] == pytest.approx(rbf_kernel(X[2], X[5], 0.7), abs=1e-14)


def test_two_point_problem():
    X = np.array([[0.0, 0.0], [2.0, 0.0]])
    y = np.array([1.0, -1.0])
    m = smo_train(X, y, SvmConfig(C=1.0, gamma=0.5))
    assert len(m.support_vectors) == 2
    assert decision_score(m, [1.0, 0.0]) == pytest.approx(0.0, abs=1e-12)
    assert predict_batch(m, X).tolist() == [1, -1]


def test_xor_is_fit_exactly():
    m = smo_train(XOR_X, XOR_Y, SvmConfig(C=10.0, gamma=1.0, tol=1e-6))
    assert predict_batch(m, XOR_X).tolist() == XOR_Y.tolist()
    _, ref = projected_gradient_dual(kernel_matrix(XOR_X, XOR_X, 1.0), XOR_Y, 10.0)
    assert abs(m.objective - ref) < 1e-4


def test_two_moons_accuracy_and_oracle():
    X, y = two_moons()
    m = smo_train(X, y, SvmConfig(C=1.0, gamma=1.0))
    assert (predict_batch(m, X) == y).mean() >= 0.95
    _, ref = projected_gradient_dual(kernel_matrix(X, X, 1.0), y, 1.0)
    assert abs(m.objective - ref) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_kkt_and_dual_oracle_on_random_instances(seed):
    X, y, C, gamma = random_instance(seed)
    m = smo_train(X, y, SvmConfig(C=C, gamma=gamma, tol=1e-3))
    assert m.converged
    worst, alpha = kkt_violation(m, X, y)
    assert worst <= 1e-3
    assert abs(float(alpha @ y)) < 1e-6
    assert np.all((alpha >= 0) & (alpha <= C))
    assert m.objective == pytest.approx(dual_objective(alpha, X, y, gamma), abs=1e-9)
    _, ref = projected_gradient_dual(kernel_matrix(X, X, gamma), y, C)
    assert abs(m.objective - ref) < 1e-4


def test_doubling_c_on_separable_set_keeps_accuracy():
    X, y = two_moons(noise=0.05, seed=3)
    acc = [(predict_batch(smo_train(X, y, SvmConfig(C=c, gamma=2.0)), X) == y).mean() for c in (1, 2, 4, 8)]
    assert all(b >= a for a, b in zip(acc, acc[1:]))


def test_training_is_deterministic():
    X, y = two_moons(seed=5)
    a = smo_train(X, y, SvmConfig(seed=3))
    b = smo_train(X, y, SvmConfig(seed=3))
    assert np.array_equal(a.dual_coefs, b.dual_coefs) and a.bias == b.bias


def test_decision_score_examples():
    sv = np.array([[0.5, -1.0]])
    m = SvmModel(sv, np.array([1.0]), 0.0, gamma=0.8)
    assert decision_score(m, sv[0]) == 1.0
    m.bias = -0.5
    assert decision_score(m, sv[0]) == 0.5
    rng = np.random.default_rng(0)
    big = SvmModel(rng.normal(size=(5, 3)), rng.normal(size=5), 0.3, gamma=0.4)
    x = rng.normal(size=3)
    brute = sum(c * math.exp(-0.4 * sum((a - b) ** 2 for a, b in zip(s, x)))
                for s, c in zip(big.support_vectors, big.dual_coefs)) + 0.3
    assert decision_score(big, x) == pytest.approx(brute, abs=1e-12)
    with pytest.raises(ArgumentError):
        decision_score(big, np.zeros(2))


def test_predict_sign_and_tie():
    sv = np.array([[0.0]])
    assert predict(SvmModel(sv, np.array([1.0]), 0.0, 1.0), [0.0]) == 1
    assert predict(SvmModel(sv, np.array([-0.3]), 0.0, 1.0), [0.0]) == -1
    assert predict(SvmModel(sv, np.array([0.0]), 0.0, 1.0), [0.0]) == 1


def test_input_errors():
    with pytest.raises(TrainingError):
        smo_train(XOR_X, np.ones(4))
    with pytest.raises(ArgumentError):
        smo_train(XOR_X, np.array([0.0, 1.0, 0.0, 1.0]))
    with pytest.raises(ArgumentError):
        smo_train(np.array([[np.nan], [1.0]]), np.array([1.0, -1.0]))
    with pytest.raises(ArgumentError):
        SvmConfig(C=0.0)


def test_non_convergence_is_flagged():
    X, y = two_moons(noise=0.3, seed=1)
    with pytest.warns(RuntimeWarning):
        m = smo_train(X, y, SvmConfig(C=100.0, gamma=5.0, tol=1e-9, max_passes=1))
    assert not m.converged and m.n_iter == 40


def test_scale_gamma():
    X = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert scale_gamma(X) == 1 / (2 * 1.0)
    assert scale_gamma(np.ones((3, 2))) == 1.0
