import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agedict.errors import ConvergenceError, DimensionError, InputError
from agedict.model import HyperParams, Projection, AgingDictionary
from agedict.sparse_code import (
    LassoProblem, coding_objective, eliminated_code, enet_gram, enet_gram_batch, infer_code_and_layer,
    joint_code, kkt_residual, personalized_layer, solve_lasso,
)

from conftest import orthonormal, unit_atoms
from oracles import brute_force_enet


def test_matches_brute_force_small(rng):
    for _ in range(30):
        m, k = 5, 4
        D = rng.standard_normal((m, k))
        w = rng.standard_normal(m)
        prob = LassoProblem(D, w, 0.5, 0.01)
        a = solve_lasso(prob)
        _, best = brute_force_enet(D, w, 0.5, 0.01)
        assert prob.objective(a) == pytest.approx(best, abs=1e-9)
        assert kkt_residual(prob, a) <= 1e-8


def test_zero_code_when_penalty_dominates(rng):
    D = rng.standard_normal((6, 3))
    w = rng.standard_normal(6)
    big = 2.0 * np.max(np.abs(D.T @ w)) + 1.0
    a = solve_lasso(LassoProblem(D, w, big))
    assert not np.any(a)


def test_orthonormal_dictionary_soft_threshold(rng):
    # with D'D = I the minimizer is soft(D'w, l1/2) / (1 + l2)
    D = orthonormal(rng, 7, 4)
    w = rng.standard_normal(7)
    l1, l2 = 0.4, 0.2
    c = D.T @ w
    expect = np.sign(c) * np.maximum(np.abs(c) - l1 / 2, 0) / (1 + l2)
    a = solve_lasso(LassoProblem(D, w, l1, l2))
    np.testing.assert_allclose(a, expect, atol=1e-12)


def test_kkt_residual_detects_non_optimal(rng):
    D = rng.standard_normal((6, 3))
    w = rng.standard_normal(6)
    prob = LassoProblem(D, w, 0.1)
    a = solve_lasso(prob)
    assert kkt_residual(prob, a + 0.1) > 1e-3


def test_batch_matches_single(rng):
    D = rng.standard_normal((6, 5))
    W = rng.standard_normal((6, 7))
    gram = D.T @ D
    A = enet_gram_batch(gram, D.T @ W, 0.2, 0.01)
    for i in range(W.shape[1]):
        np.testing.assert_allclose(A[:, i], enet_gram(gram, D.T @ W[:, i], 0.2, 0.01), atol=1e-10)


def test_warm_start_same_answer(rng):
    D = rng.standard_normal((6, 5))
    w = rng.standard_normal(6)
    gram, corr = D.T @ D, D.T @ w
    cold = enet_gram(gram, corr, 0.3, 0.01)
    warm = enet_gram(gram, corr, 0.3, 0.01, a0=rng.standard_normal(5))
    np.testing.assert_allclose(cold, warm, atol=1e-9)


def test_convergence_error_carries_best(rng):
    D = rng.standard_normal((6, 5))
    w = rng.standard_normal(6)
    with pytest.raises(ConvergenceError) as exc:
        enet_gram(D.T @ D, D.T @ w, 1e-3, 0.0, tol=1e-300, max_sweeps=1)
    assert exc.value.best is not None and exc.value.best.shape == (5,)


def test_rejects_bad_input(rng):
    with pytest.raises(DimensionError):
        LassoProblem(np.ones((3, 2)), np.ones(4), 0.1)
    with pytest.raises(InputError):
        LassoProblem(np.ones((3, 2)), np.array([1.0, np.nan, 0.0]), 0.1)
    with pytest.raises(InputError):
        LassoProblem(np.ones((3, 2)), np.ones(3), -0.1)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), l1=st.floats(1e-3, 2.0), l2=st.floats(0.0, 0.5))
def test_kkt_holds(seed, l1, l2):
    r = np.random.default_rng(seed)
    k = int(r.integers(1, 7))
    D = r.standard_normal((int(r.integers(k, 9)), k))
    w = r.standard_normal(D.shape[0])
    prob = LassoProblem(D, w, l1, l2)
    a = solve_lasso(prob)
    assert kkt_residual(prob, a) <= 1e-8
    # no other point does better
    for _ in range(5):
        assert prob.objective(a) <= prob.objective(a + 1e-3 * r.standard_normal(k)) + 1e-12


def test_layer_is_stationary(small_model_parts, rng):
    H, _, D, _, params = small_model_parts
    x = rng.standard_normal(H.f)
    a = rng.standard_normal(D.k)
    q = personalized_layer(x, H, D, a, params.gamma)
    grad = -2 * (x - H.basis @ D.atoms @ a - q) + 2 * params.gamma * q
    assert np.max(np.abs(grad)) <= 1e-12


def test_layer_rejects(small_model_parts, rng):
    H, _, D, _, params = small_model_parts
    with pytest.raises(InputError):
        personalized_layer(np.zeros(H.f), H, D, np.zeros(D.k), 0.0)
    with pytest.raises(DimensionError):
        personalized_layer(np.zeros(H.f + 1), H, D, np.zeros(D.k), 0.1)


def test_alternation_monotone_from_zero(small_model_parts, rng):
    H, _, D, _, params = small_model_parts
    params = params.replace(lambda1=0.01, inner_tol=1e-12, inner_max_iter=200)
    x = rng.standard_normal(H.f)
    trace = []
    infer_code_and_layer(x, H, D, params, init="zero", trace=trace)
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))


def test_eliminated_start_is_fixed_point(small_model_parts, rng):
    H, _, D, _, params = small_model_parts
    x = rng.standard_normal(H.f)
    pair = infer_code_and_layer(x, H, D, params)
    a0 = eliminated_code(H.basis.T @ x, D, params)
    np.testing.assert_allclose(pair.code, a0, atol=1e-9)
    # both halves are optimal at the returned point
    prob = LassoProblem(D.atoms, H.basis.T @ (x - pair.layer), params.lambda1, params.lambda2)
    assert kkt_residual(prob, pair.code) <= 1e-7
    np.testing.assert_allclose(pair.layer, personalized_layer(x, H, D, pair.code, params.gamma), atol=1e-14)


def test_zero_init_reaches_same_point(small_model_parts, rng):
    H, _, D, _, params = small_model_parts
    params = params.replace(inner_tol=1e-14, inner_max_iter=5000)
    x = rng.standard_normal(H.f)
    a = infer_code_and_layer(x, H, D, params).code
    b = infer_code_and_layer(x, H, D, params, init="zero").code
    np.testing.assert_allclose(a, b, atol=1e-5)


def test_joint_code_stacked_problem(small_model_parts, rng):
    H, H1, D, D1, params = small_model_parts
    x, y, p = rng.standard_normal(H.f), rng.standard_normal(H.f), 0.1 * rng.standard_normal(H.f)
    a = joint_code(x, y, p, H, H1, D, D1, params)
    stacked = LassoProblem(np.vstack([D.atoms, D1.atoms]),
                           np.concatenate([H.basis.T @ (x - p), H1.basis.T @ (y - p)]),
                           params.lambda1, params.lambda2)
    _, best = brute_force_enet(stacked.dictionary, stacked.target, params.lambda1, params.lambda2)
    assert stacked.objective(a) == pytest.approx(best, abs=1e-9)


def test_coding_objective_value(small_model_parts):
    H, _, D, _, params = small_model_parts
    x = np.ones(H.f)
    a = np.zeros(D.k)
    a[0] = 2.0
    p = np.full(H.f, 0.5)
    r = x - H.basis @ D.atoms @ a - p
    expect = r @ r + params.gamma * p @ p + params.lambda1 * 2.0 + params.lambda2 * 4.0
    assert coding_objective(x, H, D, a, p, params) == pytest.approx(expect, rel=1e-14)
