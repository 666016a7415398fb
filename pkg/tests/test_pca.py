import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agedict.errors import DimensionError, InputError
from agedict.pca import build_projection, lift, project


def test_matches_eigendecomposition(rng):
    # independent oracle: eigenvectors of the scatter matrix
    M = rng.standard_normal((12, 30)) * np.linspace(3, 0.1, 12)[:, None]
    H = build_projection(M, 5).basis
    vals, vecs = np.linalg.eigh(M @ M.T)
    top = vecs[:, np.argsort(vals)[::-1][:5]]
    for j in range(5):
        assert abs(abs(H[:, j] @ top[:, j]) - 1.0) < 1e-10


def test_orthonormal_and_sign_convention(rng):
    H = build_projection(rng.standard_normal((9, 20)), 4).basis
    np.testing.assert_allclose(H.T @ H, np.eye(4), atol=1e-12)
    idx = np.argmax(np.abs(H), axis=0)
    assert np.all(H[idx, np.arange(4)] > 0)


def test_deterministic(rng):
    M = rng.standard_normal((8, 15))
    assert np.array_equal(build_projection(M, 3).basis, build_projection(M.copy(), 3).basis)


def test_sign_flip_invariant(rng):
    M = rng.standard_normal((8, 15))
    np.testing.assert_allclose(build_projection(M, 3).basis, build_projection(-M, 3).basis, atol=1e-12)


def test_dimension_errors(rng):
    with pytest.raises(DimensionError):
        build_projection(rng.standard_normal((5, 3)), 4)
    with pytest.raises(DimensionError):
        build_projection(rng.standard_normal((5, 8)), 0)
    low_rank = rng.standard_normal((6, 2)) @ rng.standard_normal((2, 10))
    with pytest.raises(DimensionError):
        build_projection(low_rank, 3)
    with pytest.raises(InputError):
        build_projection(np.full((3, 3), np.inf), 1)


def test_project_lift(rng):
    P = build_projection(rng.standard_normal((7, 12)), 3)
    z = rng.standard_normal(3)
    np.testing.assert_allclose(project(P, lift(P, z)), z, atol=1e-12)
    with pytest.raises(DimensionError):
        project(P, np.ones(6))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), f=st.integers(2, 12), s=st.integers(2, 12))
def test_projection_captures_most_energy(seed, f, s):
    r = np.random.default_rng(seed)
    M = r.standard_normal((f, s))
    m = min(f, s) // 2 + 1
    H = build_projection(M, m).basis
    captured = np.linalg.norm(H.T @ M) ** 2
    # Eckart-Young: no other m-dim orthonormal basis captures more
    Q = np.linalg.qr(r.standard_normal((f, m)))[0]
    assert captured >= np.linalg.norm(Q.T @ M) ** 2 - 1e-9
    S = np.linalg.svd(M, compute_uv=False)
    assert captured == pytest.approx(np.sum(S[:m] ** 2), rel=1e-10)
