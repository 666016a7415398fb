import numpy as np
import pytest

from agedict.model import AgingDictionary, HyperParams, Projection


def orthonormal(rng, f, m):
    Q, R = np.linalg.qr(rng.standard_normal((f, m)))
    return Q * np.sign(np.diag(R))


def unit_atoms(rng, m, k, shrink=1.0):
    D = rng.standard_normal((m, k))
    return D / (np.linalg.norm(D, axis=0) * shrink)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_model_parts(rng):
    f, m, k = 10, 6, 4
    H = Projection(1, orthonormal(rng, f, m))
    H1 = Projection(2, orthonormal(rng, f, m))
    D = AgingDictionary(1, unit_atoms(rng, m, k))
    D1 = AgingDictionary(2, unit_atoms(rng, m, k))
    params = HyperParams(k=k, m=m, G=2, lambda1=0.1)
    return H, H1, D, D1, params
