import numpy as np
import pytest

from agedict.errors import InputError, IntegrityError
from agedict.model import AgingDictionary, CodedPair, HyperParams, ModelBundle, Projection, support_of

from conftest import orthonormal, unit_atoms


def test_defaults():
    p = HyperParams()
    assert (p.lambda1, p.lambda2, p.gamma, p.k, p.m, p.G) == (0.01, 0.001, 0.1, 80, 2000, 9)
    assert p.eta0 == 0.1 and p.eta_reset == "per-group"


@pytest.mark.parametrize("field,value", [
    ("lambda1", 0.0), ("lambda2", -1e-3), ("gamma", 0.0), ("k", 0), ("G", 1),
    ("eta0", 0.0), ("inner_tol", 0.0), ("support_eps", -1.0), ("eta_reset", "never"),
])
def test_hyperparams_reject(field, value):
    with pytest.raises(InputError):
        HyperParams(**{field: value})


def test_replace_keeps_validation():
    p = HyperParams().replace(k=8)
    assert p.k == 8
    with pytest.raises(InputError):
        p.replace(m=0)


def test_projection_orthonormality(rng):
    Projection(1, orthonormal(rng, 8, 3))
    bad = orthonormal(rng, 8, 3)
    bad[:, 0] *= 1.001
    with pytest.raises(IntegrityError):
        Projection(1, bad)


def test_atom_norm_bound(rng):
    D = unit_atoms(rng, 4, 5)
    AgingDictionary(2, D)
    AgingDictionary(2, D * 0.5)
    with pytest.raises(IntegrityError):
        AgingDictionary(2, D * (1 + 1e-9))


def test_arrays_are_frozen_copies(rng):
    D = unit_atoms(rng, 4, 3)
    d = AgingDictionary(1, D)
    D[0, 0] = 99.0
    assert d.atoms[0, 0] != 99.0
    with pytest.raises(ValueError):
        d.atoms[0, 0] = 0.0


def test_support():
    a = np.array([0.0, 1e-12, -0.3, 2.0])
    assert support_of(a, 1e-10) == (2, 3)
    pair = CodedPair(a, np.zeros(3), 1e-10)
    assert pair.support == (2, 3)


def test_bundle_dimensions(rng):
    params = HyperParams(k=3, m=4, G=2)
    H = [Projection(g, orthonormal(rng, 9, 4)) for g in (1, 2)]
    D = [AgingDictionary(g, unit_atoms(rng, 4, 3)) for g in (1, 2)]
    model = ModelBundle(params, H, D)
    assert (model.f, model.G) == (9, 2)
    assert model.dictionary(2) is D[1]
    with pytest.raises(InputError):
        ModelBundle(params, H[:1], D[:1])
    with pytest.raises(InputError):
        ModelBundle(params.replace(k=4), H, D)
