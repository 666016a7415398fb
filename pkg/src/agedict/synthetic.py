"""Planted-model generator used as ground truth by the training tests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import List, Tuple

import numpy as np

from .coupled import PairBatch
from .errors import InputError
from .model import AgingDictionary, HyperParams, ModelBundle, Projection


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and noise of a planted dataset.

    ``layer_scale`` is the expected l2 norm of a personalized layer and
    ``sigma`` the per-entry standard deviation of the additive noise.
    ``pixel_offset`` only matters when the data are exported as images.
    """

    f: int = 64
    m: int = 12
    k: int = 8
    G: int = 3
    sparsity: int = 3
    n: int = 200
    layer_scale: float = 0.1
    sigma: float = 0.01
    seed: int = 0
    pixel_offset: float = 0.5

    def __post_init__(self):
        for name in ("f", "m", "k", "G", "sparsity", "n"):
            if getattr(self, name) <= 0:
                raise InputError(f"synthetic spec: {name} must be positive")
        if self.G < 2:
            raise InputError("synthetic spec: G must be at least 2")
        if self.sparsity > self.k:
            raise InputError(f"synthetic spec: sparsity {self.sparsity} exceeds k={self.k}")
        if self.m > self.f:
            raise InputError(f"synthetic spec: m={self.m} exceeds f={self.f}")
        if self.layer_scale < 0 or self.sigma < 0:
            raise InputError("synthetic spec: layer_scale and sigma must be nonnegative")

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InputError(f"synthetic spec is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise InputError("synthetic spec must be a JSON object")
        known = {fl.name for fl in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise InputError(f"unknown synthetic spec fields: {sorted(unknown)}")
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True, eq=False)
class PlantedTruth:
    model: ModelBundle
    codes: List[np.ndarray]
    layers: List[np.ndarray]


def _sparse_codes(rng, k, s, n):
    A = np.zeros((k, n))
    for i in range(n):
        support = rng.choice(k, size=s, replace=False)
        A[support, i] = rng.standard_normal(s)
    return A


def sample_pairs(model: ModelBundle, g: int, n: int, sparsity: int, layer_scale: float,
                 sigma: float, rng) -> Tuple[PairBatch, np.ndarray, np.ndarray]:
    """Draw ``n`` pairs for groups (g, g+1) from a planted model."""
    f, k = model.f, model.params.k
    A = _sparse_codes(rng, k, sparsity, n)
    P = layer_scale * rng.standard_normal((f, n)) / np.sqrt(f)
    Bg = model.projection(g).basis @ model.dictionary(g).atoms
    Bg1 = model.projection(g + 1).basis @ model.dictionary(g + 1).atoms
    X = Bg @ A + P + sigma * rng.standard_normal((f, n))
    Y = Bg1 @ A + P + sigma * rng.standard_normal((f, n))
    ids = tuple(f"g{g}_{i:05d}" for i in range(n))
    return PairBatch(g, X, Y, ids), A, P


def planted_model(spec: SyntheticSpec, rng) -> ModelBundle:
    projections, dictionaries = [], []
    for g in range(1, spec.G + 1):
        Q, R = np.linalg.qr(rng.standard_normal((spec.f, spec.m)))
        Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
        D = rng.standard_normal((spec.m, spec.k))
        D /= np.linalg.norm(D, axis=0)
        projections.append(Projection(g, Q))
        dictionaries.append(AgingDictionary(g, D))
    params = HyperParams(k=spec.k, m=spec.m, G=spec.G)
    return ModelBundle(params, projections, dictionaries, provenance=f"planted seed={spec.seed}")


def generate_synthetic(spec: SyntheticSpec):
    """Planted dataset: (batches, PlantedTruth).

    Ground-truth bases are QR factors of seeded Gaussian matrices, atoms are
    unit-norm Gaussian columns, codes have ``sparsity`` Gaussian entries on a
    uniformly drawn support, and x = H^g D^g a + p + noise,
    y = H^{g+1} D^{g+1} a + p + noise.
    """
    rng = np.random.default_rng(spec.seed)
    model = planted_model(spec, rng)
    batches, codes, layers = [], [], []
    for g in range(1, spec.G):
        b, A, P = sample_pairs(model, g, spec.n, spec.sparsity, spec.layer_scale, spec.sigma, rng)
        batches.append(b)
        codes.append(A)
        layers.append(P)
    return batches, PlantedTruth(model, codes, layers)


def held_out_pairs(truth: PlantedTruth, spec: SyntheticSpec, n: int, seed: int) -> List[PairBatch]:
    """Fresh pairs from the same planted model for transfer evaluation."""
    rng = np.random.default_rng(seed)
    return [
        sample_pairs(truth.model, g, n, spec.sparsity, spec.layer_scale, spec.sigma, rng)[0]
        for g in range(1, truth.model.G)
    ]
