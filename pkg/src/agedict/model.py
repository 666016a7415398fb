"""Domain types: hyperparameters, projections, dictionaries and the model bundle.

All array-carrying types copy their inputs and freeze them (``writeable=False``)
so instances can be shared freely between readers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import DimensionError, InputError, IntegrityError

ATOM_NORM_SLACK = 1e-12
ORTHO_TOL = 1e-10
ETA_RESET_MODES = ("per-group", "global")


def _frozen(arr, ndim, name):
    out = np.array(arr, dtype=np.float64, order="F", copy=True)
    if out.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InputError(f"{name} contains non-finite values")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class HyperParams:
    """Training and inference hyperparameters.

    Defaults are lambda1=0.01, lambda2=0.001, gamma=0.1, k=80, m=2000 and
    G=9.  ``outer_tol`` and ``max_epochs`` control the bi-level loop,
    ``inner_tol``/``inner_max_iter`` the (code, layer) alternation, and
    ``lasso_tol`` is the KKT tolerance of the coordinate-descent lasso solver.
    """

    lambda1: float = 0.01
    lambda2: float = 0.001
    gamma: float = 0.1
    k: int = 80
    m: int = 2000
    G: int = 9
    eta0: float = 0.1
    inner_tol: float = 1e-6
    inner_max_iter: int = 50
    support_eps: float = 1e-10
    outer_tol: float = 1e-5
    max_epochs: int = 100
    lasso_tol: float = 1e-8
    eta_reset: str = "per-group"

    def __post_init__(self):
        checks = [
            (self.lambda1 > 0, "lambda1 > 0"),
            (self.lambda2 >= 0, "lambda2 >= 0"),
            (self.gamma > 0, "gamma > 0"),
            (self.k > 0, "k > 0"),
            (self.m > 0, "m > 0"),
            (self.G >= 2, "G >= 2"),
            (self.eta0 > 0, "eta0 > 0"),
            (self.inner_tol > 0, "inner_tol > 0"),
            (self.inner_max_iter >= 1, "inner_max_iter >= 1"),
            (self.support_eps > 0, "support_eps > 0"),
            (self.outer_tol > 0, "outer_tol > 0"),
            (self.max_epochs >= 1, "max_epochs >= 1"),
            (self.lasso_tol > 0, "lasso_tol > 0"),
            (self.eta_reset in ETA_RESET_MODES, f"eta_reset in {ETA_RESET_MODES}"),
        ]
        for ok, what in checks:
            if not ok:
                raise InputError(f"invalid hyperparameters: need {what}")

    def replace(self, **changes) -> "HyperParams":
        return replace(self, **changes)


@dataclass(frozen=True, eq=False)
class Projection:
    """Column-orthonormal f x m basis of one age group."""

    group: int
    basis: np.ndarray

    def __post_init__(self):
        H = _frozen(self.basis, 2, "basis")
        object.__setattr__(self, "basis", H)
        gram = H.T @ H
        if np.max(np.abs(gram - np.eye(H.shape[1])), initial=0.0) > ORTHO_TOL:
            raise IntegrityError(f"projection {self.group} is not column-orthonormal")

    @property
    def f(self) -> int:
        return self.basis.shape[0]

    @property
    def m(self) -> int:
        return self.basis.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Projection):
            return NotImplemented
        return self.group == other.group and np.array_equal(self.basis, other.basis)


@dataclass(frozen=True, eq=False)
class AgingDictionary:
    """m x k dictionary whose atoms (columns) lie in the unit ball."""

    group: int
    atoms: np.ndarray

    def __post_init__(self):
        D = _frozen(self.atoms, 2, "atoms")
        object.__setattr__(self, "atoms", D)
        norms = np.linalg.norm(D, axis=0)
        bad = np.flatnonzero(norms > 1.0 + ATOM_NORM_SLACK)
        if bad.size:
            raise IntegrityError(
                f"dictionary {self.group}: atom {int(bad[0])} has norm {norms[bad[0]]:.6g} > 1"
            )

    @property
    def m(self) -> int:
        return self.atoms.shape[0]

    @property
    def k(self) -> int:
        return self.atoms.shape[1]

    def __eq__(self, other):
        if not isinstance(other, AgingDictionary):
            return NotImplemented
        return self.group == other.group and np.array_equal(self.atoms, other.atoms)


def support_of(code, eps: float) -> tuple:
    return tuple(int(j) for j in np.flatnonzero(np.abs(code) > eps))


@dataclass(frozen=True, eq=False)
class CodedPair:
    """Sparse code, personalized layer and the code's support."""

    code: np.ndarray
    layer: np.ndarray
    support_eps: float = 1e-10
    support: tuple = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "code", _frozen(self.code, 1, "code"))
        object.__setattr__(self, "layer", _frozen(self.layer, 1, "layer"))
        object.__setattr__(self, "support", support_of(self.code, self.support_eps))


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """Everything needed to synthesize: G projections, G dictionaries, params."""

    params: HyperParams
    projections: Sequence[Projection]
    dictionaries: Sequence[AgingDictionary]
    provenance: str = ""

    def __post_init__(self):
        object.__setattr__(self, "projections", tuple(self.projections))
        object.__setattr__(self, "dictionaries", tuple(self.dictionaries))
        G = self.params.G
        if len(self.projections) != G or len(self.dictionaries) != G:
            raise DimensionError(
                f"expected {G} projections and dictionaries, got "
                f"{len(self.projections)} and {len(self.dictionaries)}"
            )
        fs = {H.f for H in self.projections}
        ms = {H.m for H in self.projections} | {D.m for D in self.dictionaries}
        ks = {D.k for D in self.dictionaries}
        if len(fs) != 1 or len(ms) != 1 or len(ks) != 1:
            raise DimensionError("projections/dictionaries disagree on f, m or k")
        if ms != {self.params.m} or ks != {self.params.k}:
            raise DimensionError("params.m/params.k do not match the stored matrices")
        if self.params.m > self.f:
            raise DimensionError("m must not exceed f")

    @property
    def f(self) -> int:
        return self.projections[0].f

    @property
    def G(self) -> int:
        return self.params.G

    def projection(self, g: int) -> Projection:
        """Projection of 1-based group ``g``."""
        return self.projections[g - 1]

    def dictionary(self, g: int) -> AgingDictionary:
        return self.dictionaries[g - 1]

    def with_dictionaries(self, dictionaries, provenance=None) -> "ModelBundle":
        return ModelBundle(
            self.params,
            self.projections,
            dictionaries,
            self.provenance if provenance is None else provenance,
        )

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (
            self.params == other.params
            and self.projections == other.projections
            and self.dictionaries == other.dictionaries
            and self.provenance == other.provenance
        )
