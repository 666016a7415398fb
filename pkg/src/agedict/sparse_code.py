"""Inner problems: elastic-net codes and the personalized layer.

Everything that touches the dictionary runs in the m-dimensional reduced
space.  For a column-orthonormal H,

    ||u - H D a||^2 = ||H^T u - D a||^2 + ||(I - H H^T) u||^2,

and the second term does not depend on ``a``, so minimizers agree.  The
personalized layer stays f-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._cd import enet_batch, enet_column, kkt_gram
from .errors import ConvergenceError, DimensionError, InputError
from .model import AgingDictionary, CodedPair, HyperParams, Projection

DEFAULT_TOL = 1e-8
MAX_SWEEPS = 20000


@dataclass(frozen=True)
class LassoProblem:
    """min_a ||target - D a||^2 + lambda1 |a|_1 + lambda2 |a|^2 in reduced space."""

    dictionary: np.ndarray
    target: np.ndarray
    lambda1: float
    lambda2: float = 0.0

    def __post_init__(self):
        D = np.ascontiguousarray(self.dictionary, dtype=np.float64)
        w = np.ascontiguousarray(self.target, dtype=np.float64)
        if D.ndim != 2 or w.ndim != 1 or D.shape[0] != w.shape[0]:
            raise DimensionError(f"dictionary {D.shape} incompatible with target {w.shape}")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(w))):
            raise InputError("lasso problem has non-finite entries")
        if not (np.isfinite(self.lambda1) and np.isfinite(self.lambda2)) or self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("lasso weights must be finite and nonnegative")
        object.__setattr__(self, "dictionary", D)
        object.__setattr__(self, "target", w)

    def gram(self):
        D = self.dictionary
        return np.ascontiguousarray(D.T @ D), D.T @ self.target

    def objective(self, a) -> float:
        r = self.target - self.dictionary @ a
        return float(r @ r + self.lambda1 * np.abs(a).sum() + self.lambda2 * (a @ a))


def enet_gram(gram, corr, lambda1, lambda2, tol=DEFAULT_TOL, a0=None, max_sweeps=MAX_SWEEPS):
    """Minimize a'Ga - 2c'a + lambda1|a|_1 + lambda2|a|^2 by coordinate descent.

    The coordinate-descent iterate is polished by an exact solve on its
    support, which brings the stationarity residual to rounding level.
    Raises ConvergenceError (with ``best``) if the KKT residual stays above
    ``tol``.
    """
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    corr = np.ascontiguousarray(corr, dtype=np.float64)
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(corr))):
        raise InputError("non-finite Gram system")
    k = corr.shape[0]
    a = np.zeros(k) if a0 is None else np.array(a0, dtype=np.float64, copy=True)
    kkt = enet_column(gram, corr, float(lambda1), float(lambda2), a, float(tol), int(max_sweeps))
    if kkt > tol:
        raise ConvergenceError(f"lasso KKT residual {kkt:.3g} > tol {tol:.3g}", best=a, residual=kkt)
    return a


def enet_gram_batch(gram, corr, lambda1, lambda2, tol=DEFAULT_TOL, A0=None, max_sweeps=MAX_SWEEPS):
    """``enet_gram`` applied to every column of the k x n matrix ``corr``."""
    gram = np.ascontiguousarray(gram, dtype=np.float64)
    corr = np.asarray(corr, dtype=np.float64)
    if not (np.all(np.isfinite(gram)) and np.all(np.isfinite(corr))):
        raise InputError("non-finite Gram system")
    A = np.zeros(corr.shape) if A0 is None else np.array(A0, dtype=np.float64, copy=True)
    kkt = enet_batch(gram, corr, float(lambda1), float(lambda2), A, float(tol), int(max_sweeps))
    worst = int(np.argmax(kkt)) if kkt.size else 0
    if kkt.size and kkt[worst] > tol:
        raise ConvergenceError(
            f"lasso KKT residual {kkt[worst]:.3g} > tol {tol:.3g} (column {worst})", best=A, residual=kkt[worst]
        )
    return A


def solve_lasso(problem: LassoProblem, tol: float = DEFAULT_TOL, a0=None) -> np.ndarray:
    """Elastic-net code for ``problem`` with KKT residual at most ``tol``."""
    if tol <= 0:
        raise InputError("tol must be positive")
    gram, corr = problem.gram()
    return enet_gram(gram, corr, problem.lambda1, problem.lambda2, tol=tol, a0=a0)


def kkt_residual(problem: LassoProblem, a) -> float:
    """Largest violation of the lasso stationarity conditions at ``a``."""
    a = np.ascontiguousarray(a, dtype=np.float64)
    gram, corr = problem.gram()
    return max(0.0, float(kkt_gram(gram, corr, float(problem.lambda1), float(problem.lambda2), a)))


def personalized_layer(x, H: Projection, D: AgingDictionary, a, gamma: float) -> np.ndarray:
    """Closed-form minimizer of ||x - H D a - q||^2 + gamma ||q||^2 over q."""
    if gamma <= 0:
        raise InputError("gamma must be positive")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (H.f,) or np.shape(a) != (D.k,) or H.m != D.m:
        raise DimensionError("personalized_layer: inconsistent dimensions")
    return (x - H.basis @ (D.atoms @ a)) / (1.0 + gamma)


def coding_objective(x, H: Projection, D: AgingDictionary, a, p, params: HyperParams) -> float:
    """||x - H D a - p||^2 + gamma||p||^2 + lambda1|a|_1 + lambda2|a|^2."""
    r = x - H.basis @ (D.atoms @ a) - p
    return float(
        r @ r + params.gamma * (p @ p) + params.lambda1 * np.abs(a).sum() + params.lambda2 * (a @ a)
    )


def eliminated_code(z, D: AgingDictionary, params: HyperParams, a0=None) -> np.ndarray:
    """Code of the joint (code, layer) problem with the layer minimized out.

    Eliminating p leaves  c||z - D a||^2 + lambda1|a|_1 + lambda2|a|^2  with
    c = gamma / (1 + gamma) and z = H^T x; its minimizer is the fixed point of
    the (lasso, layer) alternation.
    """
    c = params.gamma / (1.0 + params.gamma)
    Dm = D.atoms
    gram = c * (Dm.T @ Dm)
    corr = c * (Dm.T @ z)
    return enet_gram(gram, corr, params.lambda1, params.lambda2, tol=params.lasso_tol, a0=a0)


def infer_code_and_layer(x, H: Projection, D: AgingDictionary, params: HyperParams,
                         init: str = "eliminated", trace=None) -> CodedPair:
    """Alternate lasso and layer updates until the objective settles.

    ``init="eliminated"`` starts the alternation from the minimizer of the
    layer-eliminated problem, so the loop acts as a certificate and usually
    stops after one pass; ``init="zero"`` starts from a = 0.  When ``trace``
    is a list, the objective after every half-step is appended to it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (H.f,) or H.m != D.m:
        raise DimensionError("infer_code_and_layer: inconsistent dimensions")
    if not np.all(np.isfinite(x)):
        raise InputError("input vector contains non-finite values")
    z = H.basis.T @ x
    Dm = D.atoms
    gram = np.ascontiguousarray(Dm.T @ Dm)
    if init == "eliminated":
        a = eliminated_code(z, D, params)
    elif init == "zero":
        a = np.zeros(D.k)
    else:
        raise InputError(f"unknown init {init!r}")
    p = personalized_layer(x, H, D, a, params.gamma)
    prev = coding_objective(x, H, D, a, p, params)
    if trace is not None:
        trace.append(prev)
    for _ in range(params.inner_max_iter):
        w = z - H.basis.T @ p
        a = enet_gram(gram, Dm.T @ w, params.lambda1, params.lambda2, tol=params.lasso_tol, a0=a)
        if trace is not None:
            trace.append(coding_objective(x, H, D, a, p, params))
        p = personalized_layer(x, H, D, a, params.gamma)
        cur = coding_objective(x, H, D, a, p, params)
        if trace is not None:
            trace.append(cur)
        if abs(prev - cur) <= params.inner_tol * max(abs(prev), np.finfo(float).tiny):
            break
        prev = cur
    return CodedPair(a, p, params.support_eps)


def joint_code(x, y, p, H_g: Projection, H_g1: Projection, D_g: AgingDictionary,
               D_g1: AgingDictionary, params: HyperParams, a0=None) -> np.ndarray:
    """Shared code of a pair, solved on the stacked reduced system.

    Minimizes ||H_g'(x-p) - D_g a||^2 + ||H_g1'(y-p) - D_g1 a||^2
    + lambda1|a|_1 + lambda2|a|^2.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if not (x.shape == y.shape == p.shape == (H_g.f,)) or H_g1.f != H_g.f:
        raise DimensionError("joint_code: inconsistent sample dimensions")
    if D_g.k != D_g1.k or D_g.m != H_g.m or D_g1.m != H_g1.m:
        raise DimensionError("joint_code: inconsistent dictionary dimensions")
    A, B = D_g.atoms, D_g1.atoms
    gram = A.T @ A + B.T @ B
    corr = A.T @ (H_g.basis.T @ (x - p)) + B.T @ (H_g1.basis.T @ (y - p))
    return enet_gram(gram, corr, params.lambda1, params.lambda2, tol=params.lasso_tol, a0=a0)
