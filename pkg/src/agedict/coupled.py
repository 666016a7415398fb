"""Coupled dictionary learning over neighbouring age groups.

Trains all G dictionaries jointly on the pair batches by block-coordinate
descent on

    sum_g ||X^g - H^g D^g A^g - P^g||^2 + gamma ||P^g||^2
        + ||Y^g - H^{g+1} D^{g+1} A^g - P^g||^2
        + lambda1 |A^g|_1 + lambda2 ||A^g||^2

The result initializes the bi-level trainer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .errors import DimensionError, InputError
from .model import AgingDictionary, HyperParams, Projection
from .sparse_code import enet_gram_batch

DEAD_ATOM = 1e-12
LS_TOL = 1e-8
LS_SWEEPS = 100


@dataclass(frozen=True, eq=False)
class PairBatch:
    """Paired samples of group ``group`` (younger) and ``group + 1`` (older)."""

    group: int
    younger: np.ndarray
    older: np.ndarray
    person_ids: tuple = ()

    def __post_init__(self):
        X = np.array(self.younger, dtype=np.float64)
        Y = np.array(self.older, dtype=np.float64)
        if X.ndim != 2 or X.shape != Y.shape:
            raise DimensionError(f"younger {X.shape} and older {Y.shape} must match")
        if X.shape[1] == 0:
            raise InputError(f"batch {self.group} is empty")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise InputError(f"batch {self.group} contains non-finite values")
        ids = tuple(self.person_ids) or tuple(str(i) for i in range(X.shape[1]))
        if len(ids) != X.shape[1]:
            raise DimensionError("person_ids length must equal the number of pairs")
        X.flags.writeable = False
        Y.flags.writeable = False
        object.__setattr__(self, "younger", X)
        object.__setattr__(self, "older", Y)
        object.__setattr__(self, "person_ids", ids)

    @property
    def n(self) -> int:
        return self.younger.shape[1]

    @property
    def f(self) -> int:
        return self.younger.shape[0]


@dataclass
class TrainState:
    dictionaries: List[AgingDictionary]
    codes: List[np.ndarray]
    layers: List[np.ndarray]
    objective_trace: List[float] = field(default_factory=list)


def check_batches(batches: Sequence[PairBatch], projections: Sequence[Projection], params: HyperParams):
    G = params.G
    if len(batches) != G - 1 or [b.group for b in batches] != list(range(1, G)):
        raise InputError(f"need one batch for each g = 1..{G - 1}")
    if len(projections) != G:
        raise InputError(f"need {G} projections")
    f = projections[0].f
    for H in projections:
        if H.f != f or H.m != params.m:
            raise DimensionError("projections disagree with params.m or with each other")
    for b in batches:
        if b.f != f:
            raise DimensionError(f"batch {b.group} has f={b.f}, projections have f={f}")


def project_atoms(D) -> np.ndarray:
    """Scale every column with norm > 1 back onto the unit sphere."""
    D = np.array(D, dtype=np.float64)
    norms = np.linalg.norm(D, axis=0)
    scale = np.where(norms > 1.0, norms, 1.0)
    return D / scale


def ls_objective(W, A, D) -> float:
    R = W - D @ A
    return float(np.sum(R * R))


def dictionary_ls_update(W, A, D_init, tol: float = LS_TOL, max_sweeps: int = LS_SWEEPS) -> np.ndarray:
    """Unit-ball constrained least squares min_D ||W - D A||_F^2 by atom sweeps.

    Each atom update is the exact block minimizer (the block objective is
    isotropic in the atom, so projecting the unconstrained solution onto the
    ball is optimal).  Atoms whose code row has energy below 1e-12 are
    re-seeded with the normalized residual of the worst-reconstructed
    column, but only when that does not raise the objective.
    """
    W = np.asarray(W, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    D = project_atoms(D_init)
    if W.shape[1] != A.shape[1] or W.shape[0] != D.shape[0] or A.shape[0] != D.shape[1]:
        raise DimensionError(f"W {W.shape}, A {A.shape}, D {D.shape} are inconsistent")
    if W.shape[1] == 0:
        return D
    C = W @ A.T
    E = A @ A.T
    w2 = float(np.sum(W * W))

    def obj(D):
        return w2 - 2.0 * float(np.sum(D * C)) + float(np.sum((D.T @ D) * E))

    dead = [j for j in range(D.shape[1]) if E[j, j] < DEAD_ATOM]
    if dead:
        R = W - D @ A
        order = np.argsort(-np.einsum("ij,ij->j", R, R), kind="stable")
        for j, col in zip(dead, order):
            r = R[:, col]
            nr = np.linalg.norm(r)
            if nr == 0.0:
                continue
            cand = r / nr
            # block objective in atom j, up to a constant
            old = -2.0 * (D[:, j] @ (C[:, j] - D @ E[:, j] + D[:, j] * E[j, j])) + (D[:, j] @ D[:, j]) * E[j, j]
            new = -2.0 * (cand @ (C[:, j] - D @ E[:, j] + D[:, j] * E[j, j])) + E[j, j]
            if new <= old:
                D[:, j] = cand

    prev = obj(D)
    for _ in range(max_sweeps):
        for j in range(D.shape[1]):
            ejj = E[j, j]
            if ejj < DEAD_ATOM:
                continue
            u = D[:, j] + (C[:, j] - D @ E[:, j]) / ejj
            nu = np.linalg.norm(u)
            D[:, j] = u / nu if nu > 1.0 else u
        cur = obj(D)
        if abs(prev - cur) <= tol * max(abs(prev), np.finfo(float).tiny):
            break
        prev = cur
    return D


def coupled_layers(X, Y, A, B_g, B_g1, gamma: float) -> np.ndarray:
    """Minimizer over P of the two residual terms plus gamma ||P||^2."""
    return ((X - B_g @ A) + (Y - B_g1 @ A)) / (2.0 + gamma)


def coupled_objective(batches, projections, dictionaries, codes, layers, params: HyperParams) -> float:
    total = 0.0
    for b, A, P in zip(batches, codes, layers):
        g = b.group
        Bg = projections[g - 1].basis @ dictionaries[g - 1].atoms
        Bg1 = projections[g].basis @ dictionaries[g].atoms
        Rx = b.younger - Bg @ A - P
        Ry = b.older - Bg1 @ A - P
        total += (
            float(np.sum(Rx * Rx)) + float(np.sum(Ry * Ry)) + params.gamma * float(np.sum(P * P))
            + params.lambda1 * float(np.abs(A).sum()) + params.lambda2 * float(np.sum(A * A))
        )
    return total


def group_columns(batches, g: int, G: int) -> np.ndarray:
    """All sample columns that belong to age group ``g``."""
    cols = []
    if g <= G - 1:
        cols.append(batches[g - 1].younger)
    if g >= 2:
        cols.append(batches[g - 2].older)
    return np.hstack(cols)


def _unit_columns(Z, rng):
    norms = np.linalg.norm(Z, axis=0)
    for j in np.flatnonzero(norms == 0.0):
        Z[:, j] = rng.standard_normal(Z.shape[0])
        norms[j] = np.linalg.norm(Z[:, j])
    return project_atoms(Z / norms)


def init_dictionaries(batches, projections, params: HyperParams, seed) -> List[AgingDictionary]:
    """Pair-consistent initialization from normalized reduced training columns.

    Atoms share their index across groups through the common code, so the
    initial atoms are chosen to correspond: k pairs of batch 1 are drawn
    without replacement (seeded) and give atom j of D^1 (younger image) and
    of D^2 (older image).  Each later D^{g+1} takes, without replacement,
    the older image of the batch-g pair whose younger image correlates best
    with atom j of D^g.
    """
    rng = np.random.default_rng(seed)
    k = params.k
    first = batches[0]
    n = first.n
    take = rng.choice(n, size=min(n, k), replace=False)
    if n < k:
        take = np.concatenate([take, rng.choice(n, size=k - n, replace=True)])
    Zx = projections[0].basis.T @ first.younger[:, take]
    Zy = projections[1].basis.T @ first.older[:, take]
    out = [AgingDictionary(1, _unit_columns(Zx, rng)), AgingDictionary(2, _unit_columns(Zy, rng))]
    for b in batches[1:]:
        g = b.group
        X = projections[g - 1].basis.T @ b.younger
        X = X / np.maximum(np.linalg.norm(X, axis=0), np.finfo(float).tiny)
        score = np.abs(out[g - 1].atoms.T @ X)
        chosen = np.empty(k, dtype=np.int64)
        free = np.ones(b.n, dtype=bool)
        for j in range(k):
            if not free.any():
                free[:] = True
            s = np.where(free, score[j], -np.inf)
            chosen[j] = int(np.argmax(s))
            free[chosen[j]] = False
        Zy = projections[g].basis.T @ b.older[:, chosen]
        out.append(AgingDictionary(g + 1, _unit_columns(Zy, rng)))
    return out


def batch_joint_codes(batch, P, Hg, Hg1, Dg, Dg1, params, A0=None) -> np.ndarray:
    """Joint codes for every pair of a batch (warm-started from ``A0``)."""
    Ag, Ag1 = Dg.atoms, Dg1.atoms
    gram = np.ascontiguousarray(Ag.T @ Ag + Ag1.T @ Ag1)
    corr = Ag.T @ (Hg.basis.T @ (batch.younger - P)) + Ag1.T @ (Hg1.basis.T @ (batch.older - P))
    return enet_gram_batch(gram, corr, params.lambda1, params.lambda2, tol=params.lasso_tol, A0=A0)


def coupled_train(batches: Sequence[PairBatch], projections: Sequence[Projection], params: HyperParams,
                  seed: int = 0, max_iter: int = 5000,
                  monitor: Optional[Callable[[str, float, tuple], None]] = None,
                  init: Optional[Sequence[AgingDictionary]] = None,
                  restarts: int = 4, burn_in: int = 200) -> TrainState:
    """Block-coordinate descent: layers, then codes, then dictionaries.

    Stops when the relative change of the objective over one iteration drops
    below ``params.inner_tol`` or after ``max_iter`` iterations.  ``monitor``
    (if given) receives ``(block_name, objective, dictionaries)`` after every
    block update.

    Without an explicit ``init``, ``restarts`` seeded initializations are each
    run for ``burn_in`` iterations and the run continues from the one with the
    lowest objective; the returned trace covers only that final run.
    """
    check_batches(batches, projections, params)
    if init is None:
        if restarts < 1:
            raise InputError("restarts must be >= 1")
        best = None
        for r in range(restarts):
            start = init_dictionaries(batches, projections, params, [seed, r])
            if restarts == 1:
                best = start
                break
            trial = _descend(batches, projections, params, start, burn_in, None)
            if best is None or trial.objective_trace[-1] < best_J:
                best, best_J = trial.dictionaries, trial.objective_trace[-1]
        init = best
    return _descend(batches, projections, params, list(init), max_iter, monitor)


def _descend(batches, projections, params, dicts, max_iter, monitor) -> TrainState:
    G = params.G
    dicts = list(dicts)
    codes = [np.zeros((params.k, b.n)) for b in batches]
    layers = [np.zeros((b.f, b.n)) for b in batches]

    def J():
        return coupled_objective(batches, projections, dicts, codes, layers, params)

    def report(stage):
        if monitor is not None:
            monitor(stage, J(), tuple(dicts))

    state = TrainState(dicts, codes, layers, [J()])
    report("init")
    for _ in range(max_iter):
        for b in batches:
            g = b.group
            Bg = projections[g - 1].basis @ dicts[g - 1].atoms
            Bg1 = projections[g].basis @ dicts[g].atoms
            layers[g - 1] = coupled_layers(b.younger, b.older, codes[g - 1], Bg, Bg1, params.gamma)
        report("layers")
        for b in batches:
            g = b.group
            codes[g - 1] = batch_joint_codes(b, layers[g - 1], projections[g - 1], projections[g],
                                             dicts[g - 1], dicts[g], params, A0=codes[g - 1])
        report("codes")
        for g in range(1, G + 1):
            H = projections[g - 1].basis
            Ws, As = [], []
            if g <= G - 1:
                Ws.append(H.T @ (batches[g - 1].younger - layers[g - 1]))
                As.append(codes[g - 1])
            if g >= 2:
                Ws.append(H.T @ (batches[g - 2].older - layers[g - 2]))
                As.append(codes[g - 2])
            D = dictionary_ls_update(np.hstack(Ws), np.hstack(As), dicts[g - 1].atoms)
            dicts[g - 1] = AgingDictionary(g, D)
            report(f"dictionary{g}")
        cur = J()
        prev = state.objective_trace[-1]
        state.objective_trace.append(cur)
        if abs(prev - cur) <= params.inner_tol * max(abs(prev), np.finfo(float).tiny):
            break
    return state
