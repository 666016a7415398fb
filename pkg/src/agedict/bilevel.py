"""Bi-level refinement of neighbouring dictionaries.

For each neighbouring pair (g, g+1) the younger dictionary D^g is moved by
projected stochastic gradient steps on the transfer loss

    J = ||x - H^g D^g a - p||^2 + ||y - H^{g+1} D^{g+1} a - p||^2,

where (a, p) minimize the x-only coding problem and therefore depend on D^g.
The older dictionary D^{g+1} is refit by constrained least squares once per
epoch.

Gradient through the inner problem
----------------------------------
With the layer minimized out, the code solves
    min_a  c ||H^T x - D a||^2 + lambda1 |a|_1 + lambda2 |a|^2,  c = gamma/(1+gamma),
and on a fixed support/sign pattern (Omega, s)
    (c D_O^T D_O + lambda2 I) a_O = c D_O^T H^T x - (lambda1/2) s.
This is the same system obtained by substituting p = (x - H D a)/(1+gamma)
into the lasso stationarity conditions on w = H^T (x - p), so differentiating
it yields the total derivative of (a, p) with respect to D^g.  With the
adjoint beta = M^{-1} dJ/da_O the code contribution to dJ/dD^g is
    c (rho beta^T - D_O beta a_O^T)   on columns Omega,   rho = H^T x - D a.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .coupled import PairBatch, TrainState, check_batches, dictionary_ls_update, project_atoms
from .errors import InputError, NumericalError
from .model import AgingDictionary, HyperParams, ModelBundle, Projection, support_of
from .sparse_code import infer_code_and_layer

SINGULAR_COND = 1e12


@dataclass(frozen=True, eq=False)
class ImplicitGradContext:
    """Everything the implicit gradient needs about one training pair."""

    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    p: np.ndarray
    support: tuple
    B_g: np.ndarray
    B_g1: np.ndarray
    J_x: float
    J_y: float

    @property
    def J(self) -> float:
        return self.J_x + self.J_y


def make_context(x, y, H_g: Projection, D_g: AgingDictionary, H_g1: Projection,
                 D_g1: AgingDictionary, params: HyperParams, pair=None) -> ImplicitGradContext:
    """Solve the x-side coding problem (unless ``pair`` is given) and package it."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if pair is None:
        pair = infer_code_and_layer(x, H_g, D_g, params)
    a, p = pair.code, pair.layer
    B_g = H_g.basis @ D_g.atoms
    B_g1 = H_g1.basis @ D_g1.atoms
    rx = x - B_g @ a - p
    ry = y - B_g1 @ a - p
    ctx = ImplicitGradContext(x, y, a, p, support_of(a, params.support_eps), B_g, B_g1,
                              float(rx @ rx), float(ry @ ry))
    if not all(np.all(np.isfinite(v)) for v in (a, p, B_g, B_g1)):
        raise NumericalError("non-finite values in gradient context")
    return ctx


def implicit_gradient(ctx: ImplicitGradContext, H_g: Projection, D_g: AgingDictionary,
                      params: HyperParams) -> np.ndarray:
    """Total derivative dJ/dD^g (m x k) at the solved (a, p).

    Sum of three parts: the direct term with (a, p) held fixed, the part
    routed through the closed-form layer at fixed a, and the part routed
    through the active code entries.
    """
    H, D = H_g.basis, D_g.atoms
    a, p, x = ctx.a, ctx.p, ctx.x
    gamma = params.gamma
    u = x - p
    Da = D @ a
    res_x = u - ctx.B_g @ a
    res_y = ctx.y - ctx.B_g1 @ a - p

    # direct term: -2 H^T u a^T + 2 H^T H D a a^T, with H^T H = I
    direct = np.outer(-2.0 * (H.T @ u) + 2.0 * Da, a)

    # through p = (x - H D a) / (1 + gamma) at fixed a
    dJ_dp = -2.0 * res_x - 2.0 * res_y
    via_layer = np.outer(-(H.T @ dJ_dp) / (1.0 + gamma), a)

    grad = direct + via_layer
    omega = np.asarray(ctx.support, dtype=np.int64)
    if omega.size == 0:
        return grad

    # dJ/da including the layer's dependence on a
    dJ_da = -2.0 * (ctx.B_g.T @ res_x) - 2.0 * (ctx.B_g1.T @ res_y) - (ctx.B_g.T @ dJ_dp) / (1.0 + gamma)
    c = gamma / (1.0 + gamma)
    D_o = D[:, omega]
    M = c * (D_o.T @ D_o) + params.lambda2 * np.eye(omega.size)
    if np.linalg.cond(M) > SINGULAR_COND:
        raise NumericalError(
            "active-set system is singular (collinear active atoms); use lambda2 > 0"
        )
    beta = np.linalg.solve(M, dJ_da[omega])
    rho = H.T @ x - Da
    grad[:, omega] += c * (np.outer(rho, beta) - np.outer(D_o @ beta, a[omega]))
    return grad


def sgd_step(D_g: AgingDictionary, grad, eta0: float, n0: int) -> AgingDictionary:
    """One projected step with step size eta0 / n0."""
    if n0 < 1:
        raise InputError("sample counter n0 must be >= 1")
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != D_g.atoms.shape:
        raise InputError(f"gradient shape {grad.shape} != dictionary shape {D_g.atoms.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    return AgingDictionary(D_g.group, project_atoms(D_g.atoms - (eta0 / n0) * grad))


def next_objective(batch: PairBatch, H_g1: Projection, A, P, D) -> float:
    """||(Y - P) - H^{g+1} D A||_F^2."""
    atoms = D.atoms if isinstance(D, AgingDictionary) else D
    R = batch.older - P - H_g1.basis @ (atoms @ A)
    return float(np.sum(R * R))


def update_next_dictionary(batch: PairBatch, H_g1: Projection, A, P, D_init: AgingDictionary) -> AgingDictionary:
    """Refit the older dictionary to (Y - P) given the x-side codes."""
    A = np.asarray(A, dtype=np.float64)
    if not np.any(A):
        return D_init
    W = H_g1.basis.T @ (batch.older - P)
    D = AgingDictionary(D_init.group, dictionary_ls_update(W, A, D_init.atoms))
    # the sweeps are exact block minimizers; this guards against rounding only
    if next_objective(batch, H_g1, A, P, D) > next_objective(batch, H_g1, A, P, D_init):
        return D_init
    return D


def solve_batch(X, H: Projection, D: AgingDictionary, params: HyperParams, workers: int = 1):
    """x-side (codes, layers) for every column of X."""
    n = X.shape[1]

    def one(i):
        return infer_code_and_layer(X[:, i], H, D, params)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            pairs = list(pool.map(one, range(n)))
    else:
        pairs = [one(i) for i in range(n)]
    A = np.column_stack([q.code for q in pairs]) if n else np.zeros((D.k, 0))
    P = np.column_stack([q.layer for q in pairs]) if n else np.zeros((H.f, 0))
    return A, P


def upper_objective(batch: PairBatch, H_g, D_g, H_g1, D_g1, A, P) -> float:
    """Transfer loss J summed over a batch for given codes and layers."""
    Rx = batch.younger - H_g.basis @ (D_g.atoms @ A) - P
    Ry = batch.older - H_g1.basis @ (D_g1.atoms @ A) - P
    return float(np.sum(Rx * Rx) + np.sum(Ry * Ry))


@dataclass(frozen=True)
class TraceRow:
    epoch: int
    group: int
    objective: float
    grad_norm: float


def bilevel_train(batches: Sequence[PairBatch], projections: Sequence[Projection], params: HyperParams,
                  seed: int, init: TrainState, workers: int = 1,
                  on_epoch: Optional[Callable[[TraceRow], None]] = None,
                  on_update: Optional[Callable[[str, int, AgingDictionary], None]] = None,
                  provenance: Optional[dict] = None) -> ModelBundle:
    """Alternate stochastic D^g steps and batch D^{g+1} refits for g = 1..G-1.

    Visits pairs in a seeded random order each epoch.  A group stops when the
    relative change of the batch transfer loss over an epoch falls below
    ``params.outer_tol`` or after ``params.max_epochs`` epochs.  ``on_epoch``
    receives a TraceRow per epoch (epoch 0 is the starting loss);
    ``on_update`` sees every dictionary produced, tagged "sgd" or "refit".
    """
    check_batches(batches, projections, params)
    rng = np.random.default_rng(seed)
    dicts = list(init.dictionaries)
    trace: List[TraceRow] = []
    n0 = 1

    def emit(row):
        trace.append(row)
        if on_epoch is not None:
            on_epoch(row)

    for b in batches:
        g = b.group
        H_g, H_g1 = projections[g - 1], projections[g]
        if params.eta_reset == "per-group":
            n0 = 1
        A, P = solve_batch(b.younger, H_g, dicts[g - 1], params, workers)
        prev = upper_objective(b, H_g, dicts[g - 1], H_g1, dicts[g], A, P)
        emit(TraceRow(0, g, prev, float("nan")))
        for epoch in range(1, params.max_epochs + 1):
            norms = []
            for i in rng.permutation(b.n):
                ctx = make_context(b.younger[:, i], b.older[:, i], H_g, dicts[g - 1], H_g1, dicts[g], params)
                grad = implicit_gradient(ctx, H_g, dicts[g - 1], params)
                norms.append(float(np.linalg.norm(grad)))
                dicts[g - 1] = sgd_step(dicts[g - 1], grad, params.eta0, n0)
                n0 += 1
                if on_update is not None:
                    on_update("sgd", g, dicts[g - 1])
            A, P = solve_batch(b.younger, H_g, dicts[g - 1], params, workers)
            dicts[g] = update_next_dictionary(b, H_g1, A, P, dicts[g])
            if on_update is not None:
                on_update("refit", g + 1, dicts[g])
            cur = upper_objective(b, H_g, dicts[g - 1], H_g1, dicts[g], A, P)
            if not np.isfinite(cur):
                raise NumericalError(f"transfer loss became non-finite at group {g}, epoch {epoch}")
            emit(TraceRow(epoch, g, cur, float(np.mean(norms))))
            if abs(prev - cur) <= params.outer_tol * max(abs(prev), np.finfo(float).tiny):
                break
            prev = cur

    meta = dict(provenance or {})
    meta.update(seed=seed, eta_reset=params.eta_reset,
                trace=[[r.epoch, r.group, r.objective, r.grad_norm] for r in trace])
    return ModelBundle(params, projections, dicts, provenance=json.dumps(meta, sort_keys=True))


def epochs_per_group(model: ModelBundle) -> dict:
    """Number of epochs each group ran, read back from the provenance trace."""
    meta = json.loads(model.provenance)
    out = {}
    for epoch, group, _, _ in meta["trace"]:
        out[group] = max(out.get(group, 0), epoch)
    return out
