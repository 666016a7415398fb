"""Per-group PCA bases from stacked sample columns."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, InputError
from .model import Projection


def _fix_signs(U):
    # largest-magnitude entry of each column made positive; first index wins ties
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def build_projection(samples, m: int, group: int = 1) -> Projection:
    """Leading ``m`` left singular vectors of the f x s sample matrix.

    Columns are ordered by nonincreasing singular value and sign-normalized so
    that repeated builds are deterministic. Raises DimensionError when
    ``m > min(f, s)`` or when the matrix has rank below ``m``.
    """
    M = np.asarray(samples, dtype=np.float64)
    if M.ndim != 2:
        raise DimensionError(f"sample matrix must be 2-D, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InputError("sample matrix contains non-finite values")
    f, s = M.shape
    if not 1 <= m <= min(f, s):
        raise DimensionError(f"need 1 <= m <= min(f, s) = {min(f, s)}, got m={m}")
    U, S, _ = np.linalg.svd(M, full_matrices=False)
    rank_tol = max(f, s) * np.finfo(np.float64).eps * (S[0] if S.size else 0.0)
    if S[m - 1] <= rank_tol:
        raise DimensionError(f"sample matrix has rank < m={m}")
    return Projection(group, _fix_signs(U[:, :m]))


def project(H: Projection, x) -> np.ndarray:
    """Reduced coordinates H^T x."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != H.f:
        raise DimensionError(f"expected length {H.f}, got {x.shape[0]}")
    return H.basis.T @ x


def lift(H: Projection, z) -> np.ndarray:
    """Ambient vector H z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != H.m:
        raise DimensionError(f"expected length {H.m}, got {z.shape[0]}")
    return H.basis @ z
