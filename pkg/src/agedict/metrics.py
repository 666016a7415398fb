"""Quality measures for synthesis and dictionary recovery."""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from .errors import DimensionError, InputError
from .model import AgingDictionary, ModelBundle

RECOVERY_COSINE = 0.95


def transfer_error(predicted, truth) -> float:
    """Relative l2 error ||predicted - truth|| / ||truth||."""
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DimensionError(f"shapes differ: {p.shape} vs {t.shape}")
    nt = np.linalg.norm(t)
    if nt == 0.0:
        raise InputError("truth vector has zero norm")
    return float(np.linalg.norm(p - t) / nt)


def _atoms(d):
    return d.atoms if isinstance(d, AgingDictionary) else np.asarray(d, dtype=np.float64)


def atom_recovery(learned, truth, threshold: float = RECOVERY_COSINE) -> Tuple[float, Dict[int, int]]:
    """Greedy |cosine| matching of learned atoms to true atoms.

    Returns the fraction of true atoms matched with |cosine| >= ``threshold``
    and the map true index -> learned index.  Zero atoms never match.  The
    greedy pass is an approximation of the optimal assignment.
    """
    L, T = _atoms(learned), _atoms(truth)
    if L.shape != T.shape:
        raise DimensionError(f"dictionary shapes differ: {L.shape} vs {T.shape}")
    ln, tn = np.linalg.norm(L, axis=0), np.linalg.norm(T, axis=0)
    valid_l, valid_t = ln > 0, tn > 0
    cos = np.zeros((T.shape[1], L.shape[1]))
    if valid_l.any() and valid_t.any():
        cos[np.ix_(valid_t, valid_l)] = np.abs(
            (T[:, valid_t] / tn[valid_t]).T @ (L[:, valid_l] / ln[valid_l])
        )
    cos[~valid_t, :] = -1.0
    cos[:, ~valid_l] = -1.0
    matching: Dict[int, int] = {}
    work = cos.copy()
    for _ in range(min(work.shape)):
        t, l = np.unravel_index(np.argmax(work), work.shape)
        if work[t, l] < 0:
            break
        matching[int(t)] = int(l)
        work[t, :] = -np.inf
        work[:, l] = -np.inf
    hits = sum(1 for t, l in matching.items() if cos[t, l] >= threshold)
    return hits / T.shape[1], matching


def lifted_atoms(model: ModelBundle, g: int) -> np.ndarray:
    """Atoms of group ``g`` mapped to the ambient space, H^g D^g."""
    return model.projection(g).basis @ model.dictionary(g).atoms


def model_recovery(learned: ModelBundle, truth: ModelBundle, threshold: float = RECOVERY_COSINE):
    """Per-group recovery score comparing ambient-space atoms of two models."""
    if learned.G != truth.G or learned.f != truth.f or learned.params.k != truth.params.k:
        raise DimensionError("models disagree on G, f or k")
    return [atom_recovery(lifted_atoms(learned, g), lifted_atoms(truth, g), threshold)[0]
            for g in range(1, learned.G + 1)]
