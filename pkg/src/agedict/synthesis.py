"""Online progression: chain one-step transfers from the input group upwards."""

from __future__ import annotations

from typing import List, Tuple

import numpy as np

from .errors import DimensionError, InputError
from .model import CodedPair, ModelBundle
from .sparse_code import infer_code_and_layer


def transfer_step(x, model: ModelBundle, g: int) -> Tuple[np.ndarray, CodedPair]:
    """Next-group vector plus the (code, layer) it was built from."""
    if not 1 <= g <= model.G - 1:
        raise InputError(f"group {g} outside 1..{model.G - 1}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.f,):
        raise DimensionError(f"expected a vector of length {model.f}, got shape {x.shape}")
    pair = infer_code_and_layer(x, model.projection(g), model.dictionary(g), model.params)
    aging = model.projection(g + 1).basis @ (model.dictionary(g + 1).atoms @ pair.code)
    return aging + pair.layer, pair


def synthesize_next(x, model: ModelBundle, g: int) -> np.ndarray:
    """H^{g+1} D^{g+1} a* + p*, with (a*, p*) coded from x in group g.

    The result is not clamped; clamping to [0, 1] happens on image export.
    """
    return transfer_step(x, model, g)[0]


def synthesize_sequence(x, model: ModelBundle, g: int, target: int) -> List[np.ndarray]:
    """Outputs for groups g+1 .. target, each step fed with the previous output."""
    if not 1 <= g < target <= model.G:
        raise InputError(f"need 1 <= g < target <= {model.G}, got g={g}, target={target}")
    out = []
    cur = np.asarray(x, dtype=np.float64)
    for h in range(g, target):
        cur = synthesize_next(cur, model, h)
        out.append(cur)
    return out
