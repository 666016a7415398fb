"""Training manifests: ``person_id,group,path`` CSV files."""

from __future__ import annotations

import csv
import os
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from .coupled import PairBatch
from .errors import DimensionError, FormatError, InputError
from .ppm import ImageShape, load_image

HEADER = ["person_id", "group", "path"]


class EmptyManifestError(InputError):
    """The manifest has a valid header but no rows."""


@dataclass(frozen=True)
class ManifestRow:
    person_id: str
    group: int
    path: str


@dataclass(frozen=True)
class Manifest:
    rows: Tuple[ManifestRow, ...]
    G: int

    def pairs(self) -> Dict[int, List[Tuple[str, str, str]]]:
        """(person, younger path, older path) per batch g = 1..G-1.

        Only neighbouring groups pair up; with several images of one person
        in a group the lexicographically smallest path is used.
        """
        by_person: Dict[str, Dict[int, str]] = defaultdict(dict)
        for r in self.rows:
            cur = by_person[r.person_id].get(r.group)
            if cur is None or r.path < cur:
                by_person[r.person_id][r.group] = r.path
        out: Dict[int, List[Tuple[str, str, str]]] = {g: [] for g in range(1, self.G)}
        for person in sorted(by_person):
            groups = by_person[person]
            for g in range(1, self.G):
                if g in groups and g + 1 in groups:
                    out[g].append((person, groups[g], groups[g + 1]))
        return out


def load_manifest(path, G: Optional[int] = None) -> Manifest:
    """Parse and validate a manifest; relative image paths resolve against its folder."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"manifest not found: {path}")
    base = os.path.dirname(os.path.abspath(path))
    rows, seen = [], set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise FormatError(f"{path}: header must be {','.join(HEADER)}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != 3:
                raise FormatError(f"{path}:{lineno}: expected 3 fields, got {len(rec)}")
            person, group, img = (c.strip() for c in rec)
            if not person or not img:
                raise FormatError(f"{path}:{lineno}: empty person_id or path")
            try:
                g = int(group)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: group {group!r} is not an integer") from None
            if g < 1 or (G is not None and g > G):
                raise FormatError(f"{path}:{lineno}: group {g} out of range 1..{G}")
            full = img if os.path.isabs(img) else os.path.normpath(os.path.join(base, img))
            if full in seen:
                raise FormatError(f"{path}:{lineno}: duplicate path {img}")
            seen.add(full)
            rows.append(ManifestRow(person, g, full))
    if not rows:
        raise EmptyManifestError(f"{path}: manifest has no rows")
    if G is None:
        G = max(r.group for r in rows)
    return Manifest(tuple(rows), G)


def load_batches(manifest: Manifest, offset: float = 0.0) -> Tuple[List[PairBatch], ImageShape]:
    """Read the images of every usable pair; ``offset`` is subtracted from pixel values."""
    shape = None
    cache: Dict[str, np.ndarray] = {}

    def read(p):
        nonlocal shape
        if p not in cache:
            vec, s = load_image(p)
            if shape is None:
                shape = s
            elif s != shape:
                raise DimensionError(f"{p}: image shape {s} differs from {shape}")
            cache[p] = vec - offset
        return cache[p]

    batches = []
    for g, pairs in manifest.pairs().items():
        if not pairs:
            raise InputError(f"no usable pairs between groups {g} and {g + 1}")
        X = np.column_stack([read(y) for _, y, _ in pairs])
        Y = np.column_stack([read(o) for _, _, o in pairs])
        batches.append(PairBatch(g, X, Y, tuple(p for p, _, _ in pairs)))
    return batches, shape
