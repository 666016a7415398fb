"""ADLM binary model container.

Layout (little-endian)::

    "ADLM" | u32 version=1 | u32 G | u64 f | u32 m | u32 k
    | f64 lambda1 | f64 lambda2 | f64 gamma | 12 reserved zero bytes   (64 bytes)
    | H^1 .. H^G   (f*m f64 each, column-major)
    | D^1 .. D^G   (m*k f64 each, column-major)
    [ | "XTRA" | u64 n | n bytes of UTF-8 JSON ]   optional trailer

The trailer carries the hyperparameters not present in the header and the
free-text provenance, so that a bundle survives a round trip unchanged.
Readers that only need the matrices can stop after the dictionaries.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, fields
from typing import BinaryIO, Union

import numpy as np

from .errors import FormatError
from .model import AgingDictionary, HyperParams, ModelBundle, Projection

MAGIC = b"ADLM"
VERSION = 1
HEADER = struct.Struct("<4sIIQIIddd12x")
HEADER_SIZE = HEADER.size  # 64
TRAILER_MAGIC = b"XTRA"
TRAILER_LEN = struct.Struct("<Q")
_F8 = np.dtype("<f8")
_HEADER_PARAMS = ("lambda1", "lambda2", "gamma", "k", "m", "G")

PathOrFile = Union[str, os.PathLike, BinaryIO]


def encode_header(G: int, f: int, m: int, k: int, lambda1: float, lambda2: float, gamma: float) -> bytes:
    return HEADER.pack(MAGIC, VERSION, G, f, m, k, lambda1, lambda2, gamma)


def decode_header(buf: bytes) -> dict:
    if len(buf) < HEADER_SIZE:
        raise FormatError(f"truncated header: {len(buf)} < {HEADER_SIZE} bytes")
    magic, version, G, f, m, k, l1, l2, gamma = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported ADLM version {version}")
    if G < 2 or f < 1 or m < 1 or k < 1 or m > f:
        raise FormatError(f"invalid dimensions G={G} f={f} m={m} k={k}")
    return dict(G=G, f=f, m=m, k=k, lambda1=l1, lambda2=l2, gamma=gamma)


def payload_size(G: int, f: int, m: int, k: int) -> int:
    """Bytes of matrix data following the header."""
    return G * (f * m + m * k) * _F8.itemsize


def _trailer(model: ModelBundle) -> bytes:
    extra = {k: v for k, v in asdict(model.params).items() if k not in _HEADER_PARAMS}
    body = json.dumps({"params": extra, "provenance": model.provenance}, sort_keys=True).encode("utf-8")
    return TRAILER_MAGIC + TRAILER_LEN.pack(len(body)) + body


def dumps(model: ModelBundle) -> bytes:
    p = model.params
    parts = [encode_header(p.G, model.f, p.m, p.k, p.lambda1, p.lambda2, p.gamma)]
    for H in model.projections:
        parts.append(H.basis.astype(_F8).tobytes(order="F"))
    for D in model.dictionaries:
        parts.append(D.atoms.astype(_F8).tobytes(order="F"))
    parts.append(_trailer(model))
    return b"".join(parts)


def loads(buf: bytes) -> ModelBundle:
    hdr = decode_header(buf)
    G, f, m, k = hdr["G"], hdr["f"], hdr["m"], hdr["k"]
    end = HEADER_SIZE + payload_size(G, f, m, k)
    if len(buf) < end:
        raise FormatError(f"truncated payload: expected {end} bytes, got {len(buf)}")

    def matrices(offset, rows, cols):
        out = []
        for _ in range(G):
            n = rows * cols
            arr = np.frombuffer(buf, dtype=_F8, count=n, offset=offset)
            out.append(arr.reshape((rows, cols), order="F"))
            offset += n * _F8.itemsize
        return out, offset

    Hs, off = matrices(HEADER_SIZE, f, m)
    Ds, off = matrices(off, m, k)

    extra, provenance = {}, ""
    rest = buf[end:]
    if rest:
        if rest[:4] != TRAILER_MAGIC or len(rest) < 4 + TRAILER_LEN.size:
            raise FormatError("unexpected bytes after dictionaries")
        (n,) = TRAILER_LEN.unpack_from(rest, 4)
        body = rest[4 + TRAILER_LEN.size:]
        if len(body) != n:
            raise FormatError("truncated or oversized trailer")
        try:
            meta = json.loads(body.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise FormatError(f"bad trailer: {exc}") from exc
        known = {fl.name for fl in fields(HyperParams)} - set(_HEADER_PARAMS)
        extra = {key: v for key, v in meta.get("params", {}).items() if key in known}
        provenance = meta.get("provenance", "")

    try:
        params = HyperParams(
            lambda1=hdr["lambda1"], lambda2=hdr["lambda2"], gamma=hdr["gamma"],
            k=k, m=m, G=G, **extra,
        )
    except Exception as exc:
        raise FormatError(f"invalid stored hyperparameters: {exc}") from exc
    projections = [Projection(g + 1, H) for g, H in enumerate(Hs)]
    dictionaries = [AgingDictionary(g + 1, D) for g, D in enumerate(Ds)]
    return ModelBundle(params, projections, dictionaries, provenance)


def save_model(model: ModelBundle, destination: PathOrFile) -> None:
    """Write ``model`` as an ADLM container to a path or binary sink."""
    data = dumps(model)
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)


def load_model(source: PathOrFile) -> ModelBundle:
    """Read an ADLM container.

    Raises FormatError for bad magic, version, dimensions or truncation and
    IntegrityError when a stored matrix violates a model invariant.
    """
    if hasattr(source, "read"):
        data = source.read()
    else:
        with open(source, "rb") as fh:
            data = fh.read()
    if isinstance(data, (bytearray, memoryview)):
        data = bytes(data)
    return loads(data)


__all__ = [
    "HEADER_SIZE", "MAGIC", "VERSION", "decode_header", "dumps", "encode_header",
    "load_model", "loads", "payload_size", "save_model",
]
