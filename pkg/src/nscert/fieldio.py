"""Field snapshot files.

Binary layout (little-endian)::

    magic   4 bytes  b"NSCF"
    version u32      1
    L       f64      box side
    m       u32      truncation
    flags   u32      bit 0: divergence-free
    body    complex128 triples (re, im interleaved) for every k in the
            half-space k > 0 (lexicographic), in lexicographic k order

The half-space is the set of k whose first nonzero component is positive; the
remaining coefficients follow from u_{-k} = conj(u_k).  Because the coefficient
cube is stored in lexicographic k order, the half-space is exactly the part of
the flattened cube after the k = 0 entry.

The JSON alternative is meant for small fields::

    {"format": "NSCF-json", "version": 1, "L": ..., "m": ..., "divfree": bool,
     "modes": [{"k": [k1, k2, k3], "u": [[re, im], [re, im], [re, im]]}, ...]}

Only modes with a nonzero coefficient are listed in JSON.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .spectral import BoxSpec, SpectralField

MAGIC = b"NSCF"
VERSION = 1
HEADER = struct.Struct("<4sIdII")
FLAG_DIVFREE = 1


def half_space_count(m: int) -> int:
    return ((2 * m + 1) ** 3 - 1) // 2


def encode_binary(field: SpectralField) -> bytes:
    field._require_vector()
    m = field.m
    flat = field.coeffs.reshape(3, -1)
    center = half_space_count(m)
    body = np.ascontiguousarray(flat[:, center + 1:].T).astype("<c16")
    flags = FLAG_DIVFREE if field.divfree else 0
    return HEADER.pack(MAGIC, VERSION, float(field.box.L), m, flags) + body.tobytes()


def decode_binary(data: bytes, nu: float = 1.0, alpha: float = 0.5) -> SpectralField:
    if len(data) < HEADER.size:
        raise ConfigError("snapshot too short for NSCF header")
    magic, version, L, m, flags = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ConfigError(f"bad snapshot magic {magic!r}")
    if version != VERSION:
        raise ConfigError(f"unsupported snapshot version {version}")
    nhalf = half_space_count(m)
    expected = HEADER.size + nhalf * 3 * 16
    if len(data) != expected:
        raise ConfigError(f"snapshot body has {len(data) - HEADER.size} bytes, expected {expected - HEADER.size}")
    body = np.frombuffer(data, dtype="<c16", offset=HEADER.size).reshape(nhalf, 3).T
    n = 2 * m + 1
    flat = np.zeros((3, n ** 3), complex)
    flat[:, nhalf + 1:] = body
    flat[:, :nhalf] = np.conj(body[:, ::-1])
    coeffs = flat.reshape(3, n, n, n)
    return SpectralField(BoxSpec(L=L, nu=nu, alpha=alpha), coeffs, bool(flags & FLAG_DIVFREE))


def encode_json(field: SpectralField) -> str:
    field._require_vector()
    m = field.m
    flat = field.coeffs.reshape(3, -1)
    center = half_space_count(m)
    n = 2 * m + 1
    modes = []
    for idx in range(center + 1, n ** 3):
        v = flat[:, idx]
        if not np.any(v):
            continue
        k = np.unravel_index(idx, (n, n, n))
        modes.append({"k": [int(x) - m for x in k],
                      "u": [[float(z.real), float(z.imag)] for z in v]})
    doc = {"format": "NSCF-json", "version": VERSION, "L": float(field.box.L), "m": m,
           "divfree": bool(field.divfree), "modes": modes}
    return json.dumps(doc, indent=1, sort_keys=True)


def decode_json(text: str, nu: float = 1.0, alpha: float = 0.5) -> SpectralField:
    try:
        doc = json.loads(text)
        if doc.get("format") != "NSCF-json":
            raise ConfigError("not an NSCF-json document")
        m = int(doc["m"])
        box = BoxSpec(L=float(doc["L"]), nu=nu, alpha=alpha)
        modes = {}
        for entry in doc["modes"]:
            k = tuple(int(x) for x in entry["k"])
            modes[k] = [complex(re, im) for re, im in entry["u"]]
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"malformed JSON snapshot: {exc}") from exc
    return SpectralField.from_modes(box, m, modes, divfree=bool(doc.get("divfree", False)))


def atomic_write(path, data: bytes | str):
    """Write via a temporary file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_field(path, field: SpectralField, fmt: str | None = None):
    """Write a snapshot; format from ``fmt`` or the file suffix (.json -> JSON)."""
    fmt = fmt or ("json" if str(path).endswith(".json") else "binary")
    if fmt == "json":
        atomic_write(path, encode_json(field))
    elif fmt == "binary":
        atomic_write(path, encode_binary(field))
    else:
        raise ConfigError(f"unknown snapshot format {fmt!r}")


def load_field(path, nu: float = 1.0, alpha: float = 0.5) -> SpectralField:
    data = Path(path).read_bytes()
    if data[:4] == MAGIC:
        return decode_binary(data, nu, alpha)
    return decode_json(data.decode("utf-8"), nu, alpha)
