"""Embedding matrix and vocabulary I/O plus synthetic test data.

ASGE layout (all little-endian)::

    b"ASGE" | u16 version=1 | u16 reserved=0 | u32 V | u32 D | V*D f32 (row-major)
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import FormatError, ShapeError, ValidationError

ASGE_MAGIC = b"ASGE"
ASGE_VERSION = 1
_HEADER = struct.Struct("<4sHHII")


def check_embeddings(matrix) -> np.ndarray:
    """Return ``matrix`` as a C-contiguous float32 (V, D) array or raise ShapeError."""
    arr = np.ascontiguousarray(matrix, dtype=np.float32)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"embedding matrix must be 2-D with V, D >= 1, got shape {arr.shape}")
    finite = np.isfinite(arr).all(axis=1)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0])
        raise ShapeError(f"non-finite value in embedding row {row}")
    return arr


def save_embeddings(matrix, path) -> None:
    arr = check_embeddings(matrix)
    V, D = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ASGE_MAGIC, ASGE_VERSION, 0, V, D))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def load_embeddings(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FormatError(f"{path}: file too short for ASGE header")
    magic, version, _reserved, V, D = _HEADER.unpack_from(raw)
    if magic != ASGE_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {ASGE_MAGIC!r}")
    if version != ASGE_VERSION:
        raise FormatError(f"{path}: unsupported ASGE version {version}")
    expected = V * D * 4
    payload = raw[_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload holds {len(payload)} bytes, header declares {V}x{D} floats ({expected} bytes)"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(V, D).astype(np.float32)
    return check_embeddings(arr)


def import_csv(path) -> np.ndarray:
    """Read a comma-separated text matrix, one row per line."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise FormatError(f"{path}: no rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise FormatError(f"{path}: rows have differing column counts {sorted(widths)}")
    return check_embeddings(np.array(rows, dtype=np.float32))


class Vocab:
    """Ordered, duplicate-free token list with reverse lookup."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens = list(tokens)
        self._index = {}
        for i, tok in enumerate(self.tokens):
            if tok in self._index:
                raise ValidationError(f"duplicate token {tok!r} at lines {self._index[tok] + 1} and {i + 1}")
            self._index[tok] = i

    def __len__(self):
        return len(self.tokens)

    def __getitem__(self, i: int) -> str:
        return self.tokens[i]

    def __contains__(self, token) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise ValidationError(f"unknown token {token!r}") from None


def load_vocab(path) -> Vocab:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: invalid UTF-8 at byte {exc.start}") from None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return Vocab(lines)


def save_vocab(vocab, path) -> None:
    tokens = vocab.tokens if isinstance(vocab, Vocab) else list(vocab)
    with open(path, "wb") as fh:
        fh.write("".join(t + "\n" for t in tokens).encode("utf-8"))


@dataclass(frozen=True)
class SyntheticSpec:
    n_clusters: int
    V: int
    D: int
    spread: float = 0.1
    seed: int = 0


def generate_synthetic(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian blobs: standard-normal centers plus isotropic noise of std ``spread``.

    Tokens are assigned to clusters round-robin so every cluster is populated.
    Returns ``(embeddings, labels)``.
    """
    if spec.n_clusters < 1 or spec.V < 1 or spec.D < 1:
        raise ValidationError("n_clusters, V and D must be >= 1")
    if spec.n_clusters > spec.V:
        raise ValidationError(f"n_clusters={spec.n_clusters} exceeds V={spec.V}")
    if not spec.spread >= 0:
        raise ValidationError(f"spread must be >= 0, got {spec.spread}")
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.n_clusters, spec.D))
    labels = np.arange(spec.V, dtype=np.int64) % spec.n_clusters
    noise = rng.standard_normal((spec.V, spec.D)) * spec.spread
    return (centers[labels] + noise).astype(np.float32), labels


def synthetic_centers(spec: SyntheticSpec) -> np.ndarray:
    """The float32-rounded cluster centers used by :func:`generate_synthetic`."""
    rng = np.random.default_rng(spec.seed)
    return rng.standard_normal((spec.n_clusters, spec.D)).astype(np.float32)
