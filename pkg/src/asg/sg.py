"""Semantic Grouping baseline: one full-width centroid per token cluster."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kmeans as km
from .core import AsgConfig, param_report
from .embed_io import check_embeddings
from .errors import FormatError, ShapeError, ValidationError


@dataclass(eq=False)
class SgModel:
    centroids: np.ndarray  # float32 (k_sg, D)
    map: np.ndarray  # uint32 (V,)
    seed: int = 0
    objective: float | None = None

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        self.map = np.ascontiguousarray(self.map, dtype=np.uint32)
        if self.centroids.ndim != 2 or self.map.ndim != 1:
            raise ShapeError("SG model needs a (k_sg, D) centroid table and a (V,) map")
        if not np.isfinite(self.centroids).all():
            raise ShapeError("SG centroids contain non-finite values")
        if self.map.size and int(self.map.max()) >= self.k_sg:
            t = int(np.argmax(self.map >= self.k_sg))
            raise ShapeError(f"cluster index {int(self.map[t])} of token {t} exceeds k_sg={self.k_sg}")

    @property
    def k_sg(self) -> int:
        return self.centroids.shape[0]

    @property
    def V(self) -> int:
        return self.map.shape[0]

    @property
    def D(self) -> int:
        return self.centroids.shape[1]


def train_sg(E, k_sg: int, params: km.KmeansParams | None = None, threads: int = 1) -> SgModel:
    E = check_embeddings(E)
    if k_sg > E.shape[0]:
        raise ValidationError(f"k_sg={k_sg} exceeds V={E.shape[0]}")
    if params is None:
        params = km.KmeansParams(k=k_sg)
    elif params.k != k_sg:
        params = km.KmeansParams(k=k_sg, max_iters=params.max_iters, tol=params.tol, seed=params.seed)
    centroids, _, _ = km.kmeans(E, params, threads)
    stored = centroids.astype(np.float32)
    a = km.assign(E, stored, threads)
    return SgModel(stored, a.labels, params.seed, a.objective)


def sg_reconstruct(model: SgModel, t: int) -> np.ndarray:
    if not 0 <= t < model.V:
        raise ShapeError(f"token index {t} out of range [0, {model.V})")
    return model.centroids[model.map[t]].copy()


def sg_reconstruct_all(model: SgModel) -> np.ndarray:
    return model.centroids[model.map]


def matched_budget_k(asg: AsgConfig) -> int:
    """Centroid count giving SG the same parameter budget as the ASG codebooks."""
    q, r = divmod(param_report(asg).asg_params, asg.D)
    # round half up
    return q + (1 if 2 * r >= asg.D else 0)


#   b"ASGS" | u16 version | u32 V, D, k_sg | u64 seed | k_sg*D f32 | V u32
SG_MAGIC = b"ASGS"
SG_VERSION = 1
_SG_HEADER = struct.Struct("<4sHIIIQ")


def sg_bytes(model: SgModel) -> bytes:
    header = _SG_HEADER.pack(SG_MAGIC, SG_VERSION, model.V, model.D, model.k_sg, model.seed)
    return header + model.centroids.astype("<f4", copy=False).tobytes() + model.map.astype("<u4", copy=False).tobytes()


def save_sg(model: SgModel, path) -> None:
    Path(path).write_bytes(sg_bytes(model))


def load_sg(path) -> SgModel:
    raw = Path(path).read_bytes()
    if len(raw) < _SG_HEADER.size:
        raise FormatError(f"{path}: file too short for SG header")
    magic, version, V, D, k_sg, seed = _SG_HEADER.unpack_from(raw)
    if magic != SG_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {SG_MAGIC!r}")
    if version != SG_VERSION:
        raise FormatError(f"{path}: unsupported SG version {version}")
    expected = _SG_HEADER.size + 4 * (k_sg * D + V)
    if len(raw) != expected:
        raise FormatError(f"{path}: file is {len(raw)} bytes, header implies {expected}")
    pos = _SG_HEADER.size
    centroids = np.frombuffer(raw, dtype="<f4", count=k_sg * D, offset=pos).reshape(k_sg, D)
    labels = np.frombuffer(raw, dtype="<u4", count=V, offset=pos + 4 * k_sg * D)
    return SgModel(centroids, labels, seed)
