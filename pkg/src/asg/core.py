"""Aggregate Semantic Grouping: product-quantized token embeddings.

Each D-dimensional embedding is cut into ``m`` contiguous segments of width
``D // m``. Segment positions are clustered into Concept Vectors, either one
codebook per position (separate mode) or one pooled codebook (shared mode),
and every token keeps the ``m`` row indices (ConceptIDs) of its vectors.

Separate mode stores the codebooks stacked into one ``(m*k, D/m)`` matrix,
so codebook ``i`` occupies rows ``[i*k, (i+1)*k)`` and a ConceptID is a
global row index. Shared mode IDs index the single ``(k, D/m)`` codebook.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kmeans as km
from .embed_io import check_embeddings
from .errors import FormatError, ShapeError, ValidationError


class Mode(enum.IntEnum):
    SEPARATE = 0
    SHARED = 1

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper()]
        except KeyError:
            raise ValidationError(f"mode must be 'separate' or 'shared', got {value!r}") from None


@dataclass(frozen=True)
class AsgConfig:
    k: int
    m: int
    D: int
    V: int
    mode: Mode = Mode.SEPARATE
    kmeans: km.KmeansParams | None = None

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        for name in ("k", "m", "D", "V"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.D % self.m:
            raise ValidationError(f"D={self.D} is not divisible by m={self.m}")
        if self.kmeans is None:
            object.__setattr__(self, "kmeans", km.KmeansParams(k=self.k))
        elif self.kmeans.k != self.k:
            raise ValidationError(f"kmeans.k={self.kmeans.k} disagrees with k={self.k}")

    @property
    def seg_dim(self) -> int:
        return self.D // self.m

    @property
    def seed(self) -> int:
        return self.kmeans.seed

    @property
    def codebook_rows(self) -> int:
        return self.k * self.m if self.mode is Mode.SEPARATE else self.k

    def codebook_shape(self) -> tuple[int, int]:
        return self.codebook_rows, self.seg_dim


@dataclass(eq=False)
class AsgModel:
    config: AsgConfig
    codebooks: np.ndarray  # float32 (codebook_rows, D/m)
    ids: np.ndarray  # uint32 (V, m) ConceptIDs
    # final clustering objective per segment (one entry in shared mode); not persisted
    objectives: tuple[float, ...] | None = field(default=None, repr=False)
    # Lloyd objective trace per clustering run; not persisted
    traces: tuple[tuple[float, ...], ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.codebooks = np.ascontiguousarray(self.codebooks, dtype=np.float32)
        self.ids = np.ascontiguousarray(self.ids, dtype=np.uint32)
        validate_model(self)
        self.codebooks.setflags(write=False)
        self.ids.setflags(write=False)

    @property
    def V(self) -> int:
        return self.config.V

    @property
    def D(self) -> int:
        return self.config.D

    @property
    def m(self) -> int:
        return self.config.m

    @property
    def k(self) -> int:
        return self.config.k


def validate_model(model: AsgModel) -> None:
    cfg = model.config
    if model.codebooks.shape != cfg.codebook_shape():
        raise ShapeError(f"codebook shape {model.codebooks.shape} != expected {cfg.codebook_shape()}")
    if model.ids.shape != (cfg.V, cfg.m):
        raise ShapeError(f"ConceptID table shape {model.ids.shape} != expected {(cfg.V, cfg.m)}")
    if not np.isfinite(model.codebooks).all():
        raise ShapeError("codebook contains non-finite values")
    ids = model.ids.astype(np.int64)
    if cfg.mode is Mode.SEPARATE:
        lo = np.arange(cfg.m, dtype=np.int64) * cfg.k
        bad = (ids < lo) | (ids >= lo + cfg.k)
    else:
        bad = ids >= cfg.k
    if bad.any():
        t, i = map(int, np.argwhere(bad)[0])
        raise ShapeError(f"ConceptID {int(ids[t, i])} at token {t}, segment {i} is outside its codebook")


def segment_view(E: np.ndarray, m: int) -> np.ndarray:
    """(V, D) -> (V, m, D/m) view with contiguous segments."""
    V, D = E.shape
    return E.reshape(V, m, D // m)


def train_asg(E, config: AsgConfig, threads: int = 1) -> AsgModel:
    E = check_embeddings(E)
    V, D = E.shape
    if (V, D) != (config.V, config.D):
        raise ShapeError(f"embedding shape {(V, D)} does not match config (V={config.V}, D={config.D})")
    params = config.kmeans
    segs = segment_view(E, config.m)
    if config.mode is Mode.SEPARATE:
        seeds = segment_seeds(params.seed, config.m)
        books, ids = [], np.empty((V, config.m), dtype=np.uint32)
        objectives, traces = [], []
        for i in range(config.m):
            cb, a, trace = _fit_codebook(segs[:, i, :], _reseeded(params, seeds[i]), threads)
            books.append(cb)
            ids[:, i] = a.labels + i * config.k
            objectives.append(a.objective)
            traces.append(tuple(trace))
        codebooks = np.concatenate(books, axis=0)
    else:
        pooled = segs.reshape(V * config.m, config.seg_dim)
        codebooks, a, trace = _fit_codebook(pooled, params, threads)
        ids = a.labels.reshape(V, config.m).astype(np.uint32)
        objectives, traces = [a.objective], [tuple(trace)]
    return AsgModel(config, codebooks, ids, tuple(objectives), tuple(traces))


def segment_seeds(seed: int, m: int) -> list[int]:
    """Independent per-segment seeds derived from one 64-bit seed."""
    ss = np.random.SeedSequence(seed)
    return [int(s.generate_state(1, np.uint64)[0]) for s in ss.spawn(m)]


def _reseeded(params: km.KmeansParams, seed: int) -> km.KmeansParams:
    return km.KmeansParams(k=params.k, max_iters=params.max_iters, tol=params.tol, seed=seed)


def _fit_codebook(points: np.ndarray, params: km.KmeansParams, threads: int):
    if params.k > points.shape[0]:
        raise ValidationError(f"k={params.k} exceeds the {points.shape[0]} points available for clustering")
    centroids, _, trace = km.kmeans(points, params, threads)
    # store as float32, then map every point to its nearest stored vector
    stored = centroids.astype(np.float32)
    return stored, km.assign(points, stored, threads), trace


def _check_token(model, t: int) -> int:
    if not 0 <= t < model.config.V:
        raise ShapeError(f"token index {t} out of range [0, {model.config.V})")
    return int(t)


def concept_ids(model: AsgModel, t: int) -> np.ndarray:
    return model.ids[_check_token(model, t)].copy()


def reconstruct(model: AsgModel, t: int) -> np.ndarray:
    return model.codebooks[model.ids[_check_token(model, t)]].reshape(model.D)


def reconstruct_all(model: AsgModel) -> np.ndarray:
    return model.codebooks[model.ids].reshape(model.V, model.D)


def _hidden(model: AsgModel, H) -> np.ndarray:
    h = np.asarray(H, dtype=np.float64)
    if h.shape[-1] != model.D or h.ndim not in (1, 2):
        raise ShapeError(f"hidden state must have trailing dimension D={model.D}, got shape {h.shape}")
    if not np.isfinite(h).all():
        raise ShapeError("hidden state contains non-finite values")
    return h


def logit(model: AsgModel, H, t: int) -> float:
    """Sum over segments of H_i . u_{t,i}."""
    h = _hidden(model, H)
    if h.ndim != 1:
        raise ShapeError("logit takes a single hidden state")
    u = model.codebooks[model.ids[_check_token(model, t)]].astype(np.float64)
    hs = h.reshape(model.m, model.config.seg_dim)
    return float(sum(hs[i] @ u[i] for i in range(model.m)))


def logits_all(model: AsgModel, H) -> np.ndarray:
    """Logits for every token; ``H`` may be one state (D,) or a batch (n, D).

    Dot products of each hidden segment with every Concept Vector are computed
    once and then gathered through the ConceptID table.
    """
    h = _hidden(model, H)
    single = h.ndim == 1
    hs = h.reshape(-1, model.m, model.config.seg_dim)
    cb = model.codebooks.astype(np.float64)
    ids = model.ids.astype(np.intp)
    if model.config.mode is Mode.SEPARATE:
        k = model.k
        # partial[b, r] = H_{r // k} . codebook[r]
        partial = np.einsum("bmd,mkd->bmk", hs, cb.reshape(model.m, k, -1)).reshape(hs.shape[0], -1)
        out = partial[:, ids].sum(axis=2)
    else:
        partial = np.einsum("bmd,kd->bmk", hs, cb)
        seg = np.arange(model.m)
        out = partial[:, seg[None, :], ids].sum(axis=2)
    return out[0] if single else out


@dataclass(frozen=True)
class CompressionReport:
    V: int
    D: int
    k: int
    m: int
    mode: Mode
    codebook_shape: tuple[int, int]
    original_params: int
    asg_params: int
    embedding_ratio: float
    mapping_bits_per_id: int
    mapping_bytes: int
    mapping_overhead_ratio: float
    reconstruction_mse: float | None = None

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["mode"] = self.mode.name.lower()
        d["codebook_shape"] = list(self.codebook_shape)
        return d


def bits_per_id(k: int) -> int:
    """ceil(log2 k), at least one bit."""
    return max(1, (k - 1).bit_length())


def mapping_overhead(V: int, m: int, k: int) -> int:
    """Bytes needed to store the (V, m) ConceptID table packed at ceil(log2 k) bits per entry."""
    return (V * m * bits_per_id(k) + 7) // 8


def param_report(model_or_config) -> CompressionReport:
    cfg = model_or_config.config if isinstance(model_or_config, AsgModel) else model_or_config
    rows, width = cfg.codebook_shape()
    original = cfg.V * cfg.D
    asg = rows * width
    mapping = mapping_overhead(cfg.V, cfg.m, cfg.k)
    return CompressionReport(
        V=cfg.V,
        D=cfg.D,
        k=cfg.k,
        m=cfg.m,
        mode=cfg.mode,
        codebook_shape=(rows, width),
        original_params=original,
        asg_params=asg,
        embedding_ratio=asg / original,
        mapping_bits_per_id=bits_per_id(cfg.k),
        mapping_bytes=mapping,
        mapping_overhead_ratio=mapping / (original * 4),
    )


# -- model file -------------------------------------------------------------
#
#   b"ASG1" | u16 version | u8 mode | u8 reserved | u32 V, D, k, m | u64 seed
#   b"ASGC" | codebook f32, row-major
#   b"ASGM" | V*m u32 ConceptIDs, row-major
MODEL_MAGIC = b"ASG1"
MODEL_VERSION = 1
CODEBOOK_TAG = b"ASGC"
MAP_TAG = b"ASGM"
_MODEL_HEADER = struct.Struct("<4sHBBIIIIQ")


def model_bytes(model: AsgModel) -> bytes:
    cfg = model.config
    header = _MODEL_HEADER.pack(MODEL_MAGIC, MODEL_VERSION, int(cfg.mode), 0, cfg.V, cfg.D, cfg.k, cfg.m, cfg.seed)
    return b"".join([
        header,
        CODEBOOK_TAG,
        model.codebooks.astype("<f4", copy=False).tobytes(),
        MAP_TAG,
        model.ids.astype("<u4", copy=False).tobytes(),
    ])


def save_model(model: AsgModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def model_from_bytes(raw: bytes, name="<bytes>") -> AsgModel:
    if len(raw) < _MODEL_HEADER.size:
        raise FormatError(f"{name}: file too short for model header")
    magic, version, mode, _res, V, D, k, m, seed = _MODEL_HEADER.unpack_from(raw)
    if magic != MODEL_MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}, expected {MODEL_MAGIC!r}")
    if version != MODEL_VERSION:
        raise FormatError(f"{name}: unsupported model version {version}")
    if mode not in (0, 1):
        raise FormatError(f"{name}: unknown mode byte {mode}")
    try:
        cfg = AsgConfig(k=k, m=m, D=D, V=V, mode=Mode(mode), kmeans=km.KmeansParams(k=k, seed=seed))
    except ValidationError as exc:
        raise ShapeError(f"{name}: inconsistent header: {exc}") from None
    rows, width = cfg.codebook_shape()
    pos = _MODEL_HEADER.size
    cb_len = rows * width * 4
    map_len = V * m * 4
    expected = pos + 4 + cb_len + 4 + map_len
    if len(raw) != expected:
        raise FormatError(f"{name}: file is {len(raw)} bytes, header implies {expected}")
    if raw[pos:pos + 4] != CODEBOOK_TAG:
        raise FormatError(f"{name}: missing {CODEBOOK_TAG!r} section")
    pos += 4
    codebooks = np.frombuffer(raw, dtype="<f4", count=rows * width, offset=pos).reshape(rows, width)
    pos += cb_len
    if raw[pos:pos + 4] != MAP_TAG:
        raise FormatError(f"{name}: missing {MAP_TAG!r} section")
    pos += 4
    ids = np.frombuffer(raw, dtype="<u4", count=V * m, offset=pos).reshape(V, m)
    try:
        return AsgModel(cfg, codebooks, ids)
    except ShapeError as exc:
        raise ShapeError(f"{name}: {exc}") from None


def load_model(path) -> AsgModel:
    return model_from_bytes(Path(path).read_bytes(), str(path))
