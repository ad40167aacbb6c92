"""Latent token stores: a JSON header next to a raw float32 payload.

A store named ``foo`` lives in two files, ``foo.json`` and ``foo.bin``.  The
payload is row-major little-endian float32 with ``count * dim`` entries, and
the header lists each video's contiguous token range and condition label.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

STORE_VERSION = 1
DTYPE_TAG = "float32-le"
TOKEN_ORDER = "video-major; within a video time-major blocks of (H/p)^2 spatial tokens"

_DTYPE = np.dtype("<f4")


class StoreError(ValueError):
    pass


class CorruptStoreError(StoreError):
    pass


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class VideoRecord:
    id: str
    condition: str
    token_offset: int
    token_count: int

    def __post_init__(self):
        if self.token_count <= 0:
            raise StoreError(f"video {self.id!r}: token_count must be positive")
        if not self.condition:
            raise StoreError(f"video {self.id!r}: empty condition label")


@dataclass
class LatentHeader:
    dim: int
    count: int
    videos: list[VideoRecord] = field(default_factory=list)
    version: int = STORE_VERSION
    dtype: str = DTYPE_TAG
    token_order: str = TOKEN_ORDER

    def validate(self) -> None:
        if self.dim <= 0:
            raise StoreError("dim must be positive")
        if self.count < 0:
            raise StoreError("count must be non-negative")
        if self.dtype != DTYPE_TAG:
            raise CorruptStoreError(f"unsupported dtype tag {self.dtype!r}")
        offset = 0
        for v in self.videos:
            if v.token_offset != offset:
                raise CorruptStoreError(
                    f"video {v.id!r} starts at {v.token_offset}, expected {offset}"
                )
            offset += v.token_count
        if offset != self.count:
            raise CorruptStoreError(
                f"video token counts sum to {offset}, header count is {self.count}"
            )

    @property
    def conditions(self) -> list[str]:
        seen: dict[str, None] = {}
        for v in self.videos:
            seen.setdefault(v.condition, None)
        return list(seen)

    def videos_for(self, condition: str) -> list[int]:
        return [i for i, v in enumerate(self.videos) if v.condition == condition]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "dim": self.dim,
            "count": self.count,
            "dtype": self.dtype,
            "token_order": self.token_order,
            "videos": [
                {
                    "id": v.id,
                    "condition": v.condition,
                    "token_offset": v.token_offset,
                    "token_count": v.token_count,
                }
                for v in self.videos
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatentHeader":
        try:
            videos = [
                VideoRecord(
                    id=str(v["id"]),
                    condition=str(v["condition"]),
                    token_offset=int(v["token_offset"]),
                    token_count=int(v["token_count"]),
                )
                for v in d.get("videos", [])
            ]
            return cls(
                dim=int(d["dim"]),
                count=int(d["count"]),
                videos=videos,
                version=int(d.get("version", STORE_VERSION)),
                dtype=str(d.get("dtype", "")),
                token_order=str(d.get("token_order", TOKEN_ORDER)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, StoreError):
                raise
            raise CorruptStoreError(f"malformed header: {exc}") from exc


@dataclass
class LatentBatch:
    data: np.ndarray  # (n, D) float32
    row_video: np.ndarray  # (n,) int

    def __post_init__(self):
        self.data = np.asarray(self.data)
        self.row_video = np.asarray(self.row_video, dtype=np.int64)
        if self.data.ndim != 2:
            raise StoreError(f"data must be 2-D, got shape {self.data.shape}")
        if self.row_video.shape != (self.data.shape[0],):
            raise StoreError("row_video must have one entry per row")

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    def video_rows(self, header: LatentHeader, index: int) -> np.ndarray:
        v = header.videos[index]
        return self.data[v.token_offset : v.token_offset + v.token_count]


@dataclass(frozen=True)
class TokenGeometry:
    frames: int = 16
    temporal_patch: int = 2
    spatial_patch: int = 16
    height: int = 224

    def validate(self) -> None:
        if min(self.frames, self.temporal_patch, self.spatial_patch, self.height) <= 0:
            raise GeometryError("geometry entries must be positive")
        if self.frames % self.temporal_patch:
            raise GeometryError(
                f"frames={self.frames} not divisible by temporal_patch={self.temporal_patch}"
            )
        if self.height % self.spatial_patch:
            raise GeometryError(
                f"height={self.height} not divisible by spatial_patch={self.spatial_patch}"
            )

    @property
    def time_steps(self) -> int:
        return self.frames // self.temporal_patch

    @property
    def spatial_tokens(self) -> int:
        return (self.height // self.spatial_patch) ** 2


def token_count(geom: TokenGeometry) -> int:
    """Number of tubelet tokens per clip: (T / t_p) * (H / p)**2."""
    geom.validate()
    return geom.time_steps * geom.spatial_tokens


def _paths(path) -> tuple[Path, Path]:
    p = Path(path)
    if p.suffix in (".json", ".bin"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".bin")


def load_store(path) -> tuple[LatentHeader, LatentBatch]:
    head_path, bin_path = _paths(path)
    try:
        header = LatentHeader.from_dict(json.loads(head_path.read_text()))
    except json.JSONDecodeError as exc:
        raise CorruptStoreError(f"{head_path}: {exc}") from exc
    header.validate()

    expected = header.count * header.dim * _DTYPE.itemsize
    size = os.path.getsize(bin_path)
    if size != expected:
        raise CorruptStoreError(
            f"{bin_path}: payload has {size} bytes, header implies {expected}"
        )
    data = np.fromfile(bin_path, dtype=_DTYPE).reshape(header.count, header.dim)
    if not np.isfinite(data).all():
        raise CorruptStoreError(f"{bin_path}: payload contains non-finite values")

    row_video = np.empty(header.count, dtype=np.int64)
    for i, v in enumerate(header.videos):
        row_video[v.token_offset : v.token_offset + v.token_count] = i
    return header, LatentBatch(data, row_video)


def save_store(header: LatentHeader, batch: LatentBatch, path) -> None:
    header.validate()
    if batch.data.shape != (header.count, header.dim):
        raise StoreError(
            f"batch shape {batch.data.shape} does not match header "
            f"({header.count}, {header.dim})"
        )
    data = np.ascontiguousarray(batch.data, dtype=_DTYPE)
    if not np.isfinite(data).all():
        raise StoreError("refusing to write non-finite latent vectors")

    head_path, bin_path = _paths(path)
    head_path.parent.mkdir(parents=True, exist_ok=True)
    data.tofile(bin_path)
    head_path.write_text(json.dumps(header.to_dict(), indent=2) + "\n")


def pool_temporal(video_tokens: np.ndarray, geom: TokenGeometry) -> np.ndarray:
    """Average each time step's spatial tokens, giving one row per step."""
    n = token_count(geom)
    x = np.asarray(video_tokens)
    if x.ndim != 2 or x.shape[0] != n:
        raise GeometryError(f"expected ({n}, D) tokens, got {x.shape}")
    return x.reshape(geom.time_steps, geom.spatial_tokens, x.shape[1]).mean(axis=1)


def flatten_spatial(videos: Sequence[np.ndarray] | np.ndarray) -> LatentBatch:
    """Stack per-video token matrices into one (B * N, D) batch, video-major."""
    if isinstance(videos, np.ndarray) and videos.ndim == 3:
        b, n, d = videos.shape
        return LatentBatch(videos.reshape(b * n, d), np.repeat(np.arange(b), n))
    mats = [np.asarray(v) for v in videos]
    if not mats:
        raise GeometryError("no videos to flatten")
    shapes = {m.shape for m in mats}
    if len(shapes) != 1 or mats[0].ndim != 2:
        raise GeometryError(f"ragged video token matrices: {sorted(shapes)}")
    n = mats[0].shape[0]
    return LatentBatch(np.concatenate(mats, axis=0), np.repeat(np.arange(len(mats)), n))
