"""Latent stores: token geometry, the on-disk format, and pooling.

A frozen video encoder turns a 16-frame, 224x224 clip into tubelet tokens.
Everything downstream works on those token vectors, so we start by building
a small store by hand and reading it back.
"""
import tempfile
from pathlib import Path

import numpy as np

from vqprobe import (
    LatentBatch,
    LatentHeader,
    TokenGeometry,
    VideoRecord,
    flatten_spatial,
    load_store,
    pool_temporal,
    save_store,
    token_count,
)

geom = TokenGeometry(frames=16, temporal_patch=2, spatial_patch=16, height=224)
print("tokens per clip:", token_count(geom), f"= {geom.time_steps} steps x {geom.spatial_tokens} spatial")

# two fake clips with 8-dim latents
rng = np.random.default_rng(0)
clips = rng.standard_normal((2, token_count(geom), 8)).astype(np.float32)
batch = flatten_spatial(clips)
print("flattened batch:", batch.data.shape, "rows of video 1 start at", np.argmax(batch.row_video == 1))

# one row per time step, averaging the 196 spatial tokens of that step
pooled = pool_temporal(clips[0], geom)
print("pooled clip 0:", pooled.shape)

header = LatentHeader(
    dim=8,
    count=len(batch),
    videos=[VideoRecord("clip_a", "push", 0, 1568), VideoRecord("clip_b", "pull", 1568, 1568)],
)
with tempfile.TemporaryDirectory() as tmp:
    stem = Path(tmp) / "toy"
    save_store(header, batch, stem)
    print("files:", sorted(p.name for p in Path(tmp).iterdir()))
    print("payload bytes:", (Path(tmp) / "toy.bin").stat().st_size, "=", len(batch), "x 8 x 4")
    h2, b2 = load_store(stem)
    print("round trip bit-exact:", b2.data.tobytes() == batch.data.tobytes(), "conditions:", h2.conditions)

# a NaN never reaches disk
bad = LatentBatch(batch.data.copy(), batch.row_video)
bad.data[5, 2] = np.nan
try:
    save_store(header, bad, Path(tempfile.gettempdir()) / "never_written")
except ValueError as exc:
    print("rejected:", exc)
