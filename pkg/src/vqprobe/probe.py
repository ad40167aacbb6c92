"""Frozen evaluation pipeline: projection + nearest codeword, no state updates."""
from __future__ import annotations

import hashlib

import numpy as np

from .codebook import Codebook
from .projection import ProjectionParams, forward

_CHUNK = 8192


class FrozenProbe:
    def __init__(self, params: ProjectionParams, codebook: Codebook):
        self.params = params.copy()
        self.codebook = codebook.copy()
        for a in (self.params.W, self.params.b, self.codebook.codewords):
            a.flags.writeable = False

    @property
    def K(self) -> int:
        return self.codebook.K

    def project(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        out = np.empty((z.shape[0], self.params.d_proj))
        for i in range(0, z.shape[0], _CHUNK):
            out[i : i + _CHUNK], _ = forward(self.params, z[i : i + _CHUNK])
        return out

    def symbols(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(z)
        out = np.empty(z.shape[0], dtype=np.int64)
        for i in range(0, z.shape[0], _CHUNK):
            zh, _ = forward(self.params, z[i : i + _CHUNK])
            out[i : i + _CHUNK] = self.codebook.assign(zh).symbols
        return out

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for a in (self.params.W, self.params.b, self.codebook.codewords):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()
