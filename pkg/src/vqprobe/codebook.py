"""EMA codebook on the unit hypersphere."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# rows whose component variance is within this relative distance of the max
# count as tied; after standardization + L2 every row has variance ~= 1/d
VARIANCE_TIE_RTOL = 1e-9


def _normalize_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


@dataclass
class AssignmentBatch:
    symbols: np.ndarray
    distances: np.ndarray | None = None


class Codebook:
    """K unit codewords with EMA hit counts ``N``, EMA sums ``M`` and usage counters.

    ``usage`` counts hits since the last :meth:`reset_usage`; the trainer
    clears it every ``usage_window`` steps so the active ratio describes recent use.
    """

    def __init__(self, codewords, ema_counts=None, ema_sums=None, usage=None,
                 gamma=0.90, eps=1e-5, tau=0.01, reset_interval=200):
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        cw = np.array(codewords, dtype=np.float64)
        # rows that are already unit length are kept bit-for-bit (checkpoint round trips)
        off = np.abs(np.linalg.norm(cw, axis=1) - 1.0) > 1e-12
        cw[off] = _normalize_rows(cw[off])
        self.codewords = cw
        K = self.codewords.shape[0]
        self.ema_counts = np.ones(K) if ema_counts is None else np.array(ema_counts, dtype=np.float64)
        self.ema_sums = self.codewords.copy() if ema_sums is None else np.array(ema_sums, dtype=np.float64)
        self.usage = np.zeros(K, dtype=np.int64) if usage is None else np.array(usage, dtype=np.int64)
        self.gamma = float(gamma)
        self.eps = float(eps)
        self.tau = float(tau)
        self.reset_interval = int(reset_interval)

    @property
    def K(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]

    @classmethod
    def init_from_samples(cls, pool: np.ndarray, K: int, rng=None, **kw) -> "Codebook":
        pool = np.asarray(pool, dtype=np.float64)
        if pool.shape[0] < K:
            raise ValueError(f"need at least K={K} pool rows, got {pool.shape[0]}")
        rng = np.random.default_rng(rng)
        idx = rng.choice(pool.shape[0], size=K, replace=False)
        return cls(pool[idx], **kw)

    def copy(self) -> "Codebook":
        return Codebook(self.codewords.copy(), self.ema_counts.copy(), self.ema_sums.copy(),
                        self.usage.copy(), self.gamma, self.eps, self.tau, self.reset_interval)

    def assign(self, z_hat: np.ndarray, with_distances: bool = False) -> AssignmentBatch:
        z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
        sims = z_hat @ self.codewords.T
        # np.argmax returns the first maximal index: ties go to the lowest symbol
        symbols = np.argmax(sims, axis=1)
        dist = 2.0 * (1.0 - sims) if with_distances else None
        return AssignmentBatch(symbols, dist)

    def ema_update(self, z_hat: np.ndarray, assignment: AssignmentBatch) -> None:
        z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
        s = assignment.symbols
        hits = np.bincount(s, minlength=self.K).astype(np.float64)
        sums = np.zeros_like(self.ema_sums)
        np.add.at(sums, s, z_hat)

        g = self.gamma
        self.ema_counts = g * self.ema_counts + (1.0 - g) * hits
        self.ema_sums = g * self.ema_sums + (1.0 - g) * sums
        self.codewords = _normalize_rows(self.ema_sums / (self.ema_counts + self.eps)[:, None])
        self.usage += hits.astype(np.int64)

    def dead_mask(self) -> np.ndarray:
        total = self.ema_counts.sum()
        if total <= 0:
            return np.ones(self.K, dtype=bool)
        return self.ema_counts / total < self.tau / self.K

    def dead_code_reset(self, z_hat: np.ndarray, rng=None) -> list[int]:
        """Replace dead entries with the highest-variance rows of the current batch.

        Variance is taken over each row's own components.  Near-ties (see
        ``VARIANCE_TIE_RTOL``) are broken with ``rng`` when given, otherwise
        toward the lowest row index.  Several dead entries receive distinct rows.
        """
        dead = np.flatnonzero(self.dead_mask())
        if dead.size == 0:
            return []
        z_hat = np.atleast_2d(np.asarray(z_hat, dtype=np.float64))
        if z_hat.shape[0] == 0:
            log.warning("dead-code reset skipped: empty batch")
            return []

        var = z_hat.var(axis=1)
        order = np.argsort(-var, kind="stable")
        tied = order[var[order] >= var[order[0]] * (1.0 - VARIANCE_TIE_RTOL)]
        if rng is not None:
            tied = np.random.default_rng(rng).permutation(tied)
        rest = order[len(tied):]
        picks = np.concatenate([tied, rest])

        reset = []
        for j, k in enumerate(dead):
            row = z_hat[picks[j % len(picks)]]
            self.codewords[k] = row / np.linalg.norm(row)
            self.ema_counts[k] = 1.0
            self.ema_sums[k] = self.codewords[k]
            reset.append(int(k))
        return reset

    def perplexity(self) -> float:
        return perplexity(self.ema_counts)

    def active_ratio(self, threshold: int = 1) -> float:
        return float(np.mean(self.usage >= threshold))

    def reset_usage(self) -> None:
        self.usage[:] = 0

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "dim": self.dim,
            "gamma": self.gamma,
            "eps": self.eps,
            "tau": self.tau,
            "reset_interval": self.reset_interval,
            "codewords": self.codewords.tolist(),
            "ema_counts": self.ema_counts.tolist(),
            "ema_sums": self.ema_sums.tolist(),
            "usage": self.usage.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        return cls(d["codewords"], d["ema_counts"], d["ema_sums"], d["usage"],
                   d["gamma"], d["eps"], d["tau"], d["reset_interval"])


def half_life(gamma: float) -> float:
    """Steps for an EMA with decay ``gamma`` to forget half its mass."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    return math.log(2.0) / math.log(1.0 / gamma)


def perplexity(counts) -> float:
    """exp of the entropy of the normalized counts; 1 for collapse, K for uniform use."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("perplexity of an all-zero count vector")
    p = counts / total
    p = p[p > 0]
    return float(np.exp(-np.sum(p * np.log(p))))
