"""Synthetic latent stores and Gaussian-noise baselines.

Tokens are drawn from a mixture of directions on the hypersphere and scaled
to a large, nearly constant norm, which is the regime a frozen video encoder
puts its outputs in.  Each condition carries its own mixture, so sharing a
direction between conditions builds a common cluster and giving one
condition an extra component builds satellite mass.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .latent_store import LatentBatch, LatentHeader, VideoRecord


class SynthSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Component:
    direction: int  # direction seed
    weight: float
    negate: bool = False


@dataclass(frozen=True)
class ConditionSpec:
    label: str
    mixture: tuple[Component, ...]


@dataclass
class SynthSpec:
    dim: int = 64
    conditions: list[ConditionSpec] = field(default_factory=list)
    videos_per_condition: int = 10
    tokens_per_video: int = 196
    norm_mean: float = 97.70
    norm_std: float = 0.81
    # expected norm of the isotropic perturbation added to a unit direction
    angular_noise: float = 0.3
    # pairwise cosine between directions is roughly compactness**2
    compactness: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.dim < 2:
            raise SynthSpecError("dim must be at least 2")
        if self.norm_mean <= 0 or self.norm_std < 0:
            raise SynthSpecError("need norm_mean > 0 and norm_std >= 0")
        if self.angular_noise < 0:
            raise SynthSpecError("angular_noise must be non-negative")
        if not 0.0 <= self.compactness < 1.0:
            raise SynthSpecError("compactness must lie in [0, 1)")
        if self.videos_per_condition < 1 or self.tokens_per_video < 1:
            raise SynthSpecError("need at least one video and one token per video")
        if not self.conditions:
            raise SynthSpecError("no conditions")
        labels = [c.label for c in self.conditions]
        if len(set(labels)) != len(labels) or not all(labels):
            raise SynthSpecError(f"condition labels must be unique and non-empty: {labels}")
        for c in self.conditions:
            if not c.mixture:
                raise SynthSpecError(f"condition {c.label!r} has an empty mixture")
            w = np.array([m.weight for m in c.mixture], dtype=float)
            if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
                raise SynthSpecError(
                    f"mixture weights of {c.label!r} must be non-negative and sum to 1"
                )

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        conds = []
        for c in d.pop("conditions", []):
            comps = []
            for m in c["mixture"]:
                if isinstance(m, dict):
                    comps.append(
                        Component(int(m["direction"]), float(m["weight"]), bool(m.get("negate", False)))
                    )
                else:
                    comps.append(Component(int(m[0]), float(m[1]), bool(m[2]) if len(m) > 2 else False))
            conds.append(ConditionSpec(str(c["label"]), tuple(comps)))
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise SynthSpecError(f"unknown synth spec fields: {sorted(unknown)}")
        spec = cls(conditions=conds, **d)
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "conditions": [
                {
                    "label": c.label,
                    "mixture": [
                        {"direction": m.direction, "weight": m.weight, "negate": m.negate}
                        for m in c.mixture
                    ],
                }
                for c in self.conditions
            ],
            "videos_per_condition": self.videos_per_condition,
            "tokens_per_video": self.tokens_per_video,
            "norm_mean": self.norm_mean,
            "norm_std": self.norm_std,
            "angular_noise": self.angular_noise,
            "compactness": self.compactness,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class BaselineSpec:
    dim: int
    count: int
    seed: int = 0


def _directions(spec: SynthSpec) -> dict[int, np.ndarray]:
    common = np.random.default_rng([spec.seed, 0]).standard_normal(spec.dim)
    common /= np.linalg.norm(common)
    out = {}
    seeds = {m.direction for c in spec.conditions for m in c.mixture}
    for s in sorted(seeds):
        if s < 0:
            raise SynthSpecError(f"direction seed must be non-negative, got {s}")
        r = np.random.default_rng([spec.seed, 1, s]).standard_normal(spec.dim)
        r /= np.linalg.norm(r)
        a = spec.compactness
        d = a * common + np.sqrt(1.0 - a * a) * r
        norm = np.linalg.norm(d)
        if norm < 1e-12:
            raise SynthSpecError(f"direction {s} is degenerate")
        out[s] = d / norm
    return out


def generate(spec: SynthSpec) -> tuple[LatentHeader, LatentBatch]:
    spec.validate()
    dirs = _directions(spec)
    n_per = spec.tokens_per_video
    videos, blocks = [], []
    offset = 0
    for ci, cond in enumerate(spec.conditions):
        basis = np.stack(
            [(-1.0 if m.negate else 1.0) * dirs[m.direction] for m in cond.mixture]
        )
        weights = np.array([m.weight for m in cond.mixture])
        weights = weights / weights.sum()
        for vi in range(spec.videos_per_condition):
            # one counter-keyed stream per video: adding videos leaves earlier ones intact
            rng = np.random.default_rng([spec.seed, 2, ci, vi])
            comp = rng.choice(len(weights), size=n_per, p=weights)
            noise = rng.standard_normal((n_per, spec.dim)) * (spec.angular_noise / np.sqrt(spec.dim))
            u = basis[comp] + noise
            norms = np.linalg.norm(u, axis=1, keepdims=True)
            if (norms < 1e-12).any():
                raise SynthSpecError("degenerate token direction")
            radius = spec.norm_mean + spec.norm_std * rng.standard_normal((n_per, 1))
            blocks.append((u / norms) * radius)
            videos.append(VideoRecord(f"{cond.label}_{vi:03d}", cond.label, offset, n_per))
            offset += n_per

    data = np.concatenate(blocks).astype(np.float32)
    header = LatentHeader(dim=spec.dim, count=offset, videos=videos)
    row_video = np.repeat(np.arange(len(videos)), n_per)
    return header, LatentBatch(data, row_video)


def generate_baseline(spec: BaselineSpec) -> LatentBatch:
    """I.i.d. standard-normal vectors; deliberately not norm-matched to the store."""
    if spec.count <= 0 or spec.dim <= 0:
        raise SynthSpecError("baseline needs positive count and dim")
    rng = np.random.default_rng([spec.seed, 3])
    data = rng.standard_normal((spec.count, spec.dim), dtype=np.float32)
    return LatentBatch(data, np.zeros(spec.count, dtype=np.int64))


def two_condition_spec(
    kind: str = "separable",
    dim: int = 64,
    videos_per_condition: int = 10,
    tokens_per_video: int = 196,
    seed: int = 0,
) -> SynthSpec:
    """Ready-made two-condition presets used by the demos and tests.

    ``separable``: the conditions' dominant directions point opposite ways.
    ``identical``: both conditions come from the same generator.
    ``compact``: a diffuse shared pocket of overlapping clusters with the
    same dominant cluster in both conditions; condition ``b`` moves a quarter
    of its mass onto a satellite direction.
    """
    shared = [Component(1, 0.40), Component(2, 0.20), Component(3, 0.15), Component(4, 0.15), Component(5, 0.10)]
    if kind == "separable":
        a = ConditionSpec("a", (Component(1, 0.8), Component(2, 0.2)))
        b = ConditionSpec("b", (Component(1, 0.8, negate=True), Component(3, 0.2)))
        compact, noise = 0.0, 0.3
    elif kind == "identical":
        a = ConditionSpec("a", tuple(shared))
        b = ConditionSpec("b", tuple(shared))
        compact, noise = 0.7, 2.5
    elif kind == "compact":
        a = ConditionSpec("a", tuple(shared))
        b = ConditionSpec(
            "b",
            (Component(1, 0.40), Component(2, 0.10), Component(3, 0.10),
             Component(4, 0.10), Component(5, 0.05), Component(6, 0.25, negate=True)),
        )
        compact, noise = 0.7, 2.5
    else:
        raise SynthSpecError(f"unknown preset {kind!r}")
    return SynthSpec(
        dim=dim,
        conditions=[a, b],
        videos_per_condition=videos_per_condition,
        tokens_per_video=tokens_per_video,
        angular_noise=noise,
        compactness=compact,
        seed=seed,
    )
