"""Diagnosis battery, pass table and JSON artifacts (report, dictionary, checkpoint)."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import stats
from .codebook import Codebook
from .latent_store import LatentBatch, LatentHeader
from .probe import FrozenProbe
from .projection import ProjectionParams
from .synth import BaselineSpec, generate_baseline

SCHEMA_VERSION = 1

TOKEN_CAVEAT = (
    "token-level analysis treats every spatial token as an independent observation; "
    "tokens of one video share context, so p-values are optimistic (pseudo-replication)"
)


class UnknownConditionError(KeyError):
    pass


@dataclass(frozen=True)
class Thresholds:
    h1_min: float = 0.95
    p_max: float = 0.01
    mi_ratio_min: float = 5.0
    active_ratio_min: float = 0.30
    perplexity_fraction: float = 0.4


@dataclass(frozen=True)
class Intervention:
    name: str
    condition_a: str
    condition_b: str

    @classmethod
    def parse_list(cls, doc) -> list["Intervention"]:
        items = doc.get("interventions", doc) if isinstance(doc, dict) else doc
        return [cls(str(d["name"]), str(d["condition_a"]), str(d["condition_b"])) for d in items]


def round_floats(obj, digits: int = 9):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return obj
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [round_floats(v, digits) for v in obj]
    if isinstance(obj, np.generic):
        return round_floats(obj.item(), digits)
    return obj


def dumps(obj, digits: int | None = 9) -> str:
    if digits is not None:
        obj = round_floats(obj, digits)
    return json.dumps(obj, indent=2) + "\n"


def evaluate_pass_table(h1_mean: float | None, interventions, active_ratio: float,
                        th: Thresholds = Thresholds()) -> list[dict]:
    """One row per criterion with ``value``, ``threshold``, ``comparison`` and ``pass``."""
    rows = []
    if h1_mean is not None:
        rows.append({"criterion": "h1_consistency", "value": h1_mean, "threshold": th.h1_min,
                     "comparison": ">", "pass": bool(h1_mean > th.h1_min)})
    for r in interventions:
        rows.append({"criterion": f"h2_chi2_p:{r.name}", "value": r.p, "threshold": th.p_max,
                     "comparison": "<", "pass": bool(r.p < th.p_max)})
    if interventions:
        worst = min(r.mi_ratio for r in interventions)
        rows.append({"criterion": "h2_mi_ratio_min", "value": worst, "threshold": th.mi_ratio_min,
                     "comparison": ">", "pass": bool(worst > th.mi_ratio_min)})
    rows.append({"criterion": "codebook_active", "value": active_ratio,
                 "threshold": th.active_ratio_min, "comparison": ">",
                 "pass": bool(active_ratio > th.active_ratio_min)})
    return rows


def _h1_indices(n_videos: int, k: int) -> list[int]:
    if n_videos == 0 or k <= 0:
        return []
    return sorted({int(round(x)) for x in np.linspace(0, n_videos - 1, min(k, n_videos))})


def diagnose(
    header: LatentHeader,
    batch: LatentBatch,
    probe: FrozenProbe,
    interventions: list[Intervention],
    training: dict,
    unit: str = stats.VIDEO_MODE,
    seed: int = 0,
    h1_videos: int = 6,
    repeats: int = 20,
    baseline_videos: int = 30,
    alpha: float = 1.0,
    thresholds: Thresholds = Thresholds(),
) -> tuple[dict, dict]:
    """Run H1, every H2 intervention and the codebook-health check.

    Returns ``(report, dictionary)`` as plain JSON-ready dicts.
    """
    if unit not in stats.UNITS:
        raise ValueError(f"unit must be one of {stats.UNITS}")
    known = set(header.conditions)
    for iv in interventions:
        for c in (iv.condition_a, iv.condition_b):
            if c not in known:
                raise UnknownConditionError(f"intervention {iv.name!r}: unknown condition {c!r}")

    symbols = probe.symbols(batch.data)
    per_video = [symbols[v.token_offset : v.token_offset + v.token_count] for v in header.videos]
    labels = [v.condition for v in header.videos]

    h1_idx = _h1_indices(len(header.videos), h1_videos)
    h1 = stats.h1_report(probe, [batch.video_rows(header, i) for i in h1_idx], repeats)

    group = int(np.median([v.token_count for v in header.videos])) if header.videos else 1
    base = generate_baseline(BaselineSpec(header.dim, baseline_videos * group, seed))
    base_mi = stats.baseline_mi(probe, base, unit=unit, group_size=group)

    results = []
    for iv in interventions:
        table = stats.build_contingency(per_video, labels, probe.K, unit,
                                        conditions=[iv.condition_a, iv.condition_b])
        results.append(stats.intervention(iv.name, table, base_mi, alpha,
                                          thresholds.p_max, thresholds.mi_ratio_min))

    active = float(training.get("active_ratio", 0.0))
    table_rows = evaluate_pass_table(h1.mean if h1.per_video else None, results, active, thresholds)
    K = probe.K
    report = {
        "schema_version": SCHEMA_VERSION,
        "unit": unit,
        "caveat": TOKEN_CAVEAT if unit == stats.TOKEN else None,
        "thresholds": {**asdict(thresholds), "perplexity_min": thresholds.perplexity_fraction * K},
        "training": {k: training.get(k) for k in (
            "steps", "final_commit_loss", "final_perplexity", "eval_perplexity",
            "active_ratio", "convergence", "stabilized") if k in training},
        "h1": {
            "videos": [header.videos[i].id for i in h1_idx],
            "per_video": h1.per_video,
            "mean": h1.mean if h1.per_video else None,
            "repeats": repeats,
        },
        "h2": [
            {**{k: v for k, v in asdict(r).items() if k not in ("p_threshold", "mi_ratio_threshold")},
             "pass": r.passed}
            for r in results
        ],
        "baseline_mi": base_mi,
        "pass_table": table_rows,
        "pass": all(row["pass"] for row in table_rows),
    }
    dictionary = build_dictionary(probe, per_video, labels, header.conditions, interventions, unit, symbols)
    return report, dictionary


def build_dictionary(probe, per_video, labels, conditions, interventions, unit, symbols) -> dict:
    K = probe.K
    table = stats.build_contingency(per_video, labels, K, unit, conditions=conditions)
    dists = table.distributions()

    def entry(i):
        k = int(np.argmax(table.counts[i]))
        return {"dominant_symbol": k, "dominant_mass": float(dists[i, k]),
                "distribution": dists[i].tolist()}

    cond_map = {c: entry(i) for i, c in enumerate(conditions)}
    human = {}
    for iv in interventions:
        for c in (iv.condition_a, iv.condition_b):
            human[f"{iv.name}={c}"] = cond_map[c]
    return {
        "schema_version": SCHEMA_VERSION,
        "unit": unit,
        "K": K,
        "codebook": {"codewords": probe.codebook.codewords.tolist()},
        "usage": np.bincount(symbols, minlength=K).tolist(),
        "conditions": cond_map,
        "human_labels": human,
    }


def checkpoint_dict(params: ProjectionParams, codebook: Codebook, config: dict, summary: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "config": config,
        "params": {"W": params.W.tolist(), "b": params.b.tolist(), "ln_eps": params.ln_eps},
        "codebook": codebook.to_dict(),
        "summary": summary,
    }


def load_checkpoint(doc: dict) -> tuple[ProjectionParams, Codebook, dict]:
    p = doc["params"]
    params = ProjectionParams(np.array(p["W"]), np.array(p["b"]), float(p["ln_eps"]))
    return params, Codebook.from_dict(doc["codebook"]), doc.get("summary", {})
