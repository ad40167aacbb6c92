"""Quantizer training loop, convergence monitor and ablation grid."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .codebook import Codebook, perplexity
from .probe import FrozenProbe
from .projection import (
    AdamState,
    LRSchedule,
    ProjectionParams,
    TrainingAbort,
    adam_step,
    backward,
    commitment_loss,
    forward,
)

log = logging.getLogger(__name__)

INIT_POOL_SIZE = 512
LOW_LOSS_FLOOR = 1e-8


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    steps: int = 3000
    batch_size: int = 64
    beta: float = 2.0
    gamma: float = 0.90
    K: int = 8
    d_proj: int = 256
    eta0: float = 1e-3
    eta_min: float = 1e-4
    t_max: int | None = None  # defaults to steps
    reset_interval: int = 200
    # usage counters are cleared every usage_window steps; 1 = per-batch hits
    usage_window: int = 1
    tau: float = 0.01
    ema_eps: float = 1e-5
    ln_eps: float = 1e-5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    convergence_window: int = 200
    convergence_rel_tol: float = 1e-3
    seed: int = 0

    def validate(self) -> None:
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.K < 2:
            raise ConfigError("K must be >= 2")
        if self.d_proj < 2:
            raise ConfigError("d_proj must be >= 2")
        if not self.eta0 >= self.eta_min > 0:
            raise ConfigError("need eta0 >= eta_min > 0")
        if self.reset_interval < 1 or self.usage_window < 1 or self.convergence_window < 2:
            raise ConfigError("reset_interval, usage_window >= 1 and convergence_window >= 2 required")

    @property
    def schedule(self) -> LRSchedule:
        return LRSchedule(self.eta0, self.eta_min, self.t_max or self.steps)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepRecord:
    step: int
    lr: float
    commit_loss: float
    perplexity: float
    active_ratio: float


@dataclass
class TrainLog:
    records: list[StepRecord] = field(default_factory=list)
    resets: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    CSV_FIELDS = ("step", "lr", "commit_loss", "perplexity", "active_ratio")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_FIELDS)
        for r in self.records:
            w.writerow([r.step, f"{r.lr:.9g}", f"{r.commit_loss:.9g}",
                        f"{r.perplexity:.9g}", f"{r.active_ratio:.9g}"])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TrainLog":
        rows = list(csv.DictReader(io.StringIO(text)))
        recs = [
            StepRecord(int(r["step"]), float(r["lr"]), float(r["commit_loss"]),
                       float(r["perplexity"]), float(r["active_ratio"]))
            for r in rows
        ]
        return cls(recs)


def _sample_rows(data: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.asarray(data[idx], dtype=np.float64)


def init_pipeline(data: np.ndarray, config: TrainConfig, rng: np.random.Generator):
    params = ProjectionParams.init(data.shape[1], config.d_proj, rng, config.ln_eps)
    n = data.shape[0]
    pool_idx = rng.choice(n, size=min(n, INIT_POOL_SIZE), replace=False)
    pool, _ = forward(params, _sample_rows(data, np.sort(pool_idx)))
    codebook = Codebook.init_from_samples(
        pool, config.K, rng, gamma=config.gamma, eps=config.ema_eps,
        tau=config.tau, reset_interval=config.reset_interval,
    )
    return params, codebook


def evaluate(probe: FrozenProbe, data: np.ndarray) -> dict:
    """Fresh pass over every row: usage counts, perplexity and active ratio."""
    counts = np.bincount(probe.symbols(data), minlength=probe.K)
    return {
        "counts": counts.tolist(),
        "perplexity": perplexity(counts),
        "active_ratio": float(np.mean(counts > 0)),
    }


def run_stage_a(data, config: TrainConfig, progress=None):
    """Train projection + codebook on latent rows ``data`` (n, D).

    Returns ``(params, codebook, log)``.  Fully determined by the data bytes
    and the config (including its seed).
    """
    config.validate()
    data = getattr(data, "data", data)
    if data.shape[0] == 0:
        raise ValueError("empty latent store")
    if data.shape[0] < config.K:
        raise ValueError(f"store has fewer rows than K={config.K}")

    ss = np.random.SeedSequence(config.seed)
    sample_rng, init_rng, reset_rng = (np.random.default_rng(s) for s in ss.spawn(3))
    params, codebook = init_pipeline(data, config, init_rng)
    adam = AdamState.zeros_like(params, beta1=config.adam_beta1,
                                beta2=config.adam_beta2, eps=config.adam_eps)
    schedule = config.schedule
    tlog = TrainLog()
    n = data.shape[0]

    for step in range(1, config.steps + 1):
        z = _sample_rows(data, sample_rng.integers(0, n, size=config.batch_size))
        z_hat, cache = forward(params, z)
        assignment = codebook.assign(z_hat)
        targets = codebook.codewords[assignment.symbols]
        loss = commitment_loss(z_hat, targets, config.beta)
        if not np.isfinite(loss):
            tlog.summary = {"aborted_at": step, "reason": "non-finite loss"}
            raise TrainingAbort(f"non-finite commitment loss at step {step}")
        lr = schedule.lr_at(min(step - 1, schedule.t_max))
        adam_step(params, adam, backward(params, cache, targets, config.beta), lr)
        codebook.ema_update(z_hat, assignment)

        tlog.records.append(StepRecord(step, lr, loss, codebook.perplexity(), codebook.active_ratio()))
        if step % config.reset_interval == 0:
            reset = codebook.dead_code_reset(z_hat, reset_rng)
            if reset:
                tlog.resets.append({"step": step, "entries": reset})
        if step % config.usage_window == 0:
            codebook.reset_usage()
        if progress is not None:
            progress(step)

    status, stabilized = "not_converged", False
    if len(tlog.records) >= config.convergence_window:
        status, stabilized = check_convergence(tlog, config.convergence_window, config.convergence_rel_tol)
    ev = evaluate(FrozenProbe(params, codebook), data)
    last = tlog.records[-1]
    tail = tlog.column("active_ratio")[-config.convergence_window:]
    tlog.summary = {
        "steps": config.steps,
        "final_commit_loss": last.commit_loss,
        "final_perplexity": last.perplexity,
        "eval_perplexity": ev["perplexity"],
        # per-batch active ratio averaged over the final window
        "active_ratio": float(tail.mean()),
        "eval_active_ratio": ev["active_ratio"],
        "eval_counts": ev["counts"],
        "convergence": status,
        "stabilized": stabilized,
        "resets": len(tlog.resets),
    }
    return params, codebook, tlog


def _rel_change(values: np.ndarray) -> float:
    half = len(values) // 2
    a, b = values[:half].mean(), values[half:].mean()
    return abs(b - a) / abs(a) if a != 0 else float("inf")


def check_convergence(tlog: TrainLog, window: int = 200, rel_tol: float = 1e-3,
                      plateau_tol: float = 0.05):
    """Return ``(status, stabilized)`` for the last ``window`` records.

    status is ``converged`` when the loss mean moved by at most ``rel_tol``
    (relative) between the window's halves, ``undefined_low_loss`` when the
    window's mean loss is below 1e-8, otherwise ``not_converged``.
    ``stabilized`` reports whether perplexity plateaued over the same window.
    """
    if window < 2 or len(tlog.records) < window:
        raise ValueError(f"need at least {window} records, have {len(tlog.records)}")
    recent = tlog.records[-window:]
    loss = np.array([r.commit_loss for r in recent])
    ppl = np.array([r.perplexity for r in recent])
    stabilized = bool(_rel_change(ppl) <= plateau_tol)
    if loss.mean() < LOW_LOSS_FLOOR:
        return "undefined_low_loss", stabilized
    status = "converged" if _rel_change(loss) <= rel_tol else "not_converged"
    return status, stabilized


def classify_outcome(active_ratio: float, final_perplexity: float, K: int,
                     active_threshold: float = 0.30, perplexity_fraction: float = 0.4) -> str:
    if active_ratio < 0.05:
        return "collapse"
    if active_ratio > active_threshold and final_perplexity > perplexity_fraction * K:
        return "stabilized"
    return "degraded"


def ablation_grid(data, configs: list[TrainConfig]) -> list[dict]:
    if not configs:
        raise ConfigError("ablation grid needs at least one config")
    rows = []
    for cfg in configs:
        _, _, tlog = run_stage_a(data, cfg)
        s = tlog.summary
        rows.append({
            "gamma": cfg.gamma,
            "beta": cfg.beta,
            "seed": cfg.seed,
            "active_ratio": s["active_ratio"],
            "perplexity": s["final_perplexity"],
            "outcome": classify_outcome(s["active_ratio"], s["final_perplexity"], cfg.K),
        })
    return rows
