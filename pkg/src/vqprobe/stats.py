"""Symbol statistics: mode symbols, contingency tables, chi-squared test,
smoothed mutual information, Jensen-Shannon divergence and the H1
determinism score.  Information quantities are in bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MI_RATIO_EPS = 1e-8
VIDEO_MODE = "video_mode"
TOKEN = "token"
UNITS = (VIDEO_MODE, TOKEN)


class DegenerateTableError(ValueError):
    pass


class ContractViolation(RuntimeError):
    pass


def mode_symbol(symbols) -> int:
    """Most frequent symbol, ties toward the lowest index."""
    s = np.asarray(symbols, dtype=np.int64).ravel()
    if s.size == 0:
        raise ValueError("mode of an empty symbol sequence")
    return int(np.argmax(np.bincount(s)))


@dataclass
class ContingencyMatrix:
    counts: np.ndarray  # (C, K) int
    condition_labels: list[str]
    unit: str = VIDEO_MODE

    @property
    def K(self) -> int:
        return self.counts.shape[1]

    def distributions(self) -> np.ndarray:
        rows = self.counts.sum(axis=1, keepdims=True)
        return self.counts / np.where(rows == 0, 1, rows)


def build_contingency(
    video_symbols: Sequence[np.ndarray],
    labels: Sequence[str],
    K: int,
    unit: str = VIDEO_MODE,
    conditions: Sequence[str] | None = None,
) -> ContingencyMatrix:
    """Aggregate per-video token symbols into a (condition x symbol) count table.

    ``unit="video_mode"`` contributes one count per video (its mode symbol);
    ``unit="token"`` contributes every token.
    """
    if unit not in UNITS:
        raise ValueError(f"unit must be one of {UNITS}, got {unit!r}")
    if len(video_symbols) != len(labels):
        raise ValueError("one label per video required")
    conditions = list(dict.fromkeys(labels)) if conditions is None else list(conditions)
    row = {c: i for i, c in enumerate(conditions)}
    O = np.zeros((len(conditions), K), dtype=np.int64)
    for syms, lab in zip(video_symbols, labels):
        if lab not in row:
            continue
        if unit == VIDEO_MODE:
            O[row[lab], mode_symbol(syms)] += 1
        else:
            O[row[lab]] += np.bincount(np.asarray(syms, dtype=np.int64), minlength=K)
    empty = [c for c in conditions if O[row[c]].sum() == 0]
    if empty:
        raise ValueError(f"conditions without videos: {empty}")
    return ContingencyMatrix(O, conditions, unit)


# regularized incomplete gamma, after the classic series / Lentz continued fraction pair

_ITMAX = 10_000
_EPS = 1e-16
_FPMIN = 1e-300


def _gamma_series(a: float, x: float) -> float:
    """Regularized lower P(a, x) by its power series; good for x < a + 1."""
    ap = a
    term = total = 1.0 / a
    for _ in range(_ITMAX):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Regularized upper Q(a, x) by its continued fraction; good for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _ITMAX):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def gammaincc(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_cont_frac(a, x))


def chi2_sf(stat: float, df: int) -> float:
    return gammaincc(df / 2.0, stat / 2.0)


def chi_squared_test(O) -> tuple[float, int, float]:
    """Pearson independence test on a count table; returns ``(chi2, df, p)``.

    All-zero columns are dropped first, so ``df = (C - 1)(K' - 1)`` over the
    ``K'`` retained columns.
    """
    O = np.asarray(O, dtype=np.float64)
    if O.ndim != 2:
        raise ValueError("contingency table must be 2-D")
    O = O[:, O.sum(axis=0) > 0]
    if O.shape[0] < 2 or O.shape[1] < 2:
        raise DegenerateTableError(f"need >= 2 rows and >= 2 non-empty columns, got {O.shape}")
    R = O.sum(axis=1, keepdims=True)
    if (R == 0).any():
        raise DegenerateTableError("a condition row has no observations")
    E = R * O.sum(axis=0, keepdims=True) / O.sum()
    stat = float(np.sum((O - E) ** 2 / E))
    df = (O.shape[0] - 1) * (O.shape[1] - 1)
    return stat, df, chi2_sf(stat, df)


def _xlog2(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log2(p[nz] / q[nz])
    return out


def mutual_information(O, alpha: float = 1.0) -> float:
    """Plug-in I(S; L) in bits over the add-``alpha`` smoothed joint table."""
    O = np.asarray(O, dtype=np.float64)
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    joint = O + alpha
    total = joint.sum()
    if O.sum() <= 0 or total <= 0:
        raise ValueError("mutual information of an empty table")
    joint /= total
    outer = joint.sum(axis=1, keepdims=True) * joint.sum(axis=0, keepdims=True)
    return max(0.0, float(np.sum(_xlog2(joint, outer))))


def normalized_mi(mi_bits: float, K: int) -> float:
    if K < 2:
        raise ValueError("K must be >= 2")
    return mi_bits / math.log2(K)


def jsd(P, Q) -> float:
    """Jensen-Shannon divergence in bits, bounded in [0, 1]."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    for name, d in (("P", P), ("Q", Q)):
        if d.shape != P.shape or (d < 0).any() or abs(d.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} is not a distribution over {P.shape} symbols")
    M = 0.5 * (P + Q)
    val = 0.5 * np.sum(_xlog2(P, M)) + 0.5 * np.sum(_xlog2(Q, M))
    return float(min(1.0, max(0.0, val)))


def mi_ratio(mi_experiment: float, mi_baseline: float, eps: float = MI_RATIO_EPS) -> float:
    if mi_experiment < 0 or mi_baseline < 0:
        raise ValueError("MI values must be non-negative")
    return mi_experiment / (mi_baseline + eps)


def baseline_mi(probe, baseline, unit: str = TOKEN, group_size: int = 1) -> float:
    """MI between symbols and an arbitrary first-half / second-half split of noise inputs.

    With ``unit="video_mode"`` consecutive rows are grouped into pseudo-videos
    of ``group_size`` tokens and each contributes its mode symbol.
    """
    data = getattr(baseline, "data", baseline)
    syms = probe.symbols(data)
    if unit == VIDEO_MODE:
        n_groups = len(syms) // group_size
        if n_groups < 2:
            raise ValueError("baseline too small for two pseudo-videos")
        units = [syms[i * group_size : (i + 1) * group_size] for i in range(n_groups)]
    else:
        units = [syms[i : i + 1] for i in range(len(syms))]
    half = len(units) // 2
    labels = ["first"] * half + ["second"] * (len(units) - half)
    O = build_contingency(units, labels, probe.K, unit=VIDEO_MODE if unit == VIDEO_MODE else TOKEN)
    return mutual_information(O.counts, alpha=0.0)


@dataclass
class StabilityReport:
    per_video: list[float] = field(default_factory=list)
    repeats: int = 20

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_video)) if self.per_video else float("nan")


def h1_stability(
    probe,
    video_tokens: np.ndarray,
    repeats: int = 20,
    perturb: Callable[[object, int], None] | None = None,
) -> float:
    """Fraction of ``repeats`` passes whose mode symbol matches the first pass.

    ``perturb(probe, m)`` runs before pass ``m`` (m >= 1) and exists for
    fault injection; without it the probe must be bit-identical afterwards.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    before = probe.fingerprint()
    modes = []
    for m in range(repeats):
        if perturb is not None and m > 0:
            perturb(probe, m)
        modes.append(mode_symbol(probe.symbols(video_tokens)))
    if perturb is None and probe.fingerprint() != before:
        raise ContractViolation("probe state changed during the stability test")
    return sum(s == modes[0] for s in modes) / repeats


def h1_report(probe, videos: Sequence[np.ndarray], repeats: int = 20, perturb=None) -> StabilityReport:
    return StabilityReport([h1_stability(probe, v, repeats, perturb) for v in videos], repeats)


@dataclass
class InterventionResult:
    name: str
    condition_a: str
    condition_b: str
    counts: list[list[int]]
    chi2: float
    df: int
    retained_columns: int
    p: float
    mi_bits: float
    nmi: float
    jsd: float
    mi_ratio: float
    unit: str
    degenerate: bool = False
    p_threshold: float = 0.01
    mi_ratio_threshold: float = 5.0

    @property
    def passed(self) -> bool:
        return self.p < self.p_threshold and self.mi_ratio > self.mi_ratio_threshold


def intervention(
    name: str,
    table: ContingencyMatrix,
    mi_base: float,
    alpha: float = 1.0,
    p_threshold: float = 0.01,
    mi_ratio_threshold: float = 5.0,
) -> InterventionResult:
    """Run the full two-condition battery on one contingency table.

    A table with a single non-empty symbol column (both conditions always
    produce the same symbol) is reported as degenerate with chi2 = 0, p = 1.
    """
    O = table.counts
    try:
        stat, df, p = chi_squared_test(O)
        degenerate = False
    except DegenerateTableError:
        stat, df, p, degenerate = 0.0, 0, 1.0, True
    mi = mutual_information(O, alpha)
    dists = table.distributions()
    return InterventionResult(
        name=name,
        condition_a=table.condition_labels[0],
        condition_b=table.condition_labels[1],
        counts=O.tolist(),
        chi2=stat,
        df=df,
        retained_columns=int((O.sum(axis=0) > 0).sum()),
        p=p,
        mi_bits=mi,
        nmi=normalized_mi(mi, table.K),
        jsd=jsd(dists[0], dists[1]),
        mi_ratio=mi_ratio(mi, mi_base),
        unit=table.unit,
        degenerate=degenerate,
        p_threshold=p_threshold,
        mi_ratio_threshold=mi_ratio_threshold,
    )
