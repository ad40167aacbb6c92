"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``[criterion N] PASS|FAIL`` line straight to the
terminal (bypassing capture) before asserting.  Run just this file with

    python3 -m pytest tests/test_acceptance.py -v

or ``python3 tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from vqprobe import stats
from vqprobe.codebook import AssignmentBatch, Codebook, half_life
from vqprobe.latent_store import LatentHeader, VideoRecord, load_store, save_store
from vqprobe.probe import FrozenProbe
from vqprobe.projection import ProjectionParams, backward, commitment_loss, forward, standardized_norm
from vqprobe.report import Intervention, diagnose
from vqprobe.synth import BaselineSpec, generate, generate_baseline, two_condition_spec
from vqprobe.trainer import TrainConfig, run_stage_a

SEEDS = range(5)


@pytest.fixture
def verdict(capsys):
    def emit(n: int, title: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {title}" + (f"  ({detail})" if detail else ""))
        assert ok, f"criterion {n} failed: {detail}"
    return emit


def _fd_grad(params, z, c, beta, h=1e-5):
    def loss():
        return commitment_loss(forward(params, z)[0], c, beta)

    grads = []
    for arr in (params.W, params.b):
        g = np.empty_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = loss()
            arr[idx] = old - h
            g[idx] = (up - loss()) / (2 * h)
            arr[idx] = old
        grads.append(g)
    return grads


def _nn_oracle(z, cw):
    out = np.empty(len(z), dtype=np.int64)
    for i, row in enumerate(z):
        best, best_d = 0, math.inf
        for k, c in enumerate(cw):
            d = 0.0
            for a, b in zip(row, c):
                d += (a - b) ** 2
            if d < best_d:
                best, best_d = k, d
        out[i] = best
    return out


def test_criterion_01_gradient(verdict):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        params = ProjectionParams.init(16, 8, rng)
        params.b = 0.1 * rng.standard_normal(8)
        z = rng.standard_normal(16) * rng.uniform(0.5, 100)
        c = rng.standard_normal(8)
        c /= np.linalg.norm(c)
        beta = rng.uniform(0.25, 2.0)
        _, cache = forward(params, z)
        analytic = backward(params, cache, c, beta)
        numeric = _fd_grad(params, z, c, beta)
        for a, f in zip(analytic, numeric):
            worst = max(worst, np.linalg.norm(a - f) / max(np.linalg.norm(a), np.linalg.norm(f)))
    elapsed = time.perf_counter() - t0
    verdict(1, "analytic backward matches central differences", worst <= 1e-4 and elapsed < 5.0,
            f"max rel err {worst:.2e}, {elapsed:.2f}s")


def test_criterion_02_normalization_law(verdict):
    rng = np.random.default_rng(202)
    params = ProjectionParams.init(1024, 256, rng)
    z = rng.standard_normal((1000, 1024)) * rng.uniform(1, 200, (1000, 1))
    rel = np.abs(standardized_norm(params, z) / 16.0 - 1.0)
    verdict(2, "standardized norm equals sqrt(d_proj)", rel.max() <= 1e-3, f"max rel dev {rel.max():.2e}")


def test_criterion_03_nearest_neighbor(verdict):
    rng = np.random.default_rng(303)
    mismatches = 0
    for i in range(1000):
        n, K, d = rng.integers(1, 65), rng.integers(1, 17), rng.integers(2, 9)
        cw = rng.standard_normal((K, d))
        if i % 4 == 0 and K > 1:
            cw[rng.integers(1, K)] = cw[0]  # exact duplicates exercise the tie rule
        cb = Codebook(cw)
        z = rng.standard_normal((n, d))
        z /= np.linalg.norm(z, axis=1, keepdims=True)
        if i % 4 == 0:
            z[0] = cb.codewords[0]
        mismatches += int(np.any(cb.assign(z).symbols != _nn_oracle(z, cb.codewords)))
    verdict(3, "assign equals exhaustive scan", mismatches == 0, f"{mismatches}/1000 instances differ")


def test_criterion_04_chi_squared(verdict):
    p1 = stats.chi2_sf(3.841, 1)
    p7 = stats.chi2_sf(18.475, 7)
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(200):
        O = rng.integers(0, 40, size=(rng.integers(2, 5), rng.integers(2, 9)))
        O[:, 0] += 1
        stat, _, _ = stats.chi_squared_test(O)
        E = np.outer(O.sum(1), O.sum(0)) / O.sum()
        brute = sum((O[i, j] - E[i, j]) ** 2 / E[i, j]
                    for i in range(O.shape[0]) for j in range(O.shape[1]) if E[i, j] > 0)
        worst = max(worst, abs(stat - brute))
    ok = abs(p1 - 0.05) <= 1e-3 and abs(p7 - 0.01) <= 5e-4 and worst <= 1e-10
    verdict(4, "chi-squared p-values and statistic", ok, f"p(3.841,1)={p1:.5f}, p(18.475,7)={p7:.5f}, max stat err {worst:.1e}")


def test_criterion_05_information(verdict):
    rng = np.random.default_rng(505)
    indep = stats.mutual_information(np.outer([1, 2, 3], [4, 1, 5, 2]), alpha=0)
    diag = stats.mutual_information([[5, 0], [0, 5]], alpha=0)
    same = stats.jsd([0.2, 0.3, 0.5], [0.2, 0.3, 0.5])
    disjoint = stats.jsd([1, 0], [0, 1])
    worst = 0.0
    for _ in range(1000):
        k = rng.integers(2, 12)
        P = rng.dirichlet(np.ones(k) * rng.uniform(0.1, 3))
        Q = rng.dirichlet(np.ones(k) * rng.uniform(0.1, 3))
        M = [(a + b) / 2 for a, b in zip(P, Q)]
        oracle = 0.5 * sum(a * math.log2(a / m) for a, m in zip(P, M) if a > 0) \
            + 0.5 * sum(b * math.log2(b / m) for b, m in zip(Q, M) if b > 0)
        worst = max(worst, abs(stats.jsd(P, Q) - oracle))
    ok = abs(indep) <= 1e-12 and abs(diag - 1) <= 1e-12 and same == 0 and abs(disjoint - 1) <= 1e-12 and worst <= 1e-10
    verdict(5, "MI and JSD oracles", ok, f"MI indep {indep:.1e}, MI diag {diag:.12f}, JSD max err {worst:.1e}")


def test_criterion_06_ema_laws(verdict):
    rng = np.random.default_rng(606)
    worst = 0.0
    for gamma in (0.5, 0.9, 0.95, 0.99):
        cb = Codebook(rng.standard_normal((4, 6)), gamma=gamma)
        cb.ema_counts[:] = rng.uniform(0.5, 5, 4)
        n0 = cb.ema_counts[0]
        T = 150
        for _ in range(T):
            cb.ema_update(cb.codewords[1][None], AssignmentBatch(np.array([1])))
        worst = max(worst, abs(cb.ema_counts[0] / (n0 * gamma**T) - 1))
    h90, h99 = half_life(0.90), half_life(0.99)
    ok = worst <= 1e-12 and abs(h90 - 6.58) <= 0.01 and abs(h99 - 68.97) <= 0.05
    verdict(6, "EMA decay and half-life", ok, f"decay rel err {worst:.1e}, h(0.90)={h90:.3f}, h(0.99)={h99:.3f}")


@pytest.mark.slow
def test_criterion_07_h1_determinism(verdict):
    header, batch = generate(two_condition_spec("compact", videos_per_condition=3))
    params, cb, _ = run_stage_a(batch, TrainConfig(steps=200))
    probe = FrozenProbe(params, cb)
    videos = [batch.video_rows(header, i) for i in range(6)]
    frozen = stats.h1_report(probe, videos, repeats=20)

    class Faulty:
        def __init__(self):
            self.inner = probe

        def fingerprint(self):
            return self.inner.fingerprint()

        def symbols(self, z):
            return self.inner.symbols(z)

    def perturb(p, m):
        # rotate the codebook labels so the same token maps to a different index
        p.inner = FrozenProbe(params, Codebook(np.roll(cb.codewords, m, axis=0)))

    faulty = stats.h1_report(Faulty(), videos, repeats=20, perturb=perturb)
    ok = frozen.mean == 1.0 and faulty.mean < 1.0
    verdict(7, "H1 stability is exactly 1 and the fault hook is detected", ok,
            f"frozen {frozen.mean:.3f}, perturbed {faulty.mean:.3f}")


@pytest.fixture(scope="module")
def compact_runs():
    """Per seed: the compact store and both ablation arms, timed."""
    out, t0 = {}, time.perf_counter()
    for seed in SEEDS:
        header, batch = generate(two_condition_spec("compact", seed=seed))
        healthy = run_stage_a(batch, TrainConfig(gamma=0.90, beta=2.0, seed=seed))
        slow = run_stage_a(batch, TrainConfig(gamma=0.99, beta=0.25, seed=seed))
        out[seed] = (header, batch, healthy, slow)
    return out, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_08_ablation_direction(verdict, compact_runs):
    runs, elapsed = compact_runs
    wins, notes = 0, []
    for seed, (_, _, healthy, slow) in runs.items():
        h, s = healthy[2].summary, slow[2].summary
        ok = (h["active_ratio"] > s["active_ratio"] and h["final_perplexity"] > 3.2 and h["active_ratio"] > 0.30)
        wins += ok
        notes.append(f"s{seed}:{h['active_ratio']:.3f}/{s['active_ratio']:.3f}")
    verdict(8, "gamma=0.90/beta=2.0 beats gamma=0.99/beta=0.25 and is healthy", wins >= 4 and elapsed < 120,
            f"{wins}/5 seeds, {elapsed:.0f}s; active " + " ".join(notes))


def _separability_run(kind, seed):
    header, batch = generate(two_condition_spec(kind, seed=seed))
    params, cb, tlog = run_stage_a(batch, TrainConfig(seed=seed))
    report, _ = diagnose(header, batch, FrozenProbe(params, cb), [Intervention(kind, "a", "b")], tlog.summary,
                         unit=stats.TOKEN, seed=seed)
    return report


@pytest.mark.slow
def test_criterion_09_end_to_end_separability(verdict):
    wins, slowest, notes = 0, 0.0, []
    for seed in SEEDS:
        t0 = time.perf_counter()
        sep = _separability_run("separable", seed)["h2"][0]
        t1 = time.perf_counter()
        null_report = _separability_run("identical", seed)
        null = null_report["h2"][0]
        slowest = max(slowest, t1 - t0, time.perf_counter() - t1)
        ok = sep["p"] < 0.01 and sep["mi_ratio"] > 5.0 and null["mi_bits"] < 0.01 and not null_report["pass"]
        wins += ok
        notes.append(f"s{seed}: ratio {sep['mi_ratio']:.0f}, null MI {null['mi_bits']:.4f}")
    verdict(9, "separable pair passes, identical pair does not", wins >= 4 and slowest < 60,
            f"{wins}/5 seeds, slowest run {slowest:.1f}s; " + "; ".join(notes))


@pytest.mark.slow
def test_criterion_10_dominant_symbol_collision(verdict, compact_runs):
    runs, _ = compact_runs
    wins, notes = 0, []
    for seed, (header, batch, healthy, _) in runs.items():
        params, cb, tlog = healthy
        report, dictionary = diagnose(header, batch, FrozenProbe(params, cb), [Intervention("satellite", "a", "b")],
                                      tlog.summary, unit=stats.TOKEN, seed=seed)
        dom = [dictionary["conditions"][c]["dominant_symbol"] for c in ("a", "b")]
        p = report["h2"][0]["p"]
        ok = dom[0] == dom[1] and p < 0.01
        wins += ok
        notes.append(f"s{seed}: dom {dom[0]}/{dom[1]}, p {p:.1e}")
    verdict(10, "shared dominant symbol yet significant difference", wins >= 4, f"{wins}/5 seeds; " + "; ".join(notes))


@pytest.mark.slow
def test_criterion_11_performance(verdict, tmp_path):
    spec = two_condition_spec("compact", videos_per_condition=24, tokens_per_video=1568)
    _, batch = generate(spec)
    assert batch.data.shape == (75_264, 64)
    t0 = time.perf_counter()
    run_stage_a(batch, TrainConfig())
    train_s = time.perf_counter() - t0

    big = generate_baseline(BaselineSpec(1024, 75_264, seed=0))
    header = LatentHeader(dim=1024, count=75_264,
                          videos=[VideoRecord(f"v{i:02d}", "noise", i * 1568, 1568) for i in range(48)])
    save_store(header, big, tmp_path / "big")
    del big
    t0 = time.perf_counter()
    _, loaded = load_store(tmp_path / "big")
    load_s = time.perf_counter() - t0
    assert loaded.data.shape == (75_264, 1024)
    verdict(11, "training and store-load throughput", train_s < 60 and load_s < 3,
            f"train {train_s:.1f}s (<60), load {load_s:.2f}s (<3)")


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-v"]))
