import hashlib

import numpy as np
import pytest

from vqprobe.codebook import Codebook
from vqprobe.projection import TrainingAbort
from vqprobe.synth import generate, two_condition_spec
from vqprobe.trainer import (
    ConfigError,
    StepRecord,
    TrainConfig,
    TrainLog,
    ablation_grid,
    check_convergence,
    classify_outcome,
    init_pipeline,
    run_stage_a,
)


@pytest.fixture(scope="module")
def small_store():
    return generate(two_condition_spec("compact", videos_per_condition=4, tokens_per_video=64))[1]


def _log(losses, ppl=None):
    ppl = np.full(len(losses), 4.0) if ppl is None else ppl
    return TrainLog([StepRecord(i + 1, 1e-3, float(l), float(p), 1.0) for i, (l, p) in enumerate(zip(losses, ppl))])


class TestConfig:
    @pytest.mark.parametrize("bad", [{"gamma": 1.0}, {"gamma": 1.2}, {"beta": 0.0}, {"steps": 0},
                                     {"batch_size": 0}, {"K": 1}, {"eta0": 1e-5}])
    def test_invalid(self, bad):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict(bad)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"stepz": 5})

    def test_round_trip(self):
        cfg = TrainConfig(steps=10, gamma=0.95, seed=7)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_schedule_follows_steps(self):
        assert TrainConfig(steps=50).schedule.t_max == 50
        assert TrainConfig(steps=50, t_max=80).schedule.t_max == 80


class TestRun:
    def test_single_step(self, small_store):
        cfg = TrainConfig(steps=1, seed=3)
        params, cb, tlog = run_stage_a(small_store, cfg)
        assert len(tlog.records) == 1 and tlog.records[0].step == 1
        # rebuild the initial codebook from the init stream; after one EMA step
        # each count is 0.9 * 1 + 0.1 * hits with integer hits summing to the batch
        _, cb0 = init_pipeline(small_store.data, cfg, np.random.default_rng(np.random.SeedSequence(3).spawn(3)[1]))
        hits = (cb.ema_counts - 0.9) / 0.1
        np.testing.assert_allclose(hits, np.round(hits), atol=1e-9)
        assert np.round(hits).sum() == 64
        idle = np.round(hits) == 0
        np.testing.assert_allclose(cb.codewords[idle], cb0.codewords[idle], atol=1e-12)

    def test_deterministic(self, small_store):
        cfg = TrainConfig(steps=60, seed=11, reset_interval=20)
        a = run_stage_a(small_store, cfg)[2]
        b = run_stage_a(small_store, cfg)[2]
        assert a.to_csv() == b.to_csv()
        assert a.resets == b.resets

    def test_store_untouched(self, small_store):
        before = hashlib.sha256(small_store.data.tobytes()).hexdigest()
        run_stage_a(small_store, TrainConfig(steps=30))
        assert hashlib.sha256(small_store.data.tobytes()).hexdigest() == before

    def test_log_invariants(self, small_store):
        cfg = TrainConfig(steps=120, reset_interval=25, tau=0.9, seed=2)
        _, cb, tlog = run_stage_a(small_store, cfg)
        steps = tlog.column("step")
        assert (np.diff(steps) == 1).all()
        assert (tlog.column("commit_loss") >= 0).all()
        assert tlog.resets, "a high tau should force resets"
        assert all(r["step"] % 25 == 0 for r in tlog.resets)
        assert np.abs(np.linalg.norm(cb.codewords, axis=1) - 1).max() <= 1e-6

    def test_summary_fields(self, small_store):
        _, _, tlog = run_stage_a(small_store, TrainConfig(steps=40, convergence_window=20))
        s = tlog.summary
        for key in ("final_commit_loss", "final_perplexity", "eval_perplexity", "active_ratio",
                    "convergence", "stabilized", "eval_counts"):
            assert key in s
        assert sum(s["eval_counts"]) == len(small_store)

    def test_short_run_is_not_converged(self, small_store):
        _, _, tlog = run_stage_a(small_store, TrainConfig(steps=10))
        assert tlog.summary["convergence"] == "not_converged"

    def test_non_finite_loss_aborts(self, small_store, monkeypatch):
        import vqprobe.trainer as tr

        monkeypatch.setattr(tr, "commitment_loss", lambda *a: float("nan"))
        with pytest.raises(TrainingAbort):
            run_stage_a(small_store, TrainConfig(steps=3))

    def test_too_few_rows(self):
        with pytest.raises(ValueError):
            run_stage_a(np.ones((4, 3), np.float32), TrainConfig(steps=1))

    def test_csv_round_trip(self, small_store):
        _, _, tlog = run_stage_a(small_store, TrainConfig(steps=5))
        text = tlog.to_csv()
        assert text.splitlines()[0] == "step,lr,commit_loss,perplexity,active_ratio"
        back = TrainLog.from_csv(text)
        assert [r.step for r in back.records] == [1, 2, 3, 4, 5]
        assert back.to_csv() == text


class TestConvergence:
    def test_constant_loss(self):
        assert check_convergence(_log([0.5] * 200)) == ("converged", True)

    def test_halving_loss(self):
        status, _ = check_convergence(_log(0.5 ** np.arange(200)))
        assert status == "not_converged"

    def test_low_loss(self):
        status, stabilized = check_convergence(_log([1e-12] * 200))
        assert status == "undefined_low_loss" and stabilized

    def test_low_loss_with_moving_perplexity(self):
        ppl = np.linspace(2.0, 6.0, 200)
        assert check_convergence(_log([0.0] * 200, ppl)) == ("undefined_low_loss", False)

    def test_insufficient_history(self):
        with pytest.raises(ValueError):
            check_convergence(_log([0.5] * 50), window=200)


class TestAblation:
    def test_empty_grid(self, small_store):
        with pytest.raises(ConfigError):
            ablation_grid(small_store, [])

    def test_rows(self, small_store):
        rows = ablation_grid(small_store, [TrainConfig(steps=20, gamma=0.99, beta=0.25),
                                           TrainConfig(steps=20, seed=1)])
        assert [r["gamma"] for r in rows] == [0.99, 0.9]
        assert all(r["outcome"] in ("stabilized", "degraded", "collapse") for r in rows)

    @pytest.mark.parametrize("active,ppl,expected", [(0.625, 4.6, "stabilized"), (0.25, 4.0, "degraded"),
                                                     (0.9, 3.0, "degraded"), (0.0, 1.0, "collapse")])
    def test_classify(self, active, ppl, expected):
        assert classify_outcome(active, ppl, 8) == expected


def test_init_uses_pool_samples(small_store):
    cfg = TrainConfig(steps=1)
    params, cb = init_pipeline(small_store.data, cfg, np.random.default_rng(0))
    assert isinstance(cb, Codebook) and cb.K == 8 and params.W.shape == (256, small_store.data.shape[1])
    np.testing.assert_array_equal(cb.ema_sums, cb.codewords)
