"""Training the quantizer on a synthetic store.

The synthetic generator mimics the regime of real encoder outputs: every
token has a norm near 97.7 and the directions sit in a tight pocket of the
sphere.  We train the projection + 8-entry EMA codebook for the default
3,000 steps and look at the curves.
"""
import tempfile
from pathlib import Path

import numpy as np

from vqprobe import TrainConfig, generate, half_life, run_stage_a, two_condition_spec
from vqprobe.plots import training_figures

header, batch = generate(two_condition_spec("compact", seed=0))
norms = np.linalg.norm(batch.data.astype(np.float64), axis=1)
print(f"{header.count} tokens, norm {norms.mean():.2f} +/- {norms.std():.2f}")

cfg = TrainConfig(seed=0)
print(f"gamma={cfg.gamma} forgets half its mass in {half_life(cfg.gamma):.2f} steps")

params, codebook, log = run_stage_a(batch, cfg)
loss = log.column("commit_loss")
ppl = log.column("perplexity")
for step in (1, 10, 100, 1000, 3000):
    r = log.records[step - 1]
    print(f"step {step:5d}  lr {r.lr:.2e}  loss {r.commit_loss:.4f}  perplexity {r.perplexity:.2f}  active {r.active_ratio:.2f}")

s = log.summary
print("convergence:", s["convergence"], "| perplexity plateau:", s["stabilized"])
print("end-of-training perplexity", round(s["final_perplexity"], 3), "vs fresh pass", round(s["eval_perplexity"], 3))
print("dead-code resets at steps:", [r["step"] for r in log.resets])

out = Path(tempfile.mkdtemp(prefix="vqprobe_demo_"))
for name, svg in training_figures(log.column("step"), loss, ppl, K=cfg.K).items():
    (out / name).write_text(svg)
print("curves written to", out)
