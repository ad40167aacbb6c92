"""How the EMA decay and commitment weight shape codebook health.

A slow EMA (gamma=0.99, half-life ~69 steps) paired with a weak commitment
pull (beta=0.25) lets a few entries dominate; a fast EMA (gamma=0.90,
half-life ~6.6 steps) with beta=2.0 keeps more of the codebook in use.  The
effect is directional, so we repeat over a handful of seeds.
"""
from vqprobe import TrainConfig, ablation_grid, generate, half_life, two_condition_spec

grid = [(0.99, 0.25), (0.95, 1.0), (0.90, 2.0)]
for g, _ in grid:
    print(f"gamma={g}: half-life {half_life(g):.2f} steps")

for seed in range(3):
    _, batch = generate(two_condition_spec("compact", seed=seed))
    rows = ablation_grid(batch, [TrainConfig(gamma=g, beta=b, seed=seed) for g, b in grid])
    print(f"\nseed {seed}")
    for r in rows:
        print(f"  gamma={r['gamma']:.2f} beta={r['beta']:.2f}  active {r['active_ratio']:.3f}  "
              f"perplexity {r['perplexity']:.2f}  -> {r['outcome']}")
