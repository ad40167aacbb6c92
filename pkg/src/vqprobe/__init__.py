"""Passive vector-quantization probe for frozen latent token stores."""
from .codebook import Codebook, half_life, perplexity
from .latent_store import (
    LatentBatch,
    LatentHeader,
    TokenGeometry,
    VideoRecord,
    flatten_spatial,
    load_store,
    pool_temporal,
    save_store,
    token_count,
)
from .probe import FrozenProbe
from .projection import LRSchedule, ProjectionParams
from .report import Intervention, Thresholds, diagnose
from .synth import BaselineSpec, SynthSpec, generate, generate_baseline, two_condition_spec
from .trainer import TrainConfig, TrainLog, ablation_grid, check_convergence, run_stage_a

__version__ = "0.1.0"
