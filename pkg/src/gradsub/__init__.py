"""Gradient-subspace similarity (PSS) diagnostics and a toy dual-system co-training harness."""

from ._kernels import BACKEND
from .matcore import (
    EmptySubspaceError,
    NumericalFailure,
    RankTolerance,
    orthonormal_range_basis,
    pseudoinverse,
    rank,
    singular_values,
    svd,
)
from .subspace import DimensionMismatch, PssResult, principal_cosines, projector, pss_cross_check, pss_trace
from .gradnet import ModelConfig, ToyModel, gradient_of
from .synthtasks import Rng, Scene, SceneConfig, TaskConfig, TokenCodec, draw_batch, encode, gen_scene, probe_batches
from .cotrainer import (
    COTRAIN,
    SPATIALLY_GUIDED,
    STRATEGIES,
    VANILLA,
    DivergenceError,
    OptimConfig,
    ProbeConfig,
    RunReport,
    StrategyConfig,
    TrainConfig,
    pretrain_grounding,
    probe_pss,
    run_ratio_sweep,
    run_strategy_study,
    train,
)
from .config import ConfigError, load_config, parse_config

__version__ = "0.1.0"
