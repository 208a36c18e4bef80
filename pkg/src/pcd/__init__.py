"""Projected coupled diffusion.

Joint sampling of several correlated variables from independent score
models, coupled through differentiable costs and kept feasible by a
projection after every step.
"""

from .coupling import (
    AffineLogistic,
    CircleScene,
    DegenerateInputError,
    DppCosine,
    GaussianLikelihood,
    LogBarrier,
    Obstacle,
    PairwiseSum,
    PosteriorCost,
    SquaredHinge,
    WeightedSum,
    XorClassifier,
    ps_wrap,
)
from .metrics import (
    constraint_satisfaction,
    data_adherence_proxy,
    dfd,
    dtw,
    inter_robot_safety,
    obstacle_safe,
    success_rate,
)
from .plotting import CellData, emit_plot
from .projections import (
    Ball,
    Box,
    ConvexHull,
    Identity,
    Singleton,
    VelocityChain,
    project,
    project_convex_hull,
    project_velocity_chain,
)
from .runner import RunConfig, execute, parse_config, plan_runs
from .samplers import (
    CoupledSystem,
    CoupledVariable,
    SampleBatch,
    run_cg_reduction,
    run_pcd_ddpm,
    run_pcd_dps,
    run_pcd_lmc,
)
from .scenarios import (
    CorridorSpec,
    NavEnvironment,
    build_corridor,
    build_nav_system,
    corridor_gamma_sweep,
    make_environment,
    sample_initial_configuration,
)
from .schedules import ConfigurationError, DiffusionSchedule, NoiseLevel, make_linear_schedule
from .scores import Gaussian, Mixture, NominalPath, ScoreModel, tweedie_denoise

__version__ = "0.1.0"
