"""Stochastic approximation with set-valued mean fields: iterates, projective partners,
approximate value iteration and fixed points of contractive set-valued maps."""

from .dynamics import (
    Ball,
    InwardSetPair,
    Offsets,
    SelectionStrategy,
    SetValuedMap,
    affine_map,
    ball_pair,
    build_inward_pair,
    euler_solve,
    inward_check,
    lyapunov_build,
    marchaud_report,
)
from .norms import MetricSpec, NormSpec, ball_translate_hausdorff, hausdorff
from .saa import (
    NoiseModel,
    RunTrace,
    StepSchedule,
    coupled_run,
    interpolate,
    noise_window_check,
    project,
    run_projective,
    run_saa,
    validate_schedule,
)

__version__ = "0.1.0"
