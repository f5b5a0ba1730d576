"""Layout-conditioned composite diffusion on procedural pattern images."""

from ._core import (
    ConfigError,
    Error,
    InvalidParameter,
    NoiseSchedule,
    Session,
    ShapeError,
    ValidationError,
    analytic_eps,
    blending_score,
    boundary_band,
    ddim_step,
    noise_estimate,
    predict_x0,
    q_sample,
    read_layout,
    segment_masks,
    spearman,
    step_plan,
)

__all__ = [
    "ConfigError",
    "Error",
    "InvalidParameter",
    "NoiseSchedule",
    "Session",
    "ShapeError",
    "ValidationError",
    "analytic_eps",
    "blending_score",
    "boundary_band",
    "ddim_step",
    "noise_estimate",
    "predict_x0",
    "q_sample",
    "read_layout",
    "segment_masks",
    "spearman",
    "step_plan",
]
