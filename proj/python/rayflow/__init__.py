"""RayFlow diffusion core: schedule, chain, denoisers, distillation and metrics."""

import json

from ._rayflow import (
    ConfigError,
    DimensionMismatch,
    InvalidRange,
    IoError,
    IsoGaussian,
    Net,
    OptimalParams,
    RayFlowError,
    RayFlowParams,
    Rng,
    Schedule,
    backward_marginal,
    backward_step,
    dataset_names,
    forward_marginal,
    forward_step,
    gen_dataset,
    gmm_teacher_denoise,
    is_exact_mean,
    is_exact_variance,
    mmd,
    optimal_denoise,
    optimal_params,
    optimal_q,
    sample,
    sample_student,
    wasserstein2,
)
from . import _rayflow


def verify(config=None):
    """Run the verification suite. config: mapping of config keys to values."""
    text = "".join(f"{k} = {v}\n" for k, v in (config or {}).items())
    return json.loads(_rayflow._verify(text))


def distill(config=None, out_dir=""):
    """Build pairs, train a student and score it. Returns config, metrics and log."""
    return json.loads(_rayflow._distill(json.dumps(config or {}), str(out_dir)))


__all__ = [name for name in dir() if not name.startswith("_") and name != "json"]
