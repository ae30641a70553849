"""Toy-scale lab for field-line generative models.

Exact heavy-tailed perturbation kernels over finite point clouds, brute-force
field oracles, a small trainable denoiser with built-in reverse-mode
gradients, anchored-ODE samplers, and trend diagnostics.
"""

from .space import GAUSSIAN_LIMIT, AugmentedPoint, DataCloud, SpaceConfig
from .kernel import (
    RadiusLaw,
    kernel_log_unnorm,
    perturb,
    perturb_many,
    radius_pdf,
    sample_prior,
    sample_radius,
    sample_unit_direction,
)
from .field import (
    FieldValue,
    continuity_residual,
    drift,
    empirical_field,
    field_score_divergence,
    gaussian_score,
    posterior_weights,
)
from .targets import (
    TrainingBatch,
    TrainingPair,
    dsm_target,
    minimizer_oracle,
    normalized_target,
    preconditioned_loss,
    stf_target,
)
from .net import (
    AdamState,
    NetworkDenoiser,
    Preconditioner,
    adam_step,
    denoise,
    ema_update,
    field_estimate,
    init_params,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    TrainResult,
    TrainingDiverged,
    ddpm_alpha,
    make_training_batch,
    make_training_pair,
    sample_sigma,
    train,
    train_ddpm,
)
from .sampling import (
    HeunResult,
    SamplerSchedule,
    build_schedule,
    ddim_transfer_solve,
    heun_solve,
    make_drift,
)
from .analysis import (
    convergence_curve,
    nfe_sweep,
    posterior_ratio_check,
    radius_variance_curve,
    robustness_sweep,
    sliced_wasserstein,
    tvd_phase,
)
from .datasets import make_dataset, standard_mixture_cloud, standard_probe_cloud

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
