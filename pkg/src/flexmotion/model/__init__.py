from .autoencoder import (AEConfig, LossWeights, ae_total_loss, decode,
                          encode, heldout_channel_mse, init_autoencoder,
                          packed_split, physics_terms, recon_loss,
                          reconstruct, train_stage1)
from .control import (ControlSpec, controlled_eps, controlled_eps_infer,
                      encode_control, init_control, make_condition,
                      train_stage3)
from .diffusion import (NULL_PROMPT, DenoiserConfig, LatentNorm,
                        NoiseSchedule, SampleStats, ddim_sample, ddpm_sample,
                        denoiser_flops_per_call, denoiser_forward,
                        diffusion_loss, guided_denoiser, init_denoiser,
                        predict_eps, q_sample, train_stage2)
from .physics_ops import euler_residual_op, muscle_accel_op

__all__ = [
    "AEConfig", "LossWeights", "ae_total_loss", "decode", "encode",
    "heldout_channel_mse", "init_autoencoder", "packed_split",
    "physics_terms", "recon_loss", "reconstruct", "train_stage1",
    "ControlSpec", "controlled_eps", "controlled_eps_infer", "encode_control",
    "init_control", "make_condition", "train_stage3", "NULL_PROMPT",
    "DenoiserConfig", "LatentNorm", "NoiseSchedule", "SampleStats",
    "ddim_sample", "ddpm_sample", "denoiser_flops_per_call",
    "denoiser_forward", "diffusion_loss", "guided_denoiser", "init_denoiser",
    "predict_eps", "q_sample", "train_stage2", "euler_residual_op",
    "muscle_accel_op",
]
