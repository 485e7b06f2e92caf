"""End-to-end runtime: load checkpoints, sample latents (optionally under
spatial control), decode through the frozen decoder, and denormalize into
motion sequences.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core.checkpoint import load_checkpoint
from .core.params import ParamStore, bag_from
from .data.dataset import DatasetManifest, load_manifest
from .data.normalize import NormStats
from .dynamics.skeleton import MotionSequence, SkeletonModel
from .model.autoencoder import AEConfig, decode, encode
from .model.control import ControlSpec, controlled_eps, encode_control
from .model.diffusion import (DenoiserConfig, LatentNorm, NoiseSchedule,
                              SampleStats, ddim_sample, ddpm_sample,
                              denoiser_flops_per_call, denoiser_forward,
                              guided_denoiser)


@dataclass
class Runtime:
    manifest: DatasetManifest
    model: SkeletonModel
    stats: NormStats
    ae_params: ParamStore
    ae_cfg: AEConfig
    diff_params: ParamStore | None = None
    den_cfg: DenoiserConfig | None = None
    schedule: NoiseSchedule | None = None
    lnorm: LatentNorm | None = None
    control_params: ParamStore | None = None

    @property
    def seq_len(self) -> int:
        return int(round(self.manifest.data["duration"]
                         * self.manifest.data["fps"]))


def load_runtime(manifest_path, ae_ckpt, diff_ckpt=None,
                 control_ckpt=None) -> Runtime:
    manifest = manifest_path if isinstance(manifest_path, DatasetManifest) \
        else load_manifest(manifest_path)
    ae_params, ae_meta = load_checkpoint(ae_ckpt)
    rt = Runtime(manifest=manifest, model=manifest.model,
                 stats=manifest.stats, ae_params=ae_params,
                 ae_cfg=AEConfig.from_dict(ae_meta["config"]))
    if diff_ckpt is not None:
        rt.diff_params, diff_meta = load_checkpoint(diff_ckpt)
        rt.den_cfg = DenoiserConfig.from_dict(diff_meta["config"])
        rt.schedule = NoiseSchedule.from_dict(diff_meta["schedule"])
        rt.lnorm = LatentNorm(rt.diff_params["latent_norm.mean"],
                              rt.diff_params["latent_norm.std"])
    if control_ckpt is not None:
        rt.control_params, _ = load_checkpoint(control_ckpt)
    return rt


def control_forward_fn(rt: Runtime, c_e_batch: np.ndarray):
    """denoise(x, n, pid) with the control branch attached."""
    ctl_bag = bag_from(rt.control_params)
    frozen_bag = bag_from(rt.diff_params)

    def forward(x, n, pid):
        return controlled_eps(ctl_bag, frozen_bag, rt.den_cfg, x,
                              c_e_batch[:x.shape[0]], n, pid).data

    return forward


def sample_latents(rt: Runtime, prompt_id: int, sampler: str, steps: int,
                   guidance: float, seed: int, batch: int = 1,
                   control_spec: ControlSpec | None = None,
                   stats_out: SampleStats | None = None) -> np.ndarray:
    """Draw normalized latents (batch, T, d) from the trained diffusion
    model, optionally with the Stage-3 control branch attached."""
    if rt.diff_params is None:
        raise ValueError("runtime has no diffusion checkpoint")
    shape = (batch, rt.seq_len, rt.ae_cfg.latent)
    forward = None
    if control_spec is not None:
        if rt.control_params is None:
            raise ValueError("runtime has no control checkpoint")
        c_e = rt.lnorm.forward(
            encode_control(control_spec, rt.ae_params, rt.ae_cfg, rt.stats))
        forward = control_forward_fn(rt, np.repeat(c_e[None], batch, axis=0))
    denoise = guided_denoiser(rt.diff_params, rt.den_cfg, prompt_id, guidance,
                              stats=stats_out, forward=forward)
    if sampler == "ddpm":
        z = ddpm_sample(denoise, rt.schedule, shape, seed, stats=stats_out)
    elif sampler == "ddim":
        z = ddim_sample(denoise, rt.schedule, shape, steps, seed,
                        stats=stats_out)
    else:
        raise ValueError(f"unknown sampler '{sampler}'")
    return z


def decode_latents(rt: Runtime, z_norm: np.ndarray,
                   prompt_id: int) -> list[MotionSequence]:
    """Normalized latents -> denormalized motion sequences."""
    lat = rt.lnorm.inverse(z_norm) if rt.lnorm is not None else z_norm
    bag = bag_from(rt.ae_params)
    x_norm = decode(lat, bag, rt.ae_cfg, length=lat.shape[1]).data
    out = []
    for b in range(x_norm.shape[0]):
        X = rt.stats.denormalize_array(x_norm[b])
        out.append(MotionSequence.from_matrix(
            X, rt.model.dof, rt.model.n_muscles, rt.manifest.dt, prompt_id))
    return out


def sample_motion(rt: Runtime, prompt_id: int, sampler: str = "ddim",
                  steps: int = 100, guidance: float = 2.5, seed: int = 0,
                  batch: int = 1, control_spec: ControlSpec | None = None,
                  stats_out: SampleStats | None = None) -> list[MotionSequence]:
    z = sample_latents(rt, prompt_id, sampler, steps, guidance, seed, batch,
                       control_spec, stats_out)
    return decode_latents(rt, z, prompt_id)


def pooled_features(rt: Runtime, seqs: list[MotionSequence]) -> np.ndarray:
    """Time-pooled frozen-encoder features, the metric feature space."""
    X = np.stack([rt.stats.normalize_array(s.to_matrix()) for s in seqs])
    bag = bag_from(rt.ae_params)
    feats = []
    for lo in range(0, X.shape[0], 256):
        lat = encode(X[lo:lo + 256], bag, rt.ae_cfg)
        feats.append(lat.data.mean(axis=1))
    return np.concatenate(feats, axis=0)


def sampling_cost_row(rt: Runtime, sampler: str, steps: int,
                      stats: SampleStats) -> dict:
    flops = stats.denoiser_calls * denoiser_flops_per_call(
        rt.den_cfg, rt.seq_len, rt.ae_cfg.latent)
    return {"sampler": sampler, "steps": steps,
            "denoiser_calls": stats.denoiser_calls,
            "time_s": round(stats.wall_time, 4),
            "est_flops": flops}
