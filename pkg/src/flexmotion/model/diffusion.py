"""Latent-space DDPM: schedule, noising, the conditional noise predictor,
Stage-2 training, and DDPM/DDIM samplers with classifier-free guidance.

Step indexing: schedule arrays have length N + 1 with index 0 meaning clean
data (alpha_bar[0] = 1); training samples n uniformly from 1..N and the
samplers run n = N..1.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from ..core import tensor as T
from ..core.checkpoint import save_checkpoint
from ..core.optim import AdamW
from ..core.params import ParamStore, TensorBag, bag_from, gradients
from ..core.rng import RngStream
from ..core.tensor import NumericError, sinusoidal_embedding
from .layers import init_linear, init_stack, linear, stack


class NoiseSchedule:
    """Linear variance schedule beta_1 = 1e-4 .. beta_N = 0.02."""

    def __init__(self, n_steps: int = 1000, beta_start: float = 1e-4,
                 beta_end: float = 0.02):
        if n_steps < 1:
            raise ValueError("schedule needs at least one step")
        betas = np.concatenate([[0.0], np.linspace(beta_start, beta_end, n_steps)])
        if np.any(betas[1:] <= 0) or np.any(betas[1:] >= 1):
            raise ValueError("betas must lie in (0, 1)")
        self.n_steps = n_steps
        self.beta = betas
        self.alpha = 1.0 - betas
        self.alpha_bar = np.cumprod(self.alpha)
        if np.any(np.diff(self.alpha_bar[1:]) >= 0):
            raise ValueError("alpha_bar must be strictly decreasing")
        self.sigma = np.sqrt(self.beta)

    def to_dict(self) -> dict:
        return {"n_steps": self.n_steps, "beta_start": float(self.beta[1]),
                "beta_end": float(self.beta[-1])}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSchedule":
        return cls(d["n_steps"], d["beta_start"], d["beta_end"])


@dataclass
class DenoiserConfig:
    layers: int = 2
    heads: int = 4
    width: int = 64
    mlp_ratio: int = 2
    vocab_size: int = 8
    cond_dropout: float = 0.1
    guidance: float = 2.5
    lr: float = 1e-3
    weight_decay: float = 1e-4
    batch_size: int = 64
    steps: int = 3000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        return cls(**d)


NULL_PROMPT = -1   # maps to the last embedding-table row


def init_denoiser(params: ParamStore, cfg: DenoiserConfig, latent: int,
                  rng: RngStream, prefix: str = "den") -> None:
    init_stack(params, prefix, latent, latent, cfg.width, cfg.layers,
               cfg.mlp_ratio, rng)
    init_linear(params, f"{prefix}.step", cfg.width, cfg.width, rng)
    params.add(f"{prefix}.prompt",
               rng.normal((cfg.vocab_size + 1, cfg.width)) * 0.1)


def _prompt_rows(prompt_ids, batch: int, vocab_size: int) -> np.ndarray:
    if prompt_ids is None:
        ids = np.full(batch, vocab_size, dtype=np.int64)
    else:
        ids = np.atleast_1d(np.asarray(prompt_ids, dtype=np.int64)).copy()
        if ids.size == 1 and batch > 1:
            ids = np.full(batch, ids[0], dtype=np.int64)
        ids[ids == NULL_PROMPT] = vocab_size
    return ids


def denoiser_forward(bag: TensorBag, cfg: DenoiserConfig, x, n, prompt_ids,
                     prefix: str = "den"):
    """x: (B, T, d) noisy latents; n: scalar or (B,) step index; prompt_ids:
    None for unconditional, scalar or (B,) with -1 meaning null."""
    x = T.as_tensor(x)
    B = x.shape[0]
    n_arr = np.atleast_1d(np.asarray(n, dtype=np.float64))
    if n_arr.size == 1 and B > 1:
        n_arr = np.full(B, n_arr[0])
    step_code = sinusoidal_embedding(n_arr, cfg.width)
    bias = linear(bag, f"{prefix}.step", T.as_tensor(step_code))
    ids = _prompt_rows(prompt_ids, B, cfg.vocab_size)
    bias = bias + T.take_rows(bag[f"{prefix}.prompt"], ids)
    bias = T.reshape(bias, (B, 1, cfg.width))
    return stack(bag, prefix, x, cfg.layers, cfg.heads, extra_token_bias=bias)


def predict_eps(x_n, n, prompt_id, params: ParamStore, cfg: DenoiserConfig,
                prefix: str = "den") -> np.ndarray:
    """Inference-mode noise prediction; prompt_id None = unconditional."""
    x = np.asarray(x_n, dtype=np.float64)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    out = denoiser_forward(bag_from(params), cfg, x, n, prompt_id, prefix)
    return out.data[0] if squeeze else out.data


def q_sample(x0, n, eps, schedule: NoiseSchedule):
    """Forward noising x_n = sqrt(abar_n) x0 + sqrt(1 - abar_n) eps.
    `n` is a scalar or per-sample array in 1..N."""
    x0 = np.asarray(x0, dtype=np.float64)
    n_arr = np.asarray(n)
    if np.any(n_arr < 1) or np.any(n_arr > schedule.n_steps):
        raise ValueError("n out of range 1..N")
    ab = schedule.alpha_bar[n_arr]
    while ab.ndim < x0.ndim:
        ab = ab[..., None]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * np.asarray(eps)


def diffusion_loss(x0_batch, prompt_ids, bag_or_params, cfg: DenoiserConfig,
                   schedule: NoiseSchedule, rng: RngStream,
                   prefix: str = "den"):
    """Mean per-sample ||eps - eps_hat||^2 with seeded step/noise draws and
    classifier-free prompt dropout. Returns a Tensor when given a TensorBag
    (for gradients) or a float when given a ParamStore."""
    bag = bag_or_params if isinstance(bag_or_params, TensorBag) \
        else bag_from(bag_or_params)
    x0 = np.asarray(x0_batch, dtype=np.float64)
    B = x0.shape[0]
    n = rng.integers(1, schedule.n_steps + 1, B)
    eps = rng.normal(x0.shape)
    ids = np.atleast_1d(np.asarray(prompt_ids, dtype=np.int64)).copy()
    drop = rng.uniform(0.0, 1.0, B) < cfg.cond_dropout
    ids[drop] = NULL_PROMPT
    x_n = q_sample(x0, n, eps, schedule)
    eps_hat = denoiser_forward(bag, cfg, x_n, n, ids, prefix)
    err = eps_hat - T.as_tensor(eps)
    loss = T.mean(T.sum_(T.square(err), axis=(-1, -2)))
    return loss if isinstance(bag_or_params, TensorBag) else float(loss.data)


class SampleStats:
    def __init__(self):
        self.denoiser_calls = 0
        self.wall_time = 0.0


def guided_denoiser(params: ParamStore, cfg: DenoiserConfig, prompt_id,
                    guidance: float, stats: SampleStats | None = None,
                    forward=None):
    """Build denoise_fn(x, n) applying classifier-free guidance:
    eps = (1 + w) eps_cond - w eps_uncond. `forward` overrides the module's
    conditional forward (used by the control branch)."""
    bag = bag_from(params)
    if forward is None:
        def forward(x, n, pid):
            return denoiser_forward(bag, cfg, x, n, pid).data

    def denoise(x, n):
        if stats is not None:
            stats.denoiser_calls += 1
        cond = forward(x, n, prompt_id)
        if guidance == 0.0:
            return cond
        if stats is not None:
            stats.denoiser_calls += 1
        uncond = forward(x, n, None)
        return (1.0 + guidance) * cond - guidance * uncond

    return denoise


def ddpm_sample(denoise_fn, schedule: NoiseSchedule, shape, seed: int,
                sigma_scale: float = 1.0,
                stats: SampleStats | None = None) -> np.ndarray:
    """Ancestral sampler; x_N ~ N(0, I), sigma_n = sqrt(beta_n).
    `sigma_scale` = 0 disables the noise injection (oracle tests)."""
    rng = RngStream(seed, lane=101)
    t0 = time.time()
    x = rng.normal(shape)
    for n in range(schedule.n_steps, 0, -1):
        eps_hat = denoise_fn(x, n)
        a_n = schedule.alpha[n]
        ab_n = schedule.alpha_bar[n]
        x = (x - ((1.0 - a_n) / np.sqrt(1.0 - ab_n)) * eps_hat) / np.sqrt(a_n)
        if n > 1:
            z = rng.normal(shape)
            x = x + sigma_scale * schedule.sigma[n] * z
    if stats is not None:
        stats.wall_time += time.time() - t0
    return x


def ddim_sample(denoise_fn, schedule: NoiseSchedule, shape, steps: int,
                seed: int, stats: SampleStats | None = None) -> np.ndarray:
    """Deterministic eta = 0 sampler over an evenly strided subsequence."""
    if steps < 1 or schedule.n_steps % steps != 0:
        raise ValueError(
            f"steps={steps} must divide the {schedule.n_steps}-step schedule")
    stride = schedule.n_steps // steps
    rng = RngStream(seed, lane=101)
    t0 = time.time()
    x = rng.normal(shape)
    for n in range(schedule.n_steps, 0, -stride):
        prev = n - stride
        eps_hat = denoise_fn(x, n)
        ab_n = schedule.alpha_bar[n]
        ab_p = schedule.alpha_bar[prev]
        x0_pred = (x - np.sqrt(1.0 - ab_n) * eps_hat) / np.sqrt(ab_n)
        x = np.sqrt(ab_p) * x0_pred + np.sqrt(1.0 - ab_p) * eps_hat
    if stats is not None:
        stats.wall_time += time.time() - t0
    return x


def denoiser_flops_per_call(cfg: DenoiserConfig, seq_len: int,
                            latent: int) -> float:
    """Analytic multiply-add count of one denoiser forward (2 flops/MAC)."""
    w, L = cfg.width, seq_len
    per_layer = (4 * L * w * w            # qkvo projections
                 + 2 * L * L * w          # scores and value mix
                 + 2 * L * w * cfg.mlp_ratio * w * 2)
    total = (L * latent * w * 2           # in/out projections
             + cfg.layers * per_layer
             + w * w)                     # step embedding
    return 2.0 * total


def latent_dataset(X_norm: np.ndarray, ae_params: ParamStore, ae_cfg,
                   encode_fn) -> np.ndarray:
    """Frozen-encoder latents for a packed normalized split."""
    bag = bag_from(ae_params)
    out = []
    for lo in range(0, X_norm.shape[0], 256):
        out.append(encode_fn(X_norm[lo:lo + 256], bag, ae_cfg).data)
    return np.concatenate(out, axis=0)


class LatentNorm:
    """Per-dimension z-scoring of encoder latents for diffusion training."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, latents: np.ndarray) -> "LatentNorm":
        flat = latents.reshape(-1, latents.shape[-1])
        std = flat.std(axis=0)
        return cls(flat.mean(axis=0), np.where(std < 1e-9, 1.0, std))

    def forward(self, z):
        return (z - self.mean) / self.std

    def inverse(self, z):
        return z * self.std + self.mean


def train_stage2(manifest, ae_ckpt_path, cfg: DenoiserConfig,
                 schedule: NoiseSchedule, seed: int, out_dir,
                 log_every: int = 0) -> Path:
    """Stage 2: freeze the Stage-1 autoencoder, train the latent denoiser."""
    from ..core.checkpoint import load_checkpoint
    from .autoencoder import AEConfig, encode, packed_split

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ae_params, ae_meta = load_checkpoint(ae_ckpt_path)
    ae_cfg = AEConfig.from_dict(ae_meta["config"])
    X_train, pids = packed_split(manifest, "train")

    latents = latent_dataset(X_train, ae_params, ae_cfg, encode)
    lnorm = LatentNorm.fit(latents)
    Z = lnorm.forward(latents)

    rng = RngStream(seed, lane=21)
    params = ParamStore()
    init_denoiser(params, cfg, ae_cfg.latent, rng)
    params.add("latent_norm.mean", lnorm.mean, frozen=True)
    params.add("latent_norm.std", lnorm.std, frozen=True)
    opt = AdamW(cfg.lr, weight_decay=cfg.weight_decay)
    batch_rng = RngStream(seed, lane=22)
    loss_rng = RngStream(seed, lane=23)

    ckpt = out / "stage2_diffusion.ckpt"
    meta = {"kind": "diffusion", "config": cfg.to_dict(),
            "schedule": schedule.to_dict(), "latent": ae_cfg.latent}
    csv_path = out / "stage2_loss.csv"
    n = Z.shape[0]
    bs = min(cfg.batch_size, n)
    t0 = time.time()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "L_diff"])
        for step in range(cfg.steps):
            idx = batch_rng.choice(n, bs, replace=False)

            def loss_fn(bag, idx=idx):
                return diffusion_loss(Z[idx], pids[idx], bag, cfg, schedule,
                                      loss_rng)

            try:
                grads = gradients(loss_fn, params)
            except NumericError:
                raise NumericError(
                    f"non-finite Stage-2 loss at step {step}; last good "
                    f"checkpoint kept at {ckpt}")
            opt.step(params, grads)
            if step % 50 == 0 or step == cfg.steps - 1:
                val = diffusion_loss(Z[idx], pids[idx], params, cfg, schedule,
                                     RngStream(seed, lane=24))
                writer.writerow([step, val])
                fh.flush()
                save_checkpoint(params, ckpt, meta=meta)
                if log_every and step % log_every == 0:
                    print(f"[stage2] step {step} L_diff {val:.2f} "
                          f"({time.time() - t0:.0f}s)")
    save_checkpoint(params, ckpt, meta=meta)
    return ckpt
