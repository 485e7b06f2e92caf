"""Physics-aware multimodal transformer autoencoder and Stage-1 training.

The encoder consumes [channels; observation mask] (2D inputs) so the same
frozen weights later featurize partially observed control signals; during
reconstruction training the mask is all ones. Reconstruction is penalized
per modality (squared l2 everywhere, l1 on the sparse contact forces), and
the physics terms act on the denormalized reconstruction: the equation-of-
motion residual and the muscle-coordination gap rddot vs L(r) a.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from ..core import tensor as T
from ..core.checkpoint import save_checkpoint
from ..core.optim import AdamW
from ..core.params import ParamStore, TensorBag, bag_from, gradients
from ..core.rng import RngStream
from ..core.tensor import NumericError
from ..data.dataset import DatasetManifest
from ..data.normalize import NormStats
from ..dynamics.skeleton import SkeletonModel, channel_slices
from .layers import init_stack, stack
from .physics_ops import euler_residual_op, muscle_accel_op


@dataclass
class LossWeights:
    pos: float = 1.0
    rot: float = 1.0
    vel: float = 0.1
    acc: float = 0.1
    torque: float = 0.5
    force: float = 0.5
    muscle: float = 1.0


@dataclass
class AEConfig:
    layers: int = 2            # paper preset: 6
    heads: int = 4             # paper preset: 8
    width: int = 64            # paper preset: 1024
    latent: int = 32           # paper preset: 1024
    mlp_ratio: int = 2
    weights: LossWeights = field(default_factory=LossWeights)
    gamma_euler: float = 1.0
    gamma_muscle: float = 1.0
    beta_reg: float = 0.01
    pooled: bool = False
    lr: float = 1e-3           # paper preset: 1e-5
    weight_decay: float = 1e-4
    batch_size: int = 64
    epochs: int = 60
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AEConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)


def init_autoencoder(cfg: AEConfig, feature_dim: int,
                     rng: RngStream) -> ParamStore:
    params = ParamStore()
    init_stack(params, "enc", 2 * feature_dim, cfg.latent, cfg.width,
               cfg.layers, cfg.mlp_ratio, rng)
    init_stack(params, "dec", cfg.latent, feature_dim, cfg.width,
               cfg.layers, cfg.mlp_ratio, rng)
    # start reconstructions at the channel means so the physics terms see
    # sane physical values from step one
    params["dec.out.w"] = np.zeros_like(params["dec.out.w"])
    return params


def encode(x, bag: TensorBag, cfg: AEConfig, mask=None):
    """x: (B, T, D) normalized channels -> latents (B, T, d) (or (B, 1, d)
    when pooled). `mask` defaults to fully observed."""
    x = T.as_tensor(x)
    if mask is None:
        mask_arr = np.ones_like(x.data)
    else:
        mask_arr = np.asarray(mask, dtype=np.float64)
    inp = T.concat([x, T.as_tensor(mask_arr)], axis=-1)
    lat = stack(bag, "enc", inp, cfg.layers, cfg.heads)
    if cfg.pooled:
        lat = T.mean(lat, axis=1, keepdims=True)
    return lat


def decode(latents, bag: TensorBag, cfg: AEConfig, length: int | None = None):
    """latents: (B, T, d) -> reconstruction (B, T, D). Pooled latents are
    broadcast to `length` tokens."""
    latents = T.as_tensor(latents)
    if cfg.pooled:
        if length is None:
            raise ValueError("pooled decode requires target length")
        latents = T.concat([latents] * length, axis=1)
    return stack(bag, "dec", latents, cfg.layers, cfg.heads)


def _reduce(t):
    """Sum over (time, channel); mean over any leading batch axes."""
    s = T.sum_(t, axis=(-1, -2))
    return T.mean(s) if s.ndim > 0 else s


def recon_loss(x, x_hat, weights: LossWeights, dof: int, n_muscles: int):
    """Weighted modality reconstruction loss on matching-layout arrays."""
    x, x_hat = T.as_tensor(x), T.as_tensor(x_hat)
    sl = channel_slices(dof, n_muscles)
    d = x - x_hat
    total = _reduce(T.square(d[..., sl["p"]])) * weights.pos
    total = total + _reduce(T.square(d[..., sl["r"]])) * weights.rot
    total = total + _reduce(T.square(d[..., sl["rdot"]])) * weights.vel
    total = total + _reduce(T.square(d[..., sl["rddot"]])) * weights.acc
    total = total + _reduce(T.square(d[..., sl["a"]])) * weights.muscle
    total = total + _reduce(T.square(d[..., sl["tau"]])) * weights.torque
    total = total + _reduce(T.abs_(d[..., sl["lam"]])) * weights.force
    return total


def physics_terms(x_hat_denorm, model: SkeletonModel, beta_reg: float):
    """(euler, muscle) loss terms of a denormalized reconstruction."""
    sl = channel_slices(model.dof, model.n_muscles)
    r = x_hat_denorm[..., sl["r"]]
    rdot = x_hat_denorm[..., sl["rdot"]]
    rddot = x_hat_denorm[..., sl["rddot"]]
    a = x_hat_denorm[..., sl["a"]]
    tau = x_hat_denorm[..., sl["tau"]]
    lam = x_hat_denorm[..., sl["lam"]]
    rho = euler_residual_op(model, r, rdot, rddot, tau, lam)
    l_euler = _reduce(T.square(rho))
    la = muscle_accel_op(model, r, a)
    gap = rddot - la
    l_muscle = _reduce(T.square(gap)) + beta_reg * _reduce(T.square(a))
    return l_euler, l_muscle


def ae_total_loss(x, x_hat, model: SkeletonModel, stats: NormStats,
                  cfg: AEConfig, parts: dict | None = None):
    """Stage-1 objective on a normalized (x, x_hat) pair.

    Physics terms are computed on the denormalized reconstruction; with
    both gamma weights zero this equals the reconstruction loss exactly.
    """
    l_recon = recon_loss(x, x_hat, cfg.weights, model.dof, model.n_muscles)
    total = l_recon
    l_euler = l_muscle = None
    if cfg.gamma_euler != 0.0 or cfg.gamma_muscle != 0.0:
        x_hat_den = T.as_tensor(x_hat) * stats.std + stats.mean
        l_euler, l_muscle = physics_terms(x_hat_den, model, cfg.beta_reg)
        if cfg.gamma_euler != 0.0:
            total = total + cfg.gamma_euler * l_euler
        if cfg.gamma_muscle != 0.0:
            total = total + cfg.gamma_muscle * l_muscle
    if parts is not None:
        parts["recon"] = float(l_recon.data)
        parts["euler"] = float(l_euler.data) if l_euler is not None else 0.0
        parts["muscle"] = float(l_muscle.data) if l_muscle is not None else 0.0
        parts["total"] = float(total.data)
    return total


def packed_split(manifest: DatasetManifest, split: str) -> tuple[np.ndarray, np.ndarray]:
    """Normalized (N, T, D) array and (N,) prompt ids for one split."""
    seqs = manifest.load_split(split)
    stats = manifest.stats
    X = np.stack([stats.normalize_array(s.to_matrix()) for s in seqs])
    pids = np.array([s.prompt_id for s in seqs], dtype=np.int64)
    return X, pids


def reconstruct(X: np.ndarray, params: ParamStore, cfg: AEConfig) -> np.ndarray:
    """Normalized batch -> normalized reconstruction (no gradients)."""
    bag = bag_from(params)
    out = []
    for lo in range(0, X.shape[0], 256):
        xb = X[lo:lo + 256]
        lat = encode(xb, bag, cfg)
        out.append(decode(lat, bag, cfg, length=xb.shape[1]).data)
    return np.concatenate(out, axis=0)


def heldout_channel_mse(X_val: np.ndarray, params: ParamStore,
                        cfg: AEConfig) -> tuple[np.ndarray, np.ndarray]:
    """(per-channel MSE, per-channel variance) on a normalized split."""
    Xh = reconstruct(X_val, params, cfg)
    err = ((Xh - X_val) ** 2).mean(axis=(0, 1))
    var = X_val.var(axis=(0, 1))
    return err, var


def train_stage1(manifest: DatasetManifest, cfg: AEConfig, seed: int,
                 out_dir, log_every: int = 0) -> Path:
    """Stage 1: train encoder + decoder on the reconstruction and physics
    objective; all parameters receive updates. Writes loss CSV and the
    checkpoint; returns the checkpoint path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model = manifest.model
    stats = manifest.stats
    X_train, _ = packed_split(manifest, "train")
    D = X_train.shape[2]

    rng = RngStream(seed, lane=11)
    params = init_autoencoder(cfg, D, rng)
    opt = AdamW(cfg.lr, weight_decay=cfg.weight_decay)
    shuffle = RngStream(seed, lane=12)

    ckpt_path = out / "stage1_ae.ckpt"
    csv_path = out / "stage1_loss.csv"
    meta = {"kind": "ae", "config": cfg.to_dict(), "feature_dim": D}
    n = X_train.shape[0]
    bs = min(cfg.batch_size, n)
    t_start = time.time()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "L_recon", "L_euler", "L_muscle", "L_AE"])
        for epoch in range(cfg.epochs):
            perm = shuffle.permutation(n)
            sums = {"recon": 0.0, "euler": 0.0, "muscle": 0.0, "total": 0.0}
            n_batches = 0
            for lo in range(0, n - bs + 1, bs):
                xb = X_train[perm[lo:lo + bs]]
                parts: dict = {}

                def loss_fn(bag, xb=xb, parts=parts):
                    lat = encode(xb, bag, cfg)
                    xh = decode(lat, bag, cfg, length=xb.shape[1])
                    return ae_total_loss(xb, xh, model, stats, cfg, parts)

                try:
                    grads = gradients(loss_fn, params)
                except NumericError:
                    raise NumericError(
                        f"non-finite Stage-1 loss at epoch {epoch}; last good "
                        f"checkpoint kept at {ckpt_path}")
                opt.step(params, grads)
                for k in sums:
                    sums[k] += parts[k]
                n_batches += 1
            row = [epoch] + [sums[k] / max(n_batches, 1)
                             for k in ("recon", "euler", "muscle", "total")]
            writer.writerow(row)
            fh.flush()
            save_checkpoint(params, ckpt_path, meta=meta)
            if log_every and epoch % log_every == 0:
                print(f"[stage1] epoch {epoch} L_AE {row[-1]:.4f} "
                      f"({time.time() - t_start:.0f}s)")
    save_checkpoint(params, ckpt_path, meta=meta)
    return ckpt_path
