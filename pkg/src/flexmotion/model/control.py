"""Plug-and-play spatial control: condition encoding through the frozen
encoder, a trainable denoiser copy between two zero-initialized per-token
projections, Stage-3 training, and the experiment condition generator.

At initialization both projections output exactly zero, so the attached
control branch is a bitwise no-op on the pretrained sampler.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from ..core import tensor as T
from ..core.checkpoint import load_checkpoint, save_checkpoint
from ..core.optim import AdamW
from ..core.params import ParamStore, TensorBag, bag_from, gradients
from ..core.rng import RngStream
from ..core.tensor import NumericError
from ..data.normalize import NormStats
from ..dynamics.skeleton import SkeletonModel, channel_slices
from .autoencoder import AEConfig, encode
from .diffusion import (NULL_PROMPT, DenoiserConfig, LatentNorm, NoiseSchedule,
                        denoiser_forward, q_sample)
from .layers import init_linear, linear


class ControlSpec:
    """Per-frame, per-channel condition values with an observation mask.

    Values are stored in physical units in the motion channel layout;
    unobserved entries are zero-filled.
    """

    def __init__(self, values: np.ndarray, mask: np.ndarray, kind: str = "",
                 seed: int = 0):
        self.values = np.asarray(values, dtype=np.float64)
        self.mask = np.asarray(mask, dtype=bool)
        if self.values.shape != self.mask.shape:
            raise ValueError("mask and values must have identical shape")
        self.values = np.where(self.mask, self.values, 0.0)
        self.kind = kind
        self.seed = int(seed)

    @property
    def shape(self):
        return self.values.shape

    def save(self, path) -> None:
        T_, D = self.values.shape
        header = {"spec_kind": self.kind, "seed": self.seed, "T": T_, "D": D}
        lines = [json.dumps(header)]
        for row in self.values:
            lines.append(" ".join(repr(v) for v in row.tolist()))
        for row in self.mask.astype(int):
            lines.append(" ".join(str(v) for v in row.tolist()))
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "ControlSpec":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"control spec not found: {path}")
        raw = path.read_text().splitlines()
        header = json.loads(raw[0])
        T_, D = int(header["T"]), int(header["D"])
        if len(raw) - 1 < 2 * T_:
            raise ValueError(f"{path}: truncated control spec")
        vals = np.array([row.split() for row in raw[1:1 + T_]], dtype=np.float64)
        mask = np.array([row.split() for row in raw[1 + T_:1 + 2 * T_]],
                        dtype=np.float64).astype(bool)
        if vals.shape != (T_, D) or mask.shape != (T_, D):
            raise ValueError(f"{path}: value/mask block shape mismatch")
        return cls(vals, mask, header.get("spec_kind", ""),
                   header.get("seed", 0))


def make_condition(spec_kind: str, seq, seed: int, k: int | None = None,
                   frame_fraction: float | None = None,
                   model: SkeletonModel | None = None) -> ControlSpec:
    """Carve an observation pattern out of a ground-truth sequence.

    Kinds: muscles(k), joint_location(k), joint_actuation(k) observe the
    chosen channels for every frame; contact_force observes contact-point
    force and location channels; all_conditions(frame_fraction) observes
    every channel on ceil(fraction * T) random frames.
    """
    X = seq.to_matrix()
    T_, D = X.shape
    dof = seq.p.shape[1] // 3
    n_muscles = seq.a.shape[1]
    sl = channel_slices(dof, n_muscles)
    rng = RngStream(seed, lane=31)
    mask = np.zeros((T_, D), dtype=bool)

    if spec_kind == "muscles":
        if k is None or not 1 <= k <= n_muscles:
            raise ValueError(f"muscles(k) requires 1 <= k <= {n_muscles}")
        chans = rng.choice(n_muscles, k, replace=False)
        mask[:, sl["a"].start + chans] = True
    elif spec_kind in ("joint_location", "joint_actuation"):
        if k is None or not 1 <= k <= dof:
            raise ValueError(f"{spec_kind}(k) requires 1 <= k <= {dof}")
        joints = rng.choice(dof, k, replace=False)
        base = sl["p"].start if spec_kind == "joint_location" else sl["tau"].start
        for j in joints:
            mask[:, base + 3 * j: base + 3 * j + 3] = True
    elif spec_kind == "contact_force":
        if model is None or not model.contact_ids:
            raise ValueError("contact_force requires a model with contact points")
        for c in model.contact_ids:
            mask[:, sl["lam"].start + 3 * c: sl["lam"].start + 3 * c + 3] = True
            mask[:, sl["p"].start + 3 * c: sl["p"].start + 3 * c + 3] = True
    elif spec_kind == "all_conditions":
        if frame_fraction is None or not 0 < frame_fraction <= 1:
            raise ValueError("all_conditions requires frame_fraction in (0, 1]")
        n_frames = int(np.ceil(frame_fraction * T_))
        frames = rng.choice(T_, n_frames, replace=False)
        mask[frames, :] = True
    else:
        raise ValueError(f"unknown spec kind '{spec_kind}'")
    return ControlSpec(np.where(mask, X, 0.0), mask, kind=spec_kind, seed=seed)


def encode_control(spec: ControlSpec, ae_params: ParamStore, ae_cfg: AEConfig,
                   stats: NormStats) -> np.ndarray:
    """Frozen-encoder features of a masked condition signal, (T, d).

    Values are normalized, then unobserved entries are zeroed so they can
    never influence the features; the mask rides along as the encoder's
    auxiliary channels.
    """
    vals = stats.normalize_array(spec.values) * spec.mask
    bag = bag_from(ae_params)
    return encode(vals[None], bag, ae_cfg, mask=spec.mask[None].astype(np.float64)).data[0]


def encode_control_batch(values_norm: np.ndarray, masks: np.ndarray,
                         bag: TensorBag, ae_cfg: AEConfig):
    """Batched taped variant used inside Stage-3 training; inputs are
    already normalized and mask-zeroed."""
    return encode(values_norm, bag, ae_cfg, mask=masks)


CONTROL_PREFIX = "ctl"


def init_control(params: ParamStore, denoiser: ParamStore,
                 cfg: DenoiserConfig, latent: int) -> None:
    """Trainable copy of the denoiser plus the two zero projections."""
    for name, value in denoiser.items():
        if name.startswith("den."):
            params.add(CONTROL_PREFIX + name[3:], value.copy())
    init_linear(params, "z_in", latent, latent, rng=None, zero=True)
    init_linear(params, "z_out", latent, latent, rng=None, zero=True)


def controlled_eps(bag: TensorBag, frozen_bag: TensorBag, cfg: DenoiserConfig,
                   x_n, c_e, n, prompt_ids):
    """eps_theta(x, n, c) + Z_out(eps_copy(x + Z_in(C^e), n, c))."""
    x_t = T.as_tensor(x_n)
    base = denoiser_forward(frozen_bag, cfg, x_t, n, prompt_ids, prefix="den")
    shifted = x_t + linear(bag, "z_in", T.as_tensor(c_e))
    branch = denoiser_forward(bag, cfg, shifted, n, prompt_ids,
                              prefix=CONTROL_PREFIX)
    return base + linear(bag, "z_out", branch)


def controlled_eps_infer(control_params: ParamStore, frozen_params: ParamStore,
                         cfg: DenoiserConfig, x_n, c_e, n,
                         prompt_ids) -> np.ndarray:
    out = controlled_eps(bag_from(control_params), bag_from(frozen_params),
                         cfg, x_n, c_e, n, prompt_ids)
    return out.data


DEFAULT_TRAIN_KINDS = (("joint_location", dict(k=1)),
                       ("joint_location", dict(k=3)),
                       ("muscles", dict(k=2)),
                       ("joint_actuation", dict(k=2)),
                       ("all_conditions", dict(frame_fraction=0.2)),
                       ("contact_force", dict()))


def sample_condition_batch(seqs, indices, model, seed, step,
                           kinds=DEFAULT_TRAIN_KINDS):
    """Seeded ControlSpecs carved from the chosen ground-truth sequences."""
    picker = RngStream(seed ^ 0x5EED, lane=step)
    choices = picker.integers(0, len(kinds), len(indices))
    specs = []
    for row, idx in enumerate(indices):
        kind, kw = kinds[int(choices[row])]
        specs.append(make_condition(kind, seqs[idx],
                                    seed=(seed * 100003 + step * 97 + row) & 0x7FFFFFFF,
                                    model=model, **kw))
    return specs


def train_stage3(manifest, ae_ckpt_path, diff_ckpt_path, cfg_steps: int,
                 seed: int, out_dir, batch_size: int = 64, lr: float = 1e-3,
                 log_every: int = 0) -> Path:
    """Stage 3: freeze encoder, decoder, and denoiser; train the control
    copy and the zero projections on (data, carved ControlSpec) pairs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ae_params, ae_meta = load_checkpoint(ae_ckpt_path)
    ae_cfg = AEConfig.from_dict(ae_meta["config"])
    diff_params, diff_meta = load_checkpoint(diff_ckpt_path)
    den_cfg = DenoiserConfig.from_dict(diff_meta["config"])
    schedule = NoiseSchedule.from_dict(diff_meta["schedule"])
    lnorm = LatentNorm(diff_params["latent_norm.mean"],
                       diff_params["latent_norm.std"])
    model = manifest.model
    stats = manifest.stats

    from .autoencoder import packed_split
    X_train, pids = packed_split(manifest, "train")
    seqs = manifest.load_split("train")
    ae_bag = bag_from(ae_params)
    from .diffusion import latent_dataset
    Z = lnorm.forward(latent_dataset(X_train, ae_params, ae_cfg, encode))

    params = ParamStore()
    init_control(params, diff_params, den_cfg, ae_cfg.latent)
    frozen_bag = bag_from(diff_params)
    opt = AdamW(lr, weight_decay=1e-4)
    batch_rng = RngStream(seed, lane=32)
    noise_rng = RngStream(seed, lane=33)

    ckpt = out / "stage3_control.ckpt"
    meta = {"kind": "control", "config": den_cfg.to_dict(),
            "latent": ae_cfg.latent}
    csv_path = out / "stage3_loss.csv"
    n = Z.shape[0]
    bs = min(batch_size, n)
    t0 = time.time()
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "L_ctrl"])
        for step in range(cfg_steps):
            idx = batch_rng.choice(n, bs, replace=False)
            specs = sample_condition_batch(seqs, idx, model, seed, step)
            vals = np.stack([stats.normalize_array(s.values) * s.mask
                             for s in specs])
            masks = np.stack([s.mask.astype(np.float64) for s in specs])
            c_e = lnorm.forward(
                encode_control_batch(vals, masks, ae_bag, ae_cfg).data)

            nstep = noise_rng.integers(1, schedule.n_steps + 1, bs)
            eps = noise_rng.normal(Z[idx].shape)
            drop = noise_rng.uniform(0.0, 1.0, bs) < den_cfg.cond_dropout
            ids = pids[idx].copy()
            ids[drop] = NULL_PROMPT
            x_n = q_sample(Z[idx], nstep, eps, schedule)

            def loss_fn(bag, x_n=x_n, c_e=c_e, nstep=nstep, ids=ids, eps=eps):
                eps_hat = controlled_eps(bag, frozen_bag, den_cfg, x_n, c_e,
                                         nstep, ids)
                return T.mean(T.sum_(T.square(eps_hat - T.as_tensor(eps)),
                                     axis=(-1, -2)))

            try:
                grads = gradients(loss_fn, params)
            except NumericError:
                raise NumericError(
                    f"non-finite Stage-3 loss at step {step}; last good "
                    f"checkpoint kept at {ckpt}")
            opt.step(params, grads)
            if step % 50 == 0 or step == cfg_steps - 1:
                val = float(loss_fn(bag_from(params)).data)
                writer.writerow([step, val])
                fh.flush()
                save_checkpoint(params, ckpt, meta=meta)
                if log_every and step % log_every == 0:
                    print(f"[stage3] step {step} L_ctrl {val:.2f} "
                          f"({time.time() - t0:.0f}s)")
    save_checkpoint(params, ckpt, meta=meta)
    return ckpt
