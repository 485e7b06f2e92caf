"""Evaluation metrics: FID, diversity, R-Precision, foot skate/float/
penetrate, contact-force accuracy, joint-actuation consistency, muscle
limits, and trajectory error.

Feature space for the distribution metrics is the time-pooled frozen
Stage-1 encoder latent. Ground-truth simulator data scores ~0 on every
physics metric, mirroring the "Real" row of the benchmark tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core.rng import RngStream
from .dynamics.dynamics import geometry
from .dynamics.muscles import solve_muscle_activations
from .dynamics.skeleton import MotionSequence, SkeletonModel


class GaussianStats:
    """Mean and covariance of pooled features; covariance eigen-clipped
    to the PSD cone when consumed."""

    def __init__(self, mean: np.ndarray, cov: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = 0.5 * (np.asarray(cov, dtype=np.float64)
                          + np.asarray(cov, dtype=np.float64).T)

    @classmethod
    def from_features(cls, feats: np.ndarray) -> "GaussianStats":
        feats = np.asarray(feats, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] < 2:
            raise ValueError("need at least two feature vectors")
        return cls(feats.mean(axis=0), np.cov(feats, rowvar=False))


def _sqrt_psd(S: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(S)
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.T


def fid(stats_a: GaussianStats, stats_b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}); the matrix
    square root goes through the symmetrized product A S_b A with
    A = S_a^{1/2}."""
    if stats_a.mean.shape != stats_b.mean.shape:
        raise ValueError("feature dimensions differ")
    a = _sqrt_psd(stats_a.cov)
    inner = a @ stats_b.cov @ a
    w = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.T)), 0.0, None)
    tr_sqrt = np.sqrt(w).sum()
    diff = stats_a.mean - stats_b.mean
    val = diff @ diff + np.trace(stats_a.cov) + np.trace(stats_b.cov) \
        - 2.0 * tr_sqrt
    return float(max(val, 0.0))


def diversity(features: np.ndarray, pairs: int = 100, seed: int = 0) -> float:
    """Mean Euclidean distance over seeded random distinct pairs."""
    feats = np.asarray(features, dtype=np.float64)
    n = feats.shape[0]
    if n < 2:
        raise ValueError("diversity needs at least two samples")
    rng = RngStream(seed, lane=41)
    i = rng.integers(0, n, pairs)
    j = rng.integers(0, n - 1, pairs)
    j = np.where(j >= i, j + 1, j)
    return float(np.linalg.norm(feats[i] - feats[j], axis=1).mean())


def prompt_prototypes(features: np.ndarray, prompt_ids: np.ndarray,
                      n_prompts: int) -> np.ndarray:
    """Mean feature per prompt id, the retrieval-side embedding."""
    feats = np.asarray(features, dtype=np.float64)
    ids = np.asarray(prompt_ids)
    protos = np.zeros((n_prompts, feats.shape[1]))
    for c in range(n_prompts):
        sel = ids == c
        if not sel.any():
            raise ValueError(f"no examples for prompt id {c}")
        protos[c] = feats[sel].mean(axis=0)
    return protos


def r_precision(features: np.ndarray, prompt_ids: np.ndarray,
                prototypes: np.ndarray, pool_size: int = 32, k: int = 3,
                seed: int = 0) -> float:
    """Top-k retrieval accuracy: for each motion, rank its true prompt
    against pool_size - 1 distinct distractor prompts by cosine similarity
    of the motion feature to the prompt prototypes."""
    feats = np.asarray(features, dtype=np.float64)
    ids = np.asarray(prompt_ids)
    V = prototypes.shape[0]
    if pool_size > V:
        raise ValueError(
            f"pool_size {pool_size} exceeds the {V} prompts in the dataset")
    if pool_size > feats.shape[0] + V - 1:
        raise ValueError("pool larger than dataset")
    rng = RngStream(seed, lane=42)
    protos_n = prototypes / np.maximum(
        np.linalg.norm(prototypes, axis=1, keepdims=True), 1e-12)
    feats_n = feats / np.maximum(
        np.linalg.norm(feats, axis=1, keepdims=True), 1e-12)
    hits = 0
    for i in range(feats.shape[0]):
        true = int(ids[i])
        others = [c for c in range(V) if c != true]
        order = rng.permutation(len(others))[:pool_size - 1]
        cand = np.array([true] + [others[o] for o in order])
        sims = feats_n[i] @ protos_n[cand].T
        rank = int((sims > sims[0]).sum())
        hits += rank < k
    return hits / feats.shape[0]


@dataclass
class PhysicalThresholds:
    h_contact: float = 0.02       # m above ground counted as contact
    f_contact: float = 1.0        # N of normal force counted as loaded
    trajectory: float = 0.05      # m keyframe tolerance


def physical_metrics(seq: MotionSequence, model: SkeletonModel,
                     ground_height: float,
                     thresholds: PhysicalThresholds | None = None) -> dict:
    """Foot skate, float, and penetration of one denormalized sequence."""
    th = thresholds or PhysicalThresholds()
    cids = model.contact_ids
    skate_vals, float_vals, pen_vals = [], [], []
    for c in cids:
        py = seq.p[:, 3 * c + 1]
        height = py - ground_height
        lam_y = seq.lam[:, 3 * c + 1]
        horiz = seq.p[:, [3 * c, 3 * c + 2]]
        speed = np.empty(len(seq))
        speed[:-1] = np.linalg.norm(np.diff(horiz, axis=0), axis=1) / seq.dt
        speed[-1] = speed[-2]
        loaded = lam_y > th.f_contact
        near = height < th.h_contact
        skate_vals.append(speed[loaded & near])
        float_vals.append(height[loaded & ~near])
        pen_vals.append(np.maximum(-height, 0.0)[height < 0.0])

    def mean_or_zero(parts):
        vals = np.concatenate(parts) if parts else np.zeros(0)
        return float(vals.mean()) if vals.size else 0.0

    return {"skate": mean_or_zero(skate_vals),
            "float": mean_or_zero(float_vals),
            "penetrate": mean_or_zero(pen_vals)}


def dynamics_metrics(seq: MotionSequence, model: SkeletonModel,
                     beta_reg: float = 0.0) -> dict:
    """Contact-force accuracy, joint-actuation consistency, muscle limits.

    contact_force: mean abs gap between recorded contact forces and the
    least-squares projection of the equation-of-motion imbalance onto
    J_C^T. joint_actuation: mean residual norm of the equation of motion
    under the sequence's own torques and forces. muscle_limit: activation
    range violations plus the gap between the accelerations and the best
    box-feasible muscle reconstruction L a*.
    """
    geom = geometry(model)
    act = model.act_idx
    theta = seq.r[:, act]
    d = geom.offsets(theta)
    M_act = geom.mass_act(d)
    c_act = geom.coriolis_act(d, seq.rdot[:, act])
    g_act = geom.gravity_act(d)
    lhs = (np.einsum("fkl,fl->fk", M_act, seq.rddot[:, act])
           + c_act + g_act)
    if model.contact_ids:
        jc = geom.contact_jacobian_act(d)                  # (F, 3C, J)
        lam_rec = np.stack([seq.lam[:, 3 * c:3 * c + 3]
                            for c in model.contact_ids],
                           axis=1).reshape(len(seq), -1)
        res = lhs - seq.tau[:, act] - np.einsum("fck,fc->fk", jc, lam_rec)
        # lambda implied by the imbalance (least squares onto J_C^T)
        imbalance = lhs - seq.tau[:, act]
        jct = np.swapaxes(jc, 1, 2)                        # (F, J, 3C)
        lam_imp = np.einsum("fck,fk->fc", np.linalg.pinv(jct), imbalance)
        contact_force = float(np.abs(lam_rec - lam_imp).mean())
    else:
        res = lhs - seq.tau[:, act]
        contact_force = 0.0
    joint_actuation = float(np.linalg.norm(res, axis=1).mean())

    # muscle feasibility: recorded activations in range, accelerations
    # attainable by some activation in the box
    overflow = (np.maximum(seq.a - 1.0, 0.0) + np.maximum(-seq.a, 0.0)).sum(axis=1)
    rf = model.moment_arms[act] * model.f_max[None, :]
    L_act = np.linalg.solve(M_act, np.broadcast_to(
        rf, M_act.shape[:-2] + rf.shape))
    a_star = solve_muscle_activations(L_act, seq.rddot[:, act], beta_reg,
                                      strict=False)
    gap = np.linalg.norm(seq.rddot[:, act]
                         - np.einsum("fkm,fm->fk", L_act, a_star), axis=1)
    muscle_limit = float(overflow.mean() + gap.mean())

    return {"contact_force": contact_force,
            "joint_actuation": joint_actuation,
            "muscle_limit": muscle_limit}


def trajectory_error(generated: list[MotionSequence], specs: list,
                     threshold: float = 0.05) -> float:
    """Fraction of sequences with any conditioned keyframe location error
    above `threshold` (Euclidean, per observed joint and frame)."""
    if len(generated) != len(specs):
        raise ValueError("one spec per generated sequence required")
    failures = 0
    checked = False
    for seq, spec in zip(generated, specs):
        dof = seq.p.shape[1] // 3
        pmask = spec.mask[:, :3 * dof]
        if not pmask.any():
            raise ValueError("control spec observes no location channels")
        checked = True
        targets = spec.values[:, :3 * dof]
        bad = False
        for j in range(dof):
            cols = slice(3 * j, 3 * j + 3)
            rows = pmask[:, cols].any(axis=1)
            if not rows.any():
                continue
            err = np.linalg.norm(seq.p[rows, cols] - targets[rows, cols],
                                 axis=1)
            if (err > threshold).any():
                bad = True
                break
        failures += bad
    if not checked:
        raise ValueError("no location-conditioned specs supplied")
    return failures / len(generated)


@dataclass
class MetricReport:
    r_precision: float = 0.0
    fid: float = 0.0
    div: float = 0.0
    skate: float = 0.0
    float_: float = 0.0
    penetrate: float = 0.0
    contact_force: float = 0.0
    joint_actuation: float = 0.0
    muscle_limit: float = 0.0
    trajectory: float = 0.0

    COLUMNS = ("R-Precision", "FID", "DIV", "Skate", "Float", "Penetrate",
               "Contact Force", "Joint Actuation", "Muscle Limit",
               "Trajectory")

    def row(self) -> list[float]:
        vals = [self.r_precision, self.fid, self.div, self.skate, self.float_,
                self.penetrate, self.contact_force, self.joint_actuation,
                self.muscle_limit, self.trajectory]
        for v in vals:
            if not np.isfinite(v):
                raise ValueError("metric report contains non-finite values")
        return vals


def aggregate_physics(seqs: list[MotionSequence], model: SkeletonModel,
                      ground_height: float,
                      thresholds: PhysicalThresholds | None = None) -> dict:
    """Sequence-averaged physical and dynamics metrics."""
    keys = ("skate", "float", "penetrate", "contact_force",
            "joint_actuation", "muscle_limit")
    acc = {k: 0.0 for k in keys}
    for s in seqs:
        pm = physical_metrics(s, model, ground_height, thresholds)
        dm = dynamics_metrics(s, model)
        for k in keys:
            acc[k] += pm.get(k, dm.get(k, 0.0))
    return {k: v / max(len(seqs), 1) for k, v in acc.items()}
