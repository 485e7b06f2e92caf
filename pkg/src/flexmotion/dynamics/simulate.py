"""Muscle-driven forward simulation with a spring-damper ground model.

Semi-implicit Euler on the chain equation of motion with tau = R F_max a,
first-order activation dynamics, and a penalty ground: the normal contact
force is stiffness * depth - damping * normal velocity (clamped at zero)
whenever a contact tip is below ground, zero otherwise. Every recorded
frame satisfies the equation of motion exactly, which is what makes the
simulator usable as the physics oracle for the learned models.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import geometry
from .skeleton import MotionSequence, SkeletonModel


@dataclass
class GroundModel:
    stiffness: float = 1e4   # N/m
    damping: float = 50.0    # N s/m
    height: float = -10.0    # m


class SimulationDiverged(RuntimeError):
    def __init__(self, time: float, speed: float):
        super().__init__(f"simulation diverged at t={time:.4f}s "
                         f"(|rdot| = {speed:.1f} rad/s)")
        self.time = time


def forward_simulate(model: SkeletonModel, excitation, tau_act: float,
                     dt_sim: float, ground: GroundModel, duration: float,
                     r0: np.ndarray | None = None,
                     rdot0: np.ndarray | None = None,
                     a0: np.ndarray | None = None,
                     prompt_id: int = 0) -> MotionSequence:
    """Simulate one sequence of round(duration / dt_sim) frames.

    `excitation` is either a callable t -> (M,) neural excitation in [0, 1]
    or a precomputed (n_steps, M) array.
    """
    n_steps = int(round(duration / dt_sim))
    u = _excitation_array(excitation, n_steps, model.n_muscles, dt_sim)
    init = _initial_state(model, r0, rdot0, a0, batch=None)
    seqs = _simulate_batch(model, u[None], tau_act, dt_sim, ground, n_steps,
                           *[x[None] for x in init])
    return _to_sequence(model, seqs, 0, dt_sim, prompt_id)


def simulate_batch(model: SkeletonModel, u: np.ndarray, tau_act: float,
                   dt_sim: float, ground: GroundModel, duration: float,
                   r0: np.ndarray | None = None,
                   rdot0: np.ndarray | None = None,
                   a0: np.ndarray | None = None,
                   prompt_ids=None) -> list[MotionSequence]:
    """Vectorized variant over a leading batch axis of `u` (B, n_steps, M)."""
    n_steps = int(round(duration / dt_sim))
    if u.shape[1] != n_steps:
        raise ValueError("excitation length does not match duration")
    B = u.shape[0]
    init = _initial_state(model, r0, rdot0, a0, batch=B)
    raw = _simulate_batch(model, u, tau_act, dt_sim, ground, n_steps, *init)
    if prompt_ids is None:
        prompt_ids = [0] * B
    return [_to_sequence(model, raw, b, dt_sim, prompt_ids[b]) for b in range(B)]


def _excitation_array(excitation, n_steps, M, dt_sim):
    if callable(excitation):
        u = np.stack([np.asarray(excitation(i * dt_sim), dtype=np.float64)
                      for i in range(n_steps)])
    else:
        u = np.asarray(excitation, dtype=np.float64)
    if u.shape != (n_steps, M):
        raise ValueError(f"excitation must have shape ({n_steps}, {M})")
    return u


def _initial_state(model, r0, rdot0, a0, batch):
    n = model.n_coords
    shape = (n,) if batch is None else (batch, n)
    ashape = (model.n_muscles,) if batch is None else (batch, model.n_muscles)
    r = np.zeros(shape) if r0 is None else np.asarray(r0, dtype=np.float64).copy()
    rd = np.zeros(shape) if rdot0 is None else np.asarray(rdot0, dtype=np.float64).copy()
    a = np.zeros(ashape) if a0 is None else np.asarray(a0, dtype=np.float64).copy()
    return r, rd, a


def _simulate_batch(model, u, tau_act, dt_sim, ground, n_steps, r, rdot, a):
    if dt_sim > 1e-3 + 1e-12:
        raise ValueError("dt_sim must be <= 1e-3 s")
    geom = geometry(model)
    act = model.act_idx
    B = u.shape[0]
    n = model.n_coords
    C = len(model.contact_ids)
    rf = model.moment_arms * model.f_max[None, :]          # (3J, M)
    out = {k: np.zeros((B, n_steps, n)) for k in
           ("p", "r", "rdot", "rddot", "tau", "lam")}
    out["a"] = np.zeros((B, n_steps, model.n_muscles))

    for step in range(n_steps):
        theta = r[:, act]
        d = geom.offsets(theta)
        tips, _ = geom.tips_origins(theta)
        M_act = geom.mass_act(d)
        cvec = geom.coriolis_act(d, rdot[:, act])
        gvec = geom.gravity_act(d)
        tau = a @ rf.T                                     # (B, 3J)

        lam = np.zeros((B, n))
        rhs_contact = np.zeros((B, model.dof))
        if C:
            jc = geom.contact_jacobian_act(d)              # (B, 3C, J)
            vel = np.einsum("bck,bk->bc", jc, rdot[:, act])
            for ci, seg in enumerate(model.contact_ids):
                depth = ground.height - tips[:, seg, 1]
                in_contact = depth > 0.0
                fy = np.where(
                    in_contact,
                    np.maximum(ground.stiffness * depth
                               - ground.damping * vel[:, 3 * ci + 1], 0.0),
                    0.0)
                lam[:, 3 * seg + 1] = fy
                rhs_contact += jc[:, 3 * ci + 1, :] * fy[:, None]

        rhs = tau[:, act] + rhs_contact - cvec - gvec
        rddot_act = np.linalg.solve(M_act, rhs[..., None])[..., 0]
        rddot = np.zeros((B, n))
        rddot[:, act] = rddot_act

        out["p"][:, step, 0::3] = tips[..., 0]
        out["p"][:, step, 1::3] = tips[..., 1]
        out["r"][:, step] = r
        out["rdot"][:, step] = rdot
        out["rddot"][:, step] = rddot
        out["a"][:, step] = a
        out["tau"][:, step] = tau
        out["lam"][:, step] = lam

        rdot = rdot + dt_sim * rddot
        r = r + dt_sim * rdot
        a = np.clip(a + (dt_sim / tau_act) * (u[:, step] - a), 0.0, 1.0)

        speed = np.abs(rdot).max()
        if speed > 1e3:
            raise SimulationDiverged((step + 1) * dt_sim, float(speed))
    return out


def _to_sequence(model, raw, b, dt_sim, prompt_id) -> MotionSequence:
    return MotionSequence(raw["p"][b], raw["r"][b], raw["rdot"][b],
                          raw["rddot"][b], raw["a"][b], raw["tau"][b],
                          raw["lam"][b], dt_sim, prompt_id)
