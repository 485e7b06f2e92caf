"""Rigid-body dynamics quantities in the padded 3J coordinate layout.

Single-state entry points mirror the articulated-chain equation of motion

    M(r) rddot + C(r, rdot) rdot + G(r) = tau + J_C^T lambda

with G = +dU/dr on the left-hand side (the tested sign convention).
Batched helpers used by the simulator, training losses, and metrics live
on `ChainGeometry`; everything here is a thin scatter/gather wrapper.
"""

from __future__ import annotations

import numpy as np

from .kinematics import ChainGeometry
from .skeleton import MotionFrame, SkeletonModel

_GEOM_CACHE: dict[int, ChainGeometry] = {}


class SingularMassMatrix(RuntimeError):
    pass


def geometry(model: SkeletonModel) -> ChainGeometry:
    geom = _GEOM_CACHE.get(id(model))
    if geom is None or geom.model is not model:
        geom = ChainGeometry(model)
        _GEOM_CACHE[id(model)] = geom
    return geom


def _act(model: SkeletonModel, vec: np.ndarray) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64)[..., model.act_idx]


def _scatter(model: SkeletonModel, act: np.ndarray) -> np.ndarray:
    out = np.zeros(act.shape[:-1] + (model.n_coords,))
    out[..., model.act_idx] = act
    return out


def mass_matrix(model: SkeletonModel, r: np.ndarray) -> np.ndarray:
    """Generalized inertia, (3J, 3J); zero rows/cols at padded coordinates,
    positive definite on the actuated subspace."""
    geom = geometry(model)
    d = geom.offsets(_act(model, r))
    M_act = geom.mass_act(d)
    n = model.n_coords
    M = np.zeros(M_act.shape[:-2] + (n, n))
    ix = np.ix_(model.act_idx, model.act_idx)
    M[(..., *ix)] = M_act
    return M


def coriolis_forces(model: SkeletonModel, r: np.ndarray,
                    rdot: np.ndarray) -> np.ndarray:
    """Velocity-product forces C(r, rdot) rdot via Christoffel symbols, (3J,)."""
    geom = geometry(model)
    d = geom.offsets(_act(model, r))
    return _scatter(model, geom.coriolis_act(d, _act(model, rdot)))


def gravity_vector(model: SkeletonModel, r: np.ndarray) -> np.ndarray:
    """G = dU/dr of the total gravitational potential, (3J,)."""
    geom = geometry(model)
    d = geom.offsets(_act(model, r))
    return _scatter(model, geom.gravity_act(d))


def contact_jacobian(model: SkeletonModel, r: np.ndarray) -> np.ndarray:
    """Rows d p_c / d r for each contact tip, (3 * n_contacts, 3J)."""
    geom = geometry(model)
    d = geom.offsets(_act(model, r))
    rows_act = geom.contact_jacobian_act(d)
    out = np.zeros(rows_act.shape[:-1] + (model.n_coords,))
    out[..., model.act_idx] = rows_act
    return out


def contact_lambda_from_layout(model: SkeletonModel,
                               lam: np.ndarray) -> np.ndarray:
    """Extract the (3 * n_contacts,) contact-force vector from the 3J layout."""
    idx = np.concatenate([np.arange(3 * c, 3 * c + 3)
                          for c in model.contact_ids]) if model.contact_ids \
        else np.zeros(0, dtype=int)
    return np.asarray(lam)[..., idx]


def euler_residual(model: SkeletonModel, frame: MotionFrame) -> np.ndarray:
    """M rddot + C rdot + G - tau - J_C^T lambda for one frame, (3J,)."""
    return euler_residual_arrays(model, frame.r[None], frame.rdot[None],
                                 frame.rddot[None], frame.tau[None],
                                 frame.lam[None])[0]


def euler_residual_arrays(model: SkeletonModel, r, rdot, rddot, tau,
                          lam) -> np.ndarray:
    """Batched residual of the equation of motion, shape (..., 3J)."""
    geom = geometry(model)
    r = np.asarray(r, dtype=np.float64)
    theta = _act(model, r)
    d = geom.offsets(theta)
    M_act = geom.mass_act(d)
    c_act = geom.coriolis_act(d, _act(model, rdot))
    g_act = geom.gravity_act(d)
    lhs_act = (np.einsum("...kl,...l->...k", M_act, _act(model, rddot))
               + c_act + g_act)
    jc_act = geom.contact_jacobian_act(d)
    lam_c = contact_lambda_from_layout(model, lam)
    rhs_act = np.einsum("...ck,...c->...k", jc_act, lam_c)
    res = -np.asarray(tau, dtype=np.float64).copy()
    res[..., model.act_idx] += lhs_act - rhs_act
    return res


def muscle_mapping(model: SkeletonModel, r: np.ndarray) -> np.ndarray:
    """L = M(r)^-1 R F_max mapping activations to joint accelerations,
    (3J, M); rows at padded coordinates are zero."""
    L_act = muscle_mapping_act(model, _act(model, r))
    out = np.zeros(L_act.shape[:-2] + (model.n_coords, model.n_muscles))
    out[..., model.act_idx, :] = L_act
    return out


def muscle_mapping_act(model: SkeletonModel, theta: np.ndarray) -> np.ndarray:
    geom = geometry(model)
    d = geom.offsets(theta)
    M_act = geom.mass_act(d)
    rf = model.moment_arms[model.act_idx] * model.f_max[None, :]
    try:
        return np.linalg.solve(M_act, np.broadcast_to(rf, M_act.shape[:-2] + rf.shape))
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrix(
            f"mass matrix singular at configuration theta={theta!r}") from exc


def total_energy(model: SkeletonModel, r: np.ndarray,
                 rdot: np.ndarray) -> float:
    """Kinetic plus gravitational potential energy of one state."""
    geom = geometry(model)
    theta = _act(model, r)
    return float(geom.kinetic(theta, _act(model, rdot)) + geom.potential(theta))


def forward_kinematics(model: SkeletonModel, r: np.ndarray) -> np.ndarray:
    """Tip positions packed (..., 3J) as (x, y, z) per segment."""
    geom = geometry(model)
    t, _ = geom.tips_origins(_act(model, r))
    out = np.zeros(t.shape[:-2] + (model.n_coords,))
    out[..., 0::3] = t[..., 0]
    out[..., 1::3] = t[..., 1]
    return out
