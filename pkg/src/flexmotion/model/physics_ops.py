"""Differentiable dynamics terms as composite tape ops.

The forward passes reuse the plain-numpy dynamics assembly; the VJPs are
hand-derived from the closed-form mass-matrix derivatives (first and
second order), the potential Hessian, and the contact-Jacobian derivative.
Both ops are exercised by the finite-difference gradient suite.
"""

from __future__ import annotations

import numpy as np

from ..core import tensor as T
from ..dynamics.dynamics import geometry
from ..dynamics.skeleton import SkeletonModel


def _flatten(x: np.ndarray, width: int) -> tuple[np.ndarray, tuple]:
    lead = x.shape[:-1]
    return x.reshape(-1, width), lead


def euler_residual_op(model: SkeletonModel, r, rdot, rddot, tau, lam):
    """Equation-of-motion residual M rddot + C rdot + G - tau - J_C^T lam,
    differentiable in all five inputs. Shapes (..., 3J) in, same out."""
    geom = geometry(model)
    act = model.act_idx
    n = model.n_coords
    r_t, rd_t, rdd_t, tau_t, lam_t = (T.as_tensor(x) for x in
                                      (r, rdot, rddot, tau, lam))
    rf, lead = _flatten(r_t.data, n)
    rdf = rd_t.data.reshape(-1, n)
    rddf = rdd_t.data.reshape(-1, n)
    tauf = tau_t.data.reshape(-1, n)
    lamf = lam_t.data.reshape(-1, n)

    theta = rf[:, act]
    d = geom.offsets(theta)
    M_act = geom.mass_act(d)
    dM = geom.dmass_act(d)
    gamma = geom.christoffel(dM)
    v_act = rdf[:, act]
    c_act = np.einsum("fijk,fi,fj->fk", gamma, v_act, v_act)
    g_act = geom.gravity_act(d)
    jc = geom.contact_jacobian_act(d)
    cids = model.contact_ids
    lam_rows = np.stack([lamf[:, 3 * c:3 * c + 3] for c in cids], axis=1) \
        if cids else np.zeros((rf.shape[0], 0, 3))
    lam_flat = lam_rows.reshape(rf.shape[0], -1)

    res = -tauf.copy()
    res[:, act] += (np.einsum("fkl,fl->fk", M_act, rddf[:, act])
                    + c_act + g_act
                    - np.einsum("fck,fc->fk", jc, lam_flat))
    out_data = res.reshape(lead + (n,))

    ctx: dict = {}

    def shared():
        if "d2M" not in ctx:
            ctx["d2M"] = geom.d2mass_act(d)
            ctx["dG"] = geom.dgravity_act(d)
        return ctx

    def vjp_r(g):
        gf = g.reshape(-1, n)[:, act]
        c = shared()
        t1 = np.einsum("fk,fmkl,fl->fm", gf, dM, rddf[:, act])
        dgamma = geom.christoffel(c["d2M"])
        t2 = np.einsum("fmijk,fi,fj,fk->fm", dgamma, v_act, v_act, gf)
        t3 = np.einsum("fmk,fk->fm", c["dG"], gf)
        out = t1 + t2 + t3
        if cids:
            djt = geom.djc_t_lambda_act(d, lam_rows[:, :, :2])
            out -= np.einsum("fmk,fk->fm", djt, gf)
        full = np.zeros_like(g.reshape(-1, n))
        full[:, act] = out
        return full.reshape(g.shape)

    def vjp_rdot(g):
        gf = g.reshape(-1, n)[:, act]
        out = 2.0 * np.einsum("fpjk,fj,fk->fp", gamma, v_act, gf)
        full = np.zeros_like(g.reshape(-1, n))
        full[:, act] = out
        return full.reshape(g.shape)

    def vjp_rddot(g):
        gf = g.reshape(-1, n)[:, act]
        out = np.einsum("fk,fkl->fl", gf, M_act)
        full = np.zeros_like(g.reshape(-1, n))
        full[:, act] = out
        return full.reshape(g.shape)

    def vjp_tau(g):
        return -g

    def vjp_lam(g):
        gf = g.reshape(-1, n)[:, act]
        full = np.zeros_like(g.reshape(-1, n))
        if cids:
            gl = -np.einsum("fck,fk->fc", jc, gf)
            gl = gl.reshape(gf.shape[0], len(cids), 3)
            for i, c in enumerate(cids):
                full[:, 3 * c:3 * c + 3] = gl[:, i]
        return full.reshape(g.shape)

    return T.custom("euler_residual", out_data,
                    ((r_t, vjp_r), (rd_t, vjp_rdot), (rdd_t, vjp_rddot),
                     (tau_t, vjp_tau), (lam_t, vjp_lam)))


def muscle_accel_op(model: SkeletonModel, r, a):
    """L(r) a with L = M(r)^-1 R F_max, differentiable in r and a.
    r: (..., 3J), a: (..., M) -> (..., 3J)."""
    geom = geometry(model)
    act = model.act_idx
    n = model.n_coords
    r_t, a_t = T.as_tensor(r), T.as_tensor(a)
    rf, lead = _flatten(r_t.data, n)
    af = a_t.data.reshape(-1, model.n_muscles)

    theta = rf[:, act]
    d = geom.offsets(theta)
    M_act = geom.mass_act(d)
    rfmax = model.moment_arms[act] * model.f_max[None, :]
    torque = af @ rfmax.T
    y_act = np.linalg.solve(M_act, torque[..., None])[..., 0]
    out = np.zeros_like(rf)
    out[:, act] = y_act
    out_data = out.reshape(lead + (n,))

    def vjp_a(g):
        gf = g.reshape(-1, n)[:, act]
        w = np.linalg.solve(M_act, gf[..., None])[..., 0]
        return (w @ rfmax).reshape(g.shape[:-1] + (model.n_muscles,))

    def vjp_r(g):
        gf = g.reshape(-1, n)[:, act]
        w = np.linalg.solve(M_act, gf[..., None])[..., 0]
        dM = geom.dmass_act(d)
        out_r = -np.einsum("fk,fmkl,fl->fm", w, dM, y_act)
        full = np.zeros_like(g.reshape(-1, n))
        full[:, act] = out_r
        return full.reshape(g.shape)

    return T.custom("muscle_accel", out_data, ((r_t, vjp_r), (a_t, vjp_a)))
