"""Batched planar-chain kinematics and closed-form dynamics assembly.

All quantities are derived from the joint-to-point offset vectors
d[k, i] = tip_i - origin_k. For points on a common root path, derivatives
of any order reduce to rotations of these offsets:

    d tip_i / d theta_m              = zhat x (tip_i - origin_m)
    d^2 tip_i / d theta_m d theta_n  = -(tip_i - origin_deeper(m, n))

which gives exact expressions for M, dM/dtheta, d^2M/dtheta^2, G, dG, the
contact Jacobian, and its directional derivatives, with no finite
differencing anywhere.
"""

from __future__ import annotations

import numpy as np

from .skeleton import SkeletonModel


class ChainGeometry:
    """Precomputed topology masks and weight tensors for one skeleton."""

    def __init__(self, model: SkeletonModel):
        self.model = model
        J = model.dof
        anc = np.zeros((J, J), dtype=bool)   # anc[i, k]: k on root path of i
        depth = np.zeros(J, dtype=np.int64)
        for i in range(J):
            k = i
            while k >= 0:
                anc[i, k] = True
                k = int(model.parents[k])
            depth[i] = anc[i].sum()
        self.anc = anc
        self.depth = depth
        # deeper[x, y]: the deeper of two joints (valid when comparable)
        self.deeper = np.where(depth[:, None] >= depth[None, :],
                               np.arange(J)[:, None], np.arange(J)[None, :])
        m = model.masses
        a = anc.astype(np.float64).T          # a[k, i] = [k in anc(i)]
        self.w2 = np.einsum("ki,li,i->kli", a, a, m)
        self.w2_inertia = np.einsum("ki,li,i->kl", a, a, model.inertias)
        self.w3 = np.einsum("ki,li,mi,i->klmi", a, a, a, m)
        self.w4 = np.einsum("ki,li,mi,ni,i->klmni", a, a, a, a, m)
        self.wg = np.einsum("ki,i->ki", a, m)
        self.w3g = np.einsum("ki,mi,i->kmi", a, a, m)
        self.g2 = model.gravity[:2]

    # -- positions ----------------------------------------------------------

    def tips_origins(self, theta: np.ndarray):
        """theta: (..., J) actuated angles. Returns tips and joint origins,
        each (..., J, 2)."""
        model = self.model
        J = model.dof
        phi = theta @ self.anc.T.astype(np.float64)
        t = np.zeros(theta.shape[:-1] + (J, 2))
        o = np.zeros_like(t)
        for i in range(J):
            parent = int(model.parents[i])
            if parent >= 0:
                o[..., i, :] = t[..., parent, :]
            t[..., i, 0] = o[..., i, 0] + model.lengths[i] * np.cos(phi[..., i])
            t[..., i, 1] = o[..., i, 1] + model.lengths[i] * np.sin(phi[..., i])
        return t, o

    def offsets(self, theta: np.ndarray) -> np.ndarray:
        """d[..., k, i, :] = tip_i - origin_k (meaningful when k in anc(i))."""
        t, o = self.tips_origins(theta)
        return t[..., None, :, :] - o[..., :, None, :]

    # -- mass matrix and derivatives (actuated J x J blocks) ----------------

    def mass_act(self, d: np.ndarray) -> np.ndarray:
        return (np.einsum("kli,...kix,...lix->...kl", self.w2, d, d)
                + self.w2_inertia)

    def dmass_act(self, d: np.ndarray) -> np.ndarray:
        """dM[..., m, k, l] = dM_kl / dtheta_m."""
        e = np.take(d, self.deeper, axis=-3)   # e[..., m, k, i, :] = d[deeper(m,k), i]
        t1 = (np.einsum("klmi,...mki,...li->...mkl", self.w3, e[..., 0], d[..., 1])
              - np.einsum("klmi,...mki,...li->...mkl", self.w3, e[..., 1], d[..., 0]))
        t2 = (np.einsum("klmi,...mli,...ki->...mkl", self.w3, e[..., 0], d[..., 1])
              - np.einsum("klmi,...mli,...ki->...mkl", self.w3, e[..., 1], d[..., 0]))
        return t1 + t2

    def d2mass_act(self, d: np.ndarray) -> np.ndarray:
        """d2M[..., n, m, k, l] = d^2 M_kl / dtheta_m dtheta_n."""
        J = self.model.dof
        e = np.take(d, self.deeper, axis=-3)
        out = np.zeros(d.shape[:-3] + (J, J, J, J))
        for n in range(J):
            w4n = self.w4[:, :, :, n, :]
            en = np.take(d, self.deeper[:, n], axis=-3)     # (..., x, i, 2)
            idx3 = self.deeper[self.deeper, n]               # deeper(x, y, n)
            f = np.take(d, idx3, axis=-3)                    # (..., x, y, i, 2)
            term1 = -np.einsum("klmi,...kmix,...lix->...mkl", w4n, f, d)
            term2 = np.einsum("klmi,...mkix,...lix->...mkl", w4n, e, en)
            term3 = np.einsum("klmi,...kix,...mlix->...mkl", w4n, en, e)
            term4 = -np.einsum("klmi,...kix,...lmix->...mkl", w4n, d, f)
            out[..., n, :, :, :] = term1 + term2 + term3 + term4
        return out

    # -- velocity-product (Coriolis/centrifugal) forces ----------------------

    @staticmethod
    def christoffel(dmass: np.ndarray) -> np.ndarray:
        """Gamma[..., i, j, k] = 1/2 (dM_kj/di + dM_ki/dj - dM_ij/dk)."""
        t_ikj = np.swapaxes(dmass, -2, -1)          # [..., i, j, k] <- dM[i, k, j]
        t_jki = np.moveaxis(dmass, [-3, -2, -1], [-2, -1, -3])  # dM[j, k, i]
        t_kij = np.moveaxis(dmass, [-3, -2, -1], [-1, -3, -2])  # dM[k, i, j]
        return 0.5 * (t_ikj + t_jki - t_kij)

    def coriolis_act(self, d: np.ndarray, rdot_act: np.ndarray) -> np.ndarray:
        gamma = self.christoffel(self.dmass_act(d))
        return np.einsum("...ijk,...i,...j->...k", gamma, rdot_act, rdot_act)

    # -- gravity -------------------------------------------------------------

    def gravity_act(self, d: np.ndarray) -> np.ndarray:
        """G_k = dU/dtheta_k with U the total gravitational potential."""
        gx, gy = self.g2
        s = d[..., 0] * gy - d[..., 1] * gx          # s(d_kc, g)
        return -np.einsum("ki,...ki->...k", self.wg, s)

    def dgravity_act(self, d: np.ndarray) -> np.ndarray:
        """dG[..., m, k] = dG_k / dtheta_m (the potential Hessian)."""
        e = np.take(d, self.deeper, axis=-3)
        dot = e[..., 0] * self.g2[0] + e[..., 1] * self.g2[1]
        return np.einsum("kmi,...mki->...mk", self.w3g, dot)

    # -- contact points -------------------------------------------------------

    def contact_jacobian_act(self, d: np.ndarray) -> np.ndarray:
        """Rows (x, y, z) per contact point against actuated columns:
        (..., 3C, J)."""
        J = self.model.dof
        cids = self.model.contact_ids
        rows = np.zeros(d.shape[:-3] + (3 * len(cids), J))
        for n, c in enumerate(cids):
            mask = self.anc[c].astype(np.float64)
            rows[..., 3 * n + 0, :] = -d[..., :, c, 1] * mask
            rows[..., 3 * n + 1, :] = d[..., :, c, 0] * mask
        return rows

    def djc_t_lambda_act(self, d: np.ndarray, lam_xy: np.ndarray) -> np.ndarray:
        """d/dtheta of J_C^T lambda: out[..., m, k] for lam_xy (..., C, 2)."""
        J = self.model.dof
        out = np.zeros(d.shape[:-3] + (J, J))
        e = np.take(d, self.deeper, axis=-3)
        for n, c in enumerate(self.model.contact_ids):
            mask = np.outer(self.anc[c], self.anc[c]).astype(np.float64)
            dot = (e[..., :, :, c, 0] * lam_xy[..., n, 0, None, None]
                   + e[..., :, :, c, 1] * lam_xy[..., n, 1, None, None])
            out -= mask * dot
        return out

    # -- energies -------------------------------------------------------------

    def potential(self, theta: np.ndarray) -> np.ndarray:
        t, _ = self.tips_origins(theta)
        g = self.model.gravity[:2]
        return -np.einsum("i,...ix,x->...", self.model.masses, t, g)

    def kinetic(self, theta: np.ndarray, rdot_act: np.ndarray) -> np.ndarray:
        d = self.offsets(theta)
        M = self.mass_act(d)
        return 0.5 * np.einsum("...k,...kl,...l->...", rdot_act, M, rdot_act)
