"""Articulated planar-chain skeleton and the multimodal motion containers.

The skeleton is a tree of rigid segments, each driven by one revolute joint
about z. Joint coordinates live in a 3J layout (three slots per joint, x/y
rotation slots zero-padded) so the motion feature layout matches the packed
channel order used throughout: p, r, rdot, rddot, a, tau, lam.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class SkeletonModel:
    masses: np.ndarray          # (J,) kg
    inertias: np.ndarray        # (J,) kg m^2 about z, added to the point-mass term
    lengths: np.ndarray         # (J,) m, joint to segment tip (mass carried at tip)
    parents: np.ndarray         # (J,) int, -1 for root segments, parent < child
    moment_arms: np.ndarray     # (3J, M) m, torque per unit muscle force
    f_max: np.ndarray           # (M,) N, maximum isometric force per muscle
    contact_ids: list[int] = field(default_factory=list)
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81, 0.0]))
    name: str = "chain"

    def __post_init__(self):
        self.masses = np.asarray(self.masses, dtype=np.float64)
        self.inertias = np.asarray(self.inertias, dtype=np.float64)
        self.lengths = np.asarray(self.lengths, dtype=np.float64)
        self.parents = np.asarray(self.parents, dtype=np.int64)
        self.moment_arms = np.asarray(self.moment_arms, dtype=np.float64)
        self.f_max = np.asarray(self.f_max, dtype=np.float64)
        self.gravity = np.asarray(self.gravity, dtype=np.float64)
        self.validate()

    # -- derived quantities -------------------------------------------------

    @property
    def dof(self) -> int:
        return int(self.masses.size)

    @property
    def n_coords(self) -> int:
        return 3 * self.dof

    @property
    def n_muscles(self) -> int:
        return int(self.f_max.size)

    @property
    def act_idx(self) -> np.ndarray:
        """Indices of the actuated (z-rotation) coordinates in the 3J layout."""
        return np.arange(self.dof) * 3 + 2

    @property
    def feature_dim(self) -> int:
        """Packed per-frame channel count: 18 J + M."""
        return 18 * self.dof + self.n_muscles

    def validate(self):
        J = self.dof
        if not (self.inertias.size == self.lengths.size == self.parents.size == J):
            raise ValueError("segment arrays must share length J")
        if np.any(self.masses <= 0):
            raise ValueError("masses must be positive")
        if np.any(self.inertias < 0):
            raise ValueError("inertias must be non-negative")
        if not np.all(np.isfinite(self.moment_arms)):
            raise ValueError("moment arms must be finite")
        if np.any(self.f_max <= 0):
            raise ValueError("f_max entries must be positive")
        if self.moment_arms.shape != (3 * J, self.n_muscles):
            raise ValueError("moment_arms must be (3J, M)")
        for i, p in enumerate(self.parents):
            if p >= i or p < -1:
                raise ValueError("parents must form a tree with parent < child")
        for c in self.contact_ids:
            if not 0 <= c < J:
                raise ValueError(f"contact segment {c} out of range")

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "masses": self.masses.tolist(),
            "inertias": self.inertias.tolist(),
            "lengths": self.lengths.tolist(),
            "parents": self.parents.tolist(),
            "moment_arms": self.moment_arms.tolist(),
            "f_max": self.f_max.tolist(),
            "contact_ids": list(self.contact_ids),
            "gravity": self.gravity.tolist(),
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def from_dict(cls, d: dict) -> "SkeletonModel":
        return cls(
            masses=d["masses"], inertias=d["inertias"], lengths=d["lengths"],
            parents=d["parents"], moment_arms=d["moment_arms"],
            f_max=d["f_max"], contact_ids=d.get("contact_ids", []),
            gravity=d.get("gravity", [0.0, -9.81, 0.0]),
            name=d.get("name", "chain"),
        )

    @classmethod
    def load(cls, path) -> "SkeletonModel":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"skeleton file not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def desk_skeleton(n_links: int = 5, n_muscles: int = 8) -> SkeletonModel:
    """Default desk-scale chain: 5 serial links, 8 muscles in antagonistic
    pairs with constant moment arms; pairs are biarticular so every joint
    receives actuation."""
    J = n_links
    masses = np.linspace(1.0, 0.6, J)
    lengths = np.linspace(0.5, 0.3, J)
    inertias = np.full(J, 0.01)
    parents = np.arange(J) - 1
    M = n_muscles
    R = np.zeros((3 * J, M))
    pairs = M // 2
    primary, secondary = 0.05, 0.02
    for p in range(pairs):
        j = min(p, J - 1)
        for s, muscle in ((+1.0, 2 * p), (-1.0, 2 * p + 1)):
            R[3 * j + 2, muscle] = s * primary
            if j + 1 < J:
                R[3 * (j + 1) + 2, muscle] = s * secondary
    f_max = np.full(M, 200.0)
    return SkeletonModel(masses=masses, inertias=inertias, lengths=lengths,
                         parents=parents, moment_arms=R, f_max=f_max,
                         contact_ids=[J - 1], name="desk5")


def pendulum_skeleton(mass: float = 1.0, length: float = 1.0,
                      inertia: float = 0.0, moment_arm: float = 0.1,
                      f_max: float = 10.0, gravity=(0.0, -9.81, 0.0),
                      n_muscles: int = 1) -> SkeletonModel:
    """Single point-mass pendulum, the closed-form oracle model."""
    R = np.zeros((3, n_muscles))
    for m in range(n_muscles):
        R[2, m] = moment_arm * (1.0 if m % 2 == 0 else -1.0)
    return SkeletonModel(masses=[mass], inertias=[inertia], lengths=[length],
                         parents=[-1], moment_arms=R,
                         f_max=np.full(n_muscles, f_max), contact_ids=[0],
                         gravity=np.asarray(gravity), name="pendulum")


def two_link_skeleton(gravity=(0.0, -9.81, 0.0)) -> SkeletonModel:
    """Two-link chain used by the finite-difference dynamics oracles."""
    R = np.zeros((6, 4))
    R[2, 0], R[2, 1] = 0.05, -0.05
    R[5, 2], R[5, 3] = 0.04, -0.04
    return SkeletonModel(masses=[1.2, 0.8], inertias=[0.02, 0.01],
                         lengths=[0.6, 0.4], parents=[-1, 0],
                         moment_arms=R, f_max=[150.0] * 4, contact_ids=[1],
                         gravity=np.asarray(gravity), name="twolink")


# ---------------------------------------------------------------------------
# motion containers


@dataclass
class MotionFrame:
    """Single multimodal frame in the 3J layout."""
    p: np.ndarray       # (3J,) joint tip positions, m
    r: np.ndarray       # (3J,) joint angles, rad
    rdot: np.ndarray    # (3J,) rad/s
    rddot: np.ndarray   # (3J,) rad/s^2
    a: np.ndarray       # (M,) muscle activations
    tau: np.ndarray     # (3J,) joint torques, N m
    lam: np.ndarray     # (3J,) contact forces, N


class MotionSequence:
    """Uniformly sampled multimodal motion, stored channel-major."""

    def __init__(self, p, r, rdot, rddot, a, tau, lam, dt: float,
                 prompt_id: int = 0):
        self.p = np.asarray(p, dtype=np.float64)
        self.r = np.asarray(r, dtype=np.float64)
        self.rdot = np.asarray(rdot, dtype=np.float64)
        self.rddot = np.asarray(rddot, dtype=np.float64)
        self.a = np.asarray(a, dtype=np.float64)
        self.tau = np.asarray(tau, dtype=np.float64)
        self.lam = np.asarray(lam, dtype=np.float64)
        self.dt = float(dt)
        self.prompt_id = int(prompt_id)
        if len(self) < 2:
            raise ValueError("motion sequences need at least 2 frames")

    def __len__(self) -> int:
        return self.p.shape[0]

    def frame(self, t: int) -> MotionFrame:
        return MotionFrame(self.p[t], self.r[t], self.rdot[t], self.rddot[t],
                           self.a[t], self.tau[t], self.lam[t])

    def to_matrix(self) -> np.ndarray:
        """Pack to (T, D) in the canonical channel order p,r,rdot,rddot,a,tau,lam."""
        return np.concatenate(
            [self.p, self.r, self.rdot, self.rddot, self.a, self.tau, self.lam],
            axis=1)

    @classmethod
    def from_matrix(cls, X: np.ndarray, dof: int, n_muscles: int, dt: float,
                    prompt_id: int = 0) -> "MotionSequence":
        X = np.asarray(X, dtype=np.float64)
        c = 3 * dof
        expected = 18 * dof + n_muscles
        if X.shape[1] != expected:
            raise ValueError(
                f"frame has {X.shape[1]} channels, expected D = 18J + M = {expected}")
        cuts = np.cumsum([c, c, c, c, n_muscles, c])
        p, r, rdot, rddot, a, tau, lam = np.split(X, cuts, axis=1)
        return cls(p, r, rdot, rddot, a, tau, lam, dt, prompt_id)

    def copy(self) -> "MotionSequence":
        return MotionSequence(self.p.copy(), self.r.copy(), self.rdot.copy(),
                              self.rddot.copy(), self.a.copy(), self.tau.copy(),
                              self.lam.copy(), self.dt, self.prompt_id)


def channel_slices(dof: int, n_muscles: int) -> dict[str, slice]:
    """Channel index ranges of each modality inside a packed frame."""
    c = 3 * dof
    bounds = {}
    start = 0
    for name, width in (("p", c), ("r", c), ("rdot", c), ("rddot", c),
                        ("a", n_muscles), ("tau", c), ("lam", c)):
        bounds[name] = slice(start, start + width)
        start += width
    return bounds
