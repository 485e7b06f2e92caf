"""Per-channel z-scoring over the training split."""

from __future__ import annotations

import numpy as np

from ..dynamics.skeleton import MotionSequence


class NormStats:
    """Channel-wise mean and standard deviation; zero-variance channels get
    std = 1 so constant channels normalize to exactly zero."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)
        if np.any(self.std <= 0):
            raise ValueError("std entries must be positive")

    @classmethod
    def fit(cls, frames: np.ndarray, eps: float = 1e-9) -> "NormStats":
        """frames: (N, D) stacked training-split frames."""
        mean = frames.mean(axis=0)
        std = frames.std(axis=0)
        degenerate = std < eps
        std = np.where(degenerate, 1.0, std)
        mean = np.where(degenerate, mean, mean)
        return cls(mean, std)

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))

    def normalize_array(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def denormalize_array(self, Z: np.ndarray) -> np.ndarray:
        return Z * self.std + self.mean


def normalize(seq: MotionSequence, stats: NormStats) -> MotionSequence:
    X = stats.normalize_array(seq.to_matrix())
    return MotionSequence.from_matrix(X, seq.p.shape[1] // 3, seq.a.shape[1],
                                      seq.dt, seq.prompt_id)


def denormalize(seq: MotionSequence, stats: NormStats) -> MotionSequence:
    X = stats.denormalize_array(seq.to_matrix())
    return MotionSequence.from_matrix(X, seq.p.shape[1] // 3, seq.a.shape[1],
                                      seq.dt, seq.prompt_id)
