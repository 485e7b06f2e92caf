"""Motion file format: one JSON header line, then T lines of D floats.

Floats are written with shortest round-trip repr, so read(write(seq))
reproduces the sequence exactly at 64-bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..dynamics.skeleton import MotionSequence


class MotionFileError(RuntimeError):
    pass


def write_motion(seq: MotionSequence, path, skeleton_ref: str = "skeleton.json",
                 dof: int | None = None, n_muscles: int | None = None) -> None:
    X = seq.to_matrix()
    T, D = X.shape
    if dof is None:
        dof = seq.p.shape[1] // 3
    if n_muscles is None:
        n_muscles = seq.a.shape[1]
    header = {"skeleton": skeleton_ref, "dt": seq.dt,
              "prompt_id": seq.prompt_id, "T": T, "D": D,
              "J": dof, "M": n_muscles}
    lines = [json.dumps(header)]
    for row in X:
        lines.append(" ".join(repr(v) for v in row.tolist()))
    Path(path).write_text("\n".join(lines) + "\n")


def read_motion(path) -> MotionSequence:
    path = Path(path)
    if not path.exists():
        raise MotionFileError(f"motion file not found: {path}")
    with open(path, "r") as fh:
        raw = fh.read().splitlines()
    if not raw:
        raise MotionFileError(f"{path}: empty file")
    try:
        header = json.loads(raw[0])
    except json.JSONDecodeError as exc:
        raise MotionFileError(f"{path}: malformed header line 1: {exc}") from exc
    for key in ("dt", "prompt_id", "T", "D", "J", "M"):
        if key not in header:
            raise MotionFileError(f"{path}: header missing '{key}'")
    T, D = int(header["T"]), int(header["D"])
    dof, M = int(header["J"]), int(header["M"])
    expected = 18 * dof + M
    if D != expected:
        raise MotionFileError(
            f"{path}: header D={D} but layout requires D = 18J + M = {expected}")
    if len(raw) - 1 < T:
        raise MotionFileError(
            f"{path}: truncated, expected {T} frames, found {len(raw) - 1}")
    X = np.empty((T, D))
    for t in range(T):
        vals = raw[1 + t].split()
        if len(vals) != D:
            raise MotionFileError(
                f"{path}: line {t + 2} has {len(vals)} channels, expected "
                f"D = 18J + M = {D}")
        X[t] = np.array(vals, dtype=np.float64)
    return MotionSequence.from_matrix(X, dof, M, float(header["dt"]),
                                      int(header["prompt_id"]))
