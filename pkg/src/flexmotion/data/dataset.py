"""Dataset synthesis, downsampling, and the on-disk manifest."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core.rng import RngStream
from ..dynamics.simulate import (GroundModel, SimulationDiverged,
                                 forward_simulate, simulate_batch)
from ..dynamics.skeleton import MotionSequence, SkeletonModel, desk_skeleton
from .motion_io import read_motion, write_motion
from .normalize import NormStats
from .vocab import PromptVocab, excitation_template, initial_state_perturbation

log = logging.getLogger(__name__)

MAX_RETRIES = 5


@dataclass
class DatagenConfig:
    count: int = 2000
    seed: int = 7
    duration: float = 1.6
    dt_sim: float = 1e-3
    target_fps: float = 20.0
    tau_act: float = 0.05
    ground_clearance: float = 0.1
    splits: tuple[float, float] = (0.8, 0.1)   # train, val; rest is test


class DatasetManifest:
    def __init__(self, root: Path, data: dict):
        self.root = Path(root)
        self.data = data
        self._model = None
        self._stats = None

    @property
    def model(self) -> SkeletonModel:
        if self._model is None:
            self._model = SkeletonModel.load(self.root / self.data["skeleton_file"])
        return self._model

    @property
    def stats(self) -> NormStats:
        if self._stats is None:
            self._stats = NormStats.from_dict(self.data["norm_stats"])
        return self._stats

    @property
    def dt(self) -> float:
        return float(self.data["dt"])

    @property
    def vocab(self) -> PromptVocab:
        return PromptVocab(tuple(self.data["vocab"]))

    def entries(self, split: str | None = None) -> list[dict]:
        if split is None:
            return list(self.data["sequences"])
        return [e for e in self.data["sequences"] if e["split"] == split]

    def load_split(self, split: str) -> list[MotionSequence]:
        return [read_motion(self.root / e["file"]) for e in self.entries(split)]

    def validate(self):
        seen: dict[str, str] = {}
        for e in self.data["sequences"]:
            if e["file"] in seen:
                raise ValueError(f"file {e['file']} assigned to two splits")
            seen[e["file"]] = e["split"]
            if not (self.root / e["file"]).exists():
                raise FileNotFoundError(self.root / e["file"])
        return self


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    man = DatasetManifest(path.parent, json.loads(path.read_text()))
    return man.validate()


def downsample(seq: MotionSequence, target_fps: float) -> MotionSequence:
    """Keep every (sim_rate / target_fps)-th frame; rates must divide."""
    rate = 1.0 / seq.dt
    ratio = rate / target_fps
    stride = int(round(ratio))
    if abs(ratio - stride) > 1e-9 or stride < 1:
        raise ValueError(
            f"simulator rate {rate:.1f} Hz not divisible by target {target_fps} fps")
    return MotionSequence(seq.p[::stride], seq.r[::stride], seq.rdot[::stride],
                          seq.rddot[::stride], seq.a[::stride],
                          seq.tau[::stride], seq.lam[::stride],
                          dt=seq.dt * stride, prompt_id=seq.prompt_id)


def default_ground(model: SkeletonModel, clearance: float = 0.1) -> GroundModel:
    """Ground placed below the chain's reach: the default corpus is
    contact-free so ground-truth physical metrics are exactly zero."""
    return GroundModel(height=-(float(model.lengths.sum()) + clearance))


def _draw_sequence_inputs(model, vocab, seq_index, attempt, seed, n_steps, dt_sim):
    rng = RngStream(seed, lane=(seq_index << 3) + attempt)
    prompt_id = seq_index % len(vocab)
    u = excitation_template(prompt_id, n_steps, model.n_muscles, dt_sim, rng)
    amp = 1.0 + 0.25 * rng.uniform(-1.0, 1.0)
    u = np.clip(u * amp, 0.0, 1.0)
    r0 = initial_state_perturbation(prompt_id, model.act_idx, model.n_coords, rng)
    return prompt_id, u, r0


def generate_dataset(model: SkeletonModel, vocab: PromptVocab, count: int,
                     seed: int, duration: float, out_dir,
                     config: DatagenConfig | None = None) -> Path:
    """Simulate `count` sequences, downsample, write files + manifest.

    Returns the manifest path. Fully deterministic in (model, vocab, count,
    seed, duration, config).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = config or DatagenConfig()
    cfg.count, cfg.seed, cfg.duration = count, seed, duration
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ground = default_ground(model, cfg.ground_clearance)
    n_steps = int(round(duration / cfg.dt_sim))

    prompt_ids = []
    exc = np.zeros((count, n_steps, model.n_muscles))
    r0s = np.zeros((count, model.n_coords))
    for i in range(count):
        pid, u, r0 = _draw_sequence_inputs(model, vocab, i, 0, seed,
                                           n_steps, cfg.dt_sim)
        prompt_ids.append(pid)
        exc[i] = u
        r0s[i] = r0

    sequences: list[MotionSequence] = []
    chunk = 512
    for lo in range(0, count, chunk):
        hi = min(lo + chunk, count)
        try:
            sequences.extend(simulate_batch(
                model, exc[lo:hi], cfg.tau_act, cfg.dt_sim, ground, duration,
                r0=r0s[lo:hi], prompt_ids=prompt_ids[lo:hi]))
        except SimulationDiverged:
            for i in range(lo, hi):
                sequences.append(_simulate_with_retry(
                    model, vocab, i, seed, n_steps, cfg, ground, duration))

    model_path = out / "skeleton.json"
    model.save(model_path)

    files = []
    for i, seq in enumerate(sequences):
        ds = downsample(seq, cfg.target_fps)
        fname = f"seq_{i:05d}.txt"
        write_motion(ds, out / fname, skeleton_ref="skeleton.json",
                     dof=model.dof, n_muscles=model.n_muscles)
        files.append((fname, ds))

    split_rng = RngStream(seed, lane=0xFACE)
    perm = split_rng.permutation(count)
    n_train = int(round(cfg.splits[0] * count))
    n_val = int(round(cfg.splits[1] * count))
    split_of = {}
    for rank, idx in enumerate(perm):
        split_of[int(idx)] = ("train" if rank < n_train
                              else "val" if rank < n_train + n_val else "test")

    train_frames = np.concatenate(
        [files[i][1].to_matrix() for i in range(count) if split_of[i] == "train"],
        axis=0)
    stats = NormStats.fit(train_frames)

    manifest = {
        "skeleton_file": "skeleton.json",
        "dt": 1.0 / cfg.target_fps,
        "fps": cfg.target_fps,
        "seed": seed,
        "duration": duration,
        "dt_sim": cfg.dt_sim,
        "tau_act": cfg.tau_act,
        "ground_height": ground.height,
        "vocab": list(vocab.prompts),
        "norm_stats": stats.to_dict(),
        "sequences": [
            {"file": files[i][0], "prompt_id": prompt_ids[i],
             "split": split_of[i]}
            for i in range(count)
        ],
    }
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True))
    return manifest_path


def _simulate_with_retry(model, vocab, seq_index, seed, n_steps, cfg, ground,
                         duration) -> MotionSequence:
    for attempt in range(MAX_RETRIES):
        pid, u, r0 = _draw_sequence_inputs(model, vocab, seq_index, attempt,
                                           seed, n_steps, cfg.dt_sim)
        try:
            return forward_simulate(model, u, cfg.tau_act, cfg.dt_sim, ground,
                                    duration, r0=r0, prompt_id=pid)
        except SimulationDiverged as exc:
            log.warning("sequence %d attempt %d diverged (%s); resampling",
                        seq_index, attempt, exc)
    raise SimulationDiverged(duration, float("inf"))


def generate_default_dataset(out_dir, count: int = 2000, seed: int = 7,
                             duration: float = 1.6) -> Path:
    return generate_dataset(desk_skeleton(), PromptVocab(), count, seed,
                            duration, out_dir)
