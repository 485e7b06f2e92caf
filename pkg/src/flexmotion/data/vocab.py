"""Prompt vocabulary and the excitation templates behind each prompt.

Eight categorical prompts stand in for text conditioning at desk scale.
Each prompt owns a parametric neural-excitation template u(t) over the
muscle set; per-sequence seeded perturbations of amplitude, phase, and
initial state diversify the dataset while staying in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core.rng import RngStream

PROMPTS = (
    "hold still",
    "swing left",
    "swing right",
    "reach up",
    "wave",
    "curl",
    "twist",
    "kick",
)


@dataclass
class PromptVocab:
    prompts: tuple[str, ...] = PROMPTS

    def __post_init__(self):
        if len(set(self.prompts)) != len(self.prompts):
            raise ValueError("prompts must be unique")

    def __len__(self) -> int:
        return len(self.prompts)

    def id_of(self, prompt: str) -> int:
        return self.prompts.index(prompt)

    def name_of(self, pid: int) -> str:
        return self.prompts[pid]


def _pair_channels(n_muscles: int, pair: int) -> tuple[int, int]:
    return 2 * pair, 2 * pair + 1


def excitation_template(prompt_id: int, n_steps: int, n_muscles: int,
                        dt: float, rng: RngStream) -> np.ndarray:
    """Seeded excitation array (n_steps, M) in [0, 1] for one prompt."""
    t = np.arange(n_steps) * dt
    u = np.zeros((n_steps, n_muscles))
    pairs = n_muscles // 2
    amp = 0.35 * (1.0 + 0.3 * rng.uniform(-1.0, 1.0))
    phase = rng.uniform(0.0, np.pi)
    freq = 1.2 * (1.0 + 0.2 * rng.uniform(-1.0, 1.0))

    if prompt_id == 0:                       # hold still
        pass
    elif prompt_id == 1:                     # swing left: proximal agonist burst
        u[:, 0] = amp * np.clip(np.sin(2 * np.pi * freq * t + phase), 0, 1)
    elif prompt_id == 2:                     # swing right: proximal antagonist
        u[:, 1] = amp * np.clip(np.sin(2 * np.pi * freq * t + phase), 0, 1)
    elif prompt_id == 3:                     # reach up: sustained agonists
        ramp = np.clip(t / (0.3 + 0.1 * rng.uniform()), 0, 1)
        for p in range(pairs):
            u[:, 2 * p] = 0.8 * amp * ramp
    elif prompt_id == 4:                     # wave: fast alternation, distal pair
        hi, lo = _pair_channels(n_muscles, pairs - 1)
        s = np.sin(2 * np.pi * 2.5 * freq * t + phase)
        u[:, hi] = amp * np.clip(s, 0, 1)
        u[:, lo] = amp * np.clip(-s, 0, 1)
    elif prompt_id == 5:                     # curl: proximal-to-distal sweep
        for p in range(pairs):
            onset = 0.15 * p
            u[:, 2 * p] = 0.9 * amp * np.clip((t - onset) / 0.25, 0, 1)
    elif prompt_id == 6:                     # twist: antisymmetric slow hold
        for p in range(pairs):
            ch = 2 * p if p % 2 == 0 else 2 * p + 1
            u[:, ch] = 0.7 * amp * np.clip(np.sin(np.pi * freq * t + phase), 0, 1)
    elif prompt_id == 7:                     # kick: single strong distal burst
        hi, _ = _pair_channels(n_muscles, pairs - 1)
        t0 = 0.2 + 0.2 * rng.uniform()
        u[:, hi] = np.clip(2.2 * amp * np.exp(-((t - t0) / 0.08) ** 2), 0, 1)
    else:
        raise ValueError(f"unknown prompt id {prompt_id}")
    return np.clip(u, 0.0, 1.0)


def initial_state_perturbation(prompt_id: int, act_idx: np.ndarray,
                               n_coords: int, rng: RngStream) -> np.ndarray:
    """Seeded initial joint angles around the hanging rest pose."""
    r0 = np.zeros(n_coords)
    r0[2] = -np.pi / 2
    scale = 0.005 if prompt_id == 0 else 0.12
    r0[act_idx] += scale * rng.uniform(-1.0, 1.0, act_idx.size)
    return r0
