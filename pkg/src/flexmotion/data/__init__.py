from .vocab import (PROMPTS, PromptVocab, excitation_template,
                    initial_state_perturbation)
from .motion_io import MotionFileError, read_motion, write_motion
from .normalize import NormStats, denormalize, normalize
from .dataset import (DatagenConfig, DatasetManifest, default_ground,
                      downsample, generate_dataset, generate_default_dataset,
                      load_manifest)

__all__ = [
    "PROMPTS", "PromptVocab", "excitation_template",
    "initial_state_perturbation", "MotionFileError", "read_motion",
    "write_motion", "NormStats", "denormalize", "normalize", "DatagenConfig",
    "DatasetManifest", "default_ground", "downsample", "generate_dataset",
    "generate_default_dataset", "load_manifest",
]
