from .checkpoint import CheckpointError, encode_checkpoint, load_checkpoint, save_checkpoint
from .config import CONDITIONING_MODES, ModelConfig
from .network import (
    RoseModel,
    build_condition_input,
    patchify,
    rose_loss,
    timestep_embedding,
    unpatchify,
)
from .schedule import NoiseSchedule, add_noise

__all__ = [
    "CheckpointError",
    "CONDITIONING_MODES",
    "ModelConfig",
    "NoiseSchedule",
    "RoseModel",
    "add_noise",
    "encode_checkpoint",
    "load_checkpoint",
    "save_checkpoint",
    "build_condition_input",
    "patchify",
    "rose_loss",
    "timestep_embedding",
    "unpatchify",
]
