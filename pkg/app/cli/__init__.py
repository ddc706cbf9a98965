from cli.commands import (
    cmd_build_model,
    cmd_evaluate,
    cmd_generalize,
    cmd_reconstruct,
    cmd_register,
    cmd_synth,
)
from cli.schemas import RunConfig, SynthSpec, load_config

__all__ = [
    "cmd_build_model",
    "cmd_evaluate",
    "cmd_generalize",
    "cmd_reconstruct",
    "cmd_register",
    "cmd_synth",
    "RunConfig",
    "SynthSpec",
    "load_config",
]
