"""Variable-step diffusion sampling with budget-aware sliding-window inference."""
from .errors import VsddpmError
from .kernels import BACKEND
from .schedule import NoiseSchedule, StepSet, default_step_set, linear_base_schedule, respace
from .volume_io import Domain, Mask, Volume

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Domain",
    "Mask",
    "NoiseSchedule",
    "StepSet",
    "Volume",
    "VsddpmError",
    "default_step_set",
    "linear_base_schedule",
    "respace",
]
