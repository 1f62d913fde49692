"""Gym-style handle API over contactenv environments.

External trainers get flat numeric observations with a published layout
descriptor, a reset/step/close lifecycle, and a vectorized variant. Handles
wrap the native environment lazily, so creating one is cheap until reset.
"""

from .core import (
    ClosedHandleError,
    EnvHandle,
    ShapeError,
    VectorEnvHandle,
    close,
    critic_obs,
    layout,
    make_env,
    make_vector_env,
    reset,
    step,
)

__all__ = [
    "ClosedHandleError",
    "EnvHandle",
    "ShapeError",
    "VectorEnvHandle",
    "close",
    "critic_obs",
    "layout",
    "make_env",
    "make_vector_env",
    "reset",
    "step",
]

__version__ = "0.1.0"
