"""Prompt-conditioned diffusion for monocular 3D pose lifting."""

from ._dp3d import *  # noqa: F401,F403
from ._dp3d import __version__  # noqa: F401
