"""Trajectory prediction for VR road-crossing scenes.

Temporal heterogeneous scene graphs, a three-branch cross-modal latent
attention model, a synthetic scenario generator, and a train/eval/ablate
harness, all on a 64-bit numpy core with compiled hot kernels.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND as KERNEL_BACKEND

__all__ = ["__version__", "KERNEL_BACKEND"]
