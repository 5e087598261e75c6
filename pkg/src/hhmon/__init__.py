"""Hand-rubbing detection on desk-scale video.

Pose-derived upper-body ROIs, IoU linking with temporal smoothing, TV-L1
optical flow, and a miniature inflated-3D two-stream classifier, wired into
a single `hhmon` command line over a deterministic synthetic dataset.
"""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, HhmonError, ModelError

__all__ = ["ConfigError", "DataError", "HhmonError", "ModelError", "__version__"]
