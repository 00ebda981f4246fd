"""hrrplab: synthetic ship HRRP simulation, analysis, and conditional generation.

The package is organized around a small set of building blocks:

- ``core``       shared value types (profiles, geometry, conditions) and angle helpers
- ``simulator``  point-scatterer polar-grid HRRP simulator with calibrated noise
- ``analysis``   length-related-parameter (LRP) extraction and the theoretical
                 line-of-sight projection (TLOP)
- ``metrics``    activation-masked comparison metrics and the aspect-neighborhood
                 evaluation protocol
- ``nn``         a minimal reverse-mode autodiff engine plus the 1-D conv blocks,
                 embeddings, Adam, and checkpoint I/O built on it
- ``ddpm``       conditional denoising diffusion (cosine schedule, ancestral sampler)
- ``gan``        conditional Wasserstein GAN with weight clipping and an MSE term
- ``dataset``    fleet synthesis, acquisition sampling, ship-disjoint splits, file I/O
- ``cli``        the ``hrrplab`` command line (simulate / train / generate /
                 evaluate / analyze)
"""

from hrrplab.core import (
    AcquisitionCondition,
    ConditionVector,
    RangeProfile,
    ShipGeometry,
    aspect_angle_of,
    canonical_angle,
    normalize_profile,
)

__version__ = "0.1.0"

__all__ = [
    "AcquisitionCondition",
    "ConditionVector",
    "RangeProfile",
    "ShipGeometry",
    "aspect_angle_of",
    "canonical_angle",
    "normalize_profile",
    "__version__",
]
