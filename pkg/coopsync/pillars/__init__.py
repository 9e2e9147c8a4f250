"""
Point-cloud frame to BEV features.

- pillarize: floor-division pillar assignment and 9-dim point decoration
- encode_pillars: per-point Linear + ReLU, per-pillar max, scatter to the grid
- backbone: two stride-2 conv blocks to one-fourth resolution
"""

from .encoder import Backbone, PillarEncoder, backbone, encode_pillars, identity_encoder
from .pillarize import CENTER_MODES, PillarSet, pillar_index, pillarize

__all__ = [
    "Backbone",
    "CENTER_MODES",
    "PillarEncoder",
    "PillarSet",
    "backbone",
    "encode_pillars",
    "identity_encoder",
    "pillar_index",
    "pillarize",
]
