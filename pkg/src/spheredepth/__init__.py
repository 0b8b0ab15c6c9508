"""Tangent-patch geometry and depth-histogram machinery for 360-degree depth maps."""

__version__ = "0.1.0"

from .cddc import DepthHistogram, DepthRange, ProjectionHead, bin_centers
from .fusion_losses import FusionWeights, LossConfig, adaptive_fuse, berhu, chamfer_1d, total_loss
from .metrics import MetricReport, evaluate, evaluate_masked
from .resample import FusionWeighting, TangentPatchSet, extract_patches, geometric_fuse
from .sfa import IndexMap, build_index_map
from .sphere_geom import ErpGeometry, PatchLayout, SphereDir, make_layout

__all__ = [
    "DepthHistogram",
    "DepthRange",
    "ErpGeometry",
    "FusionWeighting",
    "FusionWeights",
    "IndexMap",
    "LossConfig",
    "MetricReport",
    "PatchLayout",
    "ProjectionHead",
    "SphereDir",
    "TangentPatchSet",
    "adaptive_fuse",
    "berhu",
    "bin_centers",
    "build_index_map",
    "chamfer_1d",
    "evaluate",
    "evaluate_masked",
    "extract_patches",
    "geometric_fuse",
    "make_layout",
    "total_loss",
]
