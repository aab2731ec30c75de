"""Generalized boundary detection over multiple image interpretation layers."""

from .core import (
    GbConfig,
    LayerStack,
    LocalFit,
    PositionBasis,
    RawBoundaryMap,
    build_position_basis,
    eigen2x2_sym,
    gb1_detect,
    local_fit,
    project_to_disk,
)
from .fast import build_integrals, gb2_detect, multiscale_detect, rect_sums
from .postprocess import LogisticParams, logistic_prob, nms
from .softseg import soft_segment

__version__ = "0.1.0"
