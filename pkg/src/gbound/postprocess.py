"""Calibration and thinning of raw boundary maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.special import expit

from .core import RawBoundaryMap

# interpolating a flat plateau can overshoot its value by an ulp
PLATEAU_RTOL = 1e-12


@dataclass(frozen=True)
class LogisticParams:
    """``p = 1 / (1 + exp(w0 + w1 * strength))``; ``w1 < 0`` for a useful detector."""

    w0: float = 0.0
    w1: float = -1.0


def logistic_prob(strength, params: LogisticParams):
    return expit(-(params.w0 + params.w1 * np.asarray(strength, dtype=np.float64)))


def nms(bmap: RawBoundaryMap) -> np.ndarray:
    """Suppress pixels that are not maxima along their boundary normal.

    A pixel survives when its strength is >= the bilinearly interpolated
    strength one pixel away on both sides along the normal. Degenerate
    (isotropic) pixels instead need to be >= every 3 x 3 neighbour.
    Survivors keep their value; the rest become 0.
    """
    s = np.asarray(bmap.strength, dtype=np.float64)
    h, w = s.shape
    rows, cols = np.mgrid[0:h, 0:w].astype(np.float64)
    dx = np.cos(bmap.theta)
    dy = np.sin(bmap.theta)
    keep = np.ones_like(s, dtype=bool)
    for sign in (1.0, -1.0):
        coords = np.stack([rows + sign * dy, cols + sign * dx])
        nb = ndimage.map_coordinates(s, coords, order=1, mode="nearest")
        keep &= s >= nb - PLATEAU_RTOL * s
    deg = np.asarray(bmap.degenerate, dtype=bool)
    if deg.any():
        local_max = s >= ndimage.maximum_filter(s, size=3, mode="nearest")
        keep = np.where(deg, local_max, keep)
    return np.where(keep, s, 0.0)
