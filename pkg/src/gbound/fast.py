"""Linear-time detector (Gb2) built on summed-area tables.

With the disk projection inactive and no row weights, the window moment
``P^T X`` splits into ``sum(p L) - p0 * sum(L)`` over absolute positions ``p``.
Both terms are rectangle sums. Three tables per layer (of ``L``, ``x L`` and
``y L``) therefore give every window in O(1), whatever the radius.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (
    GbConfig,
    RawBoundaryMap,
    _layers_of,
    boundary_from_jacobians,
    build_position_basis,
    check_finite,
)


@dataclass(frozen=True)
class IntegralImages:
    """Zero-bordered summed-area tables of a replicate-padded stack.

    ``S[k, i, j]`` is the sum of layer k over padded rows ``< i`` and columns
    ``< j``; ``SX`` and ``SY`` weight each sample by its absolute padded
    column / row coordinate. ``pad`` is the border added on every side.
    """

    S: np.ndarray
    SX: np.ndarray
    SY: np.ndarray
    pad: int

    @property
    def padded_shape(self) -> tuple[int, int]:
        return self.S.shape[1] - 1, self.S.shape[2] - 1


def summed_area(a: np.ndarray) -> np.ndarray:
    """Summed-area table over the last two axes with a leading zero row/column."""
    a = np.asarray(a, dtype=np.float64)
    out = np.zeros(a.shape[:-2] + (a.shape[-2] + 1, a.shape[-1] + 1))
    np.cumsum(a, axis=-2, out=out[..., 1:, 1:])
    np.cumsum(out[..., 1:, 1:], axis=-1, out=out[..., 1:, 1:])
    return out


def build_integrals(stack, radius: int) -> IntegralImages:
    layers = _layers_of(stack)
    check_finite(layers)
    padded = np.pad(layers, ((0, 0), (radius, radius), (radius, radius)), mode="edge")
    h, w = padded.shape[1:]
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    return IntegralImages(
        summed_area(padded),
        summed_area(padded * xs),
        summed_area(padded * ys),
        radius,
    )


def rect_sums(ii: IntegralImages, rect, k: int = 0) -> tuple[float, float, float]:
    """(sum L, sum x L, sum y L) over an inclusive rectangle in padded coordinates.

    ``rect`` is ``(y0, x0, y1, x1)``. A rectangle with ``y1 < y0`` or
    ``x1 < x0`` is empty and sums to zero.
    """
    y0, x0, y1, x1 = (int(v) for v in rect)
    h, w = ii.padded_shape
    if min(y0, x0) < 0 or y1 >= h or x1 >= w:
        raise IndexError(f"rectangle {rect} outside padded image of shape {(h, w)}")
    if y1 < y0 or x1 < x0:
        return 0.0, 0.0, 0.0

    def box(t):
        return t[k, y1 + 1, x1 + 1] - t[k, y0, x1 + 1] - t[k, y1 + 1, x0] + t[k, y0, x0]

    return float(box(ii.S)), float(box(ii.SX)), float(box(ii.SY))


def planar_alpha(radius: int) -> float:
    return build_position_basis(radius, 2.0 * radius, False).alpha


def gb2_local_J(ii: IntegralImages, p0, radius: int, alpha: float | None = None) -> np.ndarray:
    """2 x K slope matrix of the window centred on image pixel ``p0 = (x, y)``."""
    if alpha is None:
        alpha = planar_alpha(radius)
    x0 = int(p0[0]) + ii.pad
    y0 = int(p0[1]) + ii.pad
    rect = (y0 - radius, x0 - radius, y0 + radius, x0 + radius)
    J = np.empty((2, ii.S.shape[0]))
    for k in range(ii.S.shape[0]):
        s, sx, sy = rect_sums(ii, rect, k)
        J[0, k] = (sx - x0 * s) / alpha
        J[1, k] = (sy - y0 * s) / alpha
    return J


def _window_boxes(table: np.ndarray, radius: int, h: int, w: int) -> np.ndarray:
    """Sum of every (2r+1)^2 window, for all H x W image centres at once."""
    d = 2 * radius + 1
    return (
        table[:, d : d + h, d : d + w]
        - table[:, 0:h, d : d + w]
        - table[:, d : d + h, 0:w]
        + table[:, 0:h, 0:w]
    )


def gb2_jacobians(layers, radius: int) -> np.ndarray:
    """Per-layer slope maps ``(K, 2, H, W)`` using the planar model."""
    layers = np.asarray(layers, dtype=np.float64)
    if layers.ndim == 2:
        layers = layers[None]
    h, w = layers.shape[1:]
    ii = build_integrals(layers, radius)
    alpha = planar_alpha(radius)
    s = _window_boxes(ii.S, radius, h, w)
    sx = _window_boxes(ii.SX, radius, h, w)
    sy = _window_boxes(ii.SY, radius, h, w)
    # window centres in padded coordinates
    xc = np.arange(w, dtype=np.float64)[None, None, :] + radius
    yc = np.arange(h, dtype=np.float64)[None, :, None] + radius
    jac = np.empty((layers.shape[0], 2, h, w))
    jac[:, 0] = (sx - xc * s) / alpha
    jac[:, 1] = (sy - yc * s) / alpha
    return jac


def gb2_detect(stack, config: GbConfig = GbConfig()) -> RawBoundaryMap:
    """Constant-cost-per-pixel detector.

    Always evaluates the planar model: it equals :func:`gbound.core.gb1_detect`
    when ``epsilon >= radius * sqrt(2)`` and approximates it otherwise.
    Gaussian weighting has no integral-image form and is rejected; use
    :func:`multiscale_detect` instead.
    """
    if config.gaussian:
        raise ValueError("Gb2 does not support Gaussian weighting; use multiscale_detect")
    return boundary_from_jacobians(gb2_jacobians(_layers_of(stack), config.radius))


def default_radii(radius: int) -> list[int]:
    return sorted({max(1, radius // 2), radius, 2 * radius})


def multiscale_detect(
    stack, radii: Sequence[int], weights: Sequence[float] | None = None
) -> RawBoundaryMap:
    """Weighted average of Gb2 strengths over several radii.

    The orientation and degeneracy at each pixel come from the scale with the
    largest strength there (first such scale on ties).
    """
    radii = list(radii)
    if not radii:
        raise ValueError("multiscale_detect needs at least one radius")
    if weights is None:
        weights = np.ones(len(radii))
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(radii),) or np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("need one nonnegative weight per radius with a positive sum")
    weights = weights / weights.sum()

    layers = _layers_of(stack)
    maps = [gb2_detect(layers, GbConfig(radius=r)) for r in radii]
    strengths = np.stack([m.strength for m in maps])
    best = np.argmax(strengths, axis=0)
    theta = np.take_along_axis(np.stack([m.theta for m in maps]), best[None], 0)[0]
    degenerate = np.take_along_axis(np.stack([m.degenerate for m in maps]), best[None], 0)[0]
    strength = np.tensordot(weights, strengths, axes=1)
    return RawBoundaryMap(strength, theta, degenerate)
