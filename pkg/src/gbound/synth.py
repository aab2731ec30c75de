"""Seeded synthetic layer stacks with exact ground-truth boundaries.

Shapes are painted in order over a background (region 0); shape ``i`` owns
region ``i`` wherever it is not covered by a later shape. Pixel centres sit
at integer coordinates, ``x`` = column and ``y`` = row.

Ground truth marks each pixel that has a 4-neighbour with a lower region id.
That is a one-pixel-wide contour on the higher-id side of every border, so
a vertical step yields exactly one column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from skimage.measure import points_in_poly

from .core import LayerStack


@dataclass
class SynthSpec:
    """Scene description.

    ``shapes`` entries are dicts: ``{"type": "step", "angle": deg, "point": [x, y]}``
    (the half-plane on the positive side of the normal at ``angle``),
    ``{"type": "disk", "center": [x, y], "radius": r}`` or
    ``{"type": "polygon", "vertices": [[x, y], ...]}``. ``values`` gives one
    row of ``layers`` values per region; when omitted they are drawn from the
    seed. ``noise`` is a per-layer Gaussian sigma (a scalar applies to all).
    ``antialias`` > 1 averages region values over that many sub-samples per
    pixel side, like a sensor integrating over pixel area; ground truth
    always comes from pixel centres.
    """

    height: int
    width: int
    shapes: list = field(default_factory=list)
    layers: int = 3
    values: list | None = None
    noise: float | list = 0.0
    seed: int = 0
    antialias: int = 1

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        return cls(**json.loads(text))


def region_labels(spec: SynthSpec, shift: tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    """Region id of every pixel, sampled at pixel centre + ``shift`` (dx, dy)."""
    h, w = spec.height, spec.width
    if h < 1 or w < 1:
        raise ValueError("image size must be positive")
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xs += shift[0]
    ys += shift[1]
    labels = np.zeros((h, w), dtype=np.int32)
    for i, shape in enumerate(spec.shapes, start=1):
        kind = shape["type"]
        if kind == "step":
            a = np.deg2rad(shape["angle"])
            px, py = shape.get("point", ((w - 1) / 2.0, (h - 1) / 2.0))
            inside = (xs - px) * np.cos(a) + (ys - py) * np.sin(a) >= 0
        elif kind == "disk":
            cx, cy = shape["center"]
            r = float(shape["radius"])
            if r <= 0:
                raise ValueError(f"disk {i} has non-positive radius {r}")
            inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        elif kind == "polygon":
            v = np.asarray(shape["vertices"], dtype=np.float64)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise ValueError(f"polygon {i} needs at least 3 (x, y) vertices")
            area = 0.5 * abs(np.dot(v[:, 0], np.roll(v[:, 1], -1)) - np.dot(v[:, 1], np.roll(v[:, 0], -1)))
            if area == 0:
                raise ValueError(f"polygon {i} has zero area")
            inside = points_in_poly(np.column_stack([xs.ravel(), ys.ravel()]), v).reshape(h, w)
        else:
            raise ValueError(f"unknown shape type {kind!r}")
        if not inside.any():
            raise ValueError(f"shape {i} ({kind}) covers no pixels")
        labels[inside] = i
    return labels


def boundary_from_labels(labels: np.ndarray) -> np.ndarray:
    gt = np.zeros(labels.shape, dtype=bool)
    gt[:, 1:] |= labels[:, 1:] > labels[:, :-1]
    gt[:, :-1] |= labels[:, :-1] > labels[:, 1:]
    gt[1:, :] |= labels[1:, :] > labels[:-1, :]
    gt[:-1, :] |= labels[:-1, :] > labels[1:, :]
    return gt


def distinct_values(rng, n_regions: int, layers: int, min_gap: float = 0.3, tries: int = 1000) -> np.ndarray:
    """Region values in [0, 1] whose pairwise L2 distances are at least ``min_gap``.

    The gap constraint is dropped after ``tries`` failed draws per region.
    """
    out = []
    for _ in range(n_regions):
        for _ in range(tries):
            cand = rng.random(layers)
            if all(np.linalg.norm(cand - o) >= min_gap for o in out):
                break
        out.append(cand)
    return np.array(out)


def synth_generate(spec: SynthSpec) -> tuple[LayerStack, np.ndarray]:
    """Layer stack and boolean ground-truth boundary map for ``spec``."""
    labels = region_labels(spec)
    rng = np.random.default_rng(spec.seed)
    n_regions = len(spec.shapes) + 1
    if spec.values is None:
        values = distinct_values(rng, n_regions, spec.layers)
    else:
        values = np.asarray(spec.values, dtype=np.float64)
        if values.shape != (n_regions, spec.layers):
            raise ValueError(f"values must have shape {(n_regions, spec.layers)}, got {values.shape}")
    n = int(spec.antialias)
    if n < 1:
        raise ValueError("antialias must be >= 1")
    if n == 1:
        data = np.moveaxis(values[labels], -1, 0).copy()
    else:
        sub = (np.arange(n) + 0.5) / n - 0.5
        acc = np.zeros((spec.height, spec.width, spec.layers))
        for dy in sub:
            for dx in sub:
                acc += values[region_labels(spec, (dx, dy))]
        data = np.moveaxis(acc / (n * n), -1, 0).copy()
    sigma = np.broadcast_to(np.asarray(spec.noise, dtype=np.float64), (spec.layers,))
    for k in range(spec.layers):
        if sigma[k] > 0:
            data[k] += rng.normal(0.0, sigma[k], data[k].shape)
    names = [f"synth{k}" for k in range(spec.layers)]
    return LayerStack(data, names), boundary_from_labels(labels)


def random_spec(
    seed: int, height: int = 128, width: int = 128, n_shapes: int = 4, layers: int = 3, noise: float = 0.05
) -> SynthSpec:
    """A scene of random disks and star-shaped polygons, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    short = min(height, width)
    shapes = []
    for _ in range(n_shapes):
        cx = rng.uniform(0.2, 0.8) * width
        cy = rng.uniform(0.2, 0.8) * height
        size = rng.uniform(0.12, 0.28) * short
        if rng.random() < 0.5:
            shapes.append({"type": "disk", "center": [cx, cy], "radius": size})
        else:
            n = int(rng.integers(3, 7))
            ang = np.sort(rng.uniform(0, 2 * np.pi, n))
            rad = size * rng.uniform(0.7, 1.3, n)
            verts = np.column_stack([cx + rad * np.cos(ang), cy + rad * np.sin(ang)])
            shapes.append({"type": "polygon", "vertices": verts.tolist()})
    return SynthSpec(height, width, shapes, layers=layers, noise=noise, seed=seed)
