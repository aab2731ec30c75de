"""Figure/ground soft segmentation from a PCA model of patch colour sets.

Each patch is summarised by a binary vector over quantised colours marking
which colours occur in it. PCA over such vectors gives a subspace of colour
distributions. A sampled patch's coefficients in that subspace define a
figure distribution; the background is its mirror image through the mean.
Each pixel is scored by how much more its colour belongs to the figure than
to the background. Scores from ``n_s`` patches on a regular grid are stacked
per pixel and compressed by a second PCA into 8 maps.

Every score depends on the pixel only through its colour bin, so both stages
work on per-bin tables and cost O(bins * n_s) after one pass over the image.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_LAYERS = 8
DEFAULT_NS = 150
DEFAULT_PATCH_RADIUS = 2
DEFAULT_DIM = 4


@dataclass(frozen=True)
class ColorQuantizer:
    """Uniform per-channel binning of 3-channel colours."""

    bins: tuple[int, int, int] = (8, 8, 8)
    lo: tuple[float, float, float] = (0.0, 0.0, 0.0)
    hi: tuple[float, float, float] = (1.0, 1.0, 1.0)

    @property
    def n_bins(self) -> int:
        return int(np.prod(self.bins))

    def bin_index(self, image: np.ndarray) -> np.ndarray:
        """Bin of every pixel of a ``(3, H, W)`` or ``(H, W, 3)`` image.

        Values outside the channel range clamp to the end bins.
        """
        img = _channels_first(image)
        idx = np.zeros(img.shape[1:], dtype=np.intp)
        for c in range(3):
            n = self.bins[c]
            t = (img[c] - self.lo[c]) / (self.hi[c] - self.lo[c])
            b = np.clip(np.floor(t * n), 0, n - 1).astype(np.intp)
            idx = idx * n + b
        return idx


def _channels_first(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3:
        raise ValueError(f"expected a 3-channel image, got shape {img.shape}")
    if img.shape[0] == 3:
        return img
    if img.shape[-1] == 3:
        return np.moveaxis(img, -1, 0)
    raise ValueError(f"expected a 3-channel image, got shape {img.shape}")


@dataclass
class ColorSubspace:
    mean: np.ndarray
    components: np.ndarray  # (d, n_bins), orthonormal rows
    degenerate: bool = False

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def coefficients(self, c: np.ndarray) -> np.ndarray:
        return self.components @ (np.asarray(c, dtype=np.float64) - self.mean)


@dataclass
class SoftSegStack:
    layers: np.ndarray  # (8, H, W) in [0, 1]
    degenerate: bool = False
    meta: dict = field(default_factory=dict)


def fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so that its largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=np.float64)
    if vectors.size == 0:
        return vectors
    pick = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(len(vectors)), pick])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def _patch_presence(bins: np.ndarray, n_bins: int, centers, radius: int) -> np.ndarray:
    h, w = bins.shape
    out = np.zeros((len(centers), n_bins))
    for i, (cx, cy) in enumerate(centers):
        patch = bins[max(0, cy - radius) : min(h, cy + radius + 1), max(0, cx - radius) : min(w, cx + radius + 1)]
        out[i, np.unique(patch)] = 1.0
    return out


def patch_indicator(image, center, patch_radius: int, q: ColorQuantizer = ColorQuantizer()) -> np.ndarray:
    """0/1 vector over colour bins: 1 where the bin occurs in the patch.

    ``center`` is ``(x, y)``; the patch is clipped to the image.
    """
    bins = q.bin_index(image)
    cx, cy = (int(v) for v in center)
    return _patch_presence(bins, q.n_bins, [(cx, cy)], patch_radius)[0]


def fit_color_subspace(samples, d: int = DEFAULT_DIM) -> ColorSubspace:
    """PCA of indicator vectors (one per row) with ``d`` components.

    Components come from the SVD of the centred samples and are sign-fixed.
    If the samples have no variance, the subspace falls back to the first
    ``d`` canonical axes and is marked degenerate.
    """
    X = np.asarray(samples, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < d + 1:
        raise ValueError(f"need at least d + 1 = {d + 1} samples, got {X.shape[0] if X.ndim == 2 else 0}")
    if d > X.shape[1]:
        raise ValueError(f"subspace dimension {d} exceeds vector length {X.shape[1]}")
    mean = X.mean(axis=0)
    _, sv, vt = np.linalg.svd(X - mean, full_matrices=False)
    if sv[0] <= 1e-12 * np.sqrt(X.shape[0]):
        return ColorSubspace(mean, np.eye(d, X.shape[1]), degenerate=True)
    return ColorSubspace(mean, fix_signs(vt[:d]))


def bin_scores(coeffs: np.ndarray, sub: ColorSubspace) -> np.ndarray:
    """Per-bin figure-vs-ground scores ``sum_i a_i v_i[bin]``; coeffs may be ``(n, d)``."""
    return np.asarray(coeffs) @ sub.components


def figure_ground_score(image, c, sub: ColorSubspace, q: ColorQuantizer = ColorQuantizer()) -> np.ndarray:
    """Score map for the patch with indicator ``c``: positive means figure-like.

    Equals half of ``h_F - h_B`` evaluated at each pixel's colour bin.
    """
    table = bin_scores(sub.coefficients(c), sub)
    return table[q.bin_index(image)]


def sample_grid(height: int, width: int, n: int) -> list[tuple[int, int]]:
    """``n`` (x, y) positions spread evenly over a regular grid covering the image."""
    rows = max(1, int(round(np.sqrt(n * height / width))))
    cols = int(np.ceil(n / rows))
    ys = ((np.arange(rows) + 0.5) * height / rows).astype(int)
    xs = ((np.arange(cols) + 0.5) * width / cols).astype(int)
    grid = [(int(x), int(y)) for y in ys for x in xs]
    pick = np.round(np.linspace(0, len(grid) - 1, n)).astype(int)
    return [grid[i] for i in pick]


def soft_segment(
    image,
    n_s: int = DEFAULT_NS,
    patch_radius: int = DEFAULT_PATCH_RADIUS,
    q: ColorQuantizer = ColorQuantizer(),
    d: int = DEFAULT_DIM,
    centers=None,
) -> SoftSegStack:
    """Eight soft figure/ground layers of a colour image.

    ``image`` is ``(3, H, W)`` or ``(H, W, 3)`` with values in the quantiser
    range. ``centers`` overrides the sampling grid with explicit (x, y)
    positions. Output maps are per-pixel PCA projections onto the first 8
    components of the ``n_s`` score maps, each min-max normalised to [0, 1].
    """
    img = _channels_first(image)
    _, h, w = img.shape
    side = 2 * patch_radius + 1
    if h < side or w < side:
        raise ValueError(f"image {h}x{w} smaller than the {side}x{side} patch")
    if centers is None:
        if n_s < N_LAYERS:
            raise ValueError(f"need n_s >= {N_LAYERS}, got {n_s}")
        centers = sample_grid(h, w, n_s)
    n_s = len(centers)
    meta = {"n_s": n_s, "patch_radius": patch_radius, "bins": q.bins, "subspace_dim": d}

    bins = q.bin_index(img)
    counts = np.bincount(bins.ravel(), minlength=q.n_bins).astype(np.float64)
    present = np.flatnonzero(counts)
    const = SoftSegStack(np.zeros((N_LAYERS, h, w)), degenerate=True, meta=meta)
    if present.size < 2:
        return const

    indicators = _patch_presence(bins, q.n_bins, centers, patch_radius)
    sub = fit_color_subspace(indicators, min(d, n_s - 1))
    if sub.degenerate:
        return const
    coeffs = (indicators - sub.mean) @ sub.components.T  # (n_s, d)
    table = bin_scores(coeffs, sub).T[present]  # (bins present, n_s)

    # pixel-weighted PCA over the n_s-dimensional score vectors
    wts = counts[present] / counts.sum()
    mu = wts @ table
    centred = table - mu
    cov = (centred * wts[:, None]).T @ centred
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:N_LAYERS]
    evals, evecs = evals[order], evecs[:, order]
    evecs = fix_signs(evecs.T).T
    proj = centred @ evecs  # (bins present, <=8)
    proj[:, evals <= 1e-12 * max(evals[0], 1e-300)] = 0.0

    lut = np.zeros((q.n_bins, N_LAYERS))
    lut[present, : proj.shape[1]] = proj
    layers = np.moveaxis(lut[bins], -1, 0)
    lo = layers.min(axis=(1, 2), keepdims=True)
    span = layers.max(axis=(1, 2), keepdims=True) - lo
    layers = np.where(span > 0, (layers - lo) / np.where(span > 0, span, 1.0), 0.0)
    meta["explained_variance"] = evals.tolist()
    return SoftSegStack(layers, degenerate=False, meta=meta)
