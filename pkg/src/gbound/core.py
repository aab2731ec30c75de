"""Local linear boundary model and the exact per-window detector (Gb1).

Every pixel ``p0`` gets a fit of its (2r+1) x (2r+1) window to
``L_k(p) ~ C_k + b_k (p_eps - p0) . n``: a per-layer constant plus a shared
normal direction. The constant cancels because the position matrix has
zero-mean columns. The 2 x K slope matrix is then ``J = P^T X / alpha``.
The boundary strength is the root of the largest eigenvalue of ``J J^T``
and the normal is its principal eigenvector.

Coordinates: ``x`` is the column index and ``y`` the row index (rows grow
downwards). Arrays are indexed ``[row, col]`` throughout, i.e. ``[y, x]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

DEGENERATE_RTOL = 1e-12


class LayerStackError(ValueError):
    """Raised for malformed or non-finite layer stacks."""


@dataclass
class LayerStack:
    """K co-registered interpretation layers of one image.

    ``data`` has shape ``(K, height, width)``. ``gammas`` are per-layer
    importance scales applied multiplicatively by :meth:`scaled`.
    """

    data: np.ndarray
    names: list[str] = field(default_factory=list)
    gammas: np.ndarray | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[None]
        if data.ndim != 3 or data.shape[0] == 0:
            raise LayerStackError(f"expected a (K, H, W) array, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise LayerStackError("layer stack contains non-finite values")
        self.data = data
        k = data.shape[0]
        if not self.names:
            self.names = [f"layer{i}" for i in range(k)]
        if len(self.names) != k:
            raise LayerStackError(f"{len(self.names)} names for {k} layers")
        if self.gammas is None:
            self.gammas = np.ones(k)
        self.gammas = np.asarray(self.gammas, dtype=np.float64).reshape(-1)
        if self.gammas.shape != (k,):
            raise LayerStackError(f"{self.gammas.size} scale factors for {k} layers")
        if not np.all(self.gammas > 0):
            raise LayerStackError("layer scale factors must be positive")

    @property
    def layer_count(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def scaled(self) -> np.ndarray:
        """Layer data multiplied by the per-layer scale factors."""
        return self.data * self.gammas[:, None, None]

    def with_gammas(self, gammas) -> "LayerStack":
        return LayerStack(self.data, list(self.names), np.asarray(gammas, dtype=np.float64))

    @classmethod
    def concatenate(cls, stacks: Sequence["LayerStack"]) -> "LayerStack":
        shapes = {s.data.shape[1:] for s in stacks}
        if len(shapes) != 1:
            raise LayerStackError(f"layers disagree in size: {sorted(shapes)}")
        return cls(
            np.concatenate([s.data for s in stacks]),
            [n for s in stacks for n in s.names],
            np.concatenate([s.gammas for s in stacks]),
        )


@dataclass(frozen=True)
class GbConfig:
    """Detector settings.

    ``epsilon=None`` means the default of half the window radius. The
    per-layer constant of the model is never materialised.
    """

    radius: int = 3
    epsilon: float | None = None
    gaussian: bool = False

    def __post_init__(self):
        if int(self.radius) != self.radius or self.radius < 1:
            raise ValueError(f"window radius must be an integer >= 1, got {self.radius}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def eps(self) -> float:
        return self.radius / 2.0 if self.epsilon is None else float(self.epsilon)


@dataclass(frozen=True)
class PositionBasis:
    """Window geometry shared by every pixel.

    ``offsets`` holds the raw integer (dx, dy) offsets in row-major window
    order, ``projected`` their projection onto the epsilon-disk, ``weights``
    the row weights and ``P`` the weighted projected offsets.
    """

    radius: int
    epsilon: float
    offsets: np.ndarray
    projected: np.ndarray
    weights: np.ndarray
    P: np.ndarray
    alpha: float

    def kernels(self) -> tuple[np.ndarray, np.ndarray]:
        """Correlation kernels giving ``P^T X`` at every pixel.

        Rows of X carry the same weight as rows of P, so each window sample
        enters with ``w_i**2`` times its projected offset.
        """
        side = 2 * self.radius + 1
        w2 = self.weights**2
        kx = (w2 * self.projected[:, 0]).reshape(side, side)
        ky = (w2 * self.projected[:, 1]).reshape(side, side)
        return kx, ky


@dataclass
class LocalFit:
    J: np.ndarray
    M: np.ndarray
    lam: float
    normal: np.ndarray
    degenerate: bool

    @property
    def strength(self) -> float:
        return float(np.sqrt(self.lam))


@dataclass
class RawBoundaryMap:
    """Uncalibrated detector output: strength, normal angle in [0, pi), degeneracy."""

    strength: np.ndarray
    theta: np.ndarray
    degenerate: np.ndarray

    @property
    def shape(self):
        return self.strength.shape


def project_to_disk(offset, eps: float) -> np.ndarray:
    """Closest point to ``offset`` on the disk of radius ``eps`` about the origin.

    Accepts a single 2-vector or an ``(n, 2)`` array.
    """
    offset = np.asarray(offset, dtype=np.float64)
    norm = np.linalg.norm(offset, axis=-1, keepdims=True)
    scale = np.where(norm > eps, eps / np.where(norm > 0, norm, 1.0), 1.0)
    return offset * scale


def window_offsets(radius: int) -> np.ndarray:
    """(dx, dy) offsets of the square window in row-major order."""
    d = np.arange(-radius, radius + 1, dtype=np.float64)
    dy, dx = np.meshgrid(d, d, indexing="ij")
    return np.column_stack([dx.ravel(), dy.ravel()])


def gaussian_weights(offsets: np.ndarray, radius: int) -> np.ndarray:
    sigma = radius / 2.0
    return np.exp(-(offsets**2).sum(axis=1) / (2.0 * sigma**2))


def build_position_basis(radius: int, eps: float, use_gaussian: bool = False) -> PositionBasis:
    if radius < 1:
        raise ValueError(f"window radius must be >= 1, got {radius}")
    if not eps > 0:
        raise ValueError(f"epsilon must be positive, got {eps}")
    offsets = window_offsets(radius)
    projected = project_to_disk(offsets, eps)
    if use_gaussian:
        weights = gaussian_weights(offsets, radius)
    else:
        weights = np.ones(len(offsets))
    P = projected * weights[:, None]
    alpha = float(np.sum(P[:, 0] ** 2))
    return PositionBasis(radius, float(eps), offsets, projected, weights, P, alpha)


def basis_for(config: GbConfig) -> PositionBasis:
    return build_position_basis(config.radius, config.eps, config.gaussian)


def eigen2x2_sym(a, b, c):
    """Principal eigenpair of ``[[a, b], [b, c]]``, elementwise over arrays.

    Returns ``(lam_max, vx, vy, degenerate)``. The eigenvector is taken from
    the half-angle formula, which stays accurate near isotropy. Isotropic
    matrices get ``v = (1, 0)`` and ``degenerate = True``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    half_tr = 0.5 * (a + c)
    half_gap = np.hypot(0.5 * (a - c), b)
    lam = half_tr + half_gap
    degenerate = 2.0 * half_gap <= DEGENERATE_RTOL * np.maximum(lam, 1.0)
    phi = 0.5 * np.arctan2(2.0 * b, a - c)
    vx = np.where(degenerate, 1.0, np.cos(phi))
    vy = np.where(degenerate, 0.0, np.sin(phi))
    # rank-1 M can round lam_min slightly negative; lam itself is a sum of squares
    lam = np.maximum(lam, 0.0)
    if lam.ndim == 0:
        return float(lam), float(vx), float(vy), bool(degenerate)
    return lam, vx, vy, degenerate


def local_fit(X: np.ndarray, basis: PositionBasis) -> LocalFit:
    """Closed-form fit of one window.

    ``X`` is ``(N_W, K)`` with rows in the basis offset order and already
    multiplied by the basis weights.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    J = basis.P.T @ X / basis.alpha
    M = J @ J.T
    lam, vx, vy, degenerate = eigen2x2_sym(M[0, 0], M[0, 1], M[1, 1])
    return LocalFit(J, M, lam, np.array([vx, vy]), degenerate)


def fold_angle(vx, vy):
    """Normal angle folded to [0, pi)."""
    theta = np.mod(np.arctan2(vy, vx), np.pi)
    # mod can return pi itself for tiny negative inputs
    return np.where(theta >= np.pi, 0.0, theta)


def check_finite(layers: np.ndarray) -> None:
    if not np.all(np.isfinite(layers)):
        raise LayerStackError("layer stack contains non-finite values")


def gb1_jacobians(layers: np.ndarray, config: GbConfig) -> np.ndarray:
    """Per-layer slope maps, shape ``(K, 2, H, W)``, by direct window correlation.

    Cost grows with the window area. Borders use replicate padding.
    """
    layers = np.asarray(layers, dtype=np.float64)
    check_finite(layers)
    basis = basis_for(config)
    kx, ky = basis.kernels()
    r = config.radius
    out = np.empty((layers.shape[0], 2) + layers.shape[1:])
    for k, layer in enumerate(layers):
        padded = np.pad(layer, r, mode="edge")
        for row, kern in enumerate((kx, ky)):
            full = ndimage.correlate(padded, kern, mode="constant")
            out[k, row] = full[r:-r, r:-r]
    out /= basis.alpha
    return out


def boundary_from_jacobians(jac: np.ndarray, gammas=None) -> RawBoundaryMap:
    """Strength and orientation from per-layer slope maps.

    ``gammas`` rescales each layer; scaling layer k by g scales its slope by g.
    """
    if gammas is not None:
        jac = jac * np.asarray(gammas, dtype=np.float64)[:, None, None, None]
    jx, jy = jac[:, 0], jac[:, 1]
    a = np.einsum("khw,khw->hw", jx, jx)
    b = np.einsum("khw,khw->hw", jx, jy)
    c = np.einsum("khw,khw->hw", jy, jy)
    lam, vx, vy, degenerate = eigen2x2_sym(a, b, c)
    return RawBoundaryMap(np.sqrt(lam), fold_angle(vx, vy), degenerate)


def _layers_of(stack) -> np.ndarray:
    if isinstance(stack, LayerStack):
        return stack.scaled()
    layers = np.asarray(stack, dtype=np.float64)
    return layers[None] if layers.ndim == 2 else layers


def gb1_detect(stack, config: GbConfig = GbConfig()) -> RawBoundaryMap:
    """Exact generalized boundary detector.

    ``stack`` is a :class:`LayerStack` (its scale factors are applied) or a
    raw ``(K, H, W)`` / ``(H, W)`` array.
    """
    return boundary_from_jacobians(gb1_jacobians(_layers_of(stack), config))
