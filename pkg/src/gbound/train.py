"""Learning the per-layer scales and the logistic calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage, optimize
from scipy.special import expit

from .core import GbConfig, LayerStack, RawBoundaryMap, boundary_from_jacobians, gb1_jacobians
from .evaluate import default_dmax, image_counts, ods_f, rank_thresholds
from .fast import gb2_jacobians
from .parallel import pmap
from .postprocess import LogisticParams, nms

log = logging.getLogger(__name__)

LOGISTIC_L2 = 1e-4
MAX_EVALS = 200
SIMPLEX_STEP = 1.0  # initial simplex edge in log-scale units
SCALE_THRESHOLDS = 25


def fit_logistic(
    strengths, labels, l2: float = LOGISTIC_L2, max_iter: int = 100, tol: float = 1e-8
) -> LogisticParams:
    """L2-regularised logistic regression of labels on strength (Newton/IRLS).

    Maximises the *mean* log-likelihood minus ``l2/2 * |w|^2``. Using the mean
    means a duplicated dataset gives the same fit.
    """
    s = np.asarray(strengths, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if s.shape != y.shape:
        raise ValueError("strengths and labels differ in length")
    if s.size == 0 or y.min() == y.max():
        raise ValueError("logistic fit needs both positive and negative labels")
    X = np.column_stack([np.ones_like(s), s])
    n = len(s)

    def objective(beta):
        z = X @ beta
        # mean of log(1 + e^z) - y z
        return np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * beta @ beta

    beta = np.zeros(2)
    f = objective(beta)
    for _ in range(max_iter):
        p = expit(X @ beta)
        grad = X.T @ (p - y) / n + l2 * beta
        if np.linalg.norm(grad) <= tol:
            break
        H = (X * (p * (1 - p))[:, None]).T @ X / n + l2 * np.eye(2)
        step = np.linalg.solve(H, grad)
        t = 1.0
        while True:
            cand = beta - t * step
            fc = objective(cand)
            if fc <= f or t < 1e-10:
                break
            t *= 0.5
        beta, f = cand, fc
    # the model is P(y=1) = expit(-(w0 + w1 s))
    return LogisticParams(float(-beta[0]), float(-beta[1]))


@dataclass
class TrainImage:
    """One training item with its per-layer slope maps precomputed."""

    jac: np.ndarray
    gt: np.ndarray
    d_max: float


def layer_jacobians(stack, config: GbConfig, detector: str = "gb1") -> np.ndarray:
    layers = stack.data if isinstance(stack, LayerStack) else np.asarray(stack, dtype=np.float64)
    if detector == "gb1":
        return gb1_jacobians(layers, config)
    if detector == "gb2":
        if config.gaussian:
            raise ValueError("Gb2 does not support Gaussian weighting")
        return gb2_jacobians(layers, config.radius)
    raise ValueError(f"unknown detector {detector!r}")


def prepare(train, config: GbConfig, detector: str = "gb1", d_max=None) -> list[TrainImage]:
    """Precompute slope maps of the *unscaled* layers for each (stack, gt) pair."""
    def one(item):
        stack, gt = item
        gt = np.asarray(gt, dtype=bool)
        return TrainImage(
            layer_jacobians(stack, config, detector),
            gt,
            default_dmax(gt.shape) if d_max is None else d_max,
        )

    return pmap(one, train)


def image_ods(bmap: RawBoundaryMap, gt, d_max, n_thresholds=SCALE_THRESHOLDS) -> float:
    """ODS-F of a thinned raw strength map, thresholds at strength quantiles."""
    thin = nms(bmap)
    return ods_f(image_counts(thin, gt, rank_thresholds(thin, n_thresholds), d_max))


def scale_objective(gammas, items: Sequence[TrainImage], n_thresholds=SCALE_THRESHOLDS) -> float:
    """Mean per-image ODS-F for the given layer scales."""
    gammas = np.asarray(gammas, dtype=np.float64)
    return float(
        np.mean(
            pmap(
                lambda it: image_ods(boundary_from_jacobians(it.jac, gammas), it.gt, it.d_max, n_thresholds),
                items,
            )
        )
    )


def learn_layer_scales(
    train,
    config: GbConfig = GbConfig(),
    detector: str = "gb1",
    d_max=None,
    max_evals: int = MAX_EVALS,
    n_thresholds: int = SCALE_THRESHOLDS,
) -> np.ndarray:
    """Per-layer scale factors maximising mean training ODS-F.

    Nelder-Mead over log-scales starting from all ones, capped at
    ``max_evals`` objective evaluations. Returns scales with max 1.
    ``train`` is a sequence of (LayerStack or (K, H, W) array, gt) pairs or
    already prepared :class:`TrainImage` items.
    """
    train = list(train)
    if not train:
        raise ValueError("empty training set")
    items = train if isinstance(train[0], TrainImage) else prepare(train, config, detector, d_max)
    k = items[0].jac.shape[0]
    if k == 1:
        return np.ones(1)

    def loss(logg):
        return -scale_objective(np.exp(logg), items, n_thresholds)

    x0 = np.zeros(k)
    simplex = np.vstack([x0, x0 + SIMPLEX_STEP * np.eye(k)])
    res = optimize.minimize(
        loss,
        x0,
        method="Nelder-Mead",
        options={"maxfev": max_evals, "initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-6},
    )
    gammas = np.exp(res.x - res.x.max())
    log.info("layer scales %s, mean ODS-F %.4f after %d evaluations", gammas, -res.fun, res.nfev)
    return gammas


def fit_calibration(items: Sequence[TrainImage], gammas, l2: float = LOGISTIC_L2) -> LogisticParams:
    """Fit the logistic on NMS survivors; a pixel is positive if within d_max of ground truth."""
    strengths, labels = [], []
    for it in items:
        thin = nms(boundary_from_jacobians(it.jac, gammas))
        near = ndimage.distance_transform_edt(~it.gt) <= it.d_max
        cand = thin > 0
        strengths.append(thin[cand])
        labels.append(near[cand])
    return fit_logistic(np.concatenate(strengths), np.concatenate(labels), l2)
