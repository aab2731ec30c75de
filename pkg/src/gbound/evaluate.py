"""Boundary benchmark: tolerance matching, precision/recall curves, ODS F-measure."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numba
import numpy as np
from scipy.spatial import cKDTree
from skimage.morphology import thin as skeleton_thin

BSDS_TOLERANCE = 0.0075
N_THRESHOLDS = 33


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    d_max: float


@dataclass(frozen=True)
class PRPoint:
    threshold: float
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f(self) -> float:
        return f_measure(self.precision, self.recall)


def f_measure(p: float, r: float) -> float:
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def default_dmax(shape) -> float:
    return BSDS_TOLERANCE * float(np.hypot(*shape[:2]))


def default_thresholds(n: int = N_THRESHOLDS) -> np.ndarray:
    """``n`` evenly spaced levels strictly inside (0, 1)."""
    return np.linspace(0.0, 1.0, n + 2)[1:-1]


def rank_thresholds(values: np.ndarray, n: int = N_THRESHOLDS) -> np.ndarray:
    """Thresholds at evenly spaced quantiles of the positive entries of ``values``.

    Useful for uncalibrated strength maps, where a fixed (0, 1) grid is
    meaningless. The curve it yields is unchanged by any strictly increasing
    rescaling of the map.
    """
    pos = np.sort(values[values > 0], axis=None)
    if pos.size == 0:
        return np.array([np.inf])
    idx = np.round(np.linspace(0, pos.size - 1, n)).astype(int)
    return np.unique(pos[idx])


@numba.njit(cache=True)
def _greedy(pi, gi, n_pred, n_gt):
    used_p = np.zeros(n_pred, dtype=np.bool_)
    used_g = np.zeros(n_gt, dtype=np.bool_)
    tp = 0
    for t in range(pi.shape[0]):
        a = pi[t]
        b = gi[t]
        if not used_p[a] and not used_g[b]:
            used_p[a] = True
            used_g[b] = True
            tp += 1
    return tp


def match_boundaries(pred: np.ndarray, gt: np.ndarray, d_max: float) -> MatchResult:
    """Greedy one-to-one matching of boundary pixels within ``d_max``.

    Candidate pairs are visited by increasing distance, ties broken by the
    (row, col) of the predicted pixel, then of the ground-truth pixel.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if not d_max > 0:
        raise ValueError("d_max must be positive")
    pp = np.argwhere(pred)
    gp = np.argwhere(gt)
    if len(pp) == 0 or len(gp) == 0:
        return MatchResult(0, len(pp), len(gp), d_max)
    pairs = cKDTree(pp).sparse_distance_matrix(cKDTree(gp), d_max, output_type="ndarray")
    if len(pairs) == 0:
        return MatchResult(0, len(pp), len(gp), d_max)
    # argwhere is row-major, so point index order is (row, col) order
    order = np.lexsort((pairs["j"], pairs["i"], pairs["v"]))
    tp = int(_greedy(pairs["i"][order], pairs["j"][order], len(pp), len(gp)))
    return MatchResult(tp, len(pp) - tp, len(gp) - tp, d_max)


def image_counts(prob, gt, thresholds, d_max=None, thin: bool = True) -> list[PRPoint]:
    """Counts per threshold for one NMS-thinned map: pixel on iff ``prob >= t``.

    With ``thin`` the binary maps (prediction and ground truth) are reduced
    to 8-connected one-pixel curves first, which removes the second pixel of
    two-pixel-wide ridges.
    """
    prob = np.asarray(prob, dtype=np.float64)
    gt = np.asarray(gt, dtype=bool)
    if d_max is None:
        d_max = default_dmax(gt.shape)
    if thin:
        gt = skeleton_thin(gt)
    out = []
    for t in thresholds:
        pred = prob >= t
        if thin:
            pred = skeleton_thin(pred)
        m = match_boundaries(pred, gt, d_max)
        out.append(PRPoint(float(t), m.tp, m.fp, m.fn))
    return out


def aggregate(per_image: Iterable[Sequence[PRPoint]]) -> list[PRPoint]:
    """Sum counts threshold-by-threshold across images."""
    per_image = list(per_image)
    if not per_image:
        return []
    out = []
    for pts in zip(*per_image):
        out.append(
            PRPoint(
                pts[0].threshold,
                sum(p.tp for p in pts),
                sum(p.fp for p in pts),
                sum(p.fn for p in pts),
            )
        )
    return out


def ods_f(curve: Sequence[PRPoint]) -> float:
    return max((p.f for p in curve), default=0.0)


def pr_curve(prob, gt, thresholds=None, d_max=None, thin: bool = True):
    """PR curve and ODS-F for one image or a dataset.

    ``prob`` and ``gt`` are single maps or equal-length sequences of maps; for
    datasets the counts are summed across images before computing P/R.
    Returns ``(points, ods)``.
    """
    if thresholds is None:
        thresholds = default_thresholds()
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be sorted ascending")
    if isinstance(prob, np.ndarray) and prob.ndim == 2:
        prob, gt = [prob], [gt]
    curve = aggregate(image_counts(p, g, thresholds, d_max, thin) for p, g in zip(prob, gt))
    return curve, ods_f(curve)


def write_csv(curve: Sequence[PRPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "tp", "fp", "fn", "precision", "recall", "f"])
        for p in curve:
            w.writerow(
                [f"{p.threshold:.6g}", p.tp, p.fp, p.fn,
                 f"{p.precision:.6f}", f"{p.recall:.6f}", f"{p.f:.6f}"]
            )
        w.writerow(["ODS", "", "", "", "", "", f"{ods_f(curve):.6f}"])


def plot_curve(curve: Sequence[PRPoint], path, label: str = "Gb") -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for f in (0.2, 0.4, 0.6, 0.8):
        r = np.linspace(f / 2 + 1e-3, 1, 100)
        ax.plot(r, f * r / (2 * r - f), color="0.85", lw=0.8)
    ax.plot([p.recall for p in curve], [p.precision for p in curve], "-", label=f"{label} F={ods_f(curve):.3f}")
    ax.set(xlim=(0, 1), ylim=(0, 1), xlabel="Recall", ylabel="Precision")
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
