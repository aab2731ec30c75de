import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components


def similar_depth_labels(depth: np.ndarray, tol: float) -> np.ndarray:
    """Label 4-connected regions whose neighbouring depths differ by at most ``tol``."""
    depth = np.asarray(depth, dtype=np.float64)
    if not tol > 0:
        raise ValueError("depth tolerance must be positive")
    if not np.all(np.isfinite(depth)):
        raise ValueError("depth map contains non-finite values")
    h, w = depth.shape
    idx = np.arange(h * w).reshape(h, w)
    right = np.abs(depth[:, 1:] - depth[:, :-1]) <= tol
    down = np.abs(depth[1:, :] - depth[:-1, :]) <= tol
    src = np.concatenate([idx[:, :-1][right], idx[:-1, :][down]])
    dst = np.concatenate([idx[:, 1:][right], idx[1:, :][down]])
    graph = sparse.coo_matrix((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(h * w, h * w))
    _, labels = connected_components(graph, directed=False)
    return labels.reshape(h, w)


def depth_largest_component(depth: np.ndarray, tol: float) -> np.ndarray:
    """0/1 mask of the largest similar-depth component.

    Equal-size components are resolved in favour of the one containing the
    earliest pixel in row-major order.
    """
    labels = similar_depth_labels(depth, tol).ravel()
    sizes = np.bincount(labels)
    first = np.full(sizes.size, labels.size)
    np.minimum.at(first, labels, np.arange(labels.size))
    best = np.lexsort((first, -sizes))[0]
    return (labels == best).reshape(np.shape(depth)).astype(np.float64)
