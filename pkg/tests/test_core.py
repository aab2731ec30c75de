import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gbound.core import (
    GbConfig,
    LayerStack,
    LayerStackError,
    build_position_basis,
    eigen2x2_sym,
    gb1_detect,
    local_fit,
    project_to_disk,
)


def lstsq_J(X, basis):
    """Weighted least squares of X ~ C + P J with both C and J unknown."""
    w = basis.weights
    A = np.column_stack([np.ones(len(w)), basis.projected]) * w[:, None]
    sol, *_ = np.linalg.lstsq(A, X * w[:, None], rcond=None)
    return sol[1:]


def window_of(img, x0, y0, r):
    return img[y0 - r : y0 + r + 1, x0 - r : x0 + r + 1]


def angle_diff(a, b):
    d = np.abs(a - b) % np.pi
    return np.minimum(d, np.pi - d)


# --- project_to_disk ---------------------------------------------------------


def test_project_inside_disk_is_identity():
    np.testing.assert_array_equal(project_to_disk([3, 4], 10), [3, 4])


def test_project_outside_disk_scales_to_radius():
    np.testing.assert_allclose(project_to_disk([3, 4], 1), [0.6, 0.8])


@pytest.mark.parametrize("eps", [0.1, 1.0, 7.0])
def test_project_origin_fixed(eps):
    np.testing.assert_array_equal(project_to_disk([0, 0], eps), [0, 0])


@given(
    st.floats(-50, 50), st.floats(-50, 50), st.floats(0.01, 20),
)
def test_projection_norm_bounded(x, y, eps):
    assert np.linalg.norm(project_to_disk([x, y], eps)) <= eps * (1 + 1e-12)


# --- position basis ----------------------------------------------------------


def test_basis_alpha_radius_one():
    b = build_position_basis(1, 10.0, False)
    assert b.alpha == 6.0
    assert b.P.shape == (9, 2)


@pytest.mark.parametrize("r", [1, 2, 3, 5])
@pytest.mark.parametrize("eps", [0.3, 1.0, 2.5, 100.0])
@pytest.mark.parametrize("gauss", [False, True])
def test_basis_invariants(r, eps, gauss):
    b = build_position_basis(r, eps, gauss)
    np.testing.assert_allclose(b.projected.sum(axis=0), 0.0, atol=1e-12)
    PtP = b.P.T @ b.P
    assert b.alpha > 0
    assert abs(PtP[0, 1]) <= 1e-12 * b.alpha
    assert abs(PtP[0, 0] - PtP[1, 1]) <= 1e-12 * b.alpha
    assert PtP[0, 0] == pytest.approx(b.alpha)


def test_gaussian_basis_offdiagonal_zero():
    b = build_position_basis(2, 10.0, True)
    assert abs((b.P.T @ b.P)[0, 1]) <= 1e-15


def test_basis_rejects_bad_arguments():
    with pytest.raises(ValueError):
        build_position_basis(0, 1.0)
    with pytest.raises(ValueError):
        build_position_basis(2, 0.0)


# --- eigen2x2_sym ------------------------------------------------------------


def test_eigen_diagonal():
    lam, vx, vy, deg = eigen2x2_sym(4.0, 0.0, 1.0)
    assert lam == 4.0 and (vx, vy) == (1.0, 0.0) and not deg


def test_eigen_offdiagonal():
    lam, vx, vy, deg = eigen2x2_sym(2.0, 1.0, 2.0)
    assert lam == pytest.approx(3.0)
    np.testing.assert_allclose([vx, vy], [1 / np.sqrt(2), 1 / np.sqrt(2)])
    assert not deg


@pytest.mark.parametrize("c", [0.0, 1e-8, 2.5, 1e6])
def test_eigen_isotropic(c):
    lam, vx, vy, deg = eigen2x2_sym(c, 0.0, c)
    assert lam == pytest.approx(c) and deg and (vx, vy) == (1.0, 0.0)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_eigen_matches_dense_solver(a, b, c):
    lam, vx, vy, deg = eigen2x2_sym(a, b, c)
    M = np.array([[a, b], [b, c]])
    w = np.linalg.eigvalsh(M)
    if w[-1] >= 0:
        assert lam == pytest.approx(w[-1], abs=1e-9)
    if not deg and w[-1] - w[0] > 1e-6:
        v = np.array([vx, vy])
        np.testing.assert_allclose(M @ v, w[-1] * v, atol=1e-8)
        assert np.linalg.norm(v) == pytest.approx(1.0)


# --- local_fit ---------------------------------------------------------------


def test_local_fit_ramp_x():
    b = build_position_basis(1, np.sqrt(2), False)
    X = b.offsets[:, :1].copy()  # L(x, y) = x
    fit = local_fit(X, b)
    np.testing.assert_allclose(fit.J, [[1.0], [0.0]], atol=1e-15)
    assert fit.lam == pytest.approx(1.0)
    np.testing.assert_allclose(fit.normal, [1.0, 0.0])


def test_local_fit_constant():
    b = build_position_basis(2, 1.0, True)
    fit = local_fit(np.full((25, 2), 3.7) * b.weights[:, None], b)
    np.testing.assert_allclose(fit.J, 0.0, atol=1e-14)
    assert fit.lam == pytest.approx(0.0, abs=1e-26)


def test_local_fit_two_ramps_degenerate():
    b = build_position_basis(1, 10.0, False)
    fit = local_fit(b.offsets.copy(), b)
    np.testing.assert_allclose(fit.M, np.eye(2), atol=1e-15)
    assert fit.degenerate


@pytest.mark.parametrize("seed", range(5))
def test_local_fit_matches_least_squares(seed):
    rng = np.random.default_rng(seed)
    r = int(rng.integers(1, 6))
    k = int(rng.integers(1, 5))
    b = build_position_basis(r, float(rng.uniform(0.3, 2 * r)), bool(seed % 2))
    X = rng.normal(size=((2 * r + 1) ** 2, k))
    fit = local_fit(X * b.weights[:, None], b)
    np.testing.assert_allclose(fit.J, lstsq_J(X, b), rtol=1e-8, atol=1e-12)


@pytest.mark.parametrize("gauss", [False, True])
def test_constant_offset_leaves_J_unchanged(gauss):
    rng = np.random.default_rng(3)
    b = build_position_basis(3, 1.5, gauss)
    X = rng.normal(size=(49, 3))
    off = np.array([5.0, -2.0, 100.0])
    J1 = local_fit(X * b.weights[:, None], b).J
    J2 = local_fit((X + off) * b.weights[:, None], b).J
    np.testing.assert_allclose(J1, J2, atol=1e-12)


def test_lambda_is_squared_step_norm():
    # K identical ramps scaled by b_k: J = n^T b so lambda = sum b_k^2
    b = build_position_basis(3, 10.0, False)
    steps = np.array([0.5, 2.0, -1.5, 3.0])
    n = np.array([np.cos(0.7), np.sin(0.7)])
    X = (b.offsets @ n)[:, None] * steps[None, :]
    fit = local_fit(X, b)
    assert fit.lam == pytest.approx(np.sum(steps**2), abs=1e-10)
    assert angle_diff(np.arctan2(fit.normal[1], fit.normal[0]), 0.7) < 1e-10


# --- gb1_detect ---------------------------------------------------------------


def test_gb1_matches_window_fits():
    rng = np.random.default_rng(11)
    layers = rng.random((2, 12, 14))
    cfg = GbConfig(radius=2, epsilon=1.2, gaussian=True)
    out = gb1_detect(layers, cfg)
    b = build_position_basis(2, 1.2, True)
    padded = np.pad(layers, ((0, 0), (2, 2), (2, 2)), mode="edge")
    for y0, x0 in [(0, 0), (5, 7), (11, 13), (3, 0)]:
        X = np.stack([window_of(p, x0 + 2, y0 + 2, 2).ravel() for p in padded], axis=1)
        fit = local_fit(X * b.weights[:, None], b)
        assert out.strength[y0, x0] == pytest.approx(fit.strength, rel=1e-10)
        assert angle_diff(out.theta[y0, x0], np.arctan2(fit.normal[1], fit.normal[0])) < 1e-9


def test_gb1_vertical_step():
    img = np.zeros((16, 16))
    img[:, 8:] = 1.0
    out = gb1_detect(img, GbConfig(radius=3, epsilon=0.5))
    row = out.strength[8]
    assert set(np.flatnonzero(row == row.max())) == {7, 8}
    np.testing.assert_allclose(out.theta[:, 7:9], 0.0, atol=1e-12)


def test_gb1_constant_stack():
    out = gb1_detect(np.full((3, 10, 10), 0.4), GbConfig(radius=2))
    np.testing.assert_allclose(out.strength, 0.0, atol=1e-12)


def test_gb1_output_contract():
    rng = np.random.default_rng(0)
    out = gb1_detect(rng.random((9, 13)), GbConfig(radius=4))
    assert out.strength.shape == (9, 13)
    assert np.all(out.strength >= 0)
    assert np.all((out.theta >= 0) & (out.theta < np.pi))


def test_gb1_rotation_covariance():
    rng = np.random.default_rng(5)
    img = rng.random((20, 20))
    cfg = GbConfig(radius=3, gaussian=True)
    a = gb1_detect(img, cfg)
    b = gb1_detect(np.rot90(img), cfg)
    np.testing.assert_allclose(b.strength, np.rot90(a.strength), rtol=1e-10, atol=1e-13)
    ok = ~np.rot90(a.degenerate)
    assert np.all(angle_diff(b.theta, np.rot90(a.theta) - np.pi / 2)[ok] < 1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.01, 100.0), st.integers(0, 2**31 - 1))
def test_global_scaling_covariance(c, seed):
    rng = np.random.default_rng(seed)
    layers = rng.random((2, 10, 11))
    cfg = GbConfig(radius=2)
    a = gb1_detect(layers, cfg)
    b = gb1_detect(c * layers, cfg)
    np.testing.assert_allclose(b.strength, c * a.strength, rtol=1e-9, atol=1e-12)
    np.testing.assert_array_equal(a.degenerate, b.degenerate)
    assert np.all(angle_diff(a.theta, b.theta)[~a.degenerate] < 1e-9)


def test_large_epsilon_is_planar_fit():
    # with eps >= r*sqrt(2) the fitted plane of a plane is exact
    ys, xs = np.mgrid[0:15, 0:15].astype(float)
    img = 0.3 * xs - 0.2 * ys + 1.0
    out = gb1_detect(img, GbConfig(radius=3, epsilon=3 * np.sqrt(2)))
    inner = out.strength[3:-3, 3:-3]
    np.testing.assert_allclose(inner, np.hypot(0.3, 0.2), rtol=1e-12)


def test_small_epsilon_gives_step_along_normal():
    # along the normal axis the model term (p_eps - p0) . n becomes eps * sign(t)
    eps = 1e-6
    b = build_position_basis(3, eps, False)
    on_axis = b.offsets[:, 1] == 0
    x = b.offsets[on_axis, 0]
    np.testing.assert_allclose(b.projected[on_axis, 0] / eps, np.sign(x), atol=1e-9)
    # away from the axis the profile is a smooth cosine, not a step
    off = (b.offsets[:, 1] == 2) & (b.offsets[:, 0] == 1)
    assert 0 < b.projected[off, 0][0] / eps < 1


def test_layer_stack_validation():
    with pytest.raises(LayerStackError):
        LayerStack(np.array([[np.nan, 1.0]]))
    with pytest.raises(LayerStackError):
        LayerStack(np.zeros((2, 3, 3)), gammas=[1.0, 0.0])
    with pytest.raises(LayerStackError):
        gb1_detect(np.array([[np.inf, 0.0], [0.0, 0.0]]), GbConfig(radius=1))


def test_layer_stack_gammas_scale_layers():
    s = LayerStack(np.ones((2, 4, 4)), gammas=[2.0, 0.5])
    np.testing.assert_array_equal(s.scaled()[:, 0, 0], [2.0, 0.5])


def test_config_validation():
    with pytest.raises(ValueError):
        GbConfig(radius=0)
    with pytest.raises(ValueError):
        GbConfig(radius=2, epsilon=-1.0)
    assert GbConfig(radius=6).eps == 3.0
