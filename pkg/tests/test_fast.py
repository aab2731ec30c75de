import numpy as np
import pytest

from gbound.core import GbConfig, gb1_detect, gb1_jacobians
from gbound.fast import (
    build_integrals,
    default_radii,
    gb2_detect,
    gb2_jacobians,
    gb2_local_J,
    multiscale_detect,
    planar_alpha,
    rect_sums,
    summed_area,
)


def direct_sums(padded, rect):
    y0, x0, y1, x1 = rect
    s = sx = sy = 0.0
    for y in range(y0, y1 + 1):
        for x in range(x0, x1 + 1):
            v = padded[y, x]
            s += v
            sx += x * v
            sy += y * v
    return s, sx, sy


def angle_diff(a, b):
    d = np.abs(a - b) % np.pi
    return np.minimum(d, np.pi - d)


def test_single_pixel_image():
    ii = build_integrals(np.array([[5.0]]), 0)
    assert rect_sums(ii, (0, 0, 0, 0)) == (5.0, 0.0, 0.0)


def test_all_ones_full_sum():
    ii = build_integrals(np.ones((4, 4)), 0)
    assert rect_sums(ii, (0, 0, 3, 3))[0] == 16.0


def test_random_rectangles_match_direct_summation():
    rng = np.random.default_rng(0)
    img = rng.random((8, 8))
    ii = build_integrals(img, 0)
    for _ in range(50):
        y0, y1 = sorted(rng.integers(0, 8, 2))
        x0, x1 = sorted(rng.integers(0, 8, 2))
        got = rect_sums(ii, (y0, x0, y1, x1))
        np.testing.assert_allclose(got, direct_sums(img, (y0, x0, y1, x1)), rtol=1e-14, atol=1e-12)


def test_padded_rectangles_match_direct_summation():
    rng = np.random.default_rng(1)
    img = rng.random((2, 6, 7))
    ii = build_integrals(img, 2)
    padded = np.pad(img[1], 2, mode="edge")
    rect = (0, 1, 3, 3)
    np.testing.assert_allclose(rect_sums(ii, rect, k=1), direct_sums(padded, rect), rtol=1e-14)


def test_empty_rectangle():
    ii = build_integrals(np.ones((4, 4)), 0)
    assert rect_sums(ii, (1, 2, 3, 1)) == (0.0, 0.0, 0.0)


def test_single_pixel_rectangle_reproduces_products():
    img = np.zeros((5, 6))
    img[3, 4] = 2.5
    ii = build_integrals(img, 0)
    assert rect_sums(ii, (3, 4, 3, 4)) == (2.5, 4 * 2.5, 3 * 2.5)


def test_out_of_bounds_rectangle():
    ii = build_integrals(np.ones((4, 4)), 1)
    with pytest.raises(IndexError):
        rect_sums(ii, (0, 0, 6, 6))
    with pytest.raises(IndexError):
        rect_sums(ii, (-1, 0, 2, 2))


def test_summed_area_zero_border():
    t = summed_area(np.ones((3, 4)))
    assert t.shape == (4, 5)
    assert t[0].sum() == 0 and t[:, 0].sum() == 0 and t[-1, -1] == 12


def test_local_J_constant_and_ramp():
    ii = build_integrals(np.full((9, 9), 4.0), 1)
    np.testing.assert_allclose(gb2_local_J(ii, (4, 4), 1), 0.0, atol=1e-12)
    ramp = np.tile(np.arange(9.0), (9, 1))
    ii = build_integrals(ramp, 1)
    np.testing.assert_allclose(gb2_local_J(ii, (4, 4), 1, planar_alpha(1)), [[1.0], [0.0]], atol=1e-12)


def test_local_J_equals_gb1_J():
    rng = np.random.default_rng(2)
    layers = rng.random((3, 15, 17))
    r = 3
    ii = build_integrals(layers, r)
    J1 = gb1_jacobians(layers, GbConfig(radius=r, epsilon=r * np.sqrt(2)))
    for x, y in [(0, 0), (8, 7), (16, 14), (2, 11)]:
        np.testing.assert_allclose(gb2_local_J(ii, (x, y), r), J1[:, :, y, x].T, atol=1e-9)


@pytest.mark.parametrize("r", [1, 2, 4, 7])
def test_gb2_equals_gb1_when_projection_inactive(r):
    rng = np.random.default_rng(r)
    layers = rng.random((2, 40, 33)) * 3.0
    cfg = GbConfig(radius=r, epsilon=r * np.sqrt(2))
    a = gb1_detect(layers, cfg)
    b = gb2_detect(layers, cfg)
    span = layers.max() - layers.min()
    assert np.abs(a.strength - b.strength).max() <= 1e-9 * span
    ok = ~a.degenerate
    assert angle_diff(a.theta, b.theta)[ok].max() <= 1e-6


def test_gb2_vectorised_equals_pointwise():
    rng = np.random.default_rng(4)
    layers = rng.random((2, 10, 12))
    jac = gb2_jacobians(layers, 2)
    ii = build_integrals(layers, 2)
    np.testing.assert_allclose(jac[:, :, 6, 3].T, gb2_local_J(ii, (3, 6), 2), atol=1e-12)


def test_gb2_constant_stack():
    out = gb2_detect(np.full((2, 12, 12), 7.0), GbConfig(radius=3))
    np.testing.assert_allclose(out.strength, 0.0, atol=1e-9)


def test_gb2_rejects_gaussian():
    with pytest.raises(ValueError):
        gb2_detect(np.zeros((5, 5)), GbConfig(radius=1, gaussian=True))


def test_integral_precision_large_image():
    # 4096^2 with values in [0, 1]: window sums stay accurate in double
    rng = np.random.default_rng(9)
    img = rng.random((4096, 4096))
    ii = build_integrals(img, 0)
    for y0, x0 in [(4000, 4000), (2048, 17), (0, 4090)]:
        rect = (y0, x0, y0 + 5, x0 + 5)
        want = direct_sums(img, rect)
        got = rect_sums(ii, rect)
        np.testing.assert_allclose(got, want, rtol=1e-6)


def test_multiscale_single_radius_is_gb2():
    rng = np.random.default_rng(6)
    img = rng.random((20, 20))
    a = multiscale_detect(img, [3], [1.0])
    b = gb2_detect(img, GbConfig(radius=3))
    np.testing.assert_array_equal(a.strength, b.strength)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_multiscale_repeated_radius_is_gb2():
    rng = np.random.default_rng(7)
    img = rng.random((20, 20))
    a = multiscale_detect(img, [3, 3], [0.5, 0.5])
    b = gb2_detect(img, GbConfig(radius=3))
    np.testing.assert_allclose(a.strength, b.strength, rtol=1e-15)
    np.testing.assert_array_equal(a.theta, b.theta)


def test_multiscale_keeps_step_ridge():
    img = np.zeros((32, 32))
    img[:, 16:] = 1.0
    peaks = []
    for radii in ([2], [4], [2, 4]):
        s = multiscale_detect(img, radii).strength[16]
        peaks.append(set(np.flatnonzero(np.isclose(s, s.max()))))
    assert peaks[0] == peaks[1] == peaks[2] == {15, 16}


def test_multiscale_orientation_from_strongest_scale():
    rng = np.random.default_rng(8)
    img = rng.random((24, 24))
    out = multiscale_detect(img, [1, 4], [0.3, 0.7])
    small = gb2_detect(img, GbConfig(radius=1))
    large = gb2_detect(img, GbConfig(radius=4))
    expect = np.where(large.strength > small.strength, large.theta, small.theta)
    np.testing.assert_array_equal(out.theta, expect)
    np.testing.assert_allclose(out.strength, 0.3 * small.strength + 0.7 * large.strength)


def test_multiscale_errors():
    with pytest.raises(ValueError):
        multiscale_detect(np.zeros((5, 5)), [])
    with pytest.raises(ValueError):
        multiscale_detect(np.zeros((5, 5)), [1, 2], [1.0, -1.0])


def test_default_radii():
    assert default_radii(4) == [2, 4, 8]
    assert default_radii(1) == [1, 2]
