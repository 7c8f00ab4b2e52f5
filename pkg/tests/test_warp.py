import numpy as np
import pytest

from affinepred.affine import (
    AffineHead,
    affine_matrix,
    base_grid,
    displacement_pixels,
    dump_motion,
    grid_generate,
    normalize,
    unnormalize,
)
from affinepred.kernels import FILTER_LENGTH, TAP_ANCHOR, ASFHead, FilterBank, outer_kernel
from affinepred.tensor import ShapeError, Tensor
from affinepred.warp import bilinear_sample, mclc, mclc_shifted

import oracles


def identity_theta(b, h, w):
    t = np.zeros((b, 3, h, w))
    t[:, 0] = 1.0
    return t


def delta_filters(b, h, w):
    f = np.zeros((b, FILTER_LENGTH, h, w))
    f[:, TAP_ANCHOR] = 1.0
    return f


def test_coordinate_round_trip():
    for w in (1, 7, 64, 152):
        n = np.arange(w)
        np.testing.assert_array_equal(unnormalize(normalize(n, w), w), n)
    assert normalize(0, 4) == pytest.approx(-0.75)
    assert unnormalize(-1.0, 8) == pytest.approx(-0.5)


def test_base_grid_centres():
    g = base_grid(2, 4)
    np.testing.assert_allclose(g[0, 0], [-0.75, -0.25, 0.25, 0.75])
    np.testing.assert_allclose(g[1, :, 0], [-0.5, 0.5])


def test_grid_generate_identity_and_translation():
    h, w = 6, 8
    t = identity_theta(1, h, w)
    s = grid_generate(Tensor(t)).data
    np.testing.assert_array_equal(s[0], base_grid(h, w))
    t[:, 1] = 2.0 / w  # one pixel right
    d = displacement_pixels(grid_generate(Tensor(t)).data)
    np.testing.assert_allclose(d[0, 0], 1.0)
    np.testing.assert_allclose(d[0, 1], 0.0, atol=1e-12)


def test_grid_generate_matches_matrix_form():
    rng = np.random.default_rng(0)
    t = rng.uniform(-1, 1, (1, 3, 3, 4))
    s = grid_generate(Tensor(t)).data
    g = base_grid(3, 4)
    for y in range(3):
        for x in range(4):
            a = affine_matrix(t[0, :, y, x])
            np.testing.assert_allclose(s[0, :, y, x], a @ [g[0, y, x], g[1, y, x], 1.0])


def test_identity_warp_is_exact():
    rng = np.random.default_rng(1)
    b, h, w = 2, 16, 24
    p = rng.random((b, 3, h, w))
    s = grid_generate(Tensor(identity_theta(b, h, w)))
    f = Tensor(delta_filters(b, h, w))
    v = mclc(Tensor(p), outer_kernel(f, f), s).data
    assert np.array_equal(v, p)
    assert np.array_equal(bilinear_sample(Tensor(p), s).data, p)


def test_outer_kernel_layout():
    rng = np.random.default_rng(2)
    fh = rng.standard_normal((1, 8, 2, 3))
    fv = rng.standard_normal((1, 8, 2, 3))
    k = outer_kernel(Tensor(fh), Tensor(fv)).data
    assert k.shape == (1, 8, 8, 2, 3)
    assert k[0, 5, 2, 1, 1] == fv[0, 5, 1, 1] * fh[0, 2, 1, 1]
    with pytest.raises(ShapeError):
        outer_kernel(Tensor(fh), Tensor(fv[:, :4]))


def test_mclc_and_bilinear_match_loops():
    rng = np.random.default_rng(3)
    b, h, w = 1, 6, 7
    p = rng.random((b, 2, h, w))
    k = rng.standard_normal((b, 8, 8, h, w))
    s = rng.uniform(-1.3, 1.3, (b, 2, h, w))
    np.testing.assert_allclose(mclc(Tensor(p), Tensor(k), Tensor(s)).data, oracles.mclc(p, k, s), atol=1e-12)
    np.testing.assert_allclose(bilinear_sample(Tensor(p), Tensor(s)).data, oracles.bilinear_sample(p, s), atol=1e-12)
    np.testing.assert_allclose(mclc_shifted(p, k, s, 1, 0), oracles.mclc(p, k, s, shift_x=1), atol=1e-12)


def test_integer_shift_moves_content():
    rng = np.random.default_rng(4)
    p = rng.random((1, 1, 8, 8))
    t = identity_theta(1, 8, 8)
    t[:, 1] = 2 * 2.0 / 8  # read two pixels to the right
    out = bilinear_sample(Tensor(p), grid_generate(Tensor(t))).data
    np.testing.assert_allclose(out[0, 0, :, :6], p[0, 0, :, 2:])
    np.testing.assert_allclose(out[0, 0, :, 6:], p[0, 0, :, 7:8].repeat(2, axis=1))  # clamped


def test_warp_shape_checks():
    p = Tensor(np.ones((1, 3, 4, 4)))
    with pytest.raises(ShapeError):
        bilinear_sample(p, Tensor(np.zeros((1, 2, 4, 5))))
    with pytest.raises(ShapeError):
        mclc(p, Tensor(np.zeros((1, 8, 7, 4, 4))), Tensor(np.zeros((1, 2, 4, 4))))


def test_affine_head_starts_near_identity():
    rng = np.random.default_rng(5)
    head = AffineHead(4, rng, width=8)
    theta = head(Tensor(rng.standard_normal((1, 4, 8, 8)))).data
    np.testing.assert_allclose(theta[0, 0], 0.99)
    np.testing.assert_allclose(theta[0, 1:], 0.0)
    assert np.abs(AffineHead(4, rng, width=8, scale_init=None)(Tensor(np.ones((1, 4, 8, 8)))).data).max() < 1


def test_filter_heads_start_near_delta():
    rng = np.random.default_rng(6)
    bank = FilterBank(4, rng, width=8)
    out = bank(Tensor(rng.standard_normal((1, 4, 8, 8))))
    assert set(out) == set(FilterBank.KEYS)
    for f in out.values():
        assert np.abs(f.data[:, TAP_ANCHOR] - 1).mean() < 0.3
    with pytest.raises(ShapeError):
        ASFHead(4, rng, width=8)(Tensor(np.ones((1, 3, 8, 8))))


def test_dump_motion(tmp_path):
    t = identity_theta(1, 4, 4)
    t[:, 2] = 2.0 / 4
    dump_motion(tmp_path / "m.bin", grid_generate(Tensor(t)).data)
    raw = np.frombuffer((tmp_path / "m.bin").read_bytes(), "<f4").reshape(2, 4, 4)
    np.testing.assert_allclose(raw[0], 0, atol=1e-6)
    np.testing.assert_allclose(raw[1], 1, atol=1e-6)


def test_mclc_with_bilinear_kernel_equals_bilinear_sample():
    rng = np.random.default_rng(7)
    b, c, h, w = 2, 3, 9, 11
    p = rng.random((b, c, h, w))
    s = rng.uniform(-1.1, 1.1, (b, 2, h, w))
    n = oracles.to_pixels(s[:, 0], w)
    m = oracles.to_pixels(s[:, 1], h)
    ax, ay = n - np.floor(n), m - np.floor(m)
    k = np.zeros((b, FILTER_LENGTH, FILTER_LENGTH, h, w))
    a = TAP_ANCHOR
    k[:, a, a] = (1 - ay) * (1 - ax)
    k[:, a, a + 1] = (1 - ay) * ax
    k[:, a + 1, a] = ay * (1 - ax)
    k[:, a + 1, a + 1] = ay * ax
    v = mclc(Tensor(p), Tensor(k), Tensor(s)).data
    np.testing.assert_allclose(v, bilinear_sample(Tensor(p), Tensor(s)).data, atol=1e-10, rtol=0)


def test_constant_patch_is_fixed_by_bilinear_sample():
    s = np.random.default_rng(8).uniform(-1, 1, (1, 2, 5, 6))
    p = np.full((1, 2, 5, 6), 0.3)
    np.testing.assert_allclose(bilinear_sample(Tensor(p), Tensor(s)).data, p, atol=1e-15)
