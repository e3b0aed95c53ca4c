"""Compiled kernels vs the numpy fallback, and set-semantics guarantees."""

import numpy as np
import pytest

from divr import _kernels
from divr._kernels import _numpy_impl as npk

HAVE_COMPILED = _kernels.BACKEND == "cython"

if HAVE_COMPILED:
    from divr._kernels import _core as cyk

    impls = pytest.mark.parametrize("impl", [npk, cyk], ids=["numpy", "cython"])
else:  # pragma: no cover - compiled module should exist in CI
    impls = pytest.mark.parametrize("impl", [npk], ids=["numpy"])


@impls
def test_fps_basic(impl):
    xyz = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [10, 10, 10]], dtype=float)
    idx = impl.farthest_point_sample(xyz, 2)
    # starts at the lexicographic minimum, then the farthest point
    assert idx[0] == 0
    assert idx[1] == 3


@impls
def test_fps_bounds(impl):
    xyz = np.zeros((4, 3))
    with pytest.raises(ValueError):
        impl.farthest_point_sample(xyz, 5)
    with pytest.raises(ValueError):
        impl.farthest_point_sample(xyz, 0)


@impls
def test_ball_group_membership(impl):
    xyz = np.array([[0, 0, 0], [0.1, 0, 0], [5, 5, 5]], dtype=float)
    idx, counts = impl.ball_group(xyz, xyz[:1], 0.5, 4)
    assert counts[0] == 2
    assert set(idx[0][:2]) == {0, 1}
    assert (idx[0][2:] == -1).all()


@impls
def test_ball_group_cap_keeps_nearest(impl):
    xyz = np.array([[0, 0, 0], [0.3, 0, 0], [0.2, 0, 0], [0.1, 0, 0]], dtype=float)
    idx, counts = impl.ball_group(xyz, xyz[:1], 1.0, 2)
    assert counts[0] == 2
    assert list(idx[0]) == [0, 3]  # itself, then the closest


@impls
def test_ecc_forward_mean_and_isolated(impl):
    h = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    w = np.stack([np.eye(2), 2 * np.eye(2)])
    src = np.array([0, 1], dtype=np.int64)
    dst = np.array([2, 2], dtype=np.int64)
    out, counts = impl.ecc_forward(h, w, src, dst, 3)
    assert counts.tolist() == [0, 0, 2]
    np.testing.assert_allclose(out[2], (h[0] + 2 * h[1]) / 2)
    np.testing.assert_allclose(out[:2], 0)


def test_backends_agree():
    if not HAVE_COMPILED:
        pytest.skip("compiled kernels unavailable")
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(8, 60))
        xyz = rng.normal(size=(n, 3))
        k = int(rng.integers(1, n + 1))
        i1 = npk.farthest_point_sample(xyz, k)
        i2 = cyk.farthest_point_sample(xyz, k)
        assert np.array_equal(i1, i2)
        cen = xyz[i1[: min(k, 5)]]
        g1, c1 = npk.ball_group(xyz, cen, 0.9, 6)
        g2, c2 = cyk.ball_group(xyz, cen, 0.9, 6)
        assert np.array_equal(g1, g2)
        assert np.array_equal(c1, c2)

        e = int(rng.integers(0, 40))
        h = rng.normal(size=(n, 5))
        w = rng.normal(size=(e, 4, 5))
        src = rng.integers(0, n, e)
        dst = rng.integers(0, n, e)
        o1, ct1 = npk.ecc_forward(h, w, src, dst, n)
        o2, ct2 = cyk.ecc_forward(h, w, src, dst, n)
        np.testing.assert_allclose(o1, o2, rtol=1e-12, atol=1e-13)
        assert np.array_equal(ct1, ct2)
        g = rng.normal(size=(n, 4))
        gh1, gw1 = npk.ecc_backward(g, h, w, src, dst, ct1)
        gh2, gw2 = cyk.ecc_backward(g, h, w, src, dst, ct2)
        np.testing.assert_allclose(gh1, gh2, rtol=1e-12, atol=1e-13)
        np.testing.assert_allclose(gw1, gw2, rtol=1e-12, atol=1e-13)


@impls
def test_selection_is_permutation_invariant(impl):
    rng = np.random.default_rng(3)
    for _ in range(10):
        xyz = rng.normal(size=(40, 3))
        perm = rng.permutation(40)
        i1 = impl.farthest_point_sample(xyz, 12)
        i2 = impl.farthest_point_sample(xyz[perm], 12)
        assert np.array_equal(xyz[i1], xyz[perm][i2])

        cen = xyz[i1]
        g1, c1 = impl.ball_group(xyz, cen, 0.8, 5)
        g2, c2 = impl.ball_group(xyz[perm], cen, 0.8, 5)
        assert np.array_equal(c1, c2)
        v1 = np.where(g1[..., None] >= 0, xyz[np.maximum(g1, 0)], 0.0)
        v2 = np.where(g2[..., None] >= 0, xyz[perm][np.maximum(g2, 0)], 0.0)
        assert np.array_equal(v1, v2)


@impls
def test_duplicate_points_select_same_values(impl):
    rng = np.random.default_rng(5)
    xyz = rng.normal(size=(20, 3))
    doubled = np.vstack([xyz, xyz])
    i1 = impl.farthest_point_sample(xyz, 6)
    i2 = impl.farthest_point_sample(doubled, 6)
    assert np.array_equal(xyz[i1], doubled[i2])
