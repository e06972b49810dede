import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from partmatch import synthetic as SY
from partmatch.features import (FeatureError, FeatureSet, build_costs, fallback_descriptors,
                                hole_feature_assignment, laplace_spectrum, lift_to_triangles,
                                load_features, save_features)
from partmatch.mesh import extend
from partmatch.product import build_product_space
from partmatch.repair import close_holes


def test_load_ascii(tmp_path):
    w = np.arange(64, dtype=float).reshape(4, 16)
    save_features(FeatureSet(w), tmp_path / "f.txt")
    fs = load_features(tmp_path / "f.txt", 4)
    assert fs.d == 16
    np.testing.assert_array_equal(fs.descriptors, w)


def test_load_binary(tmp_path):
    w = np.random.default_rng(1).random((7, 3))
    save_features(FeatureSet(w), tmp_path / "f.bin", binary=True)
    np.testing.assert_array_equal(load_features(tmp_path / "f.bin", 7).descriptors, w)


def test_row_mismatch(tmp_path):
    save_features(FeatureSet(np.ones((5, 16))), tmp_path / "f.txt")
    with pytest.raises(FeatureError):
        load_features(tmp_path / "f.txt", 4)


def test_nan_rejected(tmp_path):
    (tmp_path / "f.txt").write_text("2 2\n1 2\nNaN 3\n")
    with pytest.raises(FeatureError):
        load_features(tmp_path / "f.txt")


@pytest.mark.parametrize("text", ["2 2\n1 2\n", "2 2\n1 2\n3\n", "x y\n", "2 2\n1 a\n3 4\n"])
def test_malformed(tmp_path, text):
    (tmp_path / "f.txt").write_text(text)
    with pytest.raises(FeatureError):
        load_features(tmp_path / "f.txt")


def test_hks_isometry_invariant():
    m = SY.bumpy_sphere(2, seed=4)
    a = fallback_descriptors(m, 8).descriptors
    b = fallback_descriptors(SY.random_rigid(m, 9), 8).descriptors
    np.testing.assert_allclose(a, b, atol=1e-6)


def test_hks_sphere_nearly_constant():
    w = fallback_descriptors(SY.icosphere(3), 8).descriptors
    dev = np.abs(w - w.mean(axis=0)).max(axis=0) / w.mean(axis=0)
    assert dev.max() < 0.05


def test_hks_errors():
    with pytest.raises(FeatureError):
        fallback_descriptors(SY.icosphere(1), 0)
    with pytest.raises(FeatureError):
        fallback_descriptors(SY.tetrahedron(), 4)
    with pytest.raises(FeatureError):
        fallback_descriptors(SY.icosphere(1), 8, time_samples=4)


def test_hks_unit_mean_and_time_bins():
    m = SY.bumpy_sphere(2, seed=0)
    w = fallback_descriptors(m, 4, time_samples=12).descriptors
    assert w.shape == (m.n_vertices, 4)
    np.testing.assert_allclose(w.mean(axis=0), 1.0)


def test_close_boundary_option():
    m, _ = SY.remove_cap(SY.bumpy_sphere(2, seed=0), (0, 0, 1), 0.7)
    w = fallback_descriptors(m, 6, close_boundary=True).descriptors
    closed, _ = close_holes(m)
    ref = fallback_descriptors(closed, 6).descriptors[:m.n_vertices]
    np.testing.assert_array_equal(w, ref)
    # closed input: the option changes nothing
    c = SY.icosphere(2)
    np.testing.assert_array_equal(fallback_descriptors(c, 6, close_boundary=True).descriptors,
                                  fallback_descriptors(c, 6).descriptors)


def test_spectrum_mass_orthonormal():
    from partmatch.mesh import mixed_voronoi_areas
    m = SY.bumpy_sphere(2, seed=3)
    vals, vecs = laplace_spectrum(m, 10)
    M = mixed_voronoi_areas(m)
    np.testing.assert_allclose(vecs.T @ (M[:, None] * vecs), np.eye(10), atol=1e-9)
    assert abs(vals[0]) < 1e-9 and np.all(np.diff(vals) >= -1e-12)


def test_lift_means():
    a, b, c = np.array([1.0, 0]), np.array([0, 2.0]), np.array([3.0, 3.0])
    m = SY.single_triangle()
    ext = extend(m)
    u = lift_to_triangles(FeatureSet(np.stack([a, b, c])), ext)
    np.testing.assert_allclose(u[ext.triangle_id(0)], (a + b + c) / 3)
    e = ext.edge_id(m.edge_id(0, 1))
    np.testing.assert_allclose(u[e], (a + b) / 2)
    np.testing.assert_allclose(u[ext.vertex_id(2)], c)
    with pytest.raises(FeatureError):
        lift_to_triangles(FeatureSet(np.ones((4, 2))), ext)


def test_lift_constant():
    ext = extend(SY.icosphere(1))
    u = lift_to_triangles(FeatureSet(np.full((ext.nv, 3), 2.5)), ext)
    assert np.all(u == 2.5)


def _tet_tri_costs(wx, wy):
    ex, ey = extend(SY.tetrahedron()), extend(SY.single_triangle())
    prod = build_product_space(ex, ey)
    ux = lift_to_triangles(FeatureSet(wx), ex)
    uy = lift_to_triangles(FeatureSet(wy), ey)
    return prod, ux, uy, build_costs(ux, uy, prod)


def test_costs_zero_and_unit():
    prod, ux, uy, c = _tet_tri_costs(np.zeros((4, 2)), np.zeros((3, 2)))
    assert np.all(c == 0)
    prod, ux, uy, c = _tet_tri_costs(np.tile([1.0, 0.0], (4, 1)), np.zeros((3, 2)))
    np.testing.assert_allclose(c, 1.0)


def test_costs_match_scalar_loop():
    rng = np.random.default_rng(0)
    prod, ux, uy, c = _tet_tri_costs(rng.random((4, 10)), rng.random((3, 10)))
    for j in range(prod.n_columns):
        d = ux[prod.x_ext[j]] - uy[prod.y_ext[j]]
        ref = 0.0
        for x in d:
            ref += x * x
        assert abs(c[j] - ref ** 0.5) <= 1e-12
    assert np.all(c >= 0)


def test_costs_dim_mismatch():
    prod = build_product_space(extend(SY.tetrahedron()), extend(SY.single_triangle()))
    with pytest.raises(FeatureError):
        build_costs(np.zeros((20, 2)), np.zeros((7, 3)), prod)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(-5, 5), st.integers(1, 6))
def test_costs_translation_invariant(seed, shift, d):
    rng = np.random.default_rng(seed)
    wx, wy = rng.random((4, d)), rng.random((3, d))
    off = rng.random(d) * shift
    _, _, _, c0 = _tet_tri_costs(wx, wy)
    _, _, _, c1 = _tet_tri_costs(wx + off, wy + off)
    np.testing.assert_allclose(c0, c1, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_costs_triangle_inequality(seed):
    rng = np.random.default_rng(seed)
    prod, ux, uy, c = _tet_tri_costs(rng.normal(size=(4, 3)), rng.normal(size=(3, 3)))
    cost = {(int(a), int(b)): v for a, b, v in zip(prod.x_ext, prod.y_ext, c)}
    for (k, l1), v1 in cost.items():
        for l2 in range(uy.shape[0]):
            if (k, l2) in cost:
                assert abs(v1 - cost[(k, l2)]) <= np.linalg.norm(uy[l1] - uy[l2]) + 1e-12


def test_hole_feature_assignment():
    m = SY.single_triangle()
    closed, log = close_holes(m)
    w = np.array([[1.0, 0], [0, 1.0], [2.0, 2.0]])
    out = hole_feature_assignment(FeatureSet(w), closed, log).descriptors
    np.testing.assert_allclose(out[3], w.mean(axis=0))
    np.testing.assert_array_equal(out[:3], w)


def test_hole_feature_identity_and_constant():
    m = SY.icosphere(1)
    closed, log = close_holes(m)
    w = np.random.default_rng(0).random((m.n_vertices, 3))
    np.testing.assert_array_equal(hole_feature_assignment(FeatureSet(w), closed, log).descriptors, w)
    open_, _ = SY.remove_cap(SY.icosphere(2), (0, 1, 0), 0.8)
    closed, log = close_holes(open_)
    out = hole_feature_assignment(FeatureSet(np.full((open_.n_vertices, 2), 4.0)), closed, log)
    np.testing.assert_allclose(out.descriptors, 4.0)


def test_hole_feature_bad_centroid():
    m = SY.single_triangle()
    closed, log = close_holes(m)
    log.closed_holes = [(3, 99)]
    with pytest.raises(FeatureError):
        hole_feature_assignment(FeatureSet(np.ones((4, 2))), closed, log)
