import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from sqfit.errors import DegeneratePoint
from sqfit.rotation import euler_to_matrix, euler_to_matrix_derivatives, matrix_to_euler, wrap_angles
from sqfit.sq_core import (
    SuperquadricParams, implicit_value, radial_distance, radial_distance_gradient,
    sample_surface_grid, sq_to_world, surface_point, world_to_sq,
)

from conftest import random_sq

angles = st.floats(-np.pi, np.pi, allow_nan=False)
shape = st.floats(0.1, 1.9)
size = st.floats(0.1, 5.0)


def test_surface_point_examples():
    sq = SuperquadricParams()
    assert np.allclose(surface_point(sq, 0.0, 0.0), [1, 0, 0])
    sq = SuperquadricParams(a=(1, 2, 3))
    assert np.allclose(surface_point(sq, 0.0, np.pi / 2), [0, 2, 0], atol=1e-12)
    sq = SuperquadricParams(eps=(0.5, 0.5))
    t = surface_point(sq, np.pi / 4, np.pi / 4)
    assert abs(implicit_value(sq, t) - 1.0) < 1e-9


def test_implicit_value_unit_sphere(unit_sphere):
    assert implicit_value(unit_sphere, [1, 0, 0]) == pytest.approx(1.0)
    assert implicit_value(unit_sphere, [2, 0, 0]) == pytest.approx(4.0)
    assert implicit_value(unit_sphere, [0, 0, 0]) == 0.0


def test_implicit_quadric_reduction(rng):
    for _ in range(20):
        sq = random_sq(rng).replace(eps=(1.0, 1.0))
        t = rng.normal(size=(50, 3))
        expected = np.sum((t / sq.a) ** 2, axis=1)
        np.testing.assert_allclose(implicit_value(sq, t), expected, rtol=1e-14, atol=0)


@given(size, size, size, shape, shape, st.floats(0.1, 10.0),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_implicit_scale_homogeneity(ax, ay, az, e1, e2, k, t):
    sq = SuperquadricParams(a=(ax, ay, az), eps=(e1, e2))
    scaled = sq.replace(a=np.array([ax, ay, az]) * k)
    f0 = implicit_value(sq, np.array(t))
    f1 = implicit_value(scaled, np.array(t) * k)
    assert f1 == pytest.approx(f0, rel=1e-9, abs=1e-300)


def test_radial_distance_examples(unit_sphere):
    assert radial_distance(unit_sphere, [2, 0, 0]) == pytest.approx(-1.0)
    assert radial_distance(unit_sphere, [0.5, 0, 0]) == pytest.approx(0.5)
    with pytest.raises(DegeneratePoint):
        radial_distance(unit_sphere, [0, 0, 0])


def test_surface_identity_bulk():
    # 1e4 random (xi, eta, omega) draws
    rng = np.random.default_rng(7)
    worst_f = worst_g = 0.0
    for _ in range(100):
        sq = random_sq(rng)
        eta = rng.uniform(-np.pi / 2, np.pi / 2, 100)
        om = rng.uniform(-np.pi, np.pi, 100)
        t = surface_point(sq, eta, om)
        worst_f = max(worst_f, np.abs(implicit_value(sq, t) - 1).max())
        worst_g = max(worst_g, np.abs(radial_distance(sq, t)).max())
    assert worst_f < 1e-9
    assert worst_g < 1e-9


@settings(max_examples=200)
@given(size, size, size, shape, shape, st.floats(-np.pi / 2, np.pi / 2), angles)
def test_surface_identity_property(ax, ay, az, e1, e2, eta, om):
    sq = SuperquadricParams(a=(ax, ay, az), eps=(e1, e2))
    t = surface_point(sq, eta, om)
    assert abs(implicit_value(sq, t) - 1.0) < 1e-9


@settings(max_examples=200)
@given(size, size, size, shape, shape, st.lists(st.floats(-10, 10), min_size=3, max_size=3))
def test_sign_classification(ax, ay, az, e1, e2, t):
    sq = SuperquadricParams(a=(ax, ay, az), eps=(e1, e2))
    t = np.array(t)
    if np.linalg.norm(t) < 1e-6:
        return
    f = implicit_value(sq, t)
    g = radial_distance(sq, t)
    if abs(g) > 1e-9 and f > 1e-12:
        assert (f < 1.0) == (g > 0.0)


def test_euler_convention_matches_scipy(rng):
    for _ in range(50):
        r = rng.uniform(-np.pi, np.pi, 3)
        oracle = Rotation.from_euler("ZYX", [r[2], r[1], r[0]]).as_matrix()
        assert np.allclose(euler_to_matrix(r), oracle, atol=1e-14)


def test_euler_round_trip(rng):
    for _ in range(50):
        r = rng.uniform(-np.pi, np.pi, 3)
        r[1] = rng.uniform(-1.5, 1.5)
        assert np.allclose(euler_to_matrix(matrix_to_euler(euler_to_matrix(r))), euler_to_matrix(r),
                           atol=1e-12)
    # gimbal lock still reproduces the matrix
    R = euler_to_matrix([0.3, np.pi / 2, -1.1])
    assert np.allclose(euler_to_matrix(matrix_to_euler(R)), R, atol=1e-12)


def test_euler_derivatives_fd(rng):
    r = rng.uniform(-np.pi, np.pi, 3)
    d = euler_to_matrix_derivatives(r)
    for k in range(3):
        h = np.zeros(3)
        h[k] = 1e-6
        fd = (euler_to_matrix(r + h) - euler_to_matrix(r - h)) / 2e-6
        assert np.allclose(d[k], fd, atol=1e-9)


def test_wrap_angles():
    w = wrap_angles([np.pi, -np.pi, 3 * np.pi, 0.5])
    assert np.allclose(w, [np.pi, np.pi, np.pi, 0.5])


def test_world_to_sq_examples():
    sq = SuperquadricParams()
    t = np.array([0.3, -1.0, 2.0])
    assert np.allclose(world_to_sq(sq, t), t)
    sq = SuperquadricParams(p=(1, 2, 3))
    assert np.allclose(world_to_sq(sq, [1, 2, 3]), 0)
    sq = SuperquadricParams(r=(0, 0, np.pi / 2))
    local = world_to_sq(sq, [1, 0, 0])
    # yaw of +90 deg maps the body y axis onto world x
    assert np.allclose(local, [0, -1, 0], atol=1e-15)
    assert np.allclose(sq_to_world(sq, local), [1, 0, 0], atol=1e-15)


def test_world_round_trip(rng):
    for _ in range(20):
        sq = random_sq(rng)
        t = rng.normal(size=(10, 3)) * 5
        assert np.abs(sq_to_world(sq, world_to_sq(sq, t)) - t).max() < 1e-12


def test_sample_surface_grid_examples(rng):
    sq = random_sq(rng)
    pts = sample_surface_grid(sq, 2, 3)
    assert pts.shape == (6, 3)
    assert np.abs(radial_distance(sq, world_to_sq(sq, pts))).max() < 1e-9
    pts = sample_surface_grid(SuperquadricParams(), 16, 16)
    assert np.allclose(np.linalg.norm(pts, axis=1), 1.0)
    pts = sample_surface_grid(SuperquadricParams(p=(5, 0, 0)), 16, 16)
    assert np.allclose(np.linalg.norm(pts - [5, 0, 0], axis=1), 1.0)
    with pytest.raises(ValueError):
        sample_surface_grid(sq, 1, 3)


def _fd_gradient(sq, w, h=1e-6):
    x0 = np.concatenate([sq.to_vector(), w])
    out = np.empty(14)
    for j in range(14):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        vals = []
        for x in (xp, xm):
            s = SuperquadricParams.from_vector(x[:11])
            vals.append(radial_distance(s, world_to_sq(s, x[11:])))
        out[j] = (vals[0] - vals[1]) / (2 * h)
    return out


def test_gradient_unit_sphere_example(unit_sphere):
    g, d_xi, d_w = radial_distance_gradient(unit_sphere, [2.0, 0, 0])
    assert g[0] == pytest.approx(-1.0)
    assert d_xi[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert np.allclose(d_xi[0, 8:], 0.0, atol=1e-12)
    # oracle
    assert np.allclose(np.concatenate([d_xi[0], d_w[0]]), _fd_gradient(unit_sphere, np.array([2.0, 0, 0])),
                       atol=1e-8)


def test_gradient_sphere_rotation_invariant(rng):
    sq = SuperquadricParams(a=(1.5, 1.5, 1.5), r=rng.uniform(-3, 3, 3))
    _, d_xi, _ = radial_distance_gradient(sq, rng.normal(size=(20, 3)) * 3)
    assert np.abs(d_xi[:, 8:]).max() < 1e-12


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(99)
    n = 0
    while n < 100:
        sq = random_sq(rng, a=(0.5, 3.0), eps=(0.3, 1.9))
        u = rng.normal(size=3)
        u /= np.linalg.norm(u)
        f_target = 10 ** rng.uniform(-1, 1)
        t = u * (f_target / implicit_value(sq, u)) ** (sq.eps[0] / 2)
        if not 0.2 <= np.linalg.norm(t) <= 10:
            continue
        w = sq_to_world(sq, t)
        _, d_xi, d_w = radial_distance_gradient(sq, w[None])
        analytic = np.concatenate([d_xi[0], d_w[0]])
        fd = _fd_gradient(sq, w)
        assert np.linalg.norm(analytic - fd) / np.linalg.norm(fd) < 1e-5
        n += 1


def test_gradient_vectorized_matches_pointwise(rng):
    sq = random_sq(rng)
    w = sq.p + rng.normal(size=(8, 3)) * 2
    g, d_xi, d_w = radial_distance_gradient(sq, w)
    for i in range(8):
        gi, dxi, dwi = radial_distance_gradient(sq, w[i])
        assert np.allclose(g[i], gi[0]) and np.allclose(d_xi[i], dxi[0]) and np.allclose(d_w[i], dwi[0])


def test_params_vector_round_trip(rng):
    sq = random_sq(rng)
    assert np.array_equal(SuperquadricParams.from_vector(sq.to_vector()).to_vector(), sq.to_vector())
    assert SuperquadricParams.from_dict(sq.to_dict()).to_dict() == sq.to_dict()
    assert sq.is_valid()
    assert not sq.replace(eps=(2.0, 1.0)).is_valid()
    assert not sq.replace(a=(0.05, 1, 1)).is_valid()
