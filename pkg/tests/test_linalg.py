import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from anisolag import linalg
from anisolag.errors import DimensionError, InputError, NonConvergenceError

from conftest import random_matrix

C41 = np.array([[1.0, 0.0], [1.0, 0.0]])
C41_PINV = np.array([[0.5, 0.5], [0.0, 0.0]])

small = arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
               elements=st.floats(-10, 10, allow_nan=False).map(lambda v: 0.0 if abs(v) < 1e-100 else v))


def test_svd_examples():
    assert np.allclose(linalg.svd(np.eye(2))[1], [1, 1])
    assert np.allclose(linalg.svd(np.zeros((2, 3)))[1], [0, 0])
    assert np.allclose(linalg.svd(C41)[1], [np.sqrt(2), 0], atol=1e-15)


@given(small)
def test_svd_reconstructs(a):
    u, s, v = linalg.svd(a)
    m, n = a.shape
    sig = np.zeros((m, n))
    sig[: len(s), : len(s)] = np.diag(s)
    assert np.linalg.norm(u @ sig @ v.T - a) <= 1e-10 * max(1.0, np.linalg.norm(a))
    assert np.allclose(u.T @ u, np.eye(m), atol=1e-10)
    assert np.allclose(v.T @ v, np.eye(n), atol=1e-10)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)


def test_overflowing_pinv_is_rejected():
    with pytest.raises(InputError, match="overflows"):
        linalg.pinv_svd(np.array([[2.0 ** -1070]]))


def test_rejects_bad_input():
    with pytest.raises(InputError):
        linalg.svd(np.array([[np.nan]]))
    with pytest.raises(DimensionError):
        linalg.pinv_svd(np.zeros((17, 2)))
    with pytest.raises(InputError):
        linalg.pinv_svd(np.eye(2), rank_tol=0.0)


def test_pinv_examples():
    assert np.array_equal(linalg.pinv_svd(np.eye(2)), np.eye(2))
    assert np.allclose(linalg.pinv_svd(C41), C41_PINV, atol=1e-15)
    a = random_matrix(np.random.default_rng(1), 4, 6, 2)
    p = linalg.pinv_svd(a)
    assert np.linalg.norm(p - linalg.pinv_limit(a)) <= 1e-6 * np.linalg.norm(p)


def test_pinv_limit_examples():
    assert np.allclose(linalg.pinv_limit(np.eye(2), h_schedule=[10.0**k for k in range(1, 20)], depth=1),
                       np.eye(2), atol=1e-9)
    assert np.allclose(linalg.pinv_limit(C41), C41_PINV, atol=1e-9)
    assert np.allclose(linalg.pinv_limit(np.diag([2.0, 1.0, 0.0])), np.diag([0.5, 1.0, 0.0]), atol=1e-9)


def test_pinv_limit_exhausted_schedule():
    with pytest.raises(NonConvergenceError) as info:
        linalg.pinv_limit(np.diag([1e-3, 1.0]), h_schedule=[4.0, 16.0, 64.0], depth=1)
    assert len(info.value.last_iterates) == 2


def test_pinv_limit_penrose_within_ten_stop_tol(corpus):
    for a in corpus[:200]:
        p = linalg.pinv_limit(a)
        rep = linalg.verify_penrose(a, p, 10 * linalg.DEFAULT_STOP_TOL)
        assert rep.ok, rep.to_dict()


def test_verify_penrose_examples():
    rep = linalg.verify_penrose(np.eye(2), np.eye(2))
    assert rep.ok and rep.residuals == (0.0, 0.0, 0.0, 0.0)
    assert linalg.verify_penrose(C41, C41_PINV).ok
    c = np.diag([2.0, 0.0])
    rep = linalg.verify_penrose(c, c.T)
    assert rep.passed == (False, False, True, True)
    # PAP - P = diag(8, 0) - diag(2, 0)
    assert rep.residuals[0] == pytest.approx(6.0)
    with pytest.raises(DimensionError):
        linalg.verify_penrose(np.eye(2), np.eye(3))


def test_penrose_corpus(corpus):
    for a in corpus:
        p = linalg.pinv_svd(a)
        assert linalg.verify_penrose(a, p, 1e-10).ok
        assert np.linalg.norm(p - linalg.pinv_limit(a)) <= 1e-6 * max(1.0, np.linalg.norm(p))


def test_penrose_float_corpus(float_corpus):
    for a in float_corpus:
        assert linalg.verify_penrose(a, linalg.pinv_svd(a), 1e-10).ok


@given(st.integers(0, 10_000), st.floats(1e-6, 1e-2))
def test_uniqueness(seed, delta):
    rng = np.random.default_rng(seed)
    m, n = rng.integers(1, 5, size=2)
    a = random_matrix(rng, int(m), int(n), int(rng.integers(1, min(m, n) + 1)))
    p = linalg.pinv_svd(a)
    q = p + delta * rng.standard_normal(p.shape)
    if linalg.verify_penrose(a, q, 1e-12).ok:
        assert np.linalg.norm(q - p) <= 1e-8
    assert not linalg.verify_penrose(a, q, 1e-12).ok


def test_point_algebra_example41():
    pa = linalg.point_algebra(C41)
    assert pa.rank == 1
    assert abs(abs(pa.n_basis.vectors[0] @ [0, 1]) - 1) < 1e-12
    assert abs(abs(pa.range_basis.vectors[0] @ (np.array([1, 1]) / np.sqrt(2))) - 1) < 1e-12
    assert np.allclose(pa.projector_v, [[1, 0], [0, 0]], atol=1e-12)
    xi_n, xi_v = linalg.split(pa, [3.0, -2.0])
    assert np.allclose(xi_v, [3, 0]) and np.allclose(xi_n, [0, -2])


def test_point_algebra_identity_and_zero():
    pa = linalg.point_algebra(np.eye(3))
    assert pa.n_basis.dim == 0 and pa.v_basis.dim == 3
    assert np.allclose(pa.projector_v, np.eye(3))
    xi_n, xi_v = linalg.split(pa, [1.0, 2.0, 3.0])
    assert np.allclose(xi_v, [1, 2, 3]) and np.allclose(xi_n, 0)
    z = linalg.point_algebra(np.zeros((2, 3)))
    xi_n, xi_v = linalg.split(z, [1.0, 2.0, 3.0])
    assert np.allclose(xi_n, [1, 2, 3]) and np.allclose(xi_v, 0)


def test_point_algebra_corpus(corpus):
    for k, a in enumerate(corpus):
        pa = linalg.point_algebra(a, seed=k)
        n = a.shape[1]
        assert pa.n_basis.dim + pa.v_basis.dim == n
        assert pa.rank == pa.v_basis.dim == pa.range_basis.dim
        for b in (pa.n_basis, pa.v_basis, pa.range_basis, pa.range_perp_basis):
            assert b.is_orthonormal()
        assert np.linalg.norm(pa.projector_v @ pa.projector_v - pa.projector_v) <= 1e-10


@given(small, arrays(np.float64, 5, elements=st.floats(-100, 100, allow_nan=False)))
def test_split_property(a, xi):
    pa = linalg.point_algebra(a)
    xi = xi[: a.shape[1]]
    xi_n, xi_v = linalg.split(pa, xi)
    scale = 1.0 + np.linalg.norm(xi)
    assert np.linalg.norm(xi_n + xi_v - xi) <= 1e-10 * scale
    assert np.linalg.norm(a @ xi_n) <= 1e-9 * scale * (1 + np.linalg.norm(a))
    assert pa.v_basis.contains(xi_v, 1e-10 * scale)


def test_subspace_angle():
    b1 = linalg.SubspaceBasis(2, np.array([[1.0, 0.0]]))
    b2 = linalg.SubspaceBasis(2, np.array([[0.0, 1.0]]))
    assert linalg.subspace_angle(b1, b1) == pytest.approx(0.0, abs=1e-15)
    assert linalg.subspace_angle(b1, b2) == pytest.approx(np.pi / 2)


def test_matrix_json_round_trip():
    a = np.arange(6.0).reshape(2, 3)
    obj = linalg.matrix_to_json(a)
    assert obj == {"rows": 2, "cols": 3, "entries": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]}
    assert np.array_equal(linalg.matrix_from_json(obj), a)
    with pytest.raises(InputError):
        linalg.matrix_from_json({"rows": 2, "cols": 2, "entries": [1.0]})


def test_stacked_pinv_matches_single():
    rng = np.random.default_rng(3)
    stack = np.stack([random_matrix(rng, 3, 4, r) for r in (0, 1, 2, 3)])
    out = linalg.pinv_svd(stack)
    for a, p in zip(stack, out):
        assert np.allclose(p, linalg.pinv_svd(a), atol=1e-14)
