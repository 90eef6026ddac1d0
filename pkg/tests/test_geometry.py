import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from seqgibbs.errors import DataError, NumericalError
from seqgibbs.geometry import (
    chart_forward,
    chart_inverse,
    check_frame,
    check_unit_vector,
    fix_column_signs,
    geodesic_distance,
    null_space_basis,
    procrustes_align,
    sequential_embed,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def unit(v):
    return v / np.linalg.norm(v)


def nonzero_vectors(p):
    return arrays(float, p, elements=finite).filter(lambda v: np.linalg.norm(v) > 1e-3)


def test_check_unit_vector():
    check_unit_vector(np.array([0.6, 0.8]))
    with pytest.raises(DataError):
        check_unit_vector(np.array([1.0, 1.0]))
    with pytest.raises(DataError):
        check_unit_vector(np.array([1.0]))


def test_check_frame_rejects_non_orthonormal():
    with pytest.raises(DataError):
        check_frame(np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(DataError):
        check_frame(np.ones((2, 3)))


def test_geodesic_distance_basic_values():
    e1, e2 = np.eye(2)
    assert geodesic_distance(e1, e2) == pytest.approx(np.pi / 2)
    assert geodesic_distance(e1, -e1) == pytest.approx(np.pi)
    assert geodesic_distance(e1, -e1, antipodal=True) == pytest.approx(0.0)
    assert geodesic_distance(e1, e1) == 0.0


def test_geodesic_distance_clips_rounding():
    u = unit(np.array([1.0, 1e-9, 0.0]))
    assert geodesic_distance(u, u * (1 + 1e-15)) == 0.0


def test_geodesic_distance_batched():
    U = np.eye(3)
    d = geodesic_distance(U, np.array([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(d, [0, np.pi / 2, np.pi / 2])


@given(nonzero_vectors(4), nonzero_vectors(4), nonzero_vectors(4))
def test_geodesic_distance_is_a_metric(a, b, c):
    a, b, c = unit(a), unit(b), unit(c)
    dab, dbc, dac = geodesic_distance(a, b), geodesic_distance(b, c), geodesic_distance(a, c)
    assert dab == pytest.approx(geodesic_distance(b, a))
    assert 0 <= dab <= np.pi
    assert dac <= dab + dbc + 1e-9


@given(nonzero_vectors(3), nonzero_vectors(3))
def test_antipodal_distance_ignores_sign(a, b):
    a, b = unit(a), unit(b)
    d = geodesic_distance(a, b, antipodal=True)
    assert d == pytest.approx(geodesic_distance(-a, b, antipodal=True))
    assert d <= np.pi / 2 + 1e-12
    assert d == pytest.approx(min(geodesic_distance(a, b), geodesic_distance(-a, b)), abs=1e-7)


@given(arrays(float, 4, elements=st.floats(-0.49, 0.49)))
def test_chart_round_trip(u):
    w = chart_inverse(u)
    assert np.linalg.norm(w) == pytest.approx(1.0)
    np.testing.assert_allclose(chart_forward(w), u)


def test_chart_domain_errors():
    with pytest.raises(DataError):
        chart_forward(np.array([-0.6, 0.8]))
    with pytest.raises(DataError):
        chart_forward(np.array([0.0, 1.0]))
    with pytest.raises(DataError):
        chart_inverse(np.array([0.8, 0.6]))


def test_fix_column_signs_largest_entry_positive():
    M = np.array([[0.1, -0.2], [-0.9, 0.2]])
    out = fix_column_signs(M)
    np.testing.assert_allclose(out, [[-0.1, 0.2], [0.9, -0.2]])


def test_null_space_basis_of_e1():
    N = null_space_basis(np.array([1.0, 0.0, 0.0]))
    assert N.shape == (3, 2)
    np.testing.assert_allclose(N.T @ N, np.eye(2), atol=1e-12)
    np.testing.assert_allclose(N[0], 0.0, atol=1e-12)


def test_null_space_basis_empty_frame_is_identity():
    np.testing.assert_array_equal(null_space_basis(np.zeros((4, 0))), np.eye(4))


def test_null_space_basis_full_frame_raises():
    with pytest.raises(DataError):
        null_space_basis(np.eye(3))


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1), st.integers(2, 7), st.data())
def test_null_space_completes_an_orthonormal_basis(seed, p, data):
    j = data.draw(st.integers(1, p - 1))
    V = np.linalg.qr(np.random.default_rng(seed).standard_normal((p, j)))[0]
    N = null_space_basis(V)
    Q = np.hstack([V, N])
    np.testing.assert_allclose(Q.T @ Q, np.eye(p), atol=1e-10)
    # deterministic: same input, same output
    np.testing.assert_array_equal(N, null_space_basis(V.copy()))


def test_null_space_basis_batched_matches_loop():
    rng = np.random.default_rng(3)
    V = np.linalg.qr(rng.standard_normal((5, 6, 2)))[0]
    N = null_space_basis(V)
    for i in range(5):
        np.testing.assert_allclose(N[i], null_space_basis(V[i]), atol=1e-12)


def test_procrustes_identity_and_rotation():
    rng = np.random.default_rng(0)
    V = np.linalg.qr(rng.standard_normal((6, 3)))[0]
    np.testing.assert_allclose(procrustes_align(V, V), V, atol=1e-12)
    R = np.linalg.qr(rng.standard_normal((3, 3)))[0]
    np.testing.assert_allclose(procrustes_align(V @ R, V), V, atol=1e-10)


def test_procrustes_resolves_sign_for_vectors():
    v = unit(np.array([1.0, 2.0, 2.0]))
    np.testing.assert_allclose(procrustes_align(-v, v), v)


def test_procrustes_rank_deficient_raises():
    S = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    T = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(NumericalError):
        procrustes_align(S, T)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_procrustes_never_increases_distance(seed):
    rng = np.random.default_rng(seed)
    S = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    T = np.linalg.qr(rng.standard_normal((5, 2)))[0]
    aligned = procrustes_align(S, T)
    assert np.linalg.norm(aligned - T) <= np.linalg.norm(S - T) + 1e-12
    np.testing.assert_allclose(aligned.T @ aligned, np.eye(2), atol=1e-10)


def test_sequential_embed_of_first_coordinates_gives_identity_columns():
    ws = [np.array([1.0, 0, 0, 0]), np.array([1.0, 0, 0]), np.array([1.0, 0])]
    V = sequential_embed(ws)
    assert V.shape == (4, 3)
    np.testing.assert_allclose(V.T @ V, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.abs(V[:3]), np.eye(3), atol=1e-12)


def test_sequential_embed_checks_dimensions():
    with pytest.raises(DataError):
        sequential_embed([np.ones(3) / np.sqrt(3), np.ones(3) / np.sqrt(3)])


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_sequential_embed_is_orthonormal(seed):
    rng = np.random.default_rng(seed)
    ws = [unit(rng.standard_normal(6 - j)) for j in range(4)]
    V = sequential_embed(ws)
    np.testing.assert_allclose(V.T @ V, np.eye(4), atol=1e-10)


def test_procrustes_batched_matches_loop():
    rng = np.random.default_rng(4)
    S = np.linalg.qr(rng.standard_normal((6, 5, 3)))[0]
    T = np.linalg.qr(rng.standard_normal((5, 3)))[0]
    out = procrustes_align(S, T)
    for i in range(6):
        np.testing.assert_allclose(out[i], procrustes_align(S[i], T), atol=1e-12)
