import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpspec.sl2 import (
    AngleBoundCertificate,
    TransferMatrix,
    angle_between,
    angle_distortion_bounds,
    largest_singular_value,
    log_spectral_radius,
    spectral_radius,
    step_matrix,
    transfer_product,
)

finite = st.floats(min_value=-10, max_value=10, allow_nan=False)


def entries(M):
    return np.array(M.matrix())


def test_step_matrix_free():
    M = step_matrix(0.0, 0.0)
    assert entries(M).tolist() == [[0.0, -1.0], [1.0, 0.0]]


def test_step_matrix_shifted():
    M = step_matrix(3.0, 1.0)
    assert entries(M).tolist() == [[2.0, -1.0], [1.0, 0.0]]


def test_step_matrix_rejects_nonfinite():
    with pytest.raises(ValueError):
        step_matrix(float("nan"), 0.0)
    with pytest.raises(ValueError):
        step_matrix(1.0, float("inf"))


@given(finite, finite)
@settings(max_examples=200)
def test_step_matrix_unimodular(E, v):
    assert step_matrix(E, v).det == 1.0


def test_transfer_product_free_two_steps():
    M = transfer_product(0.0, (0.0,), 2)
    assert np.allclose(entries(M), [[-1.0, 0.0], [0.0, -1.0]])


def test_transfer_product_single_factor_matches_step():
    f = (0.4, -1.2, 0.7)
    for k in range(5):
        M = transfer_product(1.3, f, 1, offset=k)
        S = step_matrix(1.3, f[k % 3])
        assert np.allclose(entries(M), entries(S))


def test_transfer_product_hand_example():
    # E=0, f=(0,1): S1 @ S0 multiplied by hand and by numpy independently
    M = transfer_product(0.0, (0.0, 1.0), 2)
    S0 = np.array([[0.0, -1.0], [1.0, 0.0]])
    S1 = np.array([[-1.0, -1.0], [1.0, 0.0]])
    assert np.allclose(entries(M), S1 @ S0)
    assert np.allclose(entries(M), [[-1.0, 1.0], [0.0, -1.0]])


def test_transfer_product_requires_positive_n():
    with pytest.raises(ValueError):
        transfer_product(0.0, (0.0,), 0)


@given(
    st.floats(min_value=-5, max_value=5),
    st.lists(st.floats(min_value=-3, max_value=3), min_size=1, max_size=6),
    st.integers(min_value=1, max_value=8),
    st.integers(min_value=1, max_value=8),
)
@settings(max_examples=60, deadline=None)
def test_cocycle_property(E, values, m, n):
    f = tuple(values)
    left = transfer_product(E, f, m + n)
    right = transfer_product(E, f, m, offset=n) @ transfer_product(E, f, n)
    assert np.allclose(entries(left), entries(right), rtol=1e-9, atol=1e-9)


def test_determinant_preserved_along_long_product():
    # elliptic energy: entries stay bounded, so the float determinant is
    # meaningful arbitrarily far along the product
    n = 100_000
    M = transfer_product(1.0, (0.0,), n)
    assert M.log_scale == 0.0
    assert abs(M.det - 1.0) <= 1e-9 * n


def test_determinant_drift_scales_with_norm():
    # hyperbolic energy: cancellation grows with the squared norm, the
    # drift stays at roundoff relative to that scale
    M = transfer_product(2.2, (0.4, -1.1), 40)
    norm_sq = math.exp(2 * M.log_frobenius_norm())
    assert abs(M.det - 1.0) <= 1e-12 * max(1.0, norm_sq)


def test_renormalization_keeps_entries_bounded():
    M = transfer_product(9.0, (0.0,), 200_000)
    assert max(abs(M.a), abs(M.b), abs(M.c), abs(M.d)) < 1e130
    assert M.log_scale > 0
    # growth rate survives the rescaling intact
    from lpspec.sl2 import log_spectral_radius

    expected = math.log((9 + math.sqrt(77)) / 2)
    assert log_spectral_radius(M) / 200_000 == pytest.approx(expected, rel=1e-9)


def test_spectral_radius_identity():
    assert spectral_radius(TransferMatrix.identity()) == 1.0


def test_spectral_radius_diagonal():
    M = TransferMatrix(2.0, 0.0, 0.0, 0.5)
    assert spectral_radius(M) == pytest.approx(2.0, abs=1e-14)


def test_spectral_radius_rotation():
    M = TransferMatrix(0.0, -1.0, 1.0, 0.0)
    assert spectral_radius(M) == 1.0


def test_spectral_radius_rejects_bad_determinant():
    with pytest.raises(ArithmeticError):
        spectral_radius(TransferMatrix(2.0, 0.0, 0.0, 2.0))


def test_spectral_radius_one_iff_small_trace():
    rng = np.random.default_rng(11)
    for _ in range(200):
        E, v = rng.uniform(-6, 6, 2)
        M = transfer_product(E, (v,), 1)
        rho = spectral_radius(M)
        assert rho >= 1.0
        if abs(M.trace) <= 2.0:
            assert rho == 1.0
        else:
            assert rho > 1.0


def test_log_spectral_radius_matches_plain():
    M = transfer_product(3.0, (0.0,), 1)
    assert log_spectral_radius(M) == pytest.approx(math.log(spectral_radius(M)), abs=1e-14)


def test_largest_singular_value_diagonal():
    assert largest_singular_value(TransferMatrix(3.0, 0.0, 0.0, 1.0 / 3.0)) == pytest.approx(3.0)


def test_angle_bounds_identity():
    cert = angle_distortion_bounds(TransferMatrix.identity())
    assert cert.mu1 == pytest.approx(1.0)
    assert cert.m_lower == pytest.approx(1.0 / 16.0)
    assert cert.m_upper == pytest.approx(16.0)


def test_angle_bounds_diagonal():
    cert = angle_distortion_bounds(TransferMatrix(3.0, 0.0, 0.0, 1.0 / 3.0))
    assert cert.mu1 == pytest.approx(3.0)
    assert cert.m_lower == pytest.approx(1.0 / 144.0)
    assert cert.m_upper == pytest.approx(144.0)


def test_angle_bound_certificate_invariants():
    cert = angle_distortion_bounds(TransferMatrix(2.0, 0.3, 0.1, 0.515))
    assert cert.mu1 >= 1.0
    assert cert.m_lower <= 1.0 <= cert.m_upper
    assert cert.m_lower * cert.m_upper == pytest.approx(1.0)
    with pytest.raises(ArithmeticError):
        angle_distortion_bounds(TransferMatrix(5.0, 0.0, 0.0, 5.0))
    with pytest.raises(ValueError):
        AngleBoundCertificate(mu1=0.5, m_lower=0.1, m_upper=10.0)


def test_angle_between_basics():
    assert angle_between((1, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert angle_between((1, 0), (-1, 0)) == pytest.approx(math.pi)
    with pytest.raises(ValueError):
        angle_between((0, 0), (1, 0))


def test_angle_distortion_sampled():
    rng = np.random.default_rng(5)
    for _ in range(500):
        th1, th2 = rng.uniform(0, 2 * math.pi, 2)
        t = rng.uniform(-2, 2)
        R1 = np.array([[math.cos(th1), -math.sin(th1)], [math.sin(th1), math.cos(th1)]])
        R2 = np.array([[math.cos(th2), -math.sin(th2)], [math.sin(th2), math.cos(th2)]])
        A = R1 @ np.diag([math.exp(t), math.exp(-t)]) @ R2
        M = TransferMatrix(A[0, 0], A[0, 1], A[1, 0], A[1, 1])
        cert = angle_distortion_bounds(M)
        u = rng.normal(size=2)
        v = rng.normal(size=2)
        theta = angle_between(u, v)
        if theta < 1e-9:
            continue
        theta_image = angle_between(A @ u, A @ v)
        assert cert.admits(theta, theta_image)
