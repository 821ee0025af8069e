import math

import mpmath as mp
import numpy as np
import pytest

from conftest import random_stable_matrix
from dqlinear.linsys import (FlowSolution, InputError, IntegrationError, LinearSystem,
                             RangeError, StepControl, classical_trajectory, fundamental_matrix,
                             reduced_lorentz_coefficients)


def _eig_oracle(A, t):
    w, V = np.linalg.eig(A)
    return (V @ np.diag(np.exp(w * t)) @ np.linalg.inv(V)).real


@pytest.mark.parametrize("method", ["expm", "DOP853", "RK45"])
def test_constant_flow_against_eigendecomposition(method):
    rng = np.random.default_rng(0)
    A = random_stable_matrix(rng, 4)
    sys_ = LinearSystem.constant(A)
    flow = fundamental_matrix(sys_, 3.0, StepControl(method=method, rtol=1e-11, atol=1e-13))
    tol = 1e-12 if method == "expm" else 1e-7
    for t in (0.0, 0.37, 1.5, 3.0):
        np.testing.assert_allclose(flow.gamma(t), _eig_oracle(A, t), atol=tol)
        np.testing.assert_allclose(flow.lam(t) @ flow.gamma(t), np.eye(4), atol=1e-9)


def test_forcing_particular_solution():
    A = np.array([[-0.2, 1.0], [-1.0, -0.2]])
    J = np.array([0.5, -0.3])
    flow = fundamental_matrix(LinearSystem.constant(A, J), 4.0)
    for t in (0.5, 4.0):
        want = np.linalg.solve(A, (_eig_oracle(A, t) - np.eye(2)) @ J)
        np.testing.assert_allclose(flow.particular(t), want, atol=1e-12)
    x0 = np.array([1.0, 2.0])
    np.testing.assert_allclose(classical_trajectory(flow, x0, 0.0), x0)


def test_time_dependent_against_closed_form():
    # x' = exp(-a t) p, p' = -w^2 exp(a t) x  <=>  x'' + a x' + w^2 x = 0
    a, w = 0.3, 1.2
    sys_ = LinearSystem.time_dependent(
        2, lambda t: np.array([[0.0, math.exp(-a * t)], [-w * w * math.exp(a * t), 0.0]]))
    flow = fundamental_matrix(sys_, 6.0)
    nu = math.sqrt(w * w - a * a / 4)
    for t in (1.0, 6.0):
        # x(0) = 1, x'(0) = 0
        x = math.exp(-a * t / 2) * (math.cos(nu * t) + a / (2 * nu) * math.sin(nu * t))
        assert abs(flow.gamma(t)[0, 0] - x) < 1e-9


def test_rk4_converges_at_fourth_order():
    A = np.array([[0.0, 1.0], [-1.0, -0.1]])
    sys_ = LinearSystem.time_dependent(2, lambda t: A)
    errs = []
    for h in (0.1, 0.05, 0.025):
        flow = fundamental_matrix(sys_, 2.0, StepControl(method="rk4", step=h))
        errs.append(np.max(np.abs(flow.gamma(2.0) - _eig_oracle(A, 2.0))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(orders - 4) < 0.3)


def test_range_and_input_errors():
    flow = fundamental_matrix(LinearSystem.constant(np.zeros((2, 2))), 1.0)
    with pytest.raises(RangeError):
        flow.gamma(1.5)
    with pytest.raises(InputError):
        LinearSystem.constant(np.zeros((3, 3)))
    with pytest.raises(InputError):
        LinearSystem.constant([[np.inf, 0], [0, 0]])
    with pytest.raises(InputError):
        fundamental_matrix(LinearSystem.constant(np.zeros((2, 2))), -1.0)
    with pytest.raises(InputError):
        StepControl(method="rk4")


def test_non_finite_generator_during_integration():
    sys_ = LinearSystem.time_dependent(
        2, lambda t: np.eye(2) if t < 0.5 else np.full((2, 2), np.nan))
    with pytest.raises(InputError):
        fundamental_matrix(sys_, 1.0)


def test_integration_error_carries_time():
    err = IntegrationError("step size underflow", 0.75)
    assert err.time == 0.75 and "0.75" in str(err)


def test_zero_horizon():
    flow = fundamental_matrix(LinearSystem.constant(np.eye(2)), 0.0)
    assert flow.t_grid.tolist() == [0.0]
    np.testing.assert_array_equal(flow.gamma(0.0), np.eye(2))


def test_flow_json_roundtrip():
    A = np.array([[0.0, 1.0], [-1.0, -0.1]])
    flow = fundamental_matrix(LinearSystem.constant(A), 2.0, StepControl(samples=401))
    back = FlowSolution.from_json(flow.to_json())
    np.testing.assert_allclose(back.Gamma, flow.Gamma)
    np.testing.assert_allclose(back.gamma(1.2345), flow.gamma(1.2345), atol=1e-8)


def _closed_form_coefficients(e, H):
    mp.mp.dps = 50
    e, H = mp.mpf(e), mp.mpf(H)
    r = mp.sqrt(9 + 64 * e ** 6 * H ** 2)
    A = (6 - mp.sqrt(6) * mp.sqrt(3 + r)) / (8 * e ** 2)
    B = e * H * mp.sqrt(6) / mp.sqrt(3 + r)
    return float(A), float(B)


@pytest.mark.parametrize("e,H", [(0.1, 1.0), (0.5, 1.0), (1.0, 2.0), (1e-3, 1.0), (0.3, -2.0)])
def test_reduced_lorentz_against_high_precision(e, H):
    A, B = reduced_lorentz_coefficients(e, H)
    Ao, Bo = _closed_form_coefficients(e, H)
    assert abs(A - Ao) <= 1e-13 * abs(Ao)
    assert abs(B - Bo) <= 1e-14 * abs(Bo)


def test_reduced_lorentz_limits():
    assert reduced_lorentz_coefficients(0.0, 1.0) == (0.0, 0.0)
    A, B = reduced_lorentz_coefficients(1e-3, 1.0)
    assert A < 0 and abs(B - 1e-3) < 1e-12
    # leading small-charge behaviour A ~ -(2/3) e^4 H^2
    assert abs(A / (-(2 / 3) * 1e-12) - 1) < 1e-6
    with pytest.raises(InputError):
        reduced_lorentz_coefficients(float("nan"), 1.0)
