import math

import numpy as np
import pytest

from conftest import random_stable_matrix
from dqlinear.linsys import InputError, LinearSystem, StepControl, classical_trajectory, fundamental_matrix
from dqlinear.models import build_damped_oscillator, build_magnetic_charge
from dqlinear.symbols import coordinate, poisson_bracket
from dqlinear.symplectic import (PseudoHamiltonianData, SymplecticStructure, canonical_omega0,
                                 evaluate_action, first_variation, hamiltonian_coefficients,
                                 liouville_density, omega_at)


def _structure(model, t_max=5.0, samples=51):
    flow = fundamental_matrix(model.system, t_max, StepControl(samples=samples))
    return SymplecticStructure(model.omega0, flow)


def test_canonical_orientation():
    Om = canonical_omega0(4)
    Pi = np.linalg.inv(Om)
    x, p = coordinate(4, 0), coordinate(4, 1)
    assert poisson_bracket(x, p, Pi).poly == {(0, 0, 0, 0): 1.0}
    with pytest.raises(InputError):
        canonical_omega0(3)


@pytest.mark.parametrize("bad", [np.eye(2), np.zeros((2, 2)), np.ones((4, 4))])
def test_seed_validation(bad):
    flow = fundamental_matrix(LinearSystem.constant(np.zeros((2, 2))), 1.0)
    with pytest.raises(InputError):
        SymplecticStructure(bad, flow)


def test_damped_oscillator_form_grows_exponentially():
    alpha, omega = 0.1, 1.3
    ss = _structure(build_damped_oscillator(omega, alpha))
    for t in (0.0, 1.7, 5.0):
        np.testing.assert_allclose(ss.omega(t), math.exp(2 * alpha * t) * canonical_omega0(2),
                                   rtol=1e-12, atol=1e-14)
        assert abs(ss.delta(t) - math.exp(2 * alpha * t)) < 1e-12 * math.exp(2 * alpha * t)


def test_oscillator_hamiltonian_coefficients():
    alpha, omega = 0.1, 1.3
    s = math.sqrt(1 - (alpha / omega) ** 2)
    model = build_damped_oscillator(omega, alpha)
    ss = _structure(model)
    for t in (0.0, 2.0, 5.0):
        smp = hamiltonian_coefficients(ss, model.system, t)
        want = s * np.diag([omega ** 2, 1.0]) * math.exp(2 * alpha * t)
        np.testing.assert_allclose(smp.B, want, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(smp.C, 0.0)


def test_canonical_variant_hamiltonian():
    alpha, omega = 0.2, 1.0
    model = build_damped_oscillator(omega, alpha, variant="canonical")
    ss = _structure(model)
    data = PseudoHamiltonianData(ss)
    for t in (0.0, 3.0):
        np.testing.assert_allclose(ss.omega(t), canonical_omega0(2), atol=1e-9)
        np.testing.assert_allclose(data.B(t), np.diag([omega ** 2 * math.exp(alpha * t),
                                                       math.exp(-alpha * t)]), atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_structure_equation_random_systems(seed):
    rng = np.random.default_rng(seed)
    dim = 4 if seed % 2 else 6
    A = random_stable_matrix(rng, dim)
    J = rng.normal(size=dim)
    flow = fundamental_matrix(LinearSystem.constant(A, J), 2.0)
    X = rng.normal(size=(dim, dim))
    ss = SymplecticStructure(X - X.T, flow)
    data = PseudoHamiltonianData(ss)
    t, h = 1.0, 1e-3
    fd = (ss.omega(t - 2 * h) - 8 * ss.omega(t - h) + 8 * ss.omega(t + h) - ss.omega(t + 2 * h)) / (12 * h)
    scale = np.max(np.abs(ss.omega_dot(t)))
    assert np.max(np.abs(fd - ss.omega_dot(t))) < 1e-9 * max(1.0, scale)
    # the first-order variational problem reproduces the generator
    Pi = ss.pi(t)
    np.testing.assert_allclose(Pi @ (data.B(t) - 0.5 * ss.omega_dot(t)), A, atol=1e-9)
    np.testing.assert_allclose(Pi @ data.C(t), J, atol=1e-9)
    np.testing.assert_allclose(Pi @ ss.omega(t), np.eye(dim), atol=1e-9)
    np.testing.assert_allclose(data.B(t), data.B(t).T)


def test_liouville_density_rate():
    # d ln Delta / dt = tr(Pi Omega') / 2 = -tr A
    rng = np.random.default_rng(4)
    A = random_stable_matrix(rng, 4)
    ss = SymplecticStructure(canonical_omega0(4), fundamental_matrix(LinearSystem.constant(A), 2.0))
    t, h = 1.0, 1e-4
    rate = (math.log(ss.delta(t + h)) - math.log(ss.delta(t - h))) / (2 * h)
    assert abs(rate - 0.5 * np.trace(ss.pi(t) @ ss.omega_dot(t))) < 1e-7
    assert abs(rate + np.trace(A)) < 1e-7
    assert liouville_density(ss, t) == ss.delta(t)
    np.testing.assert_array_equal(omega_at(ss, t), ss.omega(t))


def test_poisson_tensor_transport():
    model = build_magnetic_charge(0.5, 1.0)
    ss = _structure(model)
    G = ss.flow.gamma(2.0)
    np.testing.assert_allclose(ss.pi(2.0), G @ ss.pi0 @ G.T, atol=1e-13)


def _oscillator_path(alpha, omega, T, N):
    model = build_damped_oscillator(omega, alpha)
    flow = fundamental_matrix(model.system, T)
    ts = np.linspace(0, T, N)
    return model, flow, ts, np.array([classical_trajectory(flow, [1.0, 0.5], t) for t in ts])


def test_action_differs_from_textbook_form_by_boundary_term():
    alpha, omega, T = 0.1, 1.0, 5.0
    s = math.sqrt(1 - (alpha / omega) ** 2)
    errs = []
    for N in (401, 801):
        model, flow, ts, path = _oscillator_path(alpha, omega, T, N)
        ss = SymplecticStructure(model.omega0, flow)
        S = evaluate_action(path, ts, ss, PseudoHamiltonianData(ss))
        x, p = path[:, 0], path[:, 1]
        xd = np.gradient(x, ts, edge_order=2)
        lag = (p * xd - 0.5 * s * (p ** 2 + omega ** 2 * x ** 2) + alpha * p * x) * np.exp(2 * alpha * ts)
        S_text = np.trapezoid(lag, ts)
        boundary = 0.5 * (np.exp(2 * alpha * T) * p[-1] * x[-1] - p[0] * x[0])
        errs.append(abs(S - (S_text - boundary)))
    assert errs[1] < 1e-5 and errs[0] / errs[1] > 3


def test_first_variation_vanishes_at_second_order():
    for model in (build_damped_oscillator(1.0, 0.1), build_magnetic_charge(0.5, 1.0)):
        flow = fundamental_matrix(model.system, 10.0)
        ss = SymplecticStructure(model.omega0, flow)
        data = PseudoHamiltonianData(ss)
        x0 = np.linspace(0.5, 1.0, model.dim)
        vals = []
        for N in (201, 401, 801):
            ts = np.linspace(0, 10.0, N)
            path = np.array([classical_trajectory(flow, x0, t) for t in ts])
            vals.append(abs(first_variation(path, ts, ss, data)))
        ratios = np.array(vals[:-1]) / np.array(vals[1:])
        assert np.all(np.abs(ratios - 4) < 0.2)
        # a path that does not solve the equations has an O(1) variation
        bent = path + np.outer(np.sin(np.pi * ts / 10.0) ** 2, np.ones(model.dim))
        assert abs(first_variation(bent, ts, ss, data)) > 1e3 * vals[-1]


def test_action_input_checks():
    model = build_damped_oscillator(1.0, 0.0)
    ss = _structure(model)
    data = PseudoHamiltonianData(ss)
    with pytest.raises(ValueError):
        evaluate_action(np.zeros((2, 2)), [0.0, 1.0], ss, data)
    with pytest.raises(ValueError):
        evaluate_action(np.zeros((3, 2)), [0.0, 0.1, 1.0], ss, data)
