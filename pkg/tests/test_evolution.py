import math

import numpy as np
import pytest

from conftest import random_gauss_poly, random_polynomial, random_stable_matrix
from dqlinear.evolution import (EvolvedState, ExpectationSeries, angular_momentum_series,
                                attractor_moments, density_at, expectation_series,
                                expectation_value, extended_time_derivative, hamiltonian_family,
                                normalization_check, observable_along_flow, pair_with_test_function,
                                quantum_liouville_residual, renormalized, second_moments,
                                trace_of_state, transported_decomposition)
from dqlinear.linsys import InputError, LinearSystem, RangeError, fundamental_matrix
from dqlinear.models import build_damped_oscillator, build_magnetic_charge, magnetic_energy_coefficient
from dqlinear.states import (MagneticStateSpec, OscillatorSpec, magnetic_eigenstate,
                             oscillator_eigenstate)
from dqlinear.symbols import moyal_star, poisson_bracket, symbol_distance
from dqlinear.symplectic import PseudoHamiltonianData, SymplecticStructure, canonical_omega0


def _oscillator_run(n=1, alpha=0.1, t_max=10.0, omega0=None):
    model = build_damped_oscillator(1.0, alpha)
    flow = fundamental_matrix(model.system, t_max)
    ss = SymplecticStructure(model.omega0 if omega0 is None else omega0, flow)
    rho0 = renormalized(oscillator_eigenstate(OscillatorSpec(1.0, 1.0, n)), ss, 1.0)
    return model, flow, ss, EvolvedState(rho0, flow)


def _magnetic_run(e=0.5, n=1, l=1, t_max=20.0):
    model = build_magnetic_charge(e)
    flow = fundamental_matrix(model.system, t_max)
    ss = SymplecticStructure(model.omega0, flow)
    rho0 = magnetic_eigenstate(MagneticStateSpec(model.parameters["B"], 1.0, n, l))
    return model, flow, ss, EvolvedState(rho0, flow)


def test_transport_is_pullback():
    model, flow, ss, state = _oscillator_run()
    pts = np.random.default_rng(0).normal(size=(5, 2))
    Lam = flow.lam(3.0)
    np.testing.assert_allclose(state.at(3.0)(pts), state.rho0(pts @ Lam.T), rtol=1e-12)
    assert state(3.0) is state.at(3.0)


def test_frames_agree():
    model, flow, ss, state = _oscillator_run(n=2)
    for t in (0.0, 2.5, 7.0):
        a = expectation_value(model.observables["H"], state, t, ss, 1.0, frame="current")
        b = expectation_value(model.observables["H"], state, t, ss, 1.0, frame="initial")
        assert abs(a - b) < 1e-10 * abs(b)
    with pytest.raises(ValueError):
        expectation_value(model.observables["H"], state, 1.0, ss, 1.0, frame="sideways")


def test_energy_decay_matches_classical_covariance():
    model, flow, ss, state = _oscillator_run(n=2)
    S0, tot = second_moments(density_at(state, ss, 1.0, 0.0))
    assert abs(tot - 1) < 1e-12
    Bm = np.diag([1.0, 1.0])
    for t in np.linspace(0, 10, 6):
        G = flow.gamma(t)
        classical = 0.5 * np.trace(Bm @ G @ S0 @ G.T)
        quantum = expectation_value(model.observables["H"], state, t, ss, 1.0)
        pw = expectation_value(model.observables["H"], state, t, ss, 1.0, pointwise=True)
        assert abs(quantum - classical) < 1e-10 * classical
        assert abs(quantum - pw) < 1e-10 * classical
        assert abs(quantum - 2.5 * math.exp(-0.2 * t)) < 1e-3 * classical


def test_trace_and_idempotency_persist():
    model, flow, ss, state = _oscillator_run(n=1)
    for t in (0.0, 3.0, 9.0):
        assert abs(trace_of_state(state, t, ss, 1.0) - 1) < 1e-10
        assert abs(normalization_check(state.at(t), ss, t) / (2 * math.pi) - 1) < 1e-10
        rho = state.at(t)
        sq = moyal_star(rho, rho, ss.pi(t), 1.0)
        assert symbol_distance(sq, rho) < 1e-10 * max(1, rho.max_abs_coeff())
    assert abs(np.linalg.det(flow.gamma(9.0))) < math.exp(-1.7)


@pytest.mark.parametrize("omega0", ["negated", "scaled", "random"])
def test_seed_independence(omega0):
    rng = np.random.default_rng(11)
    if omega0 == "negated":
        Om = -canonical_omega0(2)
    elif omega0 == "scaled":
        Om = 3 * canonical_omega0(2)
    else:
        Om = rng.normal() * canonical_omega0(2) + 0.0
    ref = _oscillator_run(n=2)
    alt = _oscillator_run(n=2, omega0=Om)
    H = ref[0].observables["H"]
    times = np.linspace(0, 10, 11)
    a = expectation_series(H, ref[3], ref[2], 1.0, times)
    b = expectation_series(H, alt[3], alt[2], 1.0, times)
    np.testing.assert_allclose(b.values, a.values, rtol=1e-9, atol=1e-12)


def test_magnetic_means_and_energy():
    model, flow, ss, state = _magnetic_run()
    A = model.parameters["A"]
    E = state_E = model.parameters["B"] * 1.5
    for t in (0.0, 5.0, 20.0):
        for name in ("x", "p", "y", "q"):
            assert abs(expectation_value(model.observables[name], state, t, ss, 1.0)) < 1e-10
        h = expectation_value(model.observables["H"], state, t, ss, 1.0)
        assert abs(h - math.exp(2 * A * t) * state_E) < 1e-8 * E


def test_reflection_symmetric_means_vanish():
    model, flow, ss, state = _magnetic_run()
    for name in ("K", "N", "D", "T"):
        assert abs(expectation_value(model.observables[name], state, 0.0, ss, 1.0)) < 1e-12


def test_angular_momentum_decomposition():
    model, flow, ss, state = _magnetic_run()
    obs = model.observables
    basis = [obs[k] for k in ("L", "H", "D", "T")]
    coef, resid = transported_decomposition(obs["L"], basis, flow, 10.0)
    assert resid < 1e-12 and abs(coef[0] - 1) < 1e-12
    # the pair K, N does not close the expansion
    _, resid_kn = transported_decomposition(obs["L"], [obs[k] for k in ("L", "H", "K", "N")], flow, 10.0)
    assert resid_kn > 1e-3
    series = angular_momentum_series(state, ss, 1.0, [10.0], obs["L"])
    E, M = model.parameters["B"] * 1.5, 0.0
    predicted = coef[0] * M + coef[1] * E
    assert abs(series.values[0] - predicted) < 1e-9


def test_angular_momentum_closed_form():
    model, flow, ss, state = _magnetic_run(t_max=400.0)
    A, B = model.parameters["A"], model.parameters["B"]
    obs = model.observables
    E, M = B * 1.5, 0.0
    for t in (0.0, 1.0, 30.0, 400.0):
        coef, _ = transported_decomposition(obs["L"], [obs[k] for k in ("L", "H", "D", "T")], flow, t)
        a = magnetic_energy_coefficient(A, B, t)
        assert abs(coef[1] - a) < 1e-12 * max(1, abs(a))
        L = expectation_value(obs["L"], state, t, ss, 1.0)
        assert abs(L - (M + a * E)) < 1e-10
    # frictionless limit of the long-time value
    assert abs(magnetic_energy_coefficient(-1e-9, 1.0, 1e12) - 1.0) < 1e-12


def test_angular_momentum_needs_four_dims():
    model, flow, ss, state = _oscillator_run()
    with pytest.raises(InputError):
        angular_momentum_series(state, ss, 1.0, [0.0], model.observables["H"])


def test_liouville_residual_second_order():
    model, flow, ss, state = _oscillator_run(n=1)
    Hf = hamiltonian_family(PseudoHamiltonianData(ss))
    res = [quantum_liouville_residual(state, Hf, 4.0, ss, 1.0, h=h) for h in (1e-2, 5e-3, 2.5e-3)]
    assert 3.5 < res[0] / res[1] < 4.5 and 3.5 < res[1] / res[2] < 4.5
    frozen = quantum_liouville_residual(lambda s: state.at(0.0), Hf, 4.0, ss, 1.0, h=2.5e-3)
    assert frozen > 1e3 * res[-1]


def test_extended_derivative_forms_agree():
    rng = np.random.default_rng(5)
    A = random_stable_matrix(rng, 4)
    flow = fundamental_matrix(LinearSystem.constant(A), 3.0)
    ss = SymplecticStructure(canonical_omega0(4), flow)
    F0, F1 = random_gauss_poly(rng, 4, 2), random_polynomial(rng, 4, 2)
    fam = lambda s: F0 + F0 * F1 * s
    a = extended_time_derivative(fam, 1.0, ss, 1.0, "bracket")
    b = extended_time_derivative(fam, 1.0, ss, 1.0, "star")
    assert symbol_distance(a, b) < 1e-12 * max(1, a.max_abs_coeff())
    with pytest.raises(RangeError):
        extended_time_derivative(fam, 0.0, ss, 1.0)
    with pytest.raises(ValueError):
        extended_time_derivative(fam, 1.0, ss, 1.0, "other")


def test_extended_derivative_leibniz():
    rng = np.random.default_rng(8)
    A = random_stable_matrix(rng, 2)
    ss = SymplecticStructure(canonical_omega0(2), fundamental_matrix(LinearSystem.constant(A), 3.0))
    F0, F1 = random_polynomial(rng, 2, 3), random_polynomial(rng, 2, 2)
    G0, G1 = random_polynomial(rng, 2, 3), random_polynomial(rng, 2, 2)
    F = lambda s: F0 + F1 * math.sin(s)
    G = lambda s: G0 + G1 * s ** 2
    t = 1.2
    res = []
    for h in (1e-2, 5e-3):
        D = lambda fam: extended_time_derivative(fam, t, ss, 1.0, h=h)
        star = lambda s: moyal_star(F(s), G(s), ss.pi(s), 1.0)
        lhs = D(star)
        rhs = moyal_star(D(F), G(t), ss.pi(t), 1.0) + moyal_star(F(t), D(G), ss.pi(t), 1.0)
        br = lambda s: poisson_bracket(F(s), G(s), ss.pi(s))
        lhs2 = D(br)
        rhs2 = poisson_bracket(D(F), G(t), ss.pi(t)) + poisson_bracket(F(t), D(G), ss.pi(t))
        res.append((symbol_distance(lhs, rhs), symbol_distance(lhs2, rhs2)))
    for k in range(2):
        assert res[1][k] < res[0][k] / 3
    assert res[1][0] < 1e-3 and res[1][1] < 1e-3


def test_attractor_concentrates():
    model, flow, ss, state = _oscillator_run(n=0, t_max=100.0)
    mom = attractor_moments(state, ss, 1.0, [0.0, 50.0, 100.0])
    assert mom.stable
    np.testing.assert_allclose(mom.integrals, 1.0, atol=1e-10)
    assert np.max(np.abs(mom.second_moments[-1])) < 1e-6 * np.max(np.abs(mom.second_moments[0]))
    f = lambda x: np.cos(x[:, 0]) * np.exp(-x[:, 1] ** 2)
    assert abs(pair_with_test_function(f, state, ss, 1.0, 100.0, extent=6, points=121) - 1) < 1e-6


def test_frictionless_flow_is_not_attractor():
    model = build_damped_oscillator(1.0, 0.0)
    flow = fundamental_matrix(model.system, 10.0)
    ss = SymplecticStructure(model.omega0, flow)
    state = EvolvedState(oscillator_eigenstate(OscillatorSpec(1.0, 1.0, 0)), flow)
    mom = attractor_moments(state, ss, 1.0, [0.0, 10.0])
    assert not mom.stable
    np.testing.assert_allclose(mom.second_moments[0], mom.second_moments[1], atol=1e-9)


def test_observable_along_flow_with_forcing():
    A = np.array([[-0.1, 1.0], [-1.0, -0.1]])
    flow = fundamental_matrix(LinearSystem.constant(A, [0.3, -0.2]), 5.0)
    from dqlinear.symbols import coordinate
    x = coordinate(2, 0)
    pulled = observable_along_flow(x, flow, 2.0)
    xi = np.array([[0.4, -1.2]])
    G, v = flow.gamma_v(2.0)
    assert abs(pulled(xi)[0] - (G @ xi[0] + v)[0]) < 1e-12


def test_series_container():
    s = ExpectationSeries([0.0, 1.0, 2.0], np.exp(-0.5 * np.arange(3)), "H")
    assert abs(s.fit_rate() + 0.5) < 1e-12
    assert s.to_csv().splitlines()[0] == "t,re,im"
    assert s.to_csv().splitlines()[2] == "1,0.60653065971263342,0"
    assert s.to_dict()["observable"] == "H"
    with pytest.raises(ValueError):
        ExpectationSeries([0.0, 0.0], [1, 1], "H")
    with pytest.raises(ValueError):
        ExpectationSeries([0.0], [1, 2], "H")
    with pytest.raises(ValueError):
        ExpectationSeries([0.0], [1], "H").fit_rate()


def test_state_dimension_checked():
    flow = fundamental_matrix(LinearSystem.constant(np.zeros((4, 4))), 1.0)
    with pytest.raises(InputError):
        EvolvedState(oscillator_eigenstate(OscillatorSpec()), flow)
