"""Time evolution of Wigner functions along a linear flow.

A state evolves by transport along the classical trajectories,
``rho(t, x) = rho0(Lambda(t) (x - v(t)))``; expectation values use the
time-dependent star product and trace. The evolution equation
``i hbar D_t rho + [rho, H]_t = 0`` is kept as an a-posteriori residual.
"""

from __future__ import annotations

import csv
import io
import threading
from dataclasses import dataclass, field
from math import pi
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import polynomial as poly
from .linsys import FlowSolution, InputError, RangeError
from .symbols import (GaussPolySymbol, affine_pullback, gaussian_moment, integrate,
                      moyal_star, pointwise_product, star_commutator, symbol_distance,
                      ComplexQuadraticForm, trace_at)
from .symplectic import PseudoHamiltonianData, SymplecticStructure

SymbolFamily = Callable[[float], GaussPolySymbol]


def evolve_state(rho0: GaussPolySymbol, flow: FlowSolution, t: float) -> GaussPolySymbol:
    """Transport ``rho0`` to time ``t``: ``x -> rho0(Lambda(t) (x - v(t)))``."""
    G, v = flow.gamma_v(t)
    Lam = np.linalg.solve(G, np.eye(flow.dim))
    return affine_pullback(rho0, Lam, v)


classical_transport = evolve_state


class EvolvedState:
    """Initial symbol plus flow; transported symbols are cached per time."""

    def __init__(self, rho0: GaussPolySymbol, flow: FlowSolution):
        if rho0.dim != flow.dim:
            raise InputError(f"state dimension {rho0.dim} does not match flow dimension {flow.dim}")
        self.rho0 = rho0
        self.flow = flow
        self._cache: Dict[float, GaussPolySymbol] = {}
        self._lock = threading.Lock()

    def at(self, t: float) -> GaussPolySymbol:
        t = float(t)
        with self._lock:
            hit = self._cache.get(t)
        if hit is not None:
            return hit
        rho = evolve_state(self.rho0, self.flow, t)
        with self._lock:
            return self._cache.setdefault(t, rho)

    __call__ = at


def renormalized(rho0: GaussPolySymbol, ss: SymplecticStructure, hbar: float) -> GaussPolySymbol:
    """``rho0`` rescaled so that its trace under ``ss`` at ``t = 0`` is one."""
    tr = trace_at(rho0, ss.delta(0.0), hbar)
    return rho0.with_poly(rho0.poly, rho0.c - np.log(complex(tr)))


# ---------------------------------------------------------------------------
# expectation values
# ---------------------------------------------------------------------------

def observable_along_flow(F: GaussPolySymbol, flow: FlowSolution, t: float) -> GaussPolySymbol:
    """``x -> F(Gamma(t) x + v(t))``."""
    G, v = flow.gamma_v(t)
    return affine_pullback(F, G, -np.linalg.solve(G, v))


def expectation_value(F: GaussPolySymbol, state: EvolvedState, t: float,
                      ss: SymplecticStructure, hbar: float, pointwise: bool = False,
                      frame: str = "auto") -> complex:
    """``Tr_t(F *_t rho(t))``; with ``pointwise=True`` the cheaper ``Tr_t(F rho(t))``.

    ``frame="current"`` evaluates at time ``t`` literally. Since transport
    maps ``*_t`` onto ``*_0`` and ``Tr_t`` onto ``Tr_0``, the same number is
    ``Tr_0((F o flow_t) *_0 rho0)``, which ``frame="initial"`` computes.
    Only the observable is transported there, so high-degree states do not
    suffer cancellation when ``Gamma(t)`` is ill conditioned; ``"auto"``
    therefore means ``"initial"``.
    """
    if frame == "auto":
        frame = "initial"
    if frame == "current":
        rho, G, Pi, Delta = state.at(t), F, ss.pi(t), ss.delta(t)
    elif frame == "initial":
        rho, G, Pi, Delta = state.rho0, observable_along_flow(F, state.flow, t), ss.pi0, ss.delta(0.0)
    else:
        raise ValueError(f"unknown frame {frame!r}")
    prod = pointwise_product(G, rho) if pointwise else moyal_star(G, rho, Pi, hbar)
    return trace_at(prod, Delta, hbar)


def trace_of_state(state: EvolvedState, t: float, ss: SymplecticStructure, hbar: float) -> complex:
    return trace_at(state.at(t), ss.delta(t), hbar)


@dataclass
class ExpectationSeries:
    times: np.ndarray
    values: np.ndarray
    observable_name: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=complex)
        if len(self.times) != len(self.values):
            raise ValueError("times and values differ in length")
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @property
    def max_imag(self) -> float:
        return float(np.max(np.abs(self.values.imag))) if len(self.values) else 0.0

    def fit_rate(self) -> float:
        """Least-squares slope of ``log |value|`` against time."""
        if len(self.times) < 2:
            raise ValueError("need at least two samples to fit a rate")
        return float(np.polyfit(self.times, np.log(np.abs(self.values)), 1)[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "re", "im"])
        for t, v in zip(self.times, self.values):
            w.writerow(["%.17g" % t, "%.17g" % v.real, "%.17g" % v.imag])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "observable": self.observable_name,
            "t": self.times.tolist(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
            "metadata": self.metadata,
        }


def expectation_series(F: GaussPolySymbol, state: EvolvedState, ss: SymplecticStructure,
                       hbar: float, times: Iterable[float], name: str = "F",
                       pointwise: bool = False, frame: str = "auto") -> ExpectationSeries:
    times = np.asarray(list(times), dtype=float)
    vals = [expectation_value(F, state, t, ss, hbar, pointwise, frame) for t in times]
    return ExpectationSeries(times, vals, name)


def angular_momentum_series(state: EvolvedState, ss: SymplecticStructure, hbar: float,
                            times: Iterable[float], L: GaussPolySymbol) -> ExpectationSeries:
    if state.flow.dim != 4:
        raise InputError("angular momentum series needs the 4-dimensional magnetic model")
    return expectation_series(L, state, ss, hbar, times, "L")


def quadratic_matrix(F: GaussPolySymbol) -> np.ndarray:
    """Symmetric ``Q`` with ``F = x.Q.x / 2`` plus lower-order terms dropped."""
    Q = np.zeros((F.dim, F.dim), dtype=complex)
    for k, v in F.normalized_poly().items():
        idx = [i for i, e in enumerate(k) for _ in range(e)]
        if len(idx) == 2:
            i, j = idx
            if i == j:
                Q[i, i] += 2 * v
            else:
                Q[i, j] += v
                Q[j, i] += v
    return Q.real if not np.any(Q.imag) else Q


def transported_decomposition(F: GaussPolySymbol, basis: Sequence[GaussPolySymbol],
                              flow: FlowSolution, t: float) -> Tuple[np.ndarray, float]:
    """Least-squares coefficients of ``F(Gamma(t) x)`` on quadratic ``basis``.

    Returns ``(coefficients, residual)`` with the residual the max-norm of the
    unexplained part of the quadratic form.
    """
    G = flow.gamma(t)
    target = G.T @ quadratic_matrix(F) @ G
    iu = np.triu_indices(F.dim)
    cols = np.array([quadratic_matrix(B)[iu] for B in basis]).T
    coef, *_ = np.linalg.lstsq(cols, target[iu], rcond=None)
    resid = float(np.max(np.abs(cols @ coef - target[iu])))
    return coef.real, resid


# ---------------------------------------------------------------------------
# time derivatives
# ---------------------------------------------------------------------------

def default_step(t: float) -> float:
    return np.finfo(float).eps ** (1.0 / 3.0) * max(1.0, abs(t))


def partial_t(family: SymbolFamily, t: float, h: Optional[float] = None,
              order: int = 2) -> GaussPolySymbol:
    """``d/dt`` of a symbol family by central differences of its parameters.

    Writing ``F = exp(-x.M.x/2 + b.x) P``, the derivative is
    ``exp(...) ((-x.M'.x/2 + b'.x) P + P')``. The exponents of the samples
    must share a common structure (same dimension, smooth in ``t``).
    """
    h = default_step(t) if h is None else h
    if order == 2:
        offs, wts = (-1, 1), (-0.5, 0.5)
    elif order == 4:
        offs, wts = (-2, -1, 1, 2), (1 / 12, -2 / 3, 2 / 3, -1 / 12)
    else:
        raise ValueError("order must be 2 or 4")
    F0 = family(t)
    samples = [family(t + o * h) for o in offs]
    dM = sum(w * s.M for w, s in zip(wts, samples)) / h
    db = sum(w * s.b for w, s in zip(wts, samples)) / h
    dP: poly.Poly = {}
    for w, s in zip(wts, samples):
        dP = poly.add(dP, s.normalized_poly(), w / h)
    dim = F0.dim
    q = {}
    for i in range(dim):
        for j in range(i, dim):
            coeff = -0.5 * dM[i, i] if i == j else -dM[i, j]
            if coeff != 0:
                k = [0] * dim
                k[i] += 1
                k[j] += 1
                q[tuple(k)] = q.get(tuple(k), 0) + coeff
    q = poly.add(q, poly.linear(db))
    terms = poly.add(poly.mul(q, F0.normalized_poly()), dP)
    return GaussPolySymbol(dim, F0.M, F0.b, 0.0, terms)


def _omega_dot_pi(ss: SymplecticStructure, t: float) -> np.ndarray:
    return ss.omega_dot(t) @ ss.pi(t)


def drift_correction(F: GaussPolySymbol, t: float, ss: SymplecticStructure) -> GaussPolySymbol:
    """``-1/2 x^i Omega'_ik {x^k, F}_t``."""
    W = _omega_dot_pi(ss, t)
    out = None
    for j in range(F.dim):
        lin = poly.linear(-0.5 * W[:, j])
        if not lin:
            continue
        dF = F.differentiate(j)
        if dF.is_zero:
            continue
        term = dF.with_poly(poly.mul(lin, dF.poly))
        out = term if out is None else out + term
    return F * 0.0 if out is None else out


def _star_correction(F: GaussPolySymbol, t: float, ss: SymplecticStructure,
                     hbar: float) -> GaussPolySymbol:
    """``-(1 / 4 i hbar) Omega'_ij (x^i * [x^j, F] + [x^j, F] * x^i)``."""
    Od = ss.omega_dot(t)
    Pi = ss.pi(t)
    dim = F.dim
    xs = [GaussPolySymbol(dim, poly_terms=poly.variable(dim, i)) for i in range(dim)]
    comms = [star_commutator(xs[j], F, Pi, hbar) for j in range(dim)]
    out = None
    for i in range(dim):
        for j in range(dim):
            if Od[i, j] == 0 or comms[j].is_zero:
                continue
            sym = moyal_star(xs[i], comms[j], Pi, hbar) + moyal_star(comms[j], xs[i], Pi, hbar)
            term = sym * (-Od[i, j] / (4j * hbar))
            out = term if out is None else out + term
    return F * 0.0 if out is None else out


def extended_time_derivative(family: SymbolFamily, t: float, ss: SymplecticStructure,
                             hbar: float, form: str = "bracket", h: Optional[float] = None,
                             order: int = 2) -> GaussPolySymbol:
    """``D_t F = dF/dt - 1/2 x^i Omega'_ik {x^k, F}_t``.

    ``form="star"`` computes the correction through symmetrized star
    commutators with the coordinates instead; both agree to round-off.
    """
    h = default_step(t) if h is None else h
    flow = ss.flow
    reach = h * (2 if order == 4 else 1)
    if t - reach < -1e-12 or t + reach > flow.t_max + 1e-12:
        raise RangeError(f"stencil [{t - reach}, {t + reach}] leaves the flow range "
                         f"[0, {flow.t_max}]")
    dF = partial_t(family, t, h, order)
    F = family(t)
    if form == "bracket":
        corr = drift_correction(F, t, ss)
    elif form == "star":
        corr = _star_correction(F, t, ss, hbar)
    else:
        raise ValueError(f"unknown form {form!r}")
    return dF + corr


def quantum_liouville_residual(state, hamiltonian: SymbolFamily, t: float,
                               ss: SymplecticStructure, hbar: float,
                               h: Optional[float] = None, order: int = 2) -> float:
    """Max-norm of ``i hbar D_t rho + [rho, H]_t`` at ``t``.

    ``state`` is an :class:`EvolvedState` or any symbol family.
    """
    family = state.at if isinstance(state, EvolvedState) else state
    D = extended_time_derivative(family, t, ss, hbar, "bracket", h, order)
    comm = star_commutator(family(t), hamiltonian(t), ss.pi(t), hbar)
    return symbol_distance(D * (1j * hbar), -comm)


def hamiltonian_family(data: PseudoHamiltonianData) -> SymbolFamily:
    return data.hamiltonian


def normalization_check(rho: GaussPolySymbol, ss: SymplecticStructure, t: float) -> float:
    """``integral dmu rho`` with the Liouville measure at ``t``."""
    return float(np.real(ss.delta(t) * integrate(rho)))


# ---------------------------------------------------------------------------
# attractor diagnostics
# ---------------------------------------------------------------------------

@dataclass
class AttractorMoments:
    times: np.ndarray
    second_moments: np.ndarray
    integrals: np.ndarray
    stable: bool


def density_at(state: EvolvedState, ss: SymplecticStructure, hbar: float,
               t: float) -> GaussPolySymbol:
    """``phi_t = Delta(t) (2 pi hbar)^-n rho(t, .)``."""
    rho = state.at(t)
    n = rho.dim // 2
    scale = ss.delta(t) / (2 * pi * hbar) ** n
    return rho.with_poly(rho.poly, rho.c + np.log(scale))


def second_moments(phi: GaussPolySymbol) -> Tuple[np.ndarray, complex]:
    """``(E[x x^T], integral phi)`` for a density symbol."""
    Q = ComplexQuadraticForm.of(phi)
    dim = phi.dim
    S = np.zeros((dim, dim))
    for i in range(dim):
        for j in range(i, dim):
            mono = poly.mul(poly.variable(dim, i), poly.variable(dim, j))
            val = gaussian_moment(Q, poly.mul(mono, phi.poly)).real
            S[i, j] = S[j, i] = val
    return S, gaussian_moment(Q, phi.poly)


def attractor_moments(state: EvolvedState, ss: SymplecticStructure, hbar: float,
                      t_grid: Iterable[float]) -> AttractorMoments:
    """Second moments and total mass of ``phi_t`` along ``t_grid``.

    ``stable`` reports whether the origin is an asymptotically stable fixed
    point (constant homogeneous system with all eigenvalues in the open left
    half-plane); without it no convergence to a point mass is implied.
    """
    sysm = state.flow.system
    stable = False
    if sysm is not None and sysm.homogeneous:
        stable = bool(np.max(np.linalg.eigvals(sysm.matrix(0.0)).real) < 0)
    times = np.asarray(list(t_grid), dtype=float)
    moms, ints = [], []
    for t in times:
        S, tot = second_moments(density_at(state, ss, hbar, t))
        moms.append(S)
        ints.append(tot.real)
    return AttractorMoments(times, np.array(moms), np.array(ints), stable)


def pair_with_test_function(f: Callable[[np.ndarray], np.ndarray], state: EvolvedState,
                          ss: SymplecticStructure, hbar: float, t: float,
                          extent: float = 8.0, points: int = 201) -> float:
    """``integral f(x) phi_t(x) dx`` by trapezoidal quadrature in initial variables.

    Substituting ``x = Gamma(t) xi + v(t)`` turns the pairing into
    ``integral f(Gamma xi + v) phi_0(xi) dxi``; the box ``[-extent, extent]``
    per axis must contain the bulk of ``phi_0``.
    """
    G, v = state.flow.gamma_v(t)
    phi0 = density_at(EvolvedState(state.rho0, state.flow), ss, hbar, 0.0)
    dim = phi0.dim
    ticks = np.linspace(-extent, extent, points)
    mesh = np.meshgrid(*([ticks] * dim), indexing="ij")
    xi = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = (f(xi @ G.T + v) * phi0(xi).real).reshape(mesh[0].shape)
    for _ in range(dim):
        vals = np.trapezoid(vals, ticks, axis=0)
    return float(vals)
