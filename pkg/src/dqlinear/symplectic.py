"""Non-stationary symplectic structure built from a flow.

Given the fundamental matrix ``Gamma`` and ``Lambda = Gamma^-1`` of
``x' = A x + J``, the 2-form ``Omega(t) = Lambda^T Omega0 Lambda`` solves
``Omega' = -(Omega A + A^T Omega)`` and turns the system into a
first-order variational problem with

    B = (Omega A - A^T Omega) / 2,    C = Omega J,
    H = x.B.x / 2 + C.x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linsys import FlowSolution, InputError, LinearSystem
from .symbols import GaussPolySymbol, poisson_bracket, quadratic_form

__all__ = [
    "canonical_omega0",
    "SymplecticStructure",
    "PseudoHamiltonianData",
    "omega_at",
    "hamiltonian_coefficients",
    "poisson_bracket",
    "evaluate_action",
    "first_variation",
    "liouville_density",
]


def canonical_omega0(dim: int, scale: float = 1.0) -> np.ndarray:
    """Block-diagonal canonical 2-form for coordinates ``(x1, p1, x2, p2, ...)``.

    Its inverse has ``Pi[x, p] = +1``, so ``{x, p} = 1`` and the Hamiltonian
    produced for an undamped oscillator is ``+(p^2 + w^2 x^2) / 2``.
    """
    if dim % 2:
        raise InputError("dimension must be even")
    Om = np.zeros((dim, dim))
    for k in range(0, dim, 2):
        Om[k, k + 1] = -scale
        Om[k + 1, k] = scale
    return Om


def _validate_omega0(omega0: np.ndarray, dim: int) -> np.ndarray:
    omega0 = np.array(omega0, dtype=float)
    if omega0.shape != (dim, dim):
        raise InputError(f"Omega0 must be {dim}x{dim}")
    if not np.allclose(omega0, -omega0.T, atol=1e-14):
        raise InputError("Omega0 must be antisymmetric")
    if abs(np.linalg.det(omega0)) < 1e-300 or np.linalg.matrix_rank(omega0) < dim:
        raise InputError("Omega0 must be nondegenerate")
    return 0.5 * (omega0 - omega0.T)


class SymplecticStructure:
    """``Omega(t)``, ``Pi(t) = Omega(t)^-1`` and the Liouville density.

    Samples on the flow grid are computed eagerly; off-grid times are
    evaluated on demand from the flow.
    """

    def __init__(self, omega0, flow: FlowSolution):
        self.omega0 = _validate_omega0(omega0, flow.dim)
        self.omega0.setflags(write=False)
        self.pi0 = np.linalg.inv(self.omega0)
        self.pi0 = 0.5 * (self.pi0 - self.pi0.T)
        self.flow = flow
        self._sqrt_det0 = float(np.sqrt(abs(np.linalg.det(self.omega0))))
        self.omega_samples = np.array([self._omega(L) for L in flow.Lambda])
        self.pi_samples = np.array([self._pi(G) for G in flow.Gamma])

    @property
    def dim(self) -> int:
        return self.flow.dim

    @property
    def system(self) -> LinearSystem:
        if self.flow.system is None:
            raise InputError("flow carries no system; derivatives of Omega unavailable")
        return self.flow.system

    def _omega(self, Lam):
        Om = Lam.T @ self.omega0 @ Lam
        return 0.5 * (Om - Om.T)

    def _pi(self, G):
        P = G @ self.pi0 @ G.T
        return 0.5 * (P - P.T)

    def omega(self, t: float) -> np.ndarray:
        return self._omega(self.flow.lam(t))

    def pi(self, t: float) -> np.ndarray:
        return self._pi(self.flow.gamma(t))

    def omega_dot(self, t: float) -> np.ndarray:
        """``-(Omega A + A^T Omega)``, exact given ``Omega(t)``."""
        Om = self.omega(t)
        A = self.system.matrix(t)
        D = -(Om @ A + A.T @ Om)
        return 0.5 * (D - D.T)

    def delta(self, t: float) -> float:
        """Positive branch of ``sqrt(det Omega(t))``."""
        return self._sqrt_det0 / abs(np.linalg.det(self.flow.gamma(t)))


def omega_at(ss: SymplecticStructure, t: float) -> np.ndarray:
    return ss.omega(t)


def liouville_density(ss: SymplecticStructure, t: float) -> float:
    return ss.delta(t)


@dataclass(frozen=True)
class PseudoHamiltonianSample:
    B: np.ndarray
    C: np.ndarray
    Delta: float


class PseudoHamiltonianData:
    """Time-dependent coefficients ``B(t)``, ``C(t)``, ``Delta(t)``."""

    def __init__(self, ss: SymplecticStructure, system: LinearSystem = None):
        self.ss = ss
        self.system = ss.system if system is None else system

    def B(self, t: float) -> np.ndarray:
        Om = self.ss.omega(t)
        A = self.system.matrix(t)
        Bm = 0.5 * (Om @ A - A.T @ Om)
        return 0.5 * (Bm + Bm.T)

    def C(self, t: float) -> np.ndarray:
        return self.ss.omega(t) @ self.system.forcing(t)

    def Delta(self, t: float) -> float:
        return self.ss.delta(t)

    def sample(self, t: float) -> PseudoHamiltonianSample:
        return PseudoHamiltonianSample(self.B(t), self.C(t), self.Delta(t))

    def hamiltonian(self, t: float) -> GaussPolySymbol:
        """``H = x.B.x / 2 + C.x`` as a polynomial symbol."""
        return quadratic_form(self.B(t), self.C(t))


def hamiltonian_coefficients(ss: SymplecticStructure, system: LinearSystem,
                             t: float) -> PseudoHamiltonianSample:
    return PseudoHamiltonianData(ss, system).sample(t)


def evaluate_action(path, times, ss: SymplecticStructure,
                    data: PseudoHamiltonianData) -> float:
    """Discretized ``1/2 int (x.Omega.x' - x.B.x - 2 C.x) dt``.

    Velocities use second-order finite differences and the integral the
    trapezoidal rule, so the discretization error is O(dt^2).
    """
    path = np.asarray(path, dtype=float)
    times = np.asarray(times, dtype=float)
    if len(times) < 3 or path.shape[0] != len(times):
        raise ValueError("action needs at least 3 samples matching the time grid")
    dt = np.diff(times)
    if not np.allclose(dt, dt[0], rtol=1e-9):
        raise ValueError("action discretization needs a uniform grid")
    xdot = np.gradient(path, times, axis=0, edge_order=2)
    integrand = np.empty(len(times))
    for k, t in enumerate(times):
        x = path[k]
        Om = ss.omega(t)
        integrand[k] = 0.5 * (x @ Om @ xdot[k] - x @ data.B(t) @ x - 2.0 * data.C(t) @ x)
    return float(np.trapezoid(integrand, times))


def first_variation(path, times, ss: SymplecticStructure, data: PseudoHamiltonianData,
                    direction=None, eps: float = 1e-3) -> float:
    """Central difference ``(S[x + eps d] - S[x - eps d]) / (2 eps)``.

    ``direction`` is an array shaped like ``path`` vanishing at both ends;
    by default ``sin(pi s)`` along every coordinate with ``s`` the rescaled
    time. The action is quadratic, so the difference is exact up to
    round-off and only the time discretization remains.
    """
    path = np.asarray(path, dtype=float)
    times = np.asarray(times, dtype=float)
    if direction is None:
        s = (times - times[0]) / (times[-1] - times[0])
        direction = np.outer(np.sin(np.pi * s), np.ones(path.shape[1]))
    direction = np.asarray(direction, dtype=float)
    plus = evaluate_action(path + eps * direction, times, ss, data)
    minus = evaluate_action(path - eps * direction, times, ss, data)
    return (plus - minus) / (2.0 * eps)
