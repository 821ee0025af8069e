"""Linear inhomogeneous ODE systems ``x' = A(t) x + J(t)`` and their flows."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline, CubicSpline
from scipy.linalg import expm


class InputError(ValueError):
    """Invalid system data (odd dimension, non-finite matrices, ...)."""


class IntegrationError(RuntimeError):
    """The adaptive integrator failed; ``time`` is where it stopped."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t={time:.17g})")
        self.time = time


class RangeError(ValueError):
    """Requested time lies outside the range covered by a flow."""


def _const(value):
    arr = np.array(value, dtype=float)
    arr.setflags(write=False)
    return lambda t: arr


@dataclass(frozen=True)
class LinearSystem:
    """First-order system on an even-dimensional phase space.

    ``A`` and ``J`` are callables of time. Use :meth:`constant` for
    autonomous systems; those get a matrix-exponential fast path.
    """

    dim: int
    A: Callable[[float], np.ndarray]
    J: Callable[[float], np.ndarray]
    autonomous: bool = False

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2:
            raise InputError(f"phase-space dimension must be even and >= 2, got {self.dim}")

    @classmethod
    def constant(cls, A, J=None) -> "LinearSystem":
        A = np.array(A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise InputError(f"A must be square, got shape {A.shape}")
        dim = A.shape[0]
        J = np.zeros(dim) if J is None else np.array(J, dtype=float).reshape(dim)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(J))):
            raise InputError("A and J must be finite")
        return cls(dim, _const(A), _const(J), autonomous=True)

    @classmethod
    def time_dependent(cls, dim: int, A: Callable, J: Optional[Callable] = None) -> "LinearSystem":
        zero = np.zeros(dim)
        return cls(dim, A, (lambda t: zero) if J is None else J, autonomous=False)

    def matrix(self, t: float) -> np.ndarray:
        A = np.asarray(self.A(t), dtype=float)
        if A.shape != (self.dim, self.dim) or not np.all(np.isfinite(A)):
            raise InputError(f"A({t}) is not a finite {self.dim}x{self.dim} matrix")
        return A

    def forcing(self, t: float) -> np.ndarray:
        J = np.asarray(self.J(t), dtype=float)
        if J.shape != (self.dim,) or not np.all(np.isfinite(J)):
            raise InputError(f"J({t}) is not a finite {self.dim}-vector")
        return J

    @property
    def homogeneous(self) -> bool:
        return self.autonomous and not np.any(self.J(0.0))


@dataclass(frozen=True)
class StepControl:
    """Integration settings.

    ``method`` is ``"auto"`` (matrix exponential for autonomous systems,
    otherwise DOP853), ``"DOP853"``/``"RK45"`` (adaptive, local error
    bounded by ``rtol``/``atol``) or ``"rk4"`` (classical fixed step
    ``step``).
    """

    rtol: float = 1e-11
    atol: float = 1e-13
    method: str = "auto"
    step: Optional[float] = None
    samples: int = 201

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise InputError("tolerances must be positive")
        if self.method == "rk4" and (self.step is None or self.step <= 0):
            raise InputError("rk4 needs a positive fixed step")


@dataclass(frozen=True, eq=False)
class FlowSolution:
    """Fundamental matrix ``Gamma``, its inverse ``Lambda`` and the particular
    solution ``v`` (with ``v(0) = 0``) tabulated on ``t_grid``.

    Off-grid times are served by the matrix exponential (autonomous), the
    integrator's dense output, or piecewise Hermite interpolation.
    """

    t_grid: np.ndarray
    Gamma: np.ndarray
    Lambda: np.ndarray
    v: np.ndarray
    interp_order: int
    system: Optional[LinearSystem] = None
    _evaluator: Optional[Callable] = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return self.Gamma.shape[1]

    @property
    def t_max(self) -> float:
        return float(self.t_grid[-1])

    def _check_range(self, t: float) -> None:
        slack = 1e-12 * max(1.0, self.t_max)
        if not (-slack <= t <= self.t_max + slack):
            raise RangeError(f"t={t} outside flow range [0, {self.t_max}]")

    def gamma_v(self, t: float):
        """``(Gamma(t), v(t))`` at an arbitrary time in range."""
        self._check_range(t)
        if self._evaluator is not None:
            return self._evaluator(t)
        k = int(np.searchsorted(self.t_grid, t))
        if k < len(self.t_grid) and self.t_grid[k] == t:
            return self.Gamma[k], self.v[k]
        raise RangeError(f"t={t} is not a sample time of this tabulated flow")

    def gamma(self, t: float) -> np.ndarray:
        return self.gamma_v(t)[0]

    def lam(self, t: float) -> np.ndarray:
        G = self.gamma(t)
        return np.linalg.solve(G, np.eye(self.dim))

    def particular(self, t: float) -> np.ndarray:
        return self.gamma_v(t)[1]

    def to_dict(self) -> dict:
        return {
            "t_grid": self.t_grid.tolist(),
            "Gamma": [g.ravel().tolist() for g in self.Gamma],
            "Lambda": [g.ravel().tolist() for g in self.Lambda],
            "v": self.v.tolist(),
            "interp_order": self.interp_order,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "FlowSolution":
        """Rebuild a tabulated flow; off-grid values use cubic splines."""
        d = json.loads(text)
        t = np.array(d["t_grid"])
        dim = int(round(math.sqrt(len(d["Gamma"][0]))))
        G = np.array(d["Gamma"]).reshape(-1, dim, dim)
        L = np.array(d["Lambda"]).reshape(-1, dim, dim)
        v = np.array(d["v"])
        if len(t) >= 2:
            sG = CubicSpline(t, G, axis=0)
            sv = CubicSpline(t, v, axis=0)
            ev = lambda s: (sG(s), sv(s))
        else:
            ev = lambda s: (G[0], v[0])
        return cls(t, G, L, v, 3, None, ev)


def _expm_evaluator(A: np.ndarray, J: np.ndarray):
    dim = A.shape[0]
    aug = np.zeros((dim + 1, dim + 1))
    aug[:dim, :dim] = A
    aug[:dim, dim] = J
    has_j = bool(np.any(J))

    def ev(t: float):
        if not has_j:
            return expm(A * t), np.zeros(dim)
        E = expm(aug * t)
        return E[:dim, :dim], E[:dim, dim]

    return ev


def _rhs(system: LinearSystem):
    d = system.dim

    def f(t, y):
        A = system.matrix(t)
        G = y[: d * d].reshape(d, d)
        v = y[d * d:]
        return np.concatenate([(A @ G).ravel(), A @ v + system.forcing(t)])

    return f


def _rk4(system: LinearSystem, t_max: float, h: float):
    d = system.dim
    f = _rhs(system)
    steps = max(1, int(round(t_max / h)))
    ts = np.linspace(0.0, t_max, steps + 1)
    ys = np.empty((steps + 1, d * d + d))
    ys[0] = np.concatenate([np.eye(d).ravel(), np.zeros(d)])
    for k in range(steps):
        t, y, dt = ts[k], ys[k], ts[k + 1] - ts[k]
        k1 = f(t, y)
        k2 = f(t + dt / 2, y + dt / 2 * k1)
        k3 = f(t + dt / 2, y + dt / 2 * k2)
        k4 = f(t + dt, y + dt * k3)
        ys[k + 1] = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    dys = np.array([f(t, y) for t, y in zip(ts, ys)])
    spline = CubicHermiteSpline(ts, ys, dys, axis=0)
    return ts, ys, spline


def fundamental_matrix(system: LinearSystem, t_max: float,
                       step_control: StepControl = StepControl()) -> FlowSolution:
    """Solve ``Gamma' = A Gamma``, ``Gamma(0) = 1`` and ``v' = A v + J``, ``v(0) = 0``.

    Parameters
    ----------
    system : LinearSystem
    t_max : float
        Final time; must be non-negative.
    step_control : StepControl
        Tolerances, method and number of output samples.

    Returns
    -------
    FlowSolution
        Samples on a uniform grid of ``step_control.samples`` points.
    """
    if not t_max >= 0 or not math.isfinite(t_max):
        raise InputError(f"t_max must be finite and non-negative, got {t_max}")
    d = system.dim
    sc = step_control
    n_out = 1 if t_max == 0 else max(2, sc.samples)
    t_grid = np.linspace(0.0, t_max, n_out)
    method = sc.method
    if method == "auto":
        method = "expm" if system.autonomous else "DOP853"

    if method == "expm":
        if not system.autonomous:
            raise InputError("matrix-exponential path needs an autonomous system")
        evaluator = _expm_evaluator(system.matrix(0.0), system.forcing(0.0))
        order = 0  # exact at any time
    elif method == "rk4":
        ts, ys, spline = _rk4(system, t_max, sc.step)
        if t_max == 0:
            evaluator = lambda t: (np.eye(d), np.zeros(d))
        else:
            def evaluator(t, spline=spline):
                y = spline(t)
                return y[: d * d].reshape(d, d), y[d * d:]
        order = 4
    elif method in ("DOP853", "RK45"):
        system.matrix(0.0)
        system.forcing(0.0)
        y0 = np.concatenate([np.eye(d).ravel(), np.zeros(d)])
        if t_max == 0:
            evaluator = lambda t: (np.eye(d), np.zeros(d))
        else:
            sol = solve_ivp(_rhs(system), (0.0, t_max), y0, method=method,
                            rtol=sc.rtol, atol=sc.atol, dense_output=True)
            if sol.status != 0:
                raise IntegrationError(f"integration failed: {sol.message}",
                                       float(sol.t[-1]))
            dense = sol.sol

            def evaluator(t, dense=dense):
                y = dense(t)
                return y[: d * d].reshape(d, d), y[d * d:]
        order = 7 if method == "DOP853" else 4
    else:
        raise InputError(f"unknown integration method {method!r}")

    Gs, vs = zip(*(evaluator(t) for t in t_grid))
    Gamma = np.array(Gs)
    Gamma[0] = np.eye(d)
    v = np.array(vs)
    v[0] = 0.0
    Lambda = np.array([np.linalg.solve(G, np.eye(d)) for G in Gamma])
    if not np.all(np.isfinite(Gamma)):
        raise IntegrationError("non-finite fundamental matrix", float(t_grid[-1]))
    return FlowSolution(t_grid, Gamma, Lambda, v, order, system, evaluator)


def classical_trajectory(flow: FlowSolution, x0, t: float) -> np.ndarray:
    """``x(t) = Gamma(t) x0 + v(t)``."""
    G, v = flow.gamma_v(t)
    return G @ np.asarray(x0, dtype=float) + v


def reduced_lorentz_coefficients(e: float, H: float):
    """Friction ``A`` and effective cyclotron frequency ``B`` of the
    order-reduced Lorentz-Dirac equation in a homogeneous field (m = c = 1).

    ``A = (6 - sqrt6 sqrt(3 + sqrt(9 + 64 e^6 H^2))) / (8 e^2)`` is evaluated
    in the algebraically equivalent cancellation-free form
    ``-48 e^4 H^2 / ((3 + r)(6 + sqrt(6 (3 + r))))`` with
    ``r = sqrt(9 + 64 e^6 H^2)``.
    """
    e = float(e)
    H = float(H)
    if not (math.isfinite(e) and math.isfinite(H)):
        raise InputError("charge and field must be finite")
    if e == 0.0:
        return 0.0, 0.0
    r = math.sqrt(9.0 + 64.0 * e ** 6 * H ** 2)
    root = math.sqrt(3.0 + r)
    A = -48.0 * e ** 4 * H ** 2 / ((3.0 + r) * (6.0 + math.sqrt(6.0) * root))
    B = e * H * math.sqrt(6.0) / root
    return A, B
