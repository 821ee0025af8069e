"""Wigner eigenstates of quadratic Hamiltonians.

For an oscillator Hamiltonian ``H`` of frequency ``w`` the pure states are

    rho_n = 2 (-1)^n exp(-2 H / (hbar w)) L_n(4 H / (hbar w)),

with ``H * rho_n = hbar w (n + 1/2) rho_n``. The Gaussian scale and the
prefactor are not hard-coded: the scale is obtained by imposing the
eigenvalue equation on ``exp(-kappa H)`` and the prefactor from the trace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import polynomial as poly
from .symbols import (GaussPolySymbol, moyal_star, pointwise_product,
                      symbol_distance, trace_at)
from .symplectic import canonical_omega0

EIGEN_TOL = 1e-8


class EigenstateError(RuntimeError):
    """A constructed state failed its eigenvalue or normalization check."""


def laguerre(n: int, y):
    """Laguerre polynomial ``L_n(y)`` by the three-term recurrence."""
    if n < 0:
        raise ValueError("n must be non-negative")
    y = np.asarray(y, dtype=float)
    prev, cur = np.zeros_like(y), np.ones_like(y)
    for k in range(n):
        prev, cur = cur, ((2 * k + 1 - y) * cur - k * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def laguerre_of(n: int, Q: poly.Poly, dim: int) -> poly.Poly:
    """The polynomial ``L_n(Q(x))`` for a polynomial ``Q``, by recurrence."""
    prev, cur = {}, poly.constant(dim)
    for k in range(n):
        nxt = poly.add(poly.scale(cur, 2 * k + 1), poly.mul(cur, Q), -1.0)
        nxt = poly.add(nxt, prev, -k)
        prev, cur = cur, poly.scale(nxt, 1.0 / (k + 1))
    return cur


@dataclass(frozen=True)
class OscillatorSpec:
    omega: float = 1.0
    hbar: float = 1.0
    n: int = 0

    def __post_init__(self):
        if not (self.omega > 0 and self.hbar > 0):
            raise ValueError("omega and hbar must be positive")
        if int(self.n) != self.n or self.n < 0:
            raise ValueError("n must be a non-negative integer")

    @property
    def energy(self) -> float:
        return self.hbar * self.omega * (self.n + 0.5)


@dataclass(frozen=True)
class MagneticStateSpec:
    B_eff: float
    hbar: float = 1.0
    n: int = 0
    l: int = 0

    def __post_init__(self):
        if not (self.B_eff > 0 and self.hbar > 0):
            raise ValueError("B_eff and hbar must be positive")
        for q in (self.n, self.l):
            if int(q) != q or q < 0:
                raise ValueError("quantum numbers must be non-negative integers")

    @property
    def energy(self) -> float:
        return self.hbar * self.B_eff * (self.n + 0.5)

    @property
    def angular_momentum(self) -> float:
        return self.hbar * (self.l - self.n)


def _quadratic_matrix(H: GaussPolySymbol) -> np.ndarray:
    """Symmetric ``Bm`` with ``H = x.Bm.x / 2`` (rejects other terms)."""
    if not H.is_polynomial:
        raise ValueError("Hamiltonian must be a polynomial symbol")
    Bm = np.zeros((H.dim, H.dim), dtype=complex)
    for k, v in H.normalized_poly().items():
        idx = [i for i, e in enumerate(k) for _ in range(e)]
        if len(idx) != 2:
            raise ValueError("Hamiltonian must be a homogeneous quadratic form")
        i, j = idx
        if i == j:
            Bm[i, i] += 2 * v
        else:
            Bm[i, j] += v
            Bm[j, i] += v
    if np.max(np.abs(Bm.imag)) > 0:
        raise ValueError("Hamiltonian must be real")
    return Bm.real


def _coefficient_along(P: poly.Poly, H: poly.Poly) -> complex:
    """Component of the quadratic part of ``P`` along ``H``."""
    ref = max(H, key=lambda k: abs(H[k]))
    return P.get(ref, 0.0) / H[ref]


def gaussian_scale(H: GaussPolySymbol, Pi, hbar: float) -> float:
    """Positive ``kappa`` with ``H * exp(-kappa H)`` proportional to ``exp(-kappa H)``.

    The quadratic part of ``exp(kappa H) (H * exp(-kappa H))`` is ``H`` times a
    polynomial of degree two in ``kappa``; it is sampled at three scales and
    its positive root returned.
    """
    Bm = _quadratic_matrix(H)
    if np.min(np.linalg.eigvalsh(Bm)) < -1e-12 * max(1.0, np.max(np.abs(Bm))):
        raise EigenstateError("Hamiltonian is not positive semidefinite; no normalizable state")
    ks = np.array([0.5, 1.0, 1.5])
    vals = []
    for k in ks:
        g = GaussPolySymbol(H.dim, k * Bm, None, 0.0, poly.constant(H.dim))
        prod = moyal_star(H, g, Pi, hbar, strategy="series")
        vals.append(_coefficient_along(prod.normalized_poly(), H.poly).real)
    a2, a1, a0 = np.polyfit(ks, vals, 2)
    roots = np.roots([a2, a1, a0])
    pos = [r.real for r in roots if abs(r.imag) < 1e-9 and r.real > 0]
    if not pos:
        raise EigenstateError("no positive Gaussian scale solves the eigenvalue equation")
    return min(pos)


def normalize(rho: GaussPolySymbol, Delta: float, hbar: float) -> GaussPolySymbol:
    """Rescale so that ``Tr(rho) = 1`` with Liouville weight ``Delta``."""
    tr = trace_at(rho, Delta, hbar)
    if tr == 0 or not np.isfinite(tr):
        raise EigenstateError(f"cannot normalize: trace {tr}")
    return rho.with_poly(rho.poly, rho.c - np.log(complex(tr)))


def _real_part(rho: GaussPolySymbol) -> GaussPolySymbol:
    """Drop round-off imaginary parts of a state that must be real."""
    terms = {k: complex(v).real for k, v in rho.normalized_poly().items()}
    return GaussPolySymbol(rho.dim, rho.M.real, rho.b.real, 0.0, terms)


def laguerre_state(H: GaussPolySymbol, n: int, Pi, hbar: float,
                   Delta: float = 1.0, normalized: bool = True) -> Tuple[GaussPolySymbol, float]:
    """``C exp(-kappa H) L_n(2 kappa H)``; returns ``(rho, E_n)``.

    ``H`` must be a quadratic form that is an oscillator with respect to
    ``Pi``; the frequency is read off as ``2 / (hbar kappa)``. With
    ``normalized=False`` the constant is left at 1 (needed when ``H`` is
    degenerate and the state is one factor of a product).
    """
    kappa = gaussian_scale(H, Pi, hbar)
    Bm = _quadratic_matrix(H)
    terms = laguerre_of(n, poly.scale(H.poly, 2 * kappa), H.dim)
    rho = GaussPolySymbol(H.dim, kappa * Bm, None, 0.0, terms)
    if normalized:
        rho = normalize(rho, Delta, hbar)
    omega = 2.0 / (hbar * kappa)
    return _real_part(rho), hbar * omega * (n + 0.5)


def eigenstate_residual(rho: GaussPolySymbol, H: GaussPolySymbol, E: float, Pi,
                        hbar: float, Delta: float = 1.0) -> float:
    """Max-norm of ``H*rho - E rho``, ``rho*H - E rho``, ``rho*rho - rho`` and
    ``|Tr rho - 1|``."""
    left = moyal_star(H, rho, Pi, hbar)
    right = moyal_star(rho, H, Pi, hbar)
    Erho = rho * E
    square = moyal_star(rho, rho, Pi, hbar)
    return max(
        symbol_distance(left, Erho),
        symbol_distance(right, Erho),
        symbol_distance(square, rho),
        abs(trace_at(rho, Delta, hbar) - 1.0),
    )


def oscillator_hamiltonian(omega: float) -> GaussPolySymbol:
    """``(p^2 + w^2 x^2) / 2`` in coordinates ``(x, p)``."""
    return GaussPolySymbol(2, poly_terms={(2, 0): 0.5 * omega ** 2, (0, 2): 0.5})


def oscillator_eigenstate(spec: OscillatorSpec, check: bool = True,
                          tol: float = EIGEN_TOL) -> GaussPolySymbol:
    """Normalized Wigner function of oscillator level ``spec.n``.

    Raises
    ------
    EigenstateError
        If the eigenvalue residual exceeds ``tol`` relative to the largest
        coefficient of the state.
    """
    H = oscillator_hamiltonian(spec.omega)
    Pi = np.linalg.inv(canonical_omega0(2))
    rho, E = laguerre_state(H, spec.n, Pi, spec.hbar)
    if not math.isclose(E, spec.energy, rel_tol=1e-9):
        raise EigenstateError(f"eigenvalue {E} does not match hbar w (n + 1/2) = {spec.energy}")
    if check:
        res = eigenstate_residual(rho, H, spec.energy, Pi, spec.hbar)
        if res > tol * max(1.0, spec.energy) * max(1.0, rho.max_abs_coeff()):
            raise EigenstateError(f"eigen-residual {res:.3e} exceeds {tol:.1e}")
    return rho


def magnetic_eigenstate(spec: MagneticStateSpec, check: bool = True,
                        tol: float = EIGEN_TOL) -> GaussPolySymbol:
    """``rho_n(H1) rho_l(H2)`` in coordinates ``(x, p, y, q)``.

    The state has energy ``hbar B (n + 1/2)`` and angular momentum
    ``hbar (l - n)``. The check covers the energy equation, the angular
    momentum equation and normalization; idempotency is left to callers
    because it is expensive at high degree.
    """
    from .models import magnetic_observables

    obs = magnetic_observables(spec.B_eff)
    Pi = np.linalg.inv(canonical_omega0(4))
    r1, E1 = laguerre_state(obs["H1"], spec.n, Pi, spec.hbar, normalized=False)
    r2, _ = laguerre_state(obs["H2"], spec.l, Pi, spec.hbar, normalized=False)
    rho = _real_part(normalize(pointwise_product(r1, r2), 1.0, spec.hbar))
    if not math.isclose(E1, spec.energy, rel_tol=1e-9):
        raise EigenstateError(f"energy {E1} does not match hbar B (n + 1/2) = {spec.energy}")
    if check:
        res = magnetic_residual(rho, spec)
        if res > tol * max(1.0, spec.energy, abs(spec.angular_momentum)) * max(1.0, rho.max_abs_coeff()):
            raise EigenstateError(f"eigen-residual {res:.3e} exceeds {tol:.1e}")
    return rho


def magnetic_residual(rho: GaussPolySymbol, spec: MagneticStateSpec,
                      include_square: bool = False) -> float:
    """Residual of ``H*rho = E rho``, ``L*rho = M rho`` (both sides) and the trace."""
    from .models import magnetic_observables

    obs = magnetic_observables(spec.B_eff)
    Pi = np.linalg.inv(canonical_omega0(4))
    out = abs(trace_at(rho, 1.0, spec.hbar) - 1.0)
    for name, ev in (("H", spec.energy), ("L", spec.angular_momentum)):
        F = obs[name]
        out = max(out,
                  symbol_distance(moyal_star(F, rho, Pi, spec.hbar), rho * ev),
                  symbol_distance(moyal_star(rho, F, Pi, spec.hbar), rho * ev))
    if include_square:
        out = max(out, symbol_distance(moyal_star(rho, rho, Pi, spec.hbar), rho))
    return out


def oscillator_spectrum(omega: float, hbar: float, n_max: int):
    return [(n, hbar * omega * (n + 0.5)) for n in range(n_max + 1)]


def magnetic_spectrum(B_eff: float, hbar: float, n_max: int, l_max: int):
    return [(n, l, hbar * B_eff * (n + 0.5), hbar * (l - n))
            for n in range(n_max + 1) for l in range(l_max + 1)]


def ground_state(H: GaussPolySymbol, Pi, hbar: float, Delta: float = 1.0,
                 kappa: Optional[float] = None) -> GaussPolySymbol:
    """Normalized ``exp(-kappa H)`` for a positive quadratic ``H``.

    Without ``kappa`` the oscillator scale is resolved from ``H`` and ``Pi``;
    otherwise the Gaussian is simply normalized (a valid state only when
    ``H`` is an oscillator of matching scale).
    """
    if kappa is None:
        kappa = gaussian_scale(H, Pi, hbar)
    g = GaussPolySymbol(H.dim, kappa * _quadratic_matrix(H), None, 0.0, poly.constant(H.dim))
    return _real_part(normalize(g, Delta, hbar))
