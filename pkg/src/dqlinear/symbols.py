"""Gaussian-polynomial phase-space symbols and their Weyl-Moyal calculus.

A symbol is ``exp(-1/2 x^T M x + b^T x + c) * P(x)`` with complex ``M``
(symmetric), ``b``, ``c`` and a sparse polynomial ``P``. The class is
closed under pointwise products, derivatives, affine pullbacks and the
Moyal star product, and Gaussian integrals of its members are exact.

Two star-product evaluators are provided:

``series``
    the bidifferential exponential expanded term by term; it terminates
    whenever one operand is a pure polynomial (``M = 0``, ``b = 0``).
``gaussian``
    the closed-form composition of two Gaussians, with the polynomial
    prefactors handled by differentiating with respect to the linear
    exponents. Applies whenever ``I + K Q`` is invertible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial, pi
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from . import polynomial as poly
from .polynomial import DEFAULT_DEGREE_CAP, DegreeCapError, Poly

__all__ = [
    "GaussPolySymbol",
    "ComplexQuadraticForm",
    "SymbolError",
    "DivergentIntegralError",
    "DegreeCapError",
    "make_polynomial",
    "make_gaussian",
    "coordinate",
    "gaussian_moment",
    "moyal_star",
    "star_commutator",
    "poisson_bracket",
    "trace_at",
    "affine_pullback",
    "symbol_distance",
    "taylor_polynomial",
]

EXPONENT_RTOL = 1e-9
EXPONENT_ATOL = 1e-12


class SymbolError(ValueError):
    """Dimension mismatch, incompatible exponents, or no applicable strategy."""


class DivergentIntegralError(SymbolError):
    """The Gaussian weight is not integrable (Re M not positive definite)."""


def _as_complex_matrix(M, dim: int) -> np.ndarray:
    M = np.array(M, dtype=complex).reshape(dim, dim)
    return 0.5 * (M + M.T)


class GaussPolySymbol:
    """Immutable phase-space symbol ``exp(-x.M.x/2 + b.x + c) * P(x)``."""

    __slots__ = ("dim", "M", "b", "c", "poly")

    def __init__(self, dim: int, M=None, b=None, c: complex = 0.0,
                 poly_terms: Optional[Poly] = None):
        self.dim = int(dim)
        M = np.zeros((dim, dim), complex) if M is None else _as_complex_matrix(M, dim)
        b = np.zeros(dim, complex) if b is None else np.array(b, dtype=complex).reshape(dim)
        M.setflags(write=False)
        b.setflags(write=False)
        self.M = M
        self.b = b
        self.c = complex(c)
        terms = {} if poly_terms is None else poly_terms
        for k in terms:
            if len(k) != dim:
                raise SymbolError(f"monomial {k} does not have {dim} exponents")
        self.poly: Poly = {tuple(k): complex(v) for k, v in terms.items() if v != 0}

    # -- structure -----------------------------------------------------
    @property
    def is_polynomial(self) -> bool:
        """True when the exponential part is a constant."""
        return not np.any(self.M) and not np.any(self.b)

    @property
    def is_zero(self) -> bool:
        return not self.poly

    @property
    def degree(self) -> int:
        return poly.degree(self.poly)

    def exponent_matches(self, other: "GaussPolySymbol") -> bool:
        return (np.allclose(self.M, other.M, rtol=EXPONENT_RTOL, atol=EXPONENT_ATOL)
                and np.allclose(self.b, other.b, rtol=EXPONENT_RTOL, atol=EXPONENT_ATOL))

    def with_poly(self, terms: Poly, c: Optional[complex] = None) -> "GaussPolySymbol":
        return GaussPolySymbol(self.dim, self.M, self.b, self.c if c is None else c, terms)

    def normalized_poly(self) -> Poly:
        """Polynomial with ``exp(c)`` folded into the coefficients."""
        return poly.scale(self.poly, np.exp(self.c))

    def _check(self, other: "GaussPolySymbol") -> None:
        if not isinstance(other, GaussPolySymbol):
            raise TypeError(f"expected GaussPolySymbol, got {type(other).__name__}")
        if other.dim != self.dim:
            raise SymbolError(f"dimension mismatch: {self.dim} vs {other.dim}")

    # -- arithmetic ------------------------------------------------------
    def __add__(self, other):
        if not isinstance(other, GaussPolySymbol):
            return self + make_polynomial(self.dim, {(0,) * self.dim: other})
        self._check(other)
        if other.is_zero:
            return self
        if self.is_zero:
            return other
        if not self.exponent_matches(other):
            raise SymbolError("cannot add symbols with different Gaussian exponents")
        terms = poly.add(self.poly, other.poly, np.exp(other.c - self.c))
        return self.with_poly(terms)

    __radd__ = __add__

    def __neg__(self):
        return self.with_poly(poly.scale(self.poly, -1.0))

    def __sub__(self, other):
        return self + (-other if isinstance(other, GaussPolySymbol) else -other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, GaussPolySymbol):
            return pointwise_product(self, other)
        return self.with_poly(poly.scale(self.poly, complex(other)))

    __rmul__ = __mul__

    def conj(self) -> "GaussPolySymbol":
        return GaussPolySymbol(self.dim, np.conj(self.M), np.conj(self.b),
                               np.conj(self.c), poly.conj(self.poly))

    # -- calculus --------------------------------------------------------
    def exponent_gradient(self, u) -> Poly:
        """Affine polynomial ``u . grad(-x.M.x/2 + b.x)``."""
        u = np.asarray(u, dtype=complex)
        return poly.linear(-(u @ self.M), u @ self.b)

    def directional(self, u, cap: int = DEFAULT_DEGREE_CAP) -> "GaussPolySymbol":
        """Derivative along the vector ``u``."""
        u = np.asarray(u, dtype=complex)
        terms = poly.directional(self.poly, u)
        if not self.is_polynomial:
            terms = poly.add(terms, poly.mul(self.exponent_gradient(u), self.poly, cap))
        return self.with_poly(terms)

    def differentiate(self, i: int, cap: int = DEFAULT_DEGREE_CAP) -> "GaussPolySymbol":
        u = np.zeros(self.dim)
        u[i] = 1.0
        return self.directional(u, cap)

    def gradient(self) -> list:
        return [self.differentiate(i) for i in range(self.dim)]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=complex)
        expo = (-0.5 * np.einsum("...i,ij,...j->...", x, self.M, x)
                + x @ self.b + self.c)
        return np.exp(expo) * poly.evaluate(self.poly, x)

    def max_abs_coeff(self) -> float:
        return poly.max_abs(self.normalized_poly())

    # -- serialization --------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "M": {"re": self.M.real.tolist(), "im": self.M.imag.tolist()},
            "b": {"re": self.b.real.tolist(), "im": self.b.imag.tolist()},
            "c": [self.c.real, self.c.imag],
            "P": [[list(k), v.real, v.imag] for k, v in sorted(self.poly.items())],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GaussPolySymbol":
        dim = int(data["dim"])
        M = np.array(data["M"]["re"]) + 1j * np.array(data["M"]["im"])
        b = np.array(data["b"]["re"]) + 1j * np.array(data["b"]["im"])
        c = complex(data["c"][0], data["c"][1])
        terms = {tuple(k): complex(re, im) for k, re, im in data["P"]}
        return cls(dim, M, b, c, terms)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GaussPolySymbol":
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        kind = "poly" if self.is_polynomial else "gauss-poly"
        return f"GaussPolySymbol(dim={self.dim}, {kind}, deg={self.degree}, terms={len(self.poly)})"


@dataclass(frozen=True)
class ComplexQuadraticForm:
    """Exponent ``-1/2 x.matrix.x + shift.x + offset`` of a Gaussian weight."""

    matrix: np.ndarray
    shift: np.ndarray
    offset: complex = 0.0

    @classmethod
    def of(cls, F: GaussPolySymbol) -> "ComplexQuadraticForm":
        return cls(np.asarray(F.M), np.asarray(F.b), F.c)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def make_polynomial(dim: int, terms) -> GaussPolySymbol:
    """Pure polynomial symbol from a mapping ``{exponents: coefficient}``."""
    return GaussPolySymbol(dim, poly_terms=dict(terms))


def make_gaussian(M, b=None, c: complex = 0.0, terms: Optional[Poly] = None) -> GaussPolySymbol:
    M = np.asarray(M)
    dim = M.shape[0]
    return GaussPolySymbol(dim, M, b, c, poly.constant(dim) if terms is None else terms)


def coordinate(dim: int, i: int) -> GaussPolySymbol:
    return GaussPolySymbol(dim, poly_terms=poly.variable(dim, i))


def quadratic_form(Bmat, C=None, const: complex = 0.0) -> GaussPolySymbol:
    """Polynomial symbol ``1/2 x.B.x + C.x + const``."""
    Bmat = np.asarray(Bmat, dtype=complex)
    dim = Bmat.shape[0]
    Bsym = 0.5 * (Bmat + Bmat.T)
    terms: Poly = {}
    for i in range(dim):
        for j in range(i, dim):
            v = 0.5 * Bsym[i, i] if i == j else Bsym[i, j]
            if v != 0:
                k = [0] * dim
                k[i] += 1
                k[j] += 1
                terms[tuple(k)] = v
    if C is not None:
        terms = poly.add(terms, poly.linear(np.asarray(C, dtype=complex)))
    if const != 0:
        terms = poly.add(terms, poly.constant(dim, const))
    return GaussPolySymbol(dim, poly_terms=terms)


def pointwise_product(F: GaussPolySymbol, G: GaussPolySymbol,
                      cap: int = DEFAULT_DEGREE_CAP) -> GaussPolySymbol:
    F._check(G)
    return GaussPolySymbol(F.dim, F.M + G.M, F.b + G.b, F.c + G.c,
                           poly.mul(F.poly, G.poly, cap))


# ---------------------------------------------------------------------------
# Gaussian integrals
# ---------------------------------------------------------------------------

def _require_integrable(M: np.ndarray) -> None:
    try:
        np.linalg.cholesky(M.real)
    except np.linalg.LinAlgError:
        raise DivergentIntegralError("real part of the quadratic exponent is not "
                                     "positive definite; integral diverges") from None


def gaussian_moment(Q: ComplexQuadraticForm, P: Poly) -> complex:
    """Exact ``integral exp(-x.M.x/2 + b.x + c) P(x) dx`` over R^d.

    Completes the square and contracts ``P`` against the covariance
    ``M^-1`` (Wick pairing). The square root of ``det M`` follows the
    branch continuous from ``Re M``.
    """
    M = np.asarray(Q.matrix, dtype=complex)
    M = 0.5 * (M + M.T)
    b = np.asarray(Q.shift, dtype=complex)
    d = M.shape[0]
    _require_integrable(M)
    if not P:
        return 0.0j
    cov = np.linalg.inv(M)
    cov = 0.5 * (cov + cov.T)
    mean = cov @ b
    lam = np.linalg.eigvals(M)
    log_norm = 0.5 * d * np.log(2 * pi) - 0.5 * np.sum(np.log(lam))
    smoothed = poly.heat(P, cov)
    val = poly.evaluate(smoothed, mean)
    return complex(np.exp(Q.offset + 0.5 * b @ mean + log_norm) * val)


def integrate(F: GaussPolySymbol) -> complex:
    return gaussian_moment(ComplexQuadraticForm.of(F), F.poly)


def trace_at(F: GaussPolySymbol, Delta: float, hbar: float) -> complex:
    """Phase-space trace ``(2 pi hbar)^-n * Delta * integral F``."""
    n = F.dim // 2
    return Delta * integrate(F) / (2 * pi * hbar) ** n


# ---------------------------------------------------------------------------
# star product
# ---------------------------------------------------------------------------

def _bidifferential(F: GaussPolySymbol, G: GaussPolySymbol, C: np.ndarray,
                    cap: int) -> GaussPolySymbol:
    """``exp(C_ij d_i^F d_j^G) F G`` for polynomial ``G`` (terminating series).

    Expanded as ``sum_beta (D^beta F)(d^beta G) / beta!`` with
    ``D_j = sum_i C_ij d_i``.
    """
    dim = F.dim
    cols = [C[:, j] for j in range(dim)]
    total: Poly = {}

    def walk(start: int, beta_fact: int, counts: list, DF: GaussPolySymbol, dG: Poly):
        nonlocal total
        total = poly.add(total, poly.mul(DF.poly, dG, cap), 1.0 / beta_fact)
        for j in range(start, dim):
            dG2 = poly.deriv(dG, j)
            if not dG2:
                continue
            DF2 = DF.directional(cols[j], cap)
            if DF2.is_zero:
                continue
            counts[j] += 1
            walk(j, beta_fact * counts[j], counts, DF2, dG2)
            counts[j] -= 1

    walk(0, 1, [0] * dim, F, G.poly)
    return GaussPolySymbol(dim, F.M, F.b, F.c + G.c, total)


def _star_series(F, G, Pi, hbar, cap):
    C = 0.5j * hbar * np.asarray(Pi, dtype=complex)
    if G.is_polynomial:
        return _bidifferential(F, G, C, cap)
    if F.is_polynomial:
        return _bidifferential(G, F, C.T, cap)
    raise SymbolError("series star product needs a polynomial operand")


def _sqrt_det_inverse_log(mu: np.ndarray) -> complex:
    """log of det(I + KQ)^(-1/2) on the branch continuous from K = 0."""
    z = 1.0 + mu
    if np.any(np.abs(z) < 1e-13):
        raise SymbolError("singular Gaussian composition (det(I + KQ) = 0)")
    if np.any((np.abs(z.imag) < 1e-14) & (z.real < 0)):
        raise SymbolError("Gaussian composition crosses the square-root branch cut")
    return complex(-0.5 * np.sum(np.log(z)))


def _star_gaussian(F, G, Pi, hbar, cap):
    n2 = F.dim
    I2 = np.eye(2 * n2)
    s = 0.5j * hbar
    Pi = np.asarray(Pi, dtype=complex)
    K = np.zeros((2 * n2, 2 * n2), complex)
    K[:n2, n2:] = s * Pi
    K[n2:, :n2] = s * Pi.T
    Q = np.zeros((2 * n2, 2 * n2), complex)
    Q[:n2, :n2] = F.M
    Q[n2:, n2:] = G.M
    beta = np.concatenate([F.b, G.b])

    KQ = K @ Q
    log_pref = _sqrt_det_inverse_log(np.linalg.eigvals(KQ))
    S = np.linalg.solve(I2 + KQ, K)          # (I + KQ)^-1 K, symmetric
    S = 0.5 * (S + S.T)
    E = np.vstack([np.eye(n2), np.eye(n2)])
    Wt = I2 - Q @ S                          # (I + QK)^-1
    M_new = E.T @ (Wt @ Q) @ E
    b_new = E.T @ (Wt @ beta)
    c_new = F.c + G.c + 0.5 * beta @ S @ beta + log_pref

    A = (I2 - S @ Q) @ E                     # polynomial argument map
    d = S @ beta
    Ay, Az, dy, dz = A[:n2], A[n2:], d[:n2], d[n2:]
    P1 = poly.heat(F.poly, S[:n2, :n2])
    P2 = poly.heat(G.poly, S[n2:, n2:])
    Syz = S[:n2, n2:]
    cols = [Syz[:, j] for j in range(n2)]
    total: Poly = {}

    def walk(start, beta_fact, counts, DP1, dP2):
        nonlocal total
        term = poly.mul(poly.affine_substitute(DP1, Ay, dy, cap),
                        poly.affine_substitute(dP2, Az, dz, cap), cap)
        total = poly.add(total, term, 1.0 / beta_fact)
        for j in range(start, n2):
            dP2j = poly.deriv(dP2, j)
            if not dP2j:
                continue
            DP1j = poly.directional(DP1, cols[j])
            if not DP1j:
                continue
            counts[j] += 1
            walk(j, beta_fact * counts[j], counts, DP1j, dP2j)
            counts[j] -= 1

    if P1 and P2:
        walk(0, 1, [0] * n2, P1, P2)
    return GaussPolySymbol(n2, M_new, b_new, c_new, total)


def moyal_star(F: GaussPolySymbol, G: GaussPolySymbol, Pi, hbar: float,
               strategy: str = "auto", cap: int = DEFAULT_DEGREE_CAP) -> GaussPolySymbol:
    """Weyl-Moyal product ``F * G`` for the Poisson tensor ``Pi``.

    ``x_i * x_j = x_i x_j + (i hbar / 2) Pi_ij``. ``strategy`` is one of
    ``"auto"``, ``"series"`` or ``"gaussian"``; ``"auto"`` uses the
    terminating series when an operand is polynomial.
    """
    F._check(G)
    Pi = np.asarray(Pi)
    if Pi.shape != (F.dim, F.dim):
        raise SymbolError(f"Poisson tensor shape {Pi.shape} does not match dim {F.dim}")
    if hbar <= 0:
        raise ValueError("hbar must be positive")
    if strategy == "auto":
        strategy = "series" if (F.is_polynomial or G.is_polynomial) else "gaussian"
    if strategy == "series":
        return _star_series(F, G, Pi, hbar, cap)
    if strategy == "gaussian":
        return _star_gaussian(F, G, Pi, hbar, cap)
    raise ValueError(f"unknown strategy {strategy!r}")


def star_commutator(F, G, Pi, hbar, strategy: str = "auto",
                    cap: int = DEFAULT_DEGREE_CAP) -> GaussPolySymbol:
    return (moyal_star(F, G, Pi, hbar, strategy, cap)
            - moyal_star(G, F, Pi, hbar, strategy, cap))


def poisson_bracket(F: GaussPolySymbol, G: GaussPolySymbol, Pi,
                    cap: int = DEFAULT_DEGREE_CAP) -> GaussPolySymbol:
    """``{F, G} = Pi_ij d_i F d_j G``."""
    F._check(G)
    Pi = np.asarray(Pi)
    if Pi.shape != (F.dim, F.dim):
        raise SymbolError(f"Poisson tensor shape {Pi.shape} does not match dim {F.dim}")
    out = None
    for j in range(F.dim):
        # sum_i Pi_ij d_i F
        dF = F.directional(Pi[:, j], cap)
        if dF.is_zero:
            continue
        term = pointwise_product(dF, G.differentiate(j, cap), cap)
        out = term if out is None else out + term
    if out is None:
        return GaussPolySymbol(F.dim, F.M + G.M, F.b + G.b, F.c + G.c)
    return out


# ---------------------------------------------------------------------------
# pullbacks, norms, Taylor expansion
# ---------------------------------------------------------------------------

def affine_pullback(F: GaussPolySymbol, S, d=None,
                    cap: int = DEFAULT_DEGREE_CAP) -> GaussPolySymbol:
    """The symbol ``x -> F(S (x - d))``."""
    S = np.asarray(S, dtype=float if np.isrealobj(S) else complex)
    dim = F.dim
    if S.shape != (dim, dim):
        raise SymbolError(f"pullback matrix shape {S.shape} does not match dim {dim}")
    d = np.zeros(dim) if d is None else np.asarray(d)
    Sd = S @ d
    M_new = S.T @ F.M @ S
    b_new = S.T @ (F.M @ Sd) + S.T @ F.b
    c_new = F.c - 0.5 * Sd @ F.M @ Sd - F.b @ Sd
    terms = poly.affine_substitute(F.poly, S, -Sd, cap)
    return GaussPolySymbol(dim, M_new, b_new, c_new, terms)


def symbol_distance(F: GaussPolySymbol, G: GaussPolySymbol) -> float:
    """Max-norm distance between canonicalized symbols.

    With matching exponents this is the largest coefficient of
    ``e^{c_F} P_F - e^{c_G} P_G``; otherwise the exponent mismatch is
    included as well.
    """
    F._check(G)
    if F.is_zero and G.is_zero:
        return 0.0
    if F.is_zero or G.is_zero:
        return max(F.max_abs_coeff(), G.max_abs_coeff())
    gap = max(float(np.max(np.abs(F.M - G.M))), float(np.max(np.abs(F.b - G.b))))
    diff = poly.add(F.normalized_poly(), G.normalized_poly(), -1.0)
    return max(poly.max_abs(diff), gap)


def symbol_norm(F: GaussPolySymbol) -> float:
    return F.max_abs_coeff()


def taylor_polynomial(F: GaussPolySymbol, x0, order: int) -> GaussPolySymbol:
    """Polynomial symbol: Taylor expansion of ``F`` about ``x0`` to ``order``."""
    x0 = np.asarray(x0, dtype=complex)
    dim = F.dim
    terms: Poly = {}

    def walk(start, k_fact, counts, DF, depth):
        nonlocal terms
        val = complex(DF(x0))
        if val != 0:
            # (x - x0)^counts / counts!
            mono = poly.constant(dim, val / k_fact)
            for i, e in enumerate(counts):
                if e:
                    base = poly.linear(np.eye(dim)[i], -x0[i])
                    mono = poly.mul(mono, poly.power(base, e, dim))
            terms = poly.add(terms, mono)
        if depth == order:
            return
        for j in range(start, dim):
            counts[j] += 1
            walk(j, k_fact * counts[j], counts, DF.differentiate(j), depth + 1)
            counts[j] -= 1

    walk(0, 1, [0] * dim, F, 0)
    return GaussPolySymbol(dim, poly_terms=terms)


def sample_grid(F: GaussPolySymbol, axes: Sequence[int], extent: float, points: int,
                base_point=None) -> Tuple[np.ndarray, np.ndarray]:
    """Evaluate ``F`` on a regular grid over the chosen coordinate axes.

    Returns ``(coords, values)`` with ``coords`` of shape ``(N, dim)``.
    Coordinates not in ``axes`` are fixed at ``base_point`` (default 0).
    """
    base = np.zeros(F.dim) if base_point is None else np.asarray(base_point, float)
    ticks = np.linspace(-extent, extent, points)
    mesh = np.meshgrid(*([ticks] * len(axes)), indexing="ij")
    coords = np.tile(base, (mesh[0].size, 1))
    for a, m in zip(axes, mesh):
        coords[:, a] = m.ravel()
    return coords, F(coords)
