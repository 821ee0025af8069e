"""Sparse multivariate polynomials with complex coefficients.

A polynomial is a plain ``dict`` mapping exponent tuples to complex
coefficients, e.g. ``{(2, 0): 1.0, (0, 1): -3j}`` is ``x0**2 - 3j*x1``.
Zero coefficients are never stored, so ``{}`` is the zero polynomial.
All functions here are pure and return fresh dictionaries.
"""

from __future__ import annotations

from math import factorial
from typing import Dict, Iterable, Tuple

import numpy as np

Poly = Dict[Tuple[int, ...], complex]

DEFAULT_DEGREE_CAP = 64


class DegreeCapError(ValueError):
    """Raised when an operation would produce a monomial above the degree cap."""


def constant(dim: int, value: complex = 1.0) -> Poly:
    if value == 0:
        return {}
    return {(0,) * dim: complex(value)}


def variable(dim: int, index: int, power: int = 1) -> Poly:
    exps = [0] * dim
    exps[index] = power
    return {tuple(exps): 1.0 + 0j}


def linear(coeffs: Iterable[complex], offset: complex = 0.0) -> Poly:
    """Affine form ``sum_i coeffs[i] * x_i + offset``."""
    coeffs = list(coeffs)
    dim = len(coeffs)
    out: Poly = {}
    if offset != 0:
        out[(0,) * dim] = complex(offset)
    for i, a in enumerate(coeffs):
        if a != 0:
            exps = [0] * dim
            exps[i] = 1
            out[tuple(exps)] = complex(a)
    return out


def degree(p: Poly) -> int:
    """Total degree; -1 for the zero polynomial."""
    return max((sum(k) for k in p), default=-1)


def prune(p: Poly, atol: float = 0.0) -> Poly:
    return {k: v for k, v in p.items() if abs(v) > atol}


def add(p: Poly, q: Poly, scale: complex = 1.0) -> Poly:
    """Return ``p + scale * q``."""
    out = dict(p)
    for k, v in q.items():
        s = out.get(k, 0.0) + scale * v
        if s == 0:
            out.pop(k, None)
        else:
            out[k] = s
    return out


def scale(p: Poly, s: complex) -> Poly:
    if s == 0:
        return {}
    return {k: s * v for k, v in p.items()}


def conj(p: Poly) -> Poly:
    return {k: np.conj(v) for k, v in p.items()}


def mul(p: Poly, q: Poly, cap: int = DEFAULT_DEGREE_CAP) -> Poly:
    if not p or not q:
        return {}
    if degree(p) + degree(q) > cap:
        raise DegreeCapError(
            f"product degree {degree(p) + degree(q)} exceeds cap {cap}")
    out: Poly = {}
    for a, ca in p.items():
        for b, cb in q.items():
            k = tuple(x + y for x, y in zip(a, b))
            out[k] = out.get(k, 0.0) + ca * cb
    return {k: v for k, v in out.items() if v != 0}


def power(p: Poly, k: int, dim: int, cap: int = DEFAULT_DEGREE_CAP) -> Poly:
    out = constant(dim)
    for _ in range(k):
        out = mul(out, p, cap)
    return out


def deriv(p: Poly, i: int) -> Poly:
    out: Poly = {}
    for k, v in p.items():
        e = k[i]
        if e:
            kk = k[:i] + (e - 1,) + k[i + 1:]
            out[kk] = out.get(kk, 0.0) + e * v
    return out


def directional(p: Poly, u) -> Poly:
    """Derivative along the (complex) vector ``u``."""
    out: Poly = {}
    for i, ui in enumerate(u):
        if ui != 0:
            out = add(out, deriv(p, i), ui)
    return out


def second_order(p: Poly, C: np.ndarray) -> Poly:
    """Apply ``1/2 * sum_ij C_ij d_i d_j`` (``C`` symmetric)."""
    m = C.shape[0]
    out: Poly = {}
    for k, v in p.items():
        for i in range(m):
            ei = k[i]
            if not ei:
                continue
            # diagonal term
            if ei >= 2 and C[i, i] != 0:
                kk = k[:i] + (ei - 2,) + k[i + 1:]
                out[kk] = out.get(kk, 0.0) + 0.5 * C[i, i] * ei * (ei - 1) * v
            for j in range(i + 1, m):
                ej = k[j]
                if not ej or C[i, j] == 0:
                    continue
                kk = list(k)
                kk[i] -= 1
                kk[j] -= 1
                kk = tuple(kk)
                out[kk] = out.get(kk, 0.0) + C[i, j] * ei * ej * v
    return {k: v for k, v in out.items() if v != 0}


def heat(p: Poly, C: np.ndarray) -> Poly:
    """Return ``exp(1/2 d^T C d) p``, the Gaussian smoothing of ``p``.

    Equals the expectation ``E[p(x + Z)]`` for ``Z ~ N(0, C)``, extended
    analytically to complex symmetric ``C``. The series terminates after
    ``deg(p) // 2`` steps.
    """
    if not p or not np.any(C):
        return dict(p)
    out = dict(p)
    term = p
    k = 0
    while True:
        k += 1
        term = scale(second_order(term, C), 1.0 / k)
        if not term:
            break
        out = add(out, term)
    return out


def affine_substitute(p: Poly, S: np.ndarray, d: np.ndarray,
                      cap: int = DEFAULT_DEGREE_CAP) -> Poly:
    """Return the polynomial ``x -> p(S @ x + d)``.

    ``S`` has shape ``(m, k)`` where ``m`` is the number of variables of
    ``p``; the result is a polynomial in ``k`` variables.
    """
    if not p:
        return {}
    m, k = S.shape
    if degree(p) > cap:
        raise DegreeCapError(f"degree {degree(p)} exceeds cap {cap}")
    forms = [linear(S[i], d[i]) for i in range(m)]
    # powers[i][e] = forms[i] ** e, built lazily
    powers = [[constant(k)] for _ in range(m)]

    def pw(i: int, e: int) -> Poly:
        lst = powers[i]
        while len(lst) <= e:
            lst.append(mul(lst[-1], forms[i], cap))
        return lst[e]

    cache: Dict[Tuple[int, ...], Poly] = {(): constant(k)}

    def prefix(key: Tuple[int, ...]) -> Poly:
        if key in cache:
            return cache[key]
        head = prefix(key[:-1])
        e = key[-1]
        val = head if e == 0 else mul(head, pw(len(key) - 1, e), cap)
        cache[key] = val
        return val

    out: Poly = {}
    for key, v in p.items():
        # trailing zero exponents do not change the product
        n = len(key)
        while n and key[n - 1] == 0:
            n -= 1
        out = add(out, prefix(key[:n]), v)
    return out


def evaluate(p: Poly, x: np.ndarray) -> np.ndarray:
    """Evaluate at points ``x`` of shape ``(..., m)``."""
    x = np.asarray(x)
    out = np.zeros(x.shape[:-1], dtype=complex)
    for k, v in p.items():
        term = np.full(x.shape[:-1], v, dtype=complex)
        for i, e in enumerate(k):
            if e:
                term = term * x[..., i] ** e
        out = out + term
    return out


def max_abs(p: Poly) -> float:
    return max((abs(v) for v in p.values()), default=0.0)


def multinomial_factorial(k: Tuple[int, ...]) -> int:
    out = 1
    for e in k:
        out *= factorial(e)
    return out


def embed(p: Poly, positions: Tuple[int, ...], dim: int) -> Poly:
    """Relabel variables: variable ``i`` of ``p`` becomes ``positions[i]``."""
    out: Poly = {}
    for k, v in p.items():
        kk = [0] * dim
        for i, e in enumerate(k):
            kk[positions[i]] += e
        kk = tuple(kk)
        out[kk] = out.get(kk, 0.0) + v
    return out
