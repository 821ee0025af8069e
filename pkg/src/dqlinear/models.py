"""Prebuilt models: damped oscillator, radiating charge in a magnetic field,
and user-supplied constant-coefficient systems.

Coordinates are ordered as canonical pairs ``(x, p)`` and
``(x, p, y, q)``; observables are registered once, at ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .linsys import InputError, LinearSystem, reduced_lorentz_coefficients
from .symbols import GaussPolySymbol, coordinate, quadratic_form
from .symplectic import _validate_omega0, canonical_omega0


class ModelError(InputError):
    """Parameters outside the model's admissible range."""


@dataclass(frozen=True)
class ModelDefinition:
    name: str
    system: LinearSystem
    omega0: np.ndarray
    observables: Dict[str, GaussPolySymbol]
    parameters: Dict[str, float]
    coordinates: Tuple[str, ...]
    hbar: float = 1.0
    notes: str = field(default="", compare=False)

    @property
    def dim(self) -> int:
        return self.system.dim

    def with_omega0(self, omega0) -> "ModelDefinition":
        omega0 = _validate_omega0(omega0, self.dim)
        return ModelDefinition(self.name, self.system, omega0, self.observables,
                               self.parameters, self.coordinates, self.hbar, self.notes)


def _linear_symbol(coeffs) -> GaussPolySymbol:
    from .polynomial import linear
    return GaussPolySymbol(len(coeffs), poly_terms=linear(coeffs))


def oscillator_matrix(omega: float, alpha: float) -> np.ndarray:
    s = math.sqrt(1.0 - (alpha / omega) ** 2)
    return np.array([[-alpha, s], [-omega ** 2 * s, -alpha]])


def build_damped_oscillator(omega: float = 1.0, alpha: float = 0.0, hbar: float = 1.0,
                            variant: str = "attractor") -> ModelDefinition:
    """Damped oscillator in first-order form.

    ``attractor``: ``x' = s p - a x``, ``p' = -w^2 s x - a p`` with
    ``s = sqrt(1 - a^2/w^2)``; equivalent to ``x'' + 2 a x' + w^2 x = 0``.

    ``canonical``: ``x' = e^{-a t} p``, ``p' = -w^2 e^{a t} x``, a
    Hamiltonian system with constant canonical 2-form, equivalent to
    ``x'' + a x' + w^2 x = 0``.
    """
    if not (omega > 0 and math.isfinite(omega)):
        raise ModelError("omega must be positive")
    if not (0 <= alpha < omega):
        raise ModelError(f"need 0 <= alpha < omega (got alpha={alpha}, omega={omega}); "
                         "the action is complex for aperiodic damping")
    if hbar <= 0:
        raise ModelError("hbar must be positive")
    if variant == "attractor":
        system = LinearSystem.constant(oscillator_matrix(omega, alpha))
    elif variant == "canonical":
        if alpha == 0:
            system = LinearSystem.constant(oscillator_matrix(omega, 0.0))
        else:
            w2 = omega ** 2
            system = LinearSystem.time_dependent(
                2, lambda t: np.array([[0.0, math.exp(-alpha * t)],
                                       [-w2 * math.exp(alpha * t), 0.0]]))
    else:
        raise ModelError(f"unknown oscillator variant {variant!r}")
    H = quadratic_form(np.diag([omega ** 2, 1.0]))
    observables = {"H": H, "x": coordinate(2, 0), "p": coordinate(2, 1)}
    return ModelDefinition(
        name=f"damped_oscillator/{variant}",
        system=system,
        omega0=canonical_omega0(2),
        observables=observables,
        parameters={"omega": omega, "alpha": alpha},
        coordinates=("x", "p"),
        hbar=hbar,
    )


def magnetic_matrix(A: float, B: float) -> np.ndarray:
    """Generator of the reduced Lorentz system in ``(x, p, y, q)`` order."""
    h = B / 2.0
    return np.array([
        [0.0, 1.0, -h, 0.0],
        [-h * h, A, -A * h, -h],
        [h, 0.0, 0.0, 1.0],
        [A * h, h, -h * h, A],
    ])


def magnetic_observables(B: float) -> Dict[str, GaussPolySymbol]:
    """Energy, angular momentum and the auxiliary quadratic observables.

    With ``P = p - B y/2``, ``X = (q + B x/2)/B``, ``Q = (q - B x/2)/B``,
    ``Y = p + B y/2``:  ``H = H1 = (P^2 + B^2 X^2)/2``,
    ``H2 = (Y^2 + B^2 Q^2)/2``, ``L = p y - q x = (H2 - H1)/B``,
    ``K = P Q + X Y``, ``N = X Q - P Y``. The rotation-invariant quadratics
    ``D = x p + y q`` and ``T = (p^2 + q^2)/2 - B^2 (x^2 + y^2)/8`` complete
    ``H, L`` to a basis that is closed under the damped flow.
    """
    h = B / 2.0
    obs: Dict[str, GaussPolySymbol] = {}
    for i, name in enumerate(("x", "p", "y", "q")):
        obs[name] = coordinate(4, i)
    # rows are linear forms over (x, p, y, q)
    P = np.array([0.0, 1.0, -h, 0.0])
    BX = np.array([h, 0.0, 0.0, 1.0])
    Y = np.array([0.0, 1.0, h, 0.0])
    BQ = np.array([-h, 0.0, 0.0, 1.0])
    obs["H"] = quadratic_form(np.outer(P, P) + np.outer(BX, BX))
    obs["H1"] = obs["H"]
    obs["H2"] = quadratic_form(np.outer(Y, Y) + np.outer(BQ, BQ))
    # L = p y - q x
    Lm = np.zeros((4, 4))
    Lm[1, 2] = Lm[2, 1] = 1.0
    Lm[3, 0] = Lm[0, 3] = -1.0
    obs["L"] = quadratic_form(Lm)
    Dm = np.zeros((4, 4))
    Dm[0, 1] = Dm[1, 0] = Dm[2, 3] = Dm[3, 2] = 1.0
    obs["D"] = quadratic_form(Dm)
    obs["T"] = quadratic_form(np.diag([-h * h, 1.0, -h * h, 1.0]))
    if B != 0:
        X, Q = BX / B, BQ / B
        sym = lambda u, w: np.outer(u, w) + np.outer(w, u)
        obs["K"] = quadratic_form(sym(P, Q) + sym(X, Y))
        obs["N"] = quadratic_form(sym(X, Q) - sym(P, Y))
        for name, form in (("P", P), ("X", X), ("Q", Q), ("Y", Y)):
            obs[name] = _linear_symbol(form)
    return obs


def magnetic_energy_coefficient(A: float, B: float, t):
    """Coefficient of ``H`` in the transported angular momentum.

    Along the flow ``L(Gamma(t) x) = L + a(t) H + (terms in D, T)`` with
    ``a(t) = (B^2 (1 - e^{2At}) + 2 A^2 (1 - e^{At} cos Bt)) / (B (A^2 + B^2))``.
    ``D`` and ``T`` have zero mean in the eigenstates, so
    ``<L>(t) = M + a(t) E``; for ``A < 0``, ``a`` tends to
    ``(B^2 + 2 A^2) / (B (A^2 + B^2))``, which is ``1/B`` as ``A -> 0``.
    """
    if B == 0:
        raise ModelError("the coefficient needs a nonzero effective field")
    t = np.asarray(t, dtype=float)
    num = B * B * -np.expm1(2 * A * t) + 2 * A * A * (1 - np.exp(A * t) * np.cos(B * t))
    return num / (B * (A * A + B * B))


def build_magnetic_charge(e: float = 0.1, H_field: float = 1.0, hbar: float = 1.0,
                          friction: Optional[float] = None) -> ModelDefinition:
    """Radiating charge in a homogeneous magnetic field, reduced to the plane.

    ``friction`` replaces the computed coefficient ``A`` (e.g. 0 for the
    frictionless comparison model).
    """
    if not (math.isfinite(e) and math.isfinite(H_field)):
        raise ModelError("charge and field must be finite")
    if hbar <= 0:
        raise ModelError("hbar must be positive")
    A, B = reduced_lorentz_coefficients(e, H_field)
    if friction is not None:
        A = float(friction)
    system = LinearSystem.constant(magnetic_matrix(A, B))
    return ModelDefinition(
        name="magnetic_charge",
        system=system,
        omega0=canonical_omega0(4),
        observables=magnetic_observables(B),
        parameters={"e": e, "H_field": H_field, "A": A, "B": B},
        coordinates=("x", "p", "y", "q"),
        hbar=hbar,
    )


def build_generic(A, J=None, omega0=None, hbar: float = 1.0,
                  name: str = "generic") -> ModelDefinition:
    """Constant-coefficient system ``x' = A x + J`` with a chosen seed 2-form."""
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ModelError(f"A must be square, got shape {A.shape}")
    dim = A.shape[0]
    if dim % 2:
        raise ModelError(f"phase-space dimension must be even, got {dim}")
    system = LinearSystem.constant(A, J)
    omega0 = canonical_omega0(dim) if omega0 is None else _validate_omega0(omega0, dim)
    labels = tuple(f"{'x' if i % 2 == 0 else 'p'}{i // 2 + 1}" for i in range(dim))
    observables = {lab: coordinate(dim, i) for i, lab in enumerate(labels)}
    observables["H0"] = quadratic_form(np.eye(dim))
    return ModelDefinition(name, system, omega0, observables, {}, labels, hbar)


CATALOGUE = {
    "damped_oscillator": {
        "builder": build_damped_oscillator,
        "parameters": {
            "omega": "oscillator frequency (> 0), default 1",
            "alpha": "friction, 0 <= alpha < omega, default 0",
            "variant": "'attractor' (constant generator) or 'canonical' "
                       "(time-dependent Hamiltonian form), default 'attractor'",
        },
        "observables": ["H", "x", "p"],
        "states": "n >= 0 (oscillator level)",
    },
    "magnetic_charge": {
        "builder": build_magnetic_charge,
        "parameters": {
            "e": "electric charge, default 0.1",
            "H_field": "magnetic field strength, default 1",
            "friction": "optional override of the friction coefficient A",
        },
        "observables": ["H", "L", "D", "T", "K", "N", "H1", "H2", "x", "p", "y", "q",
                        "P", "X", "Q", "Y"],
        "states": "n, l >= 0 (energy and angular-momentum quantum numbers)",
    },
    "generic": {
        "builder": build_generic,
        "parameters": {
            "A": "square matrix of even size",
            "J": "optional constant forcing vector",
        },
        "observables": ["x1, p1, ...", "H0 = |x|^2 / 2"],
        "states": "Gaussian ground state of H0",
    },
}
