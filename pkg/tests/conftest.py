import numpy as np
import pytest
from hypothesis import settings

from dqlinear.symbols import GaussPolySymbol

settings.register_profile("default", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("default")

_ACCEPTANCE = []


class AcceptanceLog:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def record(self, criterion, passed, detail):
        _ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(_ACCEPTANCE, key=lambda r: (int(str(r[0]).split("/")[0]), str(r[0]))):
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def random_polynomial(rng, dim, degree, terms=5):
    out = {}
    for _ in range(terms):
        k = [0] * dim
        for _ in range(int(rng.integers(0, degree + 1))):
            k[int(rng.integers(dim))] += 1
        out[tuple(k)] = complex(rng.normal(), rng.normal())
    return GaussPolySymbol(dim, poly_terms=out)


def random_positive_matrix(rng, dim, lo=0.5):
    X = rng.normal(size=(dim, dim))
    return X @ X.T / dim + lo * np.eye(dim)


def random_gauss_poly(rng, dim, degree=2, imag=0.3):
    M = random_positive_matrix(rng, dim) + 1j * imag * rng.normal(size=(dim, dim))
    M = 0.5 * (M + M.T)
    b = 0.3 * (rng.normal(size=dim) + 1j * rng.normal(size=dim))
    P = random_polynomial(rng, dim, degree)
    return GaussPolySymbol(dim, M, b, complex(0.1 * rng.normal()), P.poly)


def random_symplectic_pi(rng, dim):
    X = rng.normal(size=(dim, dim))
    Om = X - X.T
    while abs(np.linalg.det(Om)) < 1e-3:
        X = rng.normal(size=(dim, dim))
        Om = X - X.T
    P = np.linalg.inv(Om)
    return 0.5 * (P - P.T)


def random_stable_matrix(rng, dim):
    X = rng.normal(size=(dim, dim))
    shift = np.max(np.linalg.eigvals(X).real) + 0.2 + rng.uniform(0, 0.3)
    return X - shift * np.eye(dim)
